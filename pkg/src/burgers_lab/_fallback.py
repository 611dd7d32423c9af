"""Pure numpy implementations of the hot loops.

Signatures mirror ``_ckernels`` except that the potential is passed as
callables instead of an integer code, so these also serve custom potentials.
"""
import numpy as np

TWO_PI = 2.0 * np.pi


def el_flow(grad, grad2, q, p, t0, dt, nsteps, tangent=False):
    """RK4 for q'' = V_x(t, q) on a batch of starts.

    With ``tangent`` the variational equations are carried along and the
    entries of d(q, p)/d(q0, p0) are returned after (q, p).
    """
    q = np.array(q, dtype=float, copy=True)
    p = np.array(p, dtype=float, copy=True)
    t = float(t0)
    h = float(dt)
    if not tangent:
        for _ in range(int(nsteps)):
            k1q, k1p = p, grad(t, q)
            k2q, k2p = p + 0.5 * h * k1p, grad(t + 0.5 * h, q + 0.5 * h * k1q)
            k3q, k3p = p + 0.5 * h * k2p, grad(t + 0.5 * h, q + 0.5 * h * k2q)
            k4q, k4p = p + h * k3p, grad(t + h, q + h * k3q)
            q = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
            p = p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
            t = t0 + (_ + 1) * h
        return q, p

    y = np.stack([q, p, np.ones_like(q), np.zeros_like(q), np.zeros_like(q), np.ones_like(q)])

    def rhs(tt, y):
        c = grad2(tt, y[0])
        return np.stack([y[1], grad(tt, y[0]), y[4], y[5], c * y[2], c * y[3]])

    for i in range(int(nsteps)):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * h
    return tuple(y)


def el_path(grad, q0, p0, t0, dt, nsteps):
    """Single RK4 trajectory, every step recorded."""
    n = int(nsteps)
    qs = np.empty(n + 1)
    ps = np.empty(n + 1)
    q, p, h = float(q0), float(p0), float(dt)
    qs[0], ps[0] = q, p
    for i in range(n):
        t = t0 + i * h
        k1q, k1p = p, grad(t, q)
        k2q, k2p = p + 0.5 * h * k1p, grad(t + 0.5 * h, q + 0.5 * h * k1q)
        k3q, k3p = p + 0.5 * h * k2p, grad(t + 0.5 * h, q + 0.5 * h * k2q)
        k4q, k4p = p + h * k3p, grad(t + h, q + h * k3q)
        q = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        p = p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        qs[i + 1], ps[i + 1] = q, p
    return t0 + h * np.arange(n + 1), qs, ps


def godunov_flux(ul, ur):
    """Exact Riemann flux for f(u) = u^2/2."""
    return 0.5 * np.maximum(np.maximum(ul, 0.0) ** 2, np.minimum(ur, 0.0) ** 2)


def fv_advance(value, u, t0, t1, dx, cfl):
    """Godunov + Strang-split source from ``t0`` to ``t1``.

    The source enters as cell averages of V_x, i.e. face differences of V,
    which telescope to zero over the circle. Returns (u, steps).
    """
    u = np.array(u, dtype=float, copy=True)
    n = u.size
    faces = (np.arange(n) + 0.5) * dx  # face j+1/2
    t = float(t0)
    steps = 0
    while t < t1 - 1e-14:
        umax = float(np.max(np.abs(u)))
        dt = cfl * dx / max(umax, 1e-12)
        if t + dt > t1:
            dt = t1 - t
        vr = value(t + 0.25 * dt, faces)
        u += 0.5 * dt * (vr - np.roll(vr, 1)) / dx
        f = godunov_flux(u, np.roll(u, -1))
        u -= dt / dx * (f - np.roll(f, 1))
        vr = value(t + 0.75 * dt, faces)
        u += 0.5 * dt * (vr - np.roll(vr, 1)) / dx
        t += dt
        steps += 1
        if not np.isfinite(u).all():
            break
    return u, steps


def _interp(slices, tg0, dtg, t_period, dx, tau, x):
    m, n = slices.shape
    if t_period > 0:
        tau = np.mod(tau - tg0, t_period) + tg0
    st = (tau - tg0) / dtg
    k = np.clip(np.floor(st).astype(int), 0, m - 2)
    wt = np.clip(st - k, 0.0, 1.0)
    sx = np.mod(x, TWO_PI) / dx
    i = np.floor(sx).astype(int)
    wx = sx - i
    i %= n
    j = (i + 1) % n
    a = (1 - wx) * slices[k, i] + wx * slices[k, j]
    b = (1 - wx) * slices[k + 1, i] + wx * slices[k + 1, j]
    return (1 - wt) * a + wt * b


def trace(slices, tg0, dtg, t_period, dx, x0, s_start, sigma, ds, nsteps):
    """RK4 for d(theta)/ds = sigma * u(s_start + sigma*s, theta).

    ``slices`` holds u on a uniform time grid starting at ``tg0`` with
    spacing ``dtg``; with ``t_period > 0`` time is wrapped into one period.
    Returns the positions at every step, shape (nsteps + 1, len(x0)).
    """
    slices = np.asarray(slices, dtype=float)
    x = np.array(x0, dtype=float, copy=True)
    out = np.empty((int(nsteps) + 1, x.size))
    out[0] = x
    h = float(ds)

    def f(s, th):
        return sigma * _interp(slices, tg0, dtg, t_period, dx, s_start + sigma * s, th)

    for i in range(int(nsteps)):
        s = i * h
        k1 = f(s, x)
        k2 = f(s + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(s + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(s + h, x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = x
    return out
