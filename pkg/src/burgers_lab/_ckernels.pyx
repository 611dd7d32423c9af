# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_fallback``.

Only the closed-form potentials are supported here: ``pot`` is 0 for the
zero potential and 1 for cos(sin t) - cos(x + sin t). Anything else is
routed to the numpy fallback by ``kernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, floor, fmod, fabs

cnp.import_array()

cdef double TWO_PI = 6.283185307179586


cdef inline double v_x(int pot, double t, double x) nogil:
    if pot == 1:
        return sin(x + sin(t))
    return 0.0


cdef inline double v_xx(int pot, double t, double x) nogil:
    if pot == 1:
        return cos(x + sin(t))
    return 0.0


cdef inline double v_val(int pot, double t, double x) nogil:
    cdef double s
    if pot == 1:
        s = sin(t)
        return cos(s) - cos(x + s)
    return 0.0


def el_flow(int pot, q, p, double t0, double dt, long nsteps, bint tangent=False):
    cdef cnp.ndarray[double, ndim=1] qa = np.array(q, dtype=float, copy=True).ravel()
    cdef cnp.ndarray[double, ndim=1] pa = np.array(p, dtype=float, copy=True).ravel()
    cdef Py_ssize_t m = qa.shape[0], j
    cdef long i
    cdef cnp.ndarray[double, ndim=1] a = np.ones(m), b = np.zeros(m)
    cdef cnp.ndarray[double, ndim=1] c = np.zeros(m), d = np.ones(m)
    cdef double h = dt, t, y0, y1, y2, y3, y4, y5
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef double cs
    with nogil:
        for j in range(m):
            y0 = qa[j]; y1 = pa[j]; y2 = 1.0; y3 = 0.0; y4 = 0.0; y5 = 1.0
            for i in range(nsteps):
                t = t0 + i * h
                k1[0] = y1; k1[1] = v_x(pot, t, y0)
                k2[0] = y1 + 0.5 * h * k1[1]; k2[1] = v_x(pot, t + 0.5 * h, y0 + 0.5 * h * k1[0])
                k3[0] = y1 + 0.5 * h * k2[1]; k3[1] = v_x(pot, t + 0.5 * h, y0 + 0.5 * h * k2[0])
                k4[0] = y1 + h * k3[1]; k4[1] = v_x(pot, t + h, y0 + h * k3[0])
                if tangent:
                    cs = v_xx(pot, t, y0)
                    k1[2] = y4; k1[3] = y5; k1[4] = cs * y2; k1[5] = cs * y3
                    cs = v_xx(pot, t + 0.5 * h, y0 + 0.5 * h * k1[0])
                    k2[2] = y4 + 0.5 * h * k1[4]; k2[3] = y5 + 0.5 * h * k1[5]
                    k2[4] = cs * (y2 + 0.5 * h * k1[2]); k2[5] = cs * (y3 + 0.5 * h * k1[3])
                    cs = v_xx(pot, t + 0.5 * h, y0 + 0.5 * h * k2[0])
                    k3[2] = y4 + 0.5 * h * k2[4]; k3[3] = y5 + 0.5 * h * k2[5]
                    k3[4] = cs * (y2 + 0.5 * h * k2[2]); k3[5] = cs * (y3 + 0.5 * h * k2[3])
                    cs = v_xx(pot, t + h, y0 + h * k3[0])
                    k4[2] = y4 + h * k3[4]; k4[3] = y5 + h * k3[5]
                    k4[4] = cs * (y2 + h * k3[2]); k4[5] = cs * (y3 + h * k3[3])
                    y2 += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
                    y3 += h / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
                    y4 += h / 6.0 * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
                    y5 += h / 6.0 * (k1[5] + 2 * k2[5] + 2 * k3[5] + k4[5])
                y0 += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                y1 += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            qa[j] = y0; pa[j] = y1
            a[j] = y2; b[j] = y3; c[j] = y4; d[j] = y5
    if tangent:
        return qa, pa, a, b, c, d
    return qa, pa


def el_path(int pot, double q0, double p0, double t0, double dt, long nsteps):
    cdef cnp.ndarray[double, ndim=1] qs = np.empty(nsteps + 1)
    cdef cnp.ndarray[double, ndim=1] ps = np.empty(nsteps + 1)
    cdef double q = q0, p = p0, h = dt, t
    cdef double k1q, k1p, k2q, k2p, k3q, k3p, k4q, k4p
    cdef long i
    qs[0] = q; ps[0] = p
    with nogil:
        for i in range(nsteps):
            t = t0 + i * h
            k1q = p; k1p = v_x(pot, t, q)
            k2q = p + 0.5 * h * k1p; k2p = v_x(pot, t + 0.5 * h, q + 0.5 * h * k1q)
            k3q = p + 0.5 * h * k2p; k3p = v_x(pot, t + 0.5 * h, q + 0.5 * h * k2q)
            k4q = p + h * k3p; k4p = v_x(pot, t + h, q + h * k3q)
            q += h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
            p += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
            qs[i + 1] = q; ps[i + 1] = p
    return t0 + h * np.arange(nsteps + 1), qs, ps


cdef inline double gflux(double ul, double ur) nogil:
    cdef double a = ul if ul > 0.0 else 0.0
    cdef double b = ur if ur < 0.0 else 0.0
    a = a * a
    b = b * b
    return 0.5 * (a if a > b else b)


def fv_advance(int pot, u, double t0, double t1, double dx, double cfl):
    cdef cnp.ndarray[double, ndim=1] ua = np.array(u, dtype=float, copy=True)
    cdef Py_ssize_t n = ua.shape[0], j
    cdef cnp.ndarray[double, ndim=1] f = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] vr = np.empty(n)
    cdef double t = t0, dt, umax, tt
    cdef long steps = 0
    cdef int half
    with nogil:
        while t < t1 - 1e-14:
            umax = 1e-12
            for j in range(n):
                if fabs(ua[j]) > umax:
                    umax = fabs(ua[j])
            dt = cfl * dx / umax
            if t + dt > t1:
                dt = t1 - t
            for half in range(2):
                if half == 1:
                    for j in range(n):
                        f[j] = gflux(ua[j], ua[(j + 1) % n])
                    ua[0] -= dt / dx * (f[0] - f[n - 1])
                    for j in range(n - 1, 0, -1):
                        ua[j] -= dt / dx * (f[j] - f[j - 1])
                tt = t + (0.25 + 0.5 * half) * dt
                if pot != 0:
                    for j in range(n):
                        vr[j] = v_val(pot, tt, (j + 0.5) * dx)
                    ua[0] += 0.5 * dt * (vr[0] - vr[n - 1]) / dx
                    for j in range(n - 1, 0, -1):
                        ua[j] += 0.5 * dt * (vr[j] - vr[j - 1]) / dx
            t += dt
            steps += 1
            if umax != umax or umax > 1e300:
                break
    return ua, steps


cdef inline double interp(double[:, ::1] sl, double tg0, double dtg, double tper,
                          double dx, double tau, double x) nogil:
    cdef Py_ssize_t m = sl.shape[0], n = sl.shape[1], k, i, jj
    cdef double st, wt, sx, wx, a, b
    if tper > 0:
        tau = fmod(tau - tg0, tper)
        if tau < 0:
            tau += tper
        tau += tg0
    st = (tau - tg0) / dtg
    k = <Py_ssize_t> floor(st)
    if k < 0:
        k = 0
    if k > m - 2:
        k = m - 2
    wt = st - k
    if wt < 0.0:
        wt = 0.0
    if wt > 1.0:
        wt = 1.0
    sx = fmod(x, TWO_PI)
    if sx < 0:
        sx += TWO_PI
    sx /= dx
    i = <Py_ssize_t> floor(sx)
    wx = sx - i
    i = i % n
    jj = (i + 1) % n
    a = (1 - wx) * sl[k, i] + wx * sl[k, jj]
    b = (1 - wx) * sl[k + 1, i] + wx * sl[k + 1, jj]
    return (1 - wt) * a + wt * b


def trace(slices, double tg0, double dtg, double t_period, double dx, x0,
          double s_start, double sigma, double ds, long nsteps):
    cdef double[:, ::1] sl = np.ascontiguousarray(slices, dtype=float)
    cdef cnp.ndarray[double, ndim=1] xa = np.array(x0, dtype=float, copy=True).ravel()
    cdef Py_ssize_t m = xa.shape[0], j
    cdef cnp.ndarray[double, ndim=2] out = np.empty((nsteps + 1, m))
    cdef double h = ds, s, x, k1, k2, k3, k4
    cdef long i
    for j in range(m):
        out[0, j] = xa[j]
    with nogil:
        for j in range(m):
            x = xa[j]
            for i in range(nsteps):
                s = i * h
                k1 = sigma * interp(sl, tg0, dtg, t_period, dx, s_start + sigma * s, x)
                k2 = sigma * interp(sl, tg0, dtg, t_period, dx, s_start + sigma * (s + 0.5 * h), x + 0.5 * h * k1)
                k3 = sigma * interp(sl, tg0, dtg, t_period, dx, s_start + sigma * (s + 0.5 * h), x + 0.5 * h * k2)
                k4 = sigma * interp(sl, tg0, dtg, t_period, dx, s_start + sigma * (s + h), x + h * k3)
                x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                out[i + 1, j] = x
    return out
