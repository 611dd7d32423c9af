"""Dispatch between the compiled kernels and the numpy fallback.

The compiled module is used when it imported and the potential has a closed
form known to it. Set ``BURGERS_LAB_PURE=1`` to force the fallback.
"""
import os

from . import _fallback

try:
    if os.environ.get("BURGERS_LAB_PURE", "") not in ("", "0"):
        raise ImportError("pure mode requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

HAVE_COMPILED = _ckernels is not None


def backend_name() -> str:
    return "cython" if HAVE_COMPILED else "numpy"


def _compiled_for(pot):
    return HAVE_COMPILED and pot.code in (0, 1)


def el_flow(pot, q, p, t0, dt, nsteps, tangent=False, force_fallback=False):
    if _compiled_for(pot) and not force_fallback:
        return _ckernels.el_flow(pot.code, q, p, float(t0), float(dt), int(nsteps), tangent)
    return _fallback.el_flow(pot.grad, pot.grad2, q, p, float(t0), float(dt), int(nsteps), tangent)


def el_path(pot, q0, p0, t0, dt, nsteps, force_fallback=False):
    if _compiled_for(pot) and not force_fallback:
        return _ckernels.el_path(pot.code, float(q0), float(p0), float(t0), float(dt), int(nsteps))
    return _fallback.el_path(pot.grad, float(q0), float(p0), float(t0), float(dt), int(nsteps))


def fv_advance(pot, u, t0, t1, dx, cfl, force_fallback=False):
    if _compiled_for(pot) and not force_fallback:
        return _ckernels.fv_advance(pot.code, u, float(t0), float(t1), float(dx), float(cfl))
    return _fallback.fv_advance(pot.value, u, float(t0), float(t1), float(dx), float(cfl))


def trace(slices, tg0, dtg, t_period, dx, x0, s_start, sigma, ds, nsteps, force_fallback=False):
    args = (float(tg0), float(dtg), float(t_period), float(dx))
    rest = (float(s_start), float(sigma), float(ds), int(nsteps))
    if HAVE_COMPILED and not force_fallback:
        return _ckernels.trace(slices, *args, x0, *rest)
    return _fallback.trace(slices, *args, x0, *rest)
