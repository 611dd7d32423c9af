import numpy as np
import pytest

from burgers_lab import kernels
from burgers_lab.field import SpatialGrid, custom_potential

pytestmark = pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="compiled kernels not built")


def test_el_flow_matches_fallback(forced):
    q = np.linspace(0, 6, 9)
    p = np.linspace(-2, 2, 9)
    a = kernels.el_flow(forced, q, p, 0.3, 1e-3, 2000, tangent=True)
    b = kernels.el_flow(forced, q, p, 0.3, 1e-3, 2000, tangent=True, force_fallback=True)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)


def test_el_path_matches_fallback(forced):
    a = kernels.el_path(forced, 0.1, 0.2, 0.0, 1e-3, 500)
    b = kernels.el_path(forced, 0.1, 0.2, 0.0, 1e-3, 500, force_fallback=True)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, atol=1e-12)


def test_fv_advance_matches_fallback(forced):
    g = SpatialGrid(128)
    u0 = np.sin(g.nodes) + 0.3 * np.cos(2 * g.nodes)
    a, na = kernels.fv_advance(forced, u0, 0.0, 3.0, g.dx, 0.5)
    b, nb = kernels.fv_advance(forced, u0, 0.0, 3.0, g.dx, 0.5, force_fallback=True)
    assert na == nb
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_trace_matches_fallback():
    g = SpatialGrid(64)
    slices = np.sin(g.nodes[None, :] + np.linspace(0, 2 * np.pi, 17)[:, None])
    args = (slices, 0.0, 2 * np.pi / 16, 2 * np.pi, g.dx, np.array([0.5, 2.0]), 1.0, -1.0, 0.01, 300)
    np.testing.assert_allclose(kernels.trace(*args), kernels.trace(*args, force_fallback=True), atol=1e-12)


def test_custom_potential_uses_fallback():
    pot = custom_potential(lambda t, x: 0 * x, lambda t, x: 0 * x, lambda t, x: 0 * x, 0, 0, 0)
    q, p = kernels.el_flow(pot, np.array([1.0]), np.array([2.0]), 0.0, 0.01, 100)
    assert q[0] == pytest.approx(3.0) and p[0] == 2.0
