"""Backend equivalence: compiled kernels must match the numpy fallback."""

import numpy as np
import pytest

from doublephase import _kernels
from doublephase._kernels import numpy_backend


def _inputs(mesh, rng):
    values = rng.normal(size=mesh.n_nodes)
    a_elem = rng.uniform(0.0, 2.0, mesh.n_elements)
    return values, a_elem


needs_compiled = pytest.mark.skipif(
    _kernels.BACKEND != "compiled", reason="compiled kernels not built")


@needs_compiled
def test_element_gradients_match(mesh32, rng):
    values, _ = _inputs(mesh32, rng)
    a = _kernels._impl.element_gradients(mesh32.grad_ops, mesh32.triangles,
                                         values)
    b = numpy_backend.element_gradients(mesh32.grad_ops, mesh32.triangles,
                                        values)
    assert np.abs(a - b).max() <= 1e-14


@needs_compiled
@pytest.mark.parametrize("p,q,delta", [(2.0, 3.0, 1e-8), (1.5, 2.5, 1e-3),
                                       (3.0, 2.0, 0.0)])
def test_double_phase_system_matches(mesh32, rng, p, q, delta):
    values, a_elem = _inputs(mesh32, rng)
    args = (mesh32.grad_ops, mesh32.shape_products, mesh32.triangles,
            mesh32.element_area, a_elem, values, p, q, delta, 1e-6, True,
            mesh32.n_nodes)
    ea, ga, ha = _kernels._impl.double_phase_system(*args)
    eb, gb, hb = numpy_backend.double_phase_system(*args)
    assert ea == pytest.approx(eb, rel=1e-13)
    assert np.abs(ga - gb).max() <= 1e-12 * max(1.0, np.abs(gb).max())
    assert np.abs(ha - hb).max() <= 1e-12 * max(1.0, np.abs(hb).max())


@needs_compiled
def test_varcoef_system_matches(mesh32, rng):
    a_mat = np.broadcast_to(np.eye(2), (mesh32.n_elements, 2, 2)).copy()
    a_mat[:, 0, 0] = rng.uniform(1.0, 2.0, mesh32.n_elements)
    f = rng.normal(size=(mesh32.n_elements, 2))
    args = (mesh32.grad_ops, mesh32.triangles, mesh32.element_area, a_mat, f,
            mesh32.n_nodes)
    sa, la = _kernels._impl.varcoef_system(*args)
    sb, lb = numpy_backend.varcoef_system(*args)
    assert np.abs(sa - sb).max() <= 1e-13 * max(1.0, np.abs(sb).max())
    assert np.abs(la - lb).max() <= 1e-13 * max(1.0, np.abs(lb).max())


def test_gradient_scatter_consistency(mesh16, rng):
    # the nodal gradient is the exact derivative of the energy: check with
    # a finite difference in a random direction
    values, a_elem = _inputs(mesh16, rng)
    p, q, delta = 2.5, 1.8, 1e-3
    args = lambda v: (mesh16.grad_ops, mesh16.shape_products, mesh16.triangles,
                      mesh16.element_area, a_elem, v, p, q, delta, 0.0, False,
                      mesh16.n_nodes)
    _, grad, _ = _kernels.double_phase_system(*args(values))
    direction = rng.normal(size=mesh16.n_nodes)
    h = 1e-7
    ep, _, _ = _kernels.double_phase_system(*args(values + h * direction))
    em, _, _ = _kernels.double_phase_system(*args(values - h * direction))
    fd = (ep - em) / (2.0 * h)
    assert fd == pytest.approx(float(grad @ direction), rel=1e-6, abs=1e-8)
