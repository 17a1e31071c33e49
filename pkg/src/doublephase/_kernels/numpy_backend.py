"""Vectorized numpy implementations of the hot assembly kernels.

Semantics are the import contract for the compiled backend: both must
produce bitwise-comparable results up to floating point reassociation.
All arrays are float64; complex handling lives in the callers.
"""

import numpy as np


def element_gradients(grad_ops, triangles, values):
    """Per-element gradient of a P1 field: (M, 2)."""
    local = values[triangles]  # (M, 3)
    return np.einsum("edk,ek->ed", grad_ops, local)


def double_phase_system(grad_ops, shape_products, triangles, area, a_elem,
                        values, p, q, delta, hess_floor, want_hess, n_nodes):
    """Energy, nodal gradient and (optionally) Hessian blocks of the
    regularized double phase functional.

    Energy density per element: ``t^{p/2} + (p/q) a t^{q/2}`` with
    ``t = |grad u|^2 + delta^2``.  The Hessian uses
    ``t_h = max(t, hess_floor^2)`` so the Newton model stays SPD at
    degenerate elements; gradient and energy always use the exact ``t``.

    Returns ``(energy, grad, hess_data)`` where ``grad`` has one entry per
    node and ``hess_data`` is ``(M, 3, 3)`` element blocks (or None).
    """
    local = values[triangles]
    g = np.einsum("edk,ek->ed", grad_ops, local)  # (M, 2)
    gg = g[:, 0] ** 2 + g[:, 1] ** 2
    t = gg + delta * delta

    tp = t ** (0.5 * p)
    tq = t ** (0.5 * q)
    energy = float(np.dot(area, tp + (p / q) * a_elem * tq))

    # d/du_k of t^{s/2} = s t^{(s-2)/2} (g . grad phi_k); the masked-out
    # branch still evaluates 0**negative, hence the errstate guard
    with np.errstate(divide="ignore", invalid="ignore"):
        wp = np.where(t > 0.0, p * t ** (0.5 * p - 1.0), 0.0)
        wq = np.where(t > 0.0, p * a_elem * t ** (0.5 * q - 1.0), 0.0)
    gb = np.einsum("ed,edk->ek", g, grad_ops)  # (M, 3): g . grad phi_k
    grad_elem = (area * (wp + wq))[:, None] * gb
    grad = np.bincount(triangles.ravel(), weights=grad_elem.ravel(),
                       minlength=n_nodes)

    hess = None
    if want_hess:
        th = np.maximum(t, hess_floor * hess_floor)
        wph = p * th ** (0.5 * p - 1.0)
        wqh = p * a_elem * th ** (0.5 * q - 1.0)
        c1 = area * (wph + wqh)
        c2 = area * (wph * (p - 2.0) + wqh * (q - 2.0)) / th
        hess = (c1[:, None, None] * shape_products
                + c2[:, None, None] * gb[:, :, None] * gb[:, None, :])
    return energy, grad, hess


def varcoef_system(grad_ops, triangles, area, a_mat, f_elem, n_nodes):
    """Stiffness blocks and load vector for ``A``-weighted diffusion.

    Weak contract: ``K_kl = sum_T area (grad phi_k . A grad phi_l)`` and
    ``b_k = sum_T area (F . grad phi_k)``.
    """
    ab = np.einsum("eab,ebl->eal", a_mat, grad_ops)  # (M, 2, 3)
    stiff = area[:, None, None] * np.einsum("eak,eal->ekl", grad_ops, ab)
    if f_elem is None:
        load = np.zeros(n_nodes)
    else:
        load_elem = area[:, None] * np.einsum("ed,edk->ek", f_elem, grad_ops)
        load = np.bincount(triangles.ravel(), weights=load_elem.ravel(),
                           minlength=n_nodes)
    return stiff, load
