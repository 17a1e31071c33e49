"""Pointwise tensor calculus of the flux nonlinearity and its derivatives.

The flux ``J_r(xi) = |xi|^{r-2} xi`` drives everything: its Jacobian is
the linearization matrix ``A``, its directional derivative along a field
is ``A_dot``, and its monotonicity/convexity inequalities underpin
well-posedness.  All functions are pure and stateless.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGradientError, DegenerateGradientWarning

#: absolute tolerance for exact algebraic identities
EXACT_TOL = 1e-12
#: relative tolerance for finite-difference oracles
FD_TOL = 1e-5


@dataclass(frozen=True)
class ExponentPair:
    """Growth exponents ``1 < p != q < inf`` of the double phase energy."""

    p: float
    q: float

    def __post_init__(self):
        if not (self.p > 1.0 and np.isfinite(self.p)):
            raise ValueError(f"p must lie in (1, inf), got {self.p}")
        if not (self.q > 1.0 and np.isfinite(self.q)):
            raise ValueError(f"q must lie in (1, inf), got {self.q}")
        if self.p == self.q:
            raise ValueError(f"exponents must differ, got p = q = {self.p}")


def _check_exponent(r):
    if not (r > 1.0 and np.isfinite(r)):
        raise ValueError(f"exponent must lie in (1, inf), got {r}")


def flux(r, xi):
    """``|xi|^{r-2} xi``, extended continuously by zero at ``xi = 0``.

    For ``r < 2`` the extension is flagged with a
    ``DegenerateGradientWarning`` (the closed-form factor is singular).
    """
    _check_exponent(r)
    xi = np.asarray(xi, dtype=float)
    n = np.linalg.norm(xi)
    if n == 0.0:
        if r < 2.0:
            warnings.warn("flux evaluated at a degenerate point (xi = 0); "
                          "continued by zero", DegenerateGradientWarning,
                          stacklevel=2)
        return np.zeros_like(xi)
    return n ** (r - 2.0) * xi


def flux_jacobian(r, xi):
    """Jacobian ``|xi|^{r-2} (I + (r-2) xi0 x xi0)`` with ``xi0 = xi/|xi|``.

    Eigenvalues are ``(r-1)|xi|^{r-2}`` along ``xi`` and ``|xi|^{r-2}``
    across; the formula is singular at ``xi = 0`` for ``r != 2``.
    """
    _check_exponent(r)
    xi = np.asarray(xi, dtype=float)
    n2 = float(xi @ xi)
    if n2 == 0.0:
        raise DegenerateGradientError("flux_jacobian undefined at xi = 0")
    scale = n2 ** (0.5 * r - 1.0)
    return scale * (np.eye(2) + (r - 2.0) * np.outer(xi, xi) / n2)


def flux_hessian(r, xi):
    """Second derivative tensor ``H[i, j, k] = d^2 J_k / dxi_i dxi_j``.

    ``(r-2)|xi|^{r-4} (xi_i d_kj + xi_j d_ki + xi_k d_ij)
    + (r-2)(r-4)|xi|^{r-6} xi_i xi_j xi_k``; fully symmetric in (i, j, k).
    """
    _check_exponent(r)
    xi = np.asarray(xi, dtype=float)
    n2 = float(xi @ xi)
    if n2 == 0.0:
        raise DegenerateGradientError("flux_hessian undefined at xi = 0")
    eye = np.eye(2)
    sym = (np.einsum("i,kj->ijk", xi, eye)
           + np.einsum("j,ki->ijk", xi, eye)
           + np.einsum("k,ij->ijk", xi, eye))
    h = (r - 2.0) * n2 ** (0.5 * r - 2.0) * sym
    h += (r - 2.0) * (r - 4.0) * n2 ** (0.5 * r - 3.0) * np.einsum(
        "i,j,k->ijk", xi, xi, xi)
    return h


def a_matrix(r, grad_v):
    """Elementwise linearization matrices ``A = flux_jacobian(r, grad v)``.

    Parameters
    ----------
    grad_v : (M, 2) array of element gradients, all nonvanishing.

    Returns
    -------
    (M, 2, 2) array of symmetric positive definite matrices.
    """
    _check_exponent(r)
    g = np.asarray(grad_v, dtype=float)
    n2 = g[:, 0] ** 2 + g[:, 1] ** 2
    bad = np.nonzero(n2 == 0.0)[0]
    if bad.size:
        raise DegenerateGradientError(
            f"gradient vanishes on element {bad[0]} "
            f"({bad.size} degenerate elements in total)", element=int(bad[0]))
    scale = n2 ** (0.5 * r - 1.0)
    outer = g[:, :, None] * g[:, None, :] / n2[:, None, None]
    return scale[:, None, None] * (np.eye(2) + (r - 2.0) * outer)


def a_dot(p, grad_v0, grad_V):
    """Derivative of ``tau -> flux_jacobian(p, grad v0 + tau grad V)`` at 0.

    ``(p-2)|g0|^{p-4} (g0 . gV) [I + (p-4) g0 x g0 / |g0|^2]
    + (p-2)|g0|^{p-4} (g0 x gV + gV x g0)``; linear in ``grad_V``, which
    may be complex (the formula is applied to both parts by linearity).
    """
    _check_exponent(p)
    g0 = np.asarray(grad_v0, dtype=float)
    gv = np.asarray(grad_V)
    n2 = g0[:, 0] ** 2 + g0[:, 1] ** 2
    bad = np.nonzero(n2 == 0.0)[0]
    if bad.size:
        raise DegenerateGradientError(
            f"base gradient vanishes on element {bad[0]}", element=int(bad[0]))
    scale = (p - 2.0) * n2 ** (0.5 * p - 2.0)
    dot = g0[:, 0] * gv[:, 0] + g0[:, 1] * gv[:, 1]
    outer00 = g0[:, :, None] * g0[:, None, :] / n2[:, None, None]
    iso = np.eye(2) + (p - 4.0) * outer00
    mixed = g0[:, :, None] * gv[:, None, :] + gv[:, :, None] * g0[:, None, :]
    return (scale * dot)[:, None, None] * iso + scale[:, None, None] * mixed


def symmetric_eigenvalues(mats):
    """Eigenvalues (ascending) of symmetric 2x2 matrices, closed form."""
    m = np.asarray(mats, dtype=float)
    tr = m[..., 0, 0] + m[..., 1, 1]
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    return np.stack([(tr - disc) / 2.0, (tr + disc) / 2.0], axis=-1)


def monotonicity_batch(r, x, y):
    """Vectorized evaluation of the four vector inequalities.

    ``x``, ``y`` are (n, 2) arrays; returns a dict of per-sample arrays:

    - ``convexity_slack``: relative slack of ``|x|^r >= |y|^r +
      r |y|^{r-2} y.(x-y)`` (nonnegative when the inequality holds),
    - ``pairing``: ``(J_r(x) - J_r(y)).(x - y)``,
    - ``pairing_slack``: for ``r >= 2`` relative slack over the candidate
      lower bound ``2^{2-r}|x-y|^r``; for ``r < 2`` the fitted-constant
      ratio ``pairing (|x|+|y|)^{2-r} / ((r-1)|x-y|^2)``,
    - ``difference_ratio``: ``|J_r(x)-J_r(y)| / ((|x|+|y|)^{r-2}|x-y|)``,
    - ``power_slack``: relative slack of ``||x|^r - |y|^r| <=
      r(|x|^{r-1)+|y|^{r-1})|x-y|``.
    """
    _check_exponent(r)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = np.hypot(x[:, 0], x[:, 1])
    ny = np.hypot(y[:, 0], y[:, 1])
    dxy = x - y
    ndxy = np.hypot(dxy[:, 0], dxy[:, 1])

    def pw(base, expo):
        # base**expo with 0**negative -> 0 (flux continuation by zero)
        out = np.zeros_like(base)
        pos = base > 0.0
        out[pos] = base[pos] ** expo
        return out

    jx = pw(nx, r - 2.0)[:, None] * x
    jy = pw(ny, r - 2.0)[:, None] * y

    # (3.5) convexity of |.|^r
    lin = r * (jy * dxy).sum(axis=1)
    lhs35 = nx ** r
    rhs35 = ny ** r + lin
    scale35 = nx ** r + ny ** r + np.abs(lin) + 1e-300
    convexity_slack = (lhs35 - rhs35) / scale35

    # (3.6) monotonicity pairing
    pairing = ((jx - jy) * dxy).sum(axis=1)
    if r >= 2.0:
        bound = 2.0 ** (2.0 - r) * ndxy ** r
        pairing_slack = (pairing - bound) / (np.abs(pairing) + bound + 1e-300)
    else:
        denom = (r - 1.0) * ndxy ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            pairing_slack = np.where(
                denom > 0.0, pairing * pw(nx + ny, 2.0 - r) / denom, np.inf)

    # (3.7) Lipschitz-type difference bound
    diff = np.hypot(jx[:, 0] - jy[:, 0], jx[:, 1] - jy[:, 1])
    denom37 = pw(nx + ny, r - 2.0) * ndxy
    with np.errstate(invalid="ignore", divide="ignore"):
        difference_ratio = np.where(denom37 > 0.0, diff / denom37, 0.0)

    # (3.8) difference of r-th powers
    lhs38 = np.abs(nx ** r - ny ** r)
    rhs38 = r * (pw(nx, r - 1.0) + pw(ny, r - 1.0)) * ndxy
    power_slack = (rhs38 - lhs38) / (lhs38 + rhs38 + 1e-300)

    return {
        "convexity_slack": convexity_slack,
        "pairing": pairing,
        "pairing_slack": pairing_slack,
        "difference_ratio": difference_ratio,
        "power_slack": power_slack,
    }


@dataclass(frozen=True)
class MonotonicityReport:
    """The four inequality quantities for one sample pair."""

    r: float
    convexity_slack: float
    convexity_holds: bool
    pairing: float
    pairing_slack: float
    pairing_holds: bool
    difference_ratio: float
    power_slack: float
    power_holds: bool

    @property
    def holds(self):
        return self.convexity_holds and self.pairing_holds and self.power_holds


def monotonicity_report(r, x, y):
    """Evaluate the four inequalities for a single pair ``(x, y)``.

    ``x = y`` is allowed (pairing 0, convexity with equality).  The
    booleans use the tolerance policy: relative slack ``>= -1e-12`` for
    the exact inequalities; for ``r < 2`` the pairing check only asserts
    nonnegativity (the sharp constant is recorded, not asserted).
    """
    batch = monotonicity_batch(r, np.asarray(x, dtype=float)[None, :],
                               np.asarray(y, dtype=float)[None, :])
    conv = float(batch["convexity_slack"][0])
    pairing = float(batch["pairing"][0])
    pslack = float(batch["pairing_slack"][0])
    if r >= 2.0:
        pholds = pslack >= -EXACT_TOL
    else:
        scale = (np.linalg.norm(x) + np.linalg.norm(y)) ** r + 1e-300
        pholds = pairing >= -EXACT_TOL * scale
    power = float(batch["power_slack"][0])
    return MonotonicityReport(
        r=float(r),
        convexity_slack=conv,
        convexity_holds=conv >= -EXACT_TOL,
        pairing=pairing,
        pairing_slack=pslack,
        pairing_holds=bool(pholds),
        difference_ratio=float(batch["difference_ratio"][0]),
        power_slack=power,
        power_holds=power >= -EXACT_TOL,
    )
