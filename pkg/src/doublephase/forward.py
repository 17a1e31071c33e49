"""Forward solver for the double phase Dirichlet problem.

The solution is computed as the unique minimizer of the (regularized)
convex energy

    E(u) = int ( t^{p/2} + (p/q) a t^{q/2} ) dx,   t = |grad u|^2 + delta^2,

over fields matching the boundary data at boundary nodes.  Minimization:
damped Newton with Armijo backtracking on a delta-continuation schedule;
the Newton systems are solved by diagonally preconditioned CG (inexact
Newton).  The case a = 0 is the discrete p-Laplace solver used by the
linearization and reconstruction stages; p = 2 with a = 0 reduces to one
linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import NewtonError, OrderingError
from .linear_elliptic import harmonic_extension, stiffness_pattern
from .mesh import NodalField, element_means, l2_norm
from .tensorops import ExponentPair

#: Armijo parameters (backtracking factor, slope fraction)
ARMIJO_FACTOR = 0.5
ARMIJO_SLOPE = 1e-4
#: inexact-Newton forcing: CG solves to this fraction of the residual
NEWTON_CG_RTOL = 1e-2
#: continuation starts here unless the target delta is larger
DELTA_START = 1e-1


@dataclass
class ProblemSpec:
    """Full instance definition of one double phase Dirichlet problem."""

    exponents: ExponentPair
    a: NodalField
    delta: float = 1e-8
    newton_tol: float = 1e-10
    max_iters: int = 200
    continuation_steps: int = 8

    def __post_init__(self):
        if np.any(self.a.values < 0.0):
            raise ValueError("coefficient a must be nonnegative at every node")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not self.newton_tol > 0.0:
            raise ValueError(f"newton_tol must be > 0, got {self.newton_tol}")
        if self.max_iters < 1 or self.continuation_steps < 1:
            raise ValueError("max_iters and continuation_steps must be >= 1")

    @property
    def mesh(self):
        return self.a.mesh

    @property
    def a_elem(self):
        cached = getattr(self, "_a_elem", None)
        if cached is None:
            cached = element_means(self.mesh, self.a)
            object.__setattr__(self, "_a_elem", cached)
        return cached

    @property
    def is_plaplace(self):
        return not np.any(self.a.values != 0.0)

    def with_(self, **kw):
        return replace(self, **kw)


def plaplace_spec(mesh, p, newton_tol=1e-10, delta=1e-8, max_iters=200,
                  continuation_steps=8):
    """Spec for the reference p-Laplace problem (a = 0; q is inert)."""
    return ProblemSpec(ExponentPair(p, p + 1.0), NodalField.zeros(mesh),
                       delta=delta, newton_tol=newton_tol,
                       max_iters=max_iters,
                       continuation_steps=continuation_steps)


@dataclass
class Solution:
    """Converged minimizer with its certificate."""

    u: NodalField
    energy: float
    residual: float
    iterations: int
    converged: bool
    energy_history: tuple = field(default=(), repr=False)


def _system(spec, values, delta, want_hess, hess_floor=0.0):
    mesh = spec.mesh
    return _kernels.double_phase_system(
        mesh.grad_ops, mesh.shape_products, mesh.triangles,
        mesh.element_area, spec.a_elem, values,
        spec.exponents.p, spec.exponents.q, delta, hess_floor, want_hess,
        mesh.n_nodes)


def energy(spec, u):
    """Regularized double phase energy of a field (delta from the spec)."""
    if u.mesh is not spec.mesh:
        raise ValueError("field and spec live on different meshes")
    e, _, _ = _system(spec, u.values, spec.delta, False)
    return float(e)


def _residual_ratio(grad, interior):
    total = np.linalg.norm(grad)
    if total == 0.0:
        return 0.0
    return float(np.linalg.norm(grad[interior]) / total)


def weak_residual(spec, u):
    """Relative dual residual of the discrete weak form.

    Euclidean norm of the flux pairing against interior basis functions,
    scaled by the norm of the full (load-free) stiffness action; delta
    ``spec.delta`` regularizes the flux, so delta = 0 is the exact form.
    """
    if u.mesh is not spec.mesh:
        raise ValueError("field and spec live on different meshes")
    _, grad, _ = _system(spec, u.values, spec.delta, False)
    return _residual_ratio(grad, spec.mesh.interior_nodes)


def _delta_schedule(spec, good_start):
    target = spec.delta
    if good_start or target >= DELTA_START or spec.continuation_steps == 1:
        return [target]
    positive_target = max(target, 1e-10)
    stages = list(np.geomspace(DELTA_START, positive_target,
                               spec.continuation_steps))
    if target < positive_target:
        stages.append(target)
    stages[-1] = target
    return stages


def _linear_plaplace_solve(spec, f, mesh):
    # p = 2, a = 0: quadratic energy, one SPD solve
    pat = stiffness_pattern(mesh)
    eye = np.broadcast_to(np.eye(2), (mesh.n_elements, 2, 2)).copy()
    stiff, _ = _kernels.varcoef_system(
        mesh.grad_ops, mesh.triangles, mesh.element_area, eye, None,
        mesh.n_nodes)
    k_ii = pat.interior_matrix(stiff).tocsc()
    rhs = -(pat.coupling_matrix(stiff) @ f)
    values = np.zeros(mesh.n_nodes)
    values[mesh.interior_nodes] = spla.splu(k_ii).solve(rhs)
    values[mesh.boundary_nodes] = f
    u = NodalField(mesh, values)
    e, grad, _ = _system(spec, values, spec.delta, False)
    res = _residual_ratio(grad, mesh.interior_nodes)
    if res > spec.newton_tol:
        return None  # direct solve not tight enough; Newton polishes
    return Solution(u=u, energy=float(e), residual=res, iterations=1,
                    converged=True, energy_history=(float(e),))


def solve_dirichlet(spec, f, u0=None):
    """Minimize the energy over fields with boundary trace ``f``.

    ``u0`` optionally warm-starts the iteration (its boundary values are
    overwritten by ``f``); a good start skips the continuation schedule.
    Raises ``NewtonError`` (carrying the last iterate and residual) on
    non-convergence or NaN.
    """
    mesh = spec.mesh
    f = np.asarray(f, dtype=float)
    if f.shape != (len(mesh.boundary_nodes),):
        raise ValueError(
            f"boundary data has shape {f.shape}, expected "
            f"({len(mesh.boundary_nodes)},)")
    if not np.all(np.isfinite(f)):
        raise ValueError("boundary data contains non-finite values")

    if spec.exponents.p == 2.0 and spec.is_plaplace:
        sol = _linear_plaplace_solve(spec, f, mesh)
        if sol is not None:
            return sol
        u0 = harmonic_extension(mesh, f)

    interior = mesh.interior_nodes
    if u0 is not None:
        values = u0.values.copy()
        values[mesh.boundary_nodes] = f
    else:
        values = harmonic_extension(mesh, f).values

    _, grad0, _ = _system(spec, values, spec.delta, False)
    good_start = u0 is not None and _residual_ratio(grad0, interior) <= 3e-2
    stages = _delta_schedule(spec, good_start)

    pat = stiffness_pattern(mesh)
    total_iters = 0
    history = []
    res = np.inf
    for stage, delta in enumerate(stages):
        last = stage == len(stages) - 1
        # intermediate stages only warm-start the next one
        tol = spec.newton_tol if last else max(spec.newton_tol, 1e-5)
        values, iters, res, e = _newton_stage(
            spec, values, delta, tol, pat, interior, history)
        total_iters += iters
        if not last and res > tol:
            # continuation stages may stop early; the final stage decides
            pass
    if res > spec.newton_tol:
        raise NewtonError(
            f"Newton did not reach tol {spec.newton_tol:.1e} "
            f"(residual {res:.3e} after {total_iters} iterations)",
            iterate=NodalField(mesh, values), residual=res,
            iterations=total_iters)
    return Solution(u=NodalField(mesh, values), energy=float(e),
                    residual=res, iterations=total_iters, converged=True,
                    energy_history=tuple(history))


def _newton_stage(spec, values, delta, tol, pat, interior, history):
    e, grad, hess = _system(spec, values, delta, True,
                            hess_floor=_floor(spec, values, delta))
    if not np.isfinite(e) or not np.all(np.isfinite(grad)):
        raise NewtonError("non-finite energy or gradient",
                          iterate=NodalField(spec.mesh, values))
    res = _residual_ratio(grad, interior)
    it = 0
    while res > tol and it < spec.max_iters:
        it += 1
        k_ii = pat.interior_matrix(hess)
        g_i = grad[interior]
        d = _newton_direction(k_ii, g_i)
        slope = float(g_i @ d)
        if not np.isfinite(slope) or slope >= 0.0:
            d = -g_i
            slope = -float(g_i @ g_i)
        if abs(slope) <= 64.0 * np.finfo(float).eps * (1.0 + abs(e)):
            # the predicted decrease is beyond the energy's floating point
            # resolution; accept the full Newton step on residual descent
            trial = values.copy()
            trial[interior] += d
            e2, grad2, _ = _system(spec, trial, delta, False)
            if np.isfinite(e2) and _residual_ratio(grad2, interior) < res:
                values = trial
            else:
                break  # converged as far as floating point allows
        else:
            step, e_new, values_new = _armijo(spec, values, interior, d, e,
                                              slope, delta)
            if step is None:
                d = -g_i
                slope = -float(g_i @ g_i)
                step, e_new, values_new = _armijo(spec, values, interior, d,
                                                  e, slope, delta)
                if step is None:
                    break  # no descent at floating point resolution
            values = values_new
        e, grad, hess = _system(spec, values, delta, True,
                                hess_floor=_floor(spec, values, delta))
        if not np.isfinite(e) or not np.all(np.isfinite(grad)):
            raise NewtonError("non-finite energy or gradient",
                              iterate=NodalField(spec.mesh, values))
        history.append(float(e))
        res = _residual_ratio(grad, interior)
    return values, it, res, e


def _floor(spec, values, delta):
    # SPD floor for Hessian weights at degenerate elements; inert wherever
    # |grad u| is O(1)
    g = _kernels.element_gradients(spec.mesh.grad_ops, spec.mesh.triangles,
                                   values)
    scale = np.sqrt(np.mean(g[:, 0] ** 2 + g[:, 1] ** 2))
    return max(delta, 1e-4 * scale, 1e-14)


def _newton_direction(k_ii, g_i):
    n = k_ii.shape[0]
    diag = k_ii.diagonal()
    diag = np.where(diag > 0, diag, 1.0)
    m_inv = spla.LinearOperator((n, n), matvec=lambda v: v / diag)
    d, _ = spla.cg(k_ii, -g_i, rtol=NEWTON_CG_RTOL, atol=0.0, M=m_inv,
                   maxiter=max(200, 40 * int(np.sqrt(n))))
    return d


def _armijo(spec, values, interior, d, e0, slope, delta):
    # the +eps|e0| term accepts steps whose decrease is below the floating
    # point resolution of the energy (endgame of the minimization)
    resolution = 4.0 * np.finfo(float).eps * abs(e0)
    step = 1.0
    for _ in range(50):
        trial = values.copy()
        trial[interior] += step * d
        e_new, _, _ = _system(spec, trial, delta, False)
        if np.isfinite(e_new) and (
                e_new <= e0 + ARMIJO_SLOPE * step * slope + resolution):
            return step, e_new, trial
        step *= ARMIJO_FACTOR
    return None, None, None


@dataclass
class PrincipleReport:
    """Maximum/comparison/local-minimizer diagnostics for one ordered pair."""

    max_slack: float
    max_tolerance: float
    comparison_slack: float
    comparison_tolerance: float
    local_minimizer_worst: float
    local_minimizer_tolerance: float

    @property
    def max_principle_ok(self):
        return self.max_slack <= self.max_tolerance

    @property
    def comparison_ok(self):
        return self.comparison_slack >= -self.comparison_tolerance

    @property
    def local_minimizer_ok(self):
        return self.local_minimizer_worst >= -self.local_minimizer_tolerance


def _interior_bumps(mesh, rng, count):
    """Compactly supported smooth bumps vanishing near the boundary."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    dom = mesh.domain
    bumps = []
    for _ in range(count):
        cx = rng.uniform(dom.x_min + 0.3 * dom.width, dom.x_max - 0.3 * dom.width)
        cy = rng.uniform(dom.y_min + 0.3 * dom.height, dom.y_max - 0.3 * dom.height)
        rad = rng.uniform(0.1, 0.25) * min(dom.width, dom.height)
        amp = rng.choice([1e-2, 1e-3])
        r2 = ((x - cx) ** 2 + (y - cy) ** 2) / rad ** 2
        vals = amp * np.maximum(0.0, 1.0 - r2) ** 2
        vals[mesh.boundary_nodes] = 0.0
        bumps.append(vals)
    return bumps


def verify_principles(spec, f1, f2, rng=None, bump_count=8):
    """Check the maximum principle, the comparison principle and the
    local-minimizer property on one ordered pair of boundary data.

    Requires ``f1 >= f2`` nodewise.  Slacks are reported with the
    discrete tolerances (1e-6 of the data scale; the continuous
    principles survive discretization only asymptotically).
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if np.any(f1 < f2):
        raise OrderingError("comparison check requires f1 >= f2 nodewise")
    sol1 = solve_dirichlet(spec, f1)
    sol2 = solve_dirichlet(spec, f2)
    f_scale = max(np.abs(f1).max(), 1e-30)
    max_slack = float(np.abs(sol1.u.values).max() - np.abs(f1).max())
    comparison_slack = float((sol1.u.values - sol2.u.values).min())

    rng = np.random.default_rng(0) if rng is None else rng
    e0 = sol1.energy
    worst = np.inf
    for bump in _interior_bumps(spec.mesh, rng, bump_count):
        perturbed = NodalField(spec.mesh, sol1.u.values + bump)
        worst = min(worst, energy(spec, perturbed) - e0)
    local_tol = 10.0 * spec.newton_tol * (1.0 + abs(e0))
    return PrincipleReport(
        max_slack=max_slack,
        max_tolerance=1e-6 * f_scale,
        comparison_slack=comparison_slack,
        comparison_tolerance=1e-6,
        local_minimizer_worst=float(worst),
        local_minimizer_tolerance=local_tol,
    )


def relative_l2_error(mesh, u, exact):
    """Relative L2 distance between a field and an exact nodal field."""
    diff = NodalField(mesh, u.values - exact.values)
    denom = max(l2_norm(mesh, exact), 1e-300)
    return l2_norm(mesh, diff) / denom
