"""Limits and derivatives extracted from DN data, with direct oracles.

Three layers, all on one mesh:

- ``expansion_error`` verifies the small-datum (eps -> 0, p < q) or
  large-datum (mu -> inf, p > q) expansion
  ``u_s = s v + s^{1+q-p} R_v + o(s^{1+q-p})`` against forward solves.
- ``I_limit`` extrapolates ``s^{1-q} (<L_a s v, g> - <L_0 s v, g>)`` along
  a geometric schedule (Aitken, fitted contraction); ``I_direct`` is its
  one-linear-solve oracle ``int (A_v^p grad R_v + a |grad v|^{q-2} grad v)
  . grad w dx``.
- ``J_fd`` differentiates I along a p-harmonic family ``v_tau`` (central
  difference, half-step consistency); ``J_direct`` is the
  integration-by-parts oracle
  ``int (a A^q grad V1 . grad V2 + grad R . Adot(V1) grad V2) dx``.

Every limit carries an error bar (difference of the last two
extrapolants) and a flag; bare numbers are never returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dn_map import PLapCache, pairing_from_solution
from .errors import DegenerateGradientError
from .forward import plaplace_spec, solve_dirichlet, weak_residual
from .linear_elliptic import harmonic_extension, solve_R, solve_Rdot
from .mesh import NodalField, gradient, l2_norm, quad_values
from .tensorops import a_dot, a_matrix


@dataclass(frozen=True)
class LimitSchedule:
    """Geometric parameter schedule: decreasing (eps) or increasing (mu)."""

    values: tuple
    extrapolation_order: int = 1

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 3:
            raise ValueError("schedule needs at least 3 values")
        if any(v <= 0.0 for v in vals):
            raise ValueError("schedule values must be positive")
        ratios = np.diff(np.log(vals))
        if np.abs(ratios - ratios[0]).max() > 1e-9:
            raise ValueError("schedule ratio must be constant")
        if ratios[0] == 0.0:
            raise ValueError("schedule must be strictly monotone")
        if self.extrapolation_order < 1:
            raise ValueError("extrapolation_order must be >= 1")

    @property
    def ratio(self):
        return self.values[1] / self.values[0]

    @property
    def increasing(self):
        return self.values[1] > self.values[0]

    @classmethod
    def default_epsilon(cls, start=0.2, ratio=0.5, count=4):
        return cls(tuple(start * ratio ** k for k in range(count)))

    @classmethod
    def default_mu(cls, start=5.0, ratio=2.0, count=4):
        return cls(tuple(start * ratio ** k for k in range(count)))


@dataclass(frozen=True)
class LimitEstimate:
    """Extrapolated limit with its error bar and raw schedule samples."""

    value: float
    error_bar: float
    flagged: bool
    samples: tuple
    extrapolants: tuple = ()


def aitken_extrapolate(samples):
    """Accelerate a geometrically converging sequence (Aitken delta^2).

    The contraction factor is fitted from the data (the remainder order
    is not assumed).  A non-contracting or sign-flipping difference
    sequence flags the result; the last plain sample is then returned.
    """
    d = np.asarray(samples, dtype=float)
    if d.size < 3:
        raise ValueError("need at least 3 samples to extrapolate")
    diffs = np.diff(d)
    scale = np.abs(d).max() + 1e-300
    if np.abs(diffs).max() <= 1e-14 * scale:
        # converged to noise floor already
        return LimitEstimate(float(d[-1]), float(np.abs(diffs).max()), False,
                             tuple(d), ())
    extrapolants = []
    ok = True
    for i in range(d.size - 2):
        den = d[i + 2] - 2.0 * d[i + 1] + d[i]
        if abs(den) <= 1e-14 * scale:
            ok = False
            continue
        extrapolants.append(d[i + 2] - (d[i + 2] - d[i + 1]) ** 2 / den)
    with np.errstate(divide="ignore", invalid="ignore"):
        contraction = diffs[1:] / diffs[:-1]
    monotone = np.all(np.isfinite(contraction)) and np.all(
        (contraction > 0.0) & (contraction < 0.98))
    if not ok or not monotone or not extrapolants:
        return LimitEstimate(float(d[-1]), float(np.abs(diffs[-1])), True,
                             tuple(d), tuple(extrapolants))
    if len(extrapolants) >= 2:
        bar = abs(extrapolants[-1] - extrapolants[-2])
    else:
        bar = abs(extrapolants[-1] - d[-1])
    return LimitEstimate(float(extrapolants[-1]), float(bar), False,
                         tuple(d), tuple(extrapolants))


@dataclass(frozen=True)
class ExpansionReport:
    """Normalized remainders of the expansion along one schedule."""

    schedule: tuple
    errors: tuple
    fitted_order: float
    passed: bool


def _check_regime(spec, schedule):
    p, q = spec.exponents.p, spec.exponents.q
    if p < q and schedule.increasing:
        raise ValueError("p < q requires a decreasing (eps) schedule")
    if p > q and not schedule.increasing:
        raise ValueError("p > q requires an increasing (mu) schedule")


def _check_probe(spec, v):
    g = gradient(spec.mesh, v)
    norms = np.hypot(g[:, 0], g[:, 1])
    if norms.min() <= 0.0:
        raise DegenerateGradientError(
            "probe field has a critical point "
            f"(element {int(norms.argmin())})",
            element=int(norms.argmin()))
    res = _plap_residual(spec.mesh, spec.exponents.p, v)
    tol = max(1e-6, 100.0 * spec.newton_tol)
    if res > tol:
        raise ValueError(
            f"probe field is not discrete p-harmonic "
            f"(relative residual {res:.2e} > {tol:.2e})")


def _plap_residual(mesh, p, v):
    return weak_residual(plaplace_spec(mesh, p, delta=0.0), v)


def expansion_error(spec, v, schedule):
    """Remainders ``e(s) = ||u_s - s v - s^{1+q-p} R_v|| / s^{1+q-p}``.

    ``u_s`` solves the double phase problem with boundary data ``s v``;
    the fitted order is the log-log slope oriented so that positive means
    improvement toward the limit.  ``passed`` requires strict monotone
    decrease along the schedule.
    """
    _check_regime(spec, schedule)
    _check_probe(spec, v)
    mesh = spec.mesh
    power = 1.0 + spec.exponents.q - spec.exponents.p
    r_v = solve_R(spec, v)
    trace = v.values[mesh.boundary_nodes]
    errors = []
    warm = None
    prev_s = None
    for s in schedule.values:
        guess = None
        if warm is not None:
            guess = NodalField(mesh, warm.values * (s / prev_s))
        sol = solve_dirichlet(spec, s * trace, u0=guess)
        warm, prev_s = sol.u, s
        diff = NodalField(
            mesh, sol.u.values - s * v.values - s ** power * r_v.values)
        errors.append(max(l2_norm(mesh, diff) / s ** power, 1e-300))
    errors = np.array(errors)
    slope = np.polyfit(np.log(schedule.values), np.log(errors), 1)[0]
    fitted = -slope if schedule.increasing else slope
    passed = bool(np.all(np.diff(errors) < 0.0))
    return ExpansionReport(schedule.values, tuple(errors), float(fitted),
                           passed)


def _scaled_pairing_sweep(spec, v, omegas, schedule, plap_cache):
    """Per-omega arrays of D(s) = s^{1-q} (<L_a s v, w> - s^{p-1} P0)."""
    mesh = spec.mesh
    p, q = spec.exponents.p, spec.exponents.q
    trace = v.values[mesh.boundary_nodes]
    # the reference pairing uses the unregularized flux: homogeneity in s
    # is then exact and the s^{p-1} leading term cancels by construction
    plap0_spec = plap_cache.spec.with_(delta=0.0)
    plap0 = [pairing_from_solution(plap0_spec, v, w) for w in omegas]
    rows = []
    warm, prev_s = None, None
    for s in schedule.values:
        guess = None
        if warm is not None:
            guess = NodalField(mesh, warm.values * (s / prev_s))
        sol = solve_dirichlet(spec, s * trace, u0=guess)
        warm, prev_s = sol.u, s
        row = [s ** (1.0 - q) * (pairing_from_solution(spec, sol.u, w)
                                 - s ** (p - 1.0) * p0)
               for w, p0 in zip(omegas, plap0)]
        rows.append(row)
    return np.array(rows)  # (n_schedule, n_omega)


def I_limit_many(spec, v, gs, schedule, plap_cache=None):
    """One forward sweep serving several test data ``gs`` (pairing is
    linear in g, so extra test functions are free)."""
    _check_regime(spec, schedule)
    _check_probe(spec, v)
    mesh = spec.mesh
    if plap_cache is None:
        plap_cache = PLapCache(mesh, spec.exponents.p,
                               newton_tol=spec.newton_tol, delta=spec.delta)
    omegas = [plap_cache.extension(g) for g in gs]
    table = _scaled_pairing_sweep(spec, v, omegas, schedule, plap_cache)
    return [aitken_extrapolate(table[:, j]) for j in range(len(gs))]


def I_limit(spec, v, g, schedule, plap_cache=None):
    """Extrapolated DN discrepancy limit I(v, g); see I_direct for the
    closed form it converges to."""
    return I_limit_many(spec, v, [g], schedule, plap_cache)[0]


def I_direct(spec, v, g=None, omega=None):
    """Closed-form value ``int (A_v^p grad R_v + a J^q(grad v)) . grad w``.

    One linear solve (solve_R) plus one quadrature; the oracle for
    I_limit.  ``omega`` defaults to the harmonic extension of ``g``.
    """
    mesh = spec.mesh
    if omega is None:
        if g is None:
            raise ValueError("need either g or an extension omega")
        omega = harmonic_extension(mesh, g)
    r_v = solve_R(spec, v)
    gv = gradient(mesh, v)
    norms = np.hypot(gv[:, 0], gv[:, 1])
    a_p = a_matrix(spec.exponents.p, gv)
    term = np.einsum("eij,ej->ei", a_p, gradient(mesh, r_v))
    term = term + (spec.a_elem * norms ** (spec.exponents.q - 2.0))[:, None] * gv
    gw = gradient(mesh, omega)
    return float(np.dot(mesh.element_area,
                        term[:, 0] * gw[:, 0] + term[:, 1] * gw[:, 1]))


@dataclass
class VTauResult:
    """p-harmonic family member with its degeneracy monitor."""

    solution: object
    min_gradient: float
    degenerate: bool

    @property
    def u(self):
        return self.solution.u


def vtau_solution(p, v0, phi, tau, newton_tol=1e-11, degeneracy_floor=1e-8):
    """Solve the p-Laplace problem with boundary data ``v0 + tau phi``.

    Reports ``min |grad v_tau|``; the result is marked degenerate when the
    solve grazes a critical point (callers may escalate).
    """
    mesh = v0.mesh
    spec = plaplace_spec(mesh, p, newton_tol=newton_tol)
    trace = v0.values[mesh.boundary_nodes] + tau * np.asarray(phi, dtype=float)
    sol = solve_dirichlet(spec, trace, u0=v0)
    g = gradient(mesh, sol.u)
    min_grad = float(np.hypot(g[:, 0], g[:, 1]).min())
    return VTauResult(sol, min_grad, min_grad <= degeneracy_floor)


def J_fd_many(spec, v0, phi1, phi2s, tau=1e-2, schedule=None,
              plap_cache=None, half_step=True):
    """Central-difference derivative of I along the tau family, for
    several test data at once.

    ``J = d/dtau I(v_tau, g)`` with ``v_tau`` p-harmonic for boundary
    data ``v0 + tau phi1``.  With ``half_step`` the stencil is repeated
    at tau/2; the value is the half-step one and the bar picks up the
    Richardson-estimated truncation |J_tau - J_tau/2| / 3.  Degenerate
    family members raise.
    """
    if schedule is None:
        schedule = (LimitSchedule.default_mu()
                    if spec.exponents.p > spec.exponents.q
                    else LimitSchedule.default_epsilon())
    p = spec.exponents.p
    if plap_cache is None:
        plap_cache = PLapCache(spec.mesh, p, newton_tol=spec.newton_tol,
                               delta=spec.delta)

    omegas = [plap_cache.extension(g) for g in phi2s]

    def stencil(t):
        # the schedule-extrapolation bias is common to +tau and -tau, so
        # difference the raw sweeps first and extrapolate the quotient
        plus = vtau_solution(p, v0, phi1, t, newton_tol=spec.newton_tol)
        minus = vtau_solution(p, v0, phi1, -t, newton_tol=spec.newton_tol)
        for fam in (plus, minus):
            if fam.degenerate:
                raise DegenerateGradientError(
                    f"v_tau family degenerates at tau={t:+.3e} "
                    f"(min |grad| = {fam.min_gradient:.3e})")
            _check_probe(spec, fam.u)
        tp = _scaled_pairing_sweep(spec, plus.u, omegas, schedule, plap_cache)
        tm = _scaled_pairing_sweep(spec, minus.u, omegas, schedule, plap_cache)
        diff = (tp - tm) / (2.0 * t)
        ests = [aitken_extrapolate(diff[:, j]) for j in range(len(phi2s))]
        vals = [e.value for e in ests]
        bars = [e.error_bar for e in ests]
        flags = [e.flagged for e in ests]
        return vals, bars, flags

    vals, bars, flags = stencil(tau)
    if not half_step:
        return [LimitEstimate(v, b, f, (v,))
                for v, b, f in zip(vals, bars, flags)]
    vals2, bars2, flags2 = stencil(tau / 2.0)
    out = []
    for j in range(len(phi2s)):
        trunc = abs(vals[j] - vals2[j]) / 3.0
        out.append(LimitEstimate(
            value=vals2[j],
            error_bar=bars2[j] + trunc,
            flagged=flags[j] or flags2[j],
            samples=(vals[j], vals2[j])))
    return out


def J_fd(spec, v0, phi1, phi2, tau=1e-2, schedule=None, plap_cache=None,
         half_step=True):
    """Derivative of I(v_tau, g) at tau = 0 from DN data alone."""
    return J_fd_many(spec, v0, phi1, [phi2], tau, schedule, plap_cache,
                     half_step)[0]


def _is_analytic(field):
    return hasattr(field, "gradients_at")


def _probe_gradients(mesh, field, points, n_quad):
    """(M, Q, 2) probe gradients: exact for analytic probes, the
    elementwise FE constant otherwise."""
    if _is_analytic(field):
        return field.gradients_at(points.reshape(-1, 2)).reshape(
            mesh.n_elements, n_quad, 2)
    g = gradient(mesh, field)
    return np.broadcast_to(g[:, None, :], (mesh.n_elements, n_quad, 2))


def J_direct(spec, v0, V1, V2, r0=None):
    """Integration-by-parts form of J for probes solving the linearized
    equation (or exact CGO fields):

        J = int a A^q grad V1 . grad V2 dx
            + int grad R_v0 . (Adot(V1) grad V2) dx

    The divergence term is evaluated weakly through ``grad R`` (R vanishes
    on the boundary), avoiding second derivatives.  Complex probes are the
    bilinear extension (equal to the four-real-part assembly).  ``r0``
    optionally reuses a precomputed corrector.

    Quadrature: the 3-point rule for nodal probes; exact (analytic) probes
    at high frequency outgrow it, so they use the degree-4 rule instead.
    """
    mesh = spec.mesh
    q = spec.exponents.q
    g0 = gradient(mesh, v0)
    a_q = a_matrix(q, g0)
    if r0 is None:
        r0 = solve_R(spec, v0)
    gr = gradient(mesh, r0)

    if _is_analytic(V1) or _is_analytic(V2):
        lam, weights, points = mesh.quadrature4()
        a_quad = spec.a.values[mesh.triangles] @ lam.T  # (M, 6), P1 exact
    else:
        weights = np.full(3, 1.0 / 3.0)
        points = mesh.quad_points
        a_quad = quad_values(mesh, spec.a)
    n_quad = len(weights)
    grads1 = _probe_gradients(mesh, V1, points, n_quad)
    grads2 = _probe_gradients(mesh, V2, points, n_quad)

    # a-term; A^q and grad R are constant per element
    aqg1 = np.einsum("eij,eqj->eqi", a_q, grads1)
    mixed = (aqg1 * grads2).sum(axis=2)  # (M, Q)
    a_term = (((a_quad * mixed) @ weights) * mesh.element_area).sum()

    # R-term: Adot is linear in its second argument, evaluated per point
    flat1 = grads1.reshape(-1, 2)
    g0_rep = np.repeat(g0, n_quad, axis=0)
    adot = a_dot(spec.exponents.p, g0_rep, flat1)
    adot_g2 = np.einsum("nij,nj->ni", adot, grads2.reshape(-1, 2))
    gr_rep = np.repeat(gr, n_quad, axis=0)
    dots = (gr_rep * adot_g2).sum(axis=1).reshape(mesh.n_elements, n_quad)
    r_term = ((dots @ weights) * mesh.element_area).sum()

    total = a_term + r_term
    return complex(total)


def J_direct_explicit(spec, v0, V1, omega):
    """Pre-integration-by-parts form, using the solved Rdot:

        J = int (Adot(V1) grad R_v0 + A^p grad Rdot + a A^q grad V1)
            . grad omega dx

    Valid for any extension ``omega`` (not only linearized solutions).
    """
    mesh = spec.mesh
    p, q = spec.exponents.p, spec.exponents.q
    g0 = gradient(mesh, v0)
    r0 = solve_R(spec, v0)
    rdot = solve_Rdot(spec, v0, V1, r0)
    gv1 = gradient(mesh, V1)
    adot = a_dot(p, g0, gv1)
    term = np.einsum("eij,ej->ei", adot,
                     gradient(mesh, r0).astype(adot.dtype))
    term = term + np.einsum("eij,ej->ei", a_matrix(p, g0),
                            gradient(mesh, rdot))
    term = term + spec.a_elem[:, None] * np.einsum(
        "eij,ej->ei", a_matrix(q, g0), gv1)
    gw = gradient(mesh, omega)
    val = np.dot(mesh.element_area,
                 term[:, 0] * gw[:, 0] + term[:, 1] * gw[:, 1])
    return complex(val) if np.iscomplexobj(term) else float(val)
