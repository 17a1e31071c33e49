"""Dirichlet-to-Neumann pairings via the volume-integral definition.

The DN pairing of boundary data (f, g) is

    <L_a f, g> = int_Omega (|grad u|^{p-2} + a |grad u|^{q-2}) grad u . grad w dx

with u the forward solution for f and w any extension of g; the value is
extension-independent up to solver tolerance because u satisfies the
discrete weak form.  No boundary-flux evaluation is ever attempted.  The
canonical extension is the discrete harmonic one.

``pairing_plap`` exposes the p-Laplace reference map with the
(p-1)-homogeneity shortcut: one cached solve serves every scaling of f.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FieldMismatchError
from .forward import plaplace_spec, solve_dirichlet
from .linear_elliptic import harmonic_extension
from .mesh import NodalField, gradient


def flux_field(spec, u):
    """Regularized flux per element:
    ``(t^{(p-2)/2} + a t^{(q-2)/2}) grad u`` with ``t = |grad u|^2 + delta^2``."""
    g = gradient(spec.mesh, u)
    t = g[:, 0] ** 2 + g[:, 1] ** 2 + spec.delta ** 2
    with np.errstate(divide="ignore"):
        wp = np.where(t > 0.0, t ** (0.5 * spec.exponents.p - 1.0), 0.0)
        wq = np.where(t > 0.0, t ** (0.5 * spec.exponents.q - 1.0), 0.0)
    return (wp + spec.a_elem * wq)[:, None] * g


@dataclass
class DNQuery:
    """One pairing request; ``omega`` optionally overrides the extension."""

    spec: object
    f: np.ndarray
    g: np.ndarray
    omega: NodalField | None = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        nb = len(self.spec.mesh.boundary_nodes)
        if self.f.shape != (nb,) or self.g.shape != (nb,):
            raise FieldMismatchError("boundary data size mismatch")
        if self.omega is not None:
            trace = self.omega.values[self.spec.mesh.boundary_nodes]
            if np.abs(trace - self.g).max() > 1e-12 * max(
                    1.0, np.abs(self.g).max()):
                raise FieldMismatchError(
                    "extension omega does not match g on the boundary")


def pairing_from_solution(spec, u, omega):
    """Volume pairing of an already-computed solution against an extension."""
    mesh = spec.mesh
    sigma = flux_field(spec, u)
    gw = gradient(mesh, omega)
    return float(np.dot(mesh.element_area,
                        sigma[:, 0] * gw[:, 0] + sigma[:, 1] * gw[:, 1]))


def pairing(query, solution=None):
    """Evaluate the DN pairing <L_a f, g>; forward failures propagate."""
    spec = query.spec
    u = solution.u if solution is not None else solve_dirichlet(spec, query.f).u
    omega = query.omega
    if omega is None:
        omega = harmonic_extension(spec.mesh, query.g)
    return pairing_from_solution(spec, u, omega)


class PLapCache:
    """Immutable handle sharing p-Laplace solves and extensions across
    concurrent queries; keyed by the boundary data bytes."""

    def __init__(self, mesh, p, newton_tol=1e-10, delta=1e-8):
        self.mesh = mesh
        self.p = float(p)
        self.spec = plaplace_spec(mesh, p, newton_tol=newton_tol, delta=delta)
        self._solutions = {}
        self._extensions = {}

    def solution(self, f):
        key = np.asarray(f, dtype=float).tobytes()
        sol = self._solutions.get(key)
        if sol is None:
            sol = self._solutions[key] = solve_dirichlet(self.spec, f)
        return sol

    def extension(self, g):
        key = np.asarray(g, dtype=float).tobytes()
        ext = self._extensions.get(key)
        if ext is None:
            ext = self._extensions[key] = harmonic_extension(self.mesh, g)
        return ext


def pairing_plap(mesh, p, f, g, scale=1.0, cache=None):
    """``<L_0(scale f), g>`` for the p-Laplacian, via homogeneity.

    The flux is (p-1)-homogeneous and odd, so one cached solve at f gives
    every scaling: the factor is ``|scale|^{p-2} scale``.
    """
    if cache is None:
        cache = PLapCache(mesh, p)
    sol = cache.solution(f)
    omega = cache.extension(g)
    base = pairing_from_solution(cache.spec, sol.u, omega)
    factor = abs(scale) ** (p - 2.0) * scale if scale != 0.0 else 0.0
    return factor * base
