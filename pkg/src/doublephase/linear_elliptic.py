"""Variable-coefficient linear Dirichlet solves: Div(A grad R) problems.

Weak contract used throughout (and by the specializations below):
find R with R = g on the boundary nodes and

    sum_T area_T (A_T grad R . grad phi_i) = sum_T area_T (F_T . grad phi_i)

for every interior nodal test function phi_i.  Flux loads are always
treated weakly; F is never differentiated.  A must be symmetric positive
definite on every element.  Complex data are handled as two real solves;
the sparse core is real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import EllipticityError, FieldMismatchError, LinearSolveError
from .mesh import ComplexNodalField, NodalField, gradient
from .tensorops import a_dot, a_matrix, symmetric_eigenvalues

#: unknown-count threshold below which the direct factorization is used
DIRECT_SOLVE_LIMIT = 10_000
#: absolute CG tolerance on the residual
CG_ATOL = 1e-12

_pattern_cache = {}


class StiffnessPattern:
    """Precomputed index maps from element blocks to interior/boundary
    sparse blocks (fixed per mesh; only the data vector changes)."""

    def __init__(self, mesh):
        rows, cols = mesh.coo_pattern()
        n = mesh.n_nodes
        interior = mesh.interior_nodes
        boundary = mesh.boundary_nodes
        int_of = -np.ones(n, dtype=np.int64)
        int_of[interior] = np.arange(len(interior))
        bnd_of = -np.ones(n, dtype=np.int64)
        bnd_of[boundary] = np.arange(len(boundary))

        row_int = int_of[rows] >= 0
        col_int = int_of[cols] >= 0
        sel_ii = row_int & col_int
        sel_ib = row_int & ~col_int
        self.n_interior = len(interior)
        self.n_boundary = len(boundary)
        self.sel_ii = np.nonzero(sel_ii)[0]
        self.ind_ii = (int_of[rows[sel_ii]], int_of[cols[sel_ii]])
        self.sel_ib = np.nonzero(sel_ib)[0]
        self.ind_ib = (int_of[rows[sel_ib]], bnd_of[cols[sel_ib]])

    def interior_matrix(self, block_data):
        data = block_data.reshape(-1)
        return sp.coo_matrix(
            (data[self.sel_ii], self.ind_ii),
            shape=(self.n_interior, self.n_interior)).tocsr()

    def coupling_matrix(self, block_data):
        data = block_data.reshape(-1)
        return sp.coo_matrix(
            (data[self.sel_ib], self.ind_ib),
            shape=(self.n_interior, self.n_boundary)).tocsr()


def stiffness_pattern(mesh):
    pat = _pattern_cache.get(mesh)
    if pat is None:
        pat = _pattern_cache[mesh] = StiffnessPattern(mesh)
    return pat


def check_ellipticity(a_mat):
    """Raise unless every 2x2 block is symmetric positive definite."""
    a = np.asarray(a_mat, dtype=float)
    asym = np.abs(a[:, 0, 1] - a[:, 1, 0])
    scale = np.abs(a).max(axis=(1, 2)) + 1e-300
    bad = np.nonzero(asym > 1e-12 * scale)[0]
    if bad.size:
        raise EllipticityError(
            f"coefficient matrix is not symmetric on element {bad[0]}")
    eig = symmetric_eigenvalues(a)
    bad = np.nonzero(eig[:, 0] <= 0.0)[0]
    if bad.size:
        raise EllipticityError(
            f"coefficient matrix is not positive definite on element "
            f"{bad[0]} (min eigenvalue {eig[bad[0], 0]:.3e})")


@dataclass
class LinearProblem:
    """One Dirichlet problem: coefficient A, flux load F, boundary data g."""

    mesh: object
    A: np.ndarray
    F: np.ndarray | None = None
    g: np.ndarray | None = None

    def __post_init__(self):
        m = self.mesh.n_elements
        self.A = np.asarray(self.A, dtype=float)
        if self.A.shape != (m, 2, 2):
            raise FieldMismatchError(
                f"A has shape {self.A.shape}, expected ({m}, 2, 2)")
        check_ellipticity(self.A)
        if self.F is not None:
            self.F = np.asarray(self.F, dtype=float)
            if self.F.shape != (m, 2):
                raise FieldMismatchError(
                    f"F has shape {self.F.shape}, expected ({m}, 2)")
        nb = len(self.mesh.boundary_nodes)
        if self.g is None:
            self.g = np.zeros(nb)
        else:
            self.g = np.asarray(self.g, dtype=float)
            if self.g.shape != (nb,):
                raise FieldMismatchError(
                    f"g has {self.g.shape} values for {nb} boundary nodes")


def _solve_spd(k_ii, rhs):
    """SPD solve: CG with diagonal preconditioner, direct below the
    size threshold."""
    n = k_ii.shape[0]
    if n == 0:
        return np.zeros(0)
    if n < DIRECT_SOLVE_LIMIT:
        return spla.splu(k_ii.tocsc()).solve(rhs)
    diag = k_ii.diagonal()
    if np.any(diag <= 0):
        raise EllipticityError("nonpositive diagonal in SPD solve")
    m_inv = spla.LinearOperator((n, n), matvec=lambda v: v / diag)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(k_ii, rhs, rtol=CG_ATOL, atol=CG_ATOL, M=m_inv,
                      maxiter=10 * n, callback=cb)
    if info != 0:
        raise LinearSolveError(
            f"preconditioned CG did not converge (info={info})",
            iterations=count[0])
    return x


def solve_linear(problem):
    """Solve the weak problem; relative Galerkin residual <= 1e-10."""
    mesh = problem.mesh
    pat = stiffness_pattern(mesh)
    stiff, load = _kernels.varcoef_system(
        mesh.grad_ops, mesh.triangles, mesh.element_area, problem.A,
        problem.F, mesh.n_nodes)
    k_ii = pat.interior_matrix(stiff)
    rhs = load[mesh.interior_nodes]
    if np.any(problem.g != 0.0):
        rhs = rhs - pat.coupling_matrix(stiff) @ problem.g
    x = _solve_spd(k_ii, rhs)
    res = np.linalg.norm(k_ii @ x - rhs)
    if res > max(CG_ATOL * 10, 1e-10 * np.linalg.norm(rhs)):
        raise LinearSolveError(
            f"linear solve residual {res:.3e} exceeds tolerance")
    values = np.zeros(mesh.n_nodes)
    values[mesh.interior_nodes] = x
    values[mesh.boundary_nodes] = problem.g
    return NodalField(mesh, values)


def galerkin_residual(problem, field):
    """Residual of the weak form against interior basis functions,
    relative to the load norm."""
    mesh = problem.mesh
    pat = stiffness_pattern(mesh)
    stiff, load = _kernels.varcoef_system(
        mesh.grad_ops, mesh.triangles, mesh.element_area, problem.A,
        problem.F, mesh.n_nodes)
    k_ii = pat.interior_matrix(stiff)
    rhs = load[mesh.interior_nodes]
    if np.any(problem.g != 0.0):
        rhs = rhs - pat.coupling_matrix(stiff) @ problem.g
    res = np.linalg.norm(k_ii @ field.values[mesh.interior_nodes] - rhs)
    return float(res / max(np.linalg.norm(rhs), 1e-300))


def solve_linear_complex(mesh, a_mat, f_elem=None, g=None):
    """Complex load/boundary data as two real solves on one coefficient."""
    nb = len(mesh.boundary_nodes)
    g = np.zeros(nb, dtype=complex) if g is None else np.asarray(g, dtype=complex)
    if f_elem is None:
        f_re = f_im = None
    else:
        f_elem = np.asarray(f_elem, dtype=complex)
        f_re, f_im = f_elem.real, f_elem.imag
    re = solve_linear(LinearProblem(mesh, a_mat, f_re, g.real))
    im = solve_linear(LinearProblem(mesh, a_mat, f_im, g.imag))
    return ComplexNodalField(re, im)


_laplace_cache = {}


def harmonic_extension(mesh, g):
    """Discrete harmonic (p=2, a=0) extension of boundary data ``g``.

    The canonical extension used by the DN pairing; the Laplace
    factorization is cached per mesh.  Complex data extend partwise.
    """
    g = np.asarray(g)
    if np.iscomplexobj(g):
        return ComplexNodalField(harmonic_extension(mesh, g.real),
                                 harmonic_extension(mesh, np.imag(g)))
    entry = _laplace_cache.get(mesh)
    if entry is None:
        pat = stiffness_pattern(mesh)
        eye = np.broadcast_to(np.eye(2), (mesh.n_elements, 2, 2)).copy()
        stiff, _ = _kernels.varcoef_system(
            mesh.grad_ops, mesh.triangles, mesh.element_area, eye, None,
            mesh.n_nodes)
        k_ii = pat.interior_matrix(stiff)
        k_ib = pat.coupling_matrix(stiff)
        solve = spla.splu(k_ii.tocsc()).solve if k_ii.shape[0] < DIRECT_SOLVE_LIMIT else None
        entry = _laplace_cache[mesh] = (k_ii, k_ib, solve)
    k_ii, k_ib, solve = entry
    rhs = -k_ib @ g.astype(float)
    x = solve(rhs) if solve is not None else _solve_spd(k_ii, rhs)
    values = np.zeros(mesh.n_nodes)
    values[mesh.interior_nodes] = x
    values[mesh.boundary_nodes] = g
    return NodalField(mesh, values)


def solve_R(spec, v):
    """First corrector of the small/large-datum expansion.

    Solves ``Div(A_v^p grad R) = -Div(a |grad v|^{q-2} grad v)`` with
    homogeneous Dirichlet data: coefficient ``A = a_matrix(p, grad v)``
    and flux load ``F = -a * flux(q, grad v)`` per element.
    """
    mesh = spec.mesh
    g = gradient(mesh, v)
    a_mat = a_matrix(spec.exponents.p, g)
    n = np.hypot(g[:, 0], g[:, 1])
    q = spec.exponents.q
    f_elem = -(spec.a_elem * n ** (q - 2.0))[:, None] * g
    return solve_linear(LinearProblem(mesh, a_mat, f_elem))


def solve_V(p, v0, phi):
    """Linearized equation along a p-harmonic family:
    ``Div(A_{v0}^p grad V) = 0`` with ``V = phi`` on the boundary.

    ``phi`` may be complex (two real solves; the coefficient is real).
    """
    mesh = v0.mesh
    a_mat = a_matrix(p, gradient(mesh, v0))
    phi = np.asarray(phi)
    if np.iscomplexobj(phi):
        return solve_linear_complex(mesh, a_mat, None, phi)
    return solve_linear(LinearProblem(mesh, a_mat, None, phi.astype(float)))


def solve_Rdot(spec, v0, V, R_v0):
    """Derivative of the corrector along the family:
    ``Div(A^p grad Rdot) = -Div(Adot(V) grad R_v0) - Div(a A^q grad V)``
    with homogeneous data; loads assembled from a_dot and a_matrix.
    """
    mesh = spec.mesh
    p, q = spec.exponents.p, spec.exponents.q
    g0 = gradient(mesh, v0)
    gv = gradient(mesh, V)
    gr = gradient(mesh, R_v0)
    a_p = a_matrix(p, g0)
    a_q = a_matrix(q, g0)
    adot = a_dot(p, g0, gv)
    f_elem = -(np.einsum("eij,ej->ei", adot, gr.astype(adot.dtype))
               + spec.a_elem[:, None] * np.einsum("eij,ej->ei", a_q, gv))
    if np.iscomplexobj(f_elem):
        return solve_linear_complex(mesh, a_p, f_elem)
    return solve_linear(LinearProblem(mesh, a_p, f_elem))
