"""Uniform triangulations of rectangles and piecewise-linear nodal fields.

The mesh is the discrete stand-in for the domain: a rectangle split into
``nx*ny`` cells, each cell cut into two right triangles along the
lower-left to upper-right diagonal (nonobtuse elements, so the p=2
stiffness matrix is an M-matrix).  All arrays are frozen after
construction; every operation here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import FieldMismatchError


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle ``(x_min, x_max) x (y_min, y_max)``."""

    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate domain: [{self.x_min}, {self.x_max}] x "
                f"[{self.y_min}, {self.y_max}]")

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def area(self):
        return self.width * self.height


UNIT_SQUARE = Domain(0.0, 1.0, 0.0, 1.0)


def _freeze(a):
    a.setflags(write=False)
    return a


class Mesh:
    """Immutable uniform triangulation of a rectangle.

    Attributes
    ----------
    nodes : (n_nodes, 2) float array, row-major grid ordering.
    triangles : (n_elements, 3) int array of node indices (counterclockwise).
    boundary_nodes, interior_nodes : index arrays partitioning the nodes.
    element_area : (n_elements,) positive areas.
    grad_ops : (n_elements, 2, 3) P1 gradient operator per element;
        ``grad u|_T = grad_ops[T] @ u[triangles[T]]``.
    centroids : (n_elements, 2) element centroids (1-point quadrature).
    quad_points : (n_elements, 3, 2) edge midpoints (3-point quadrature,
        exact for quadratics; used where integrands vary inside elements).
    """

    def __init__(self, nx, ny, domain):
        nx, ny = int(nx), int(ny)
        if nx < 1 or ny < 1:
            raise ValueError(f"grid must have at least 1x1 cells, got {nx}x{ny}")
        self.nx, self.ny = nx, ny
        self.domain = domain

        xs = np.linspace(domain.x_min, domain.x_max, nx + 1)
        ys = np.linspace(domain.y_min, domain.y_max, ny + 1)
        X, Y = np.meshgrid(xs, ys)  # node index = j*(nx+1) + i
        nodes = np.column_stack([X.ravel(), Y.ravel()])

        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
        n00 = (jj * (nx + 1) + ii).ravel()
        n10 = n00 + 1
        n01 = n00 + (nx + 1)
        n11 = n01 + 1
        # diagonal n00-n11; both triangles counterclockwise
        lower = np.column_stack([n00, n10, n11])
        upper = np.column_stack([n00, n11, n01])
        triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
        triangles[0::2] = lower
        triangles[1::2] = upper

        self.nodes = _freeze(nodes)
        self.triangles = _freeze(triangles)

        gi = np.arange((nx + 1) * (ny + 1))
        col = gi % (nx + 1)
        row = gi // (nx + 1)
        on_boundary = (col == 0) | (col == nx) | (row == 0) | (row == ny)
        self.boundary_mask = _freeze(on_boundary)
        self.boundary_nodes = _freeze(np.nonzero(on_boundary)[0])
        self.interior_nodes = _freeze(np.nonzero(~on_boundary)[0])

        p0 = nodes[triangles[:, 0]]
        p1 = nodes[triangles[:, 1]]
        p2 = nodes[triangles[:, 2]]
        signed = 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
        if np.any(signed <= 0):
            raise ValueError("triangulation produced non-positive element areas")
        self.element_area = _freeze(signed)

        # P1 shape gradients: grad phi_i = (b_i, c_i) / (2A), cyclic differences
        area2 = (2.0 * signed)[:, None]
        b = np.stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1)
        c = np.stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1)
        grad_ops = np.stack([b / area2, c / area2], axis=1)  # (M, 2, 3)
        self.grad_ops = _freeze(np.ascontiguousarray(grad_ops))
        # Gram products of shape gradients, reused by assembly kernels.
        self.shape_products = _freeze(np.einsum("edk,edl->ekl", grad_ops, grad_ops))

        self.centroids = _freeze((p0 + p1 + p2) / 3.0)
        self.quad_points = _freeze(np.stack(
            [(p0 + p1) / 2.0, (p1 + p2) / 2.0, (p2 + p0) / 2.0], axis=1))

        tri32 = triangles
        self._coo_rows = _freeze(np.repeat(tri32, 3, axis=1).ravel())
        self._coo_cols = _freeze(np.tile(tri32, (1, 3)).ravel())
        self._quad4 = None

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.triangles.shape[0]

    @property
    def cell_diameter(self):
        dx = self.domain.width / self.nx
        dy = self.domain.height / self.ny
        return float(np.hypot(dx, dy))

    def coo_pattern(self):
        """Row/column index arrays for per-element 3x3 blocks in COO order."""
        return self._coo_rows, self._coo_cols

    def quadrature4(self):
        """Degree-4 rule (6 points/triangle): barycentric coords (6, 3),
        weights (6,) summing to 1, and points (n_elements, 6, 2).

        Used where oscillatory integrands outgrow the 3-point rule (high
        frequency probes); computed lazily and cached.
        """
        if self._quad4 is None:
            a1, w1 = 0.445948490915965, 0.223381589678011
            a2, w2 = 0.091576213509771, 0.109951743655322
            lam = np.array([
                [1 - 2 * a1, a1, a1], [a1, 1 - 2 * a1, a1], [a1, a1, 1 - 2 * a1],
                [1 - 2 * a2, a2, a2], [a2, 1 - 2 * a2, a2], [a2, a2, 1 - 2 * a2],
            ])
            weights = np.array([w1, w1, w1, w2, w2, w2])
            verts = self.nodes[self.triangles]  # (M, 3, 2)
            points = np.einsum("qk,mkd->mqd", lam, verts)
            self._quad4 = (_freeze(lam), _freeze(weights), _freeze(points))
        return self._quad4

    def locate(self, points):
        """Element index containing each point (clamped to the grid)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        fx = (pts[:, 0] - self.domain.x_min) / self.domain.width * self.nx
        fy = (pts[:, 1] - self.domain.y_min) / self.domain.height * self.ny
        i = np.clip(np.floor(fx).astype(np.int64), 0, self.nx - 1)
        j = np.clip(np.floor(fy).astype(np.int64), 0, self.ny - 1)
        frac_x = fx - i
        frac_y = fy - j
        cell = j * self.nx + i
        # lower triangle when below the n00-n11 diagonal
        return 2 * cell + (frac_y > frac_x)

    def __eq__(self, other):
        return self is other

    def __hash__(self):
        return id(self)

    def __repr__(self):
        return (f"Mesh({self.nx}x{self.ny}, "
                f"[{self.domain.x_min},{self.domain.x_max}]x"
                f"[{self.domain.y_min},{self.domain.y_max}])")


def build_mesh(nx, ny, domain=UNIT_SQUARE):
    """Build the uniform triangulation with deterministic node ordering."""
    return Mesh(nx, ny, domain)


@dataclass
class NodalField:
    """Piecewise-linear scalar field given by one real value per node."""

    mesh: Mesh
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.shape != (self.mesh.n_nodes,):
            raise FieldMismatchError(
                f"field has {vals.shape} values for {self.mesh.n_nodes} nodes")
        if not np.all(np.isfinite(vals)):
            raise FieldMismatchError("field contains non-finite values")
        self.values = vals

    @classmethod
    def from_function(cls, mesh, f):
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        return cls(mesh, np.broadcast_to(np.asarray(f(x, y), dtype=float),
                                         (mesh.n_nodes,)).copy())

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_nodes))

    def copy(self):
        return NodalField(self.mesh, self.values.copy())

    def sample(self, points):
        """Evaluate the P1 interpolant at arbitrary points inside the domain."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        elems = self.mesh.locate(pts)
        tri = self.mesh.triangles[elems]
        verts = self.mesh.nodes[tri]  # (n, 3, 2)
        v0 = verts[:, 0]
        d = pts - v0
        e1 = verts[:, 1] - v0
        e2 = verts[:, 2] - v0
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
        l0 = 1.0 - l1 - l2
        vals = self.values[tri]
        return l0 * vals[:, 0] + l1 * vals[:, 1] + l2 * vals[:, 2]

    def boundary_trace(self):
        return self.values[self.mesh.boundary_nodes].copy()

    def __add__(self, other):
        self._check(other)
        return NodalField(self.mesh, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return NodalField(self.mesh, self.values - other.values)

    def __mul__(self, scalar):
        return NodalField(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return NodalField(self.mesh, -self.values)

    def _check(self, other):
        if other.mesh is not self.mesh:
            raise FieldMismatchError("fields live on different meshes")


@dataclass
class ComplexNodalField:
    """Complex P1 field stored as paired real fields on one mesh."""

    re: NodalField
    im: NodalField

    def __post_init__(self):
        if self.re.mesh is not self.im.mesh:
            raise FieldMismatchError("real and imaginary parts share no mesh")

    @classmethod
    def from_values(cls, mesh, values):
        values = np.asarray(values)
        return cls(NodalField(mesh, values.real.astype(float)),
                   NodalField(mesh, np.imag(values).astype(float)))

    @classmethod
    def from_function(cls, mesh, f):
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        return cls.from_values(mesh, np.asarray(f(x, y), dtype=complex))

    @property
    def mesh(self):
        return self.re.mesh

    @property
    def values(self):
        return self.re.values + 1j * self.im.values


def gradient(mesh, u):
    """Exact gradient of the P1 interpolant, constant on each element.

    Accepts a ``NodalField``/``ComplexNodalField`` or a plain value array;
    returns an ``(n_elements, 2)`` array (complex when the input is).
    """
    if isinstance(u, ComplexNodalField):
        return gradient(mesh, u.re) + 1j * gradient(mesh, u.im)
    vals = u.values if isinstance(u, NodalField) else np.asarray(u)
    if isinstance(u, NodalField) and u.mesh is not mesh:
        raise FieldMismatchError("field lives on a different mesh")
    if vals.shape != (mesh.n_nodes,):
        raise FieldMismatchError(
            f"expected {mesh.n_nodes} nodal values, got {vals.shape}")
    if np.iscomplexobj(vals):
        return (_kernels.element_gradients(mesh.grad_ops, mesh.triangles, vals.real)
                + 1j * _kernels.element_gradients(mesh.grad_ops, mesh.triangles,
                                                  vals.imag))
    return _kernels.element_gradients(mesh.grad_ops, mesh.triangles,
                                      np.ascontiguousarray(vals, dtype=float))


def integrate(mesh, g):
    """Integrate per-element data: ``sum(g_T * area_T)``.

    ``g`` holds one value per element (centroid rule) or one value per
    3-point quadrature node, shape ``(n_elements, 3)``.  Summation order is
    deterministic (element order).
    """
    g = np.asarray(g)
    if g.shape == (mesh.n_elements,):
        return (g * mesh.element_area).sum()
    if g.shape == (mesh.n_elements, 3):
        return (g.mean(axis=1) * mesh.element_area).sum()
    raise FieldMismatchError(
        f"expected ({mesh.n_elements},) or ({mesh.n_elements}, 3) values, "
        f"got {g.shape}")


def boundary_values(mesh, f):
    """Nodal trace of a point function on the boundary nodes."""
    x = mesh.nodes[mesh.boundary_nodes, 0]
    y = mesh.nodes[mesh.boundary_nodes, 1]
    vals = np.asarray(f(x, y))
    return np.broadcast_to(vals, (len(mesh.boundary_nodes),)).copy()


def element_means(mesh, u):
    """Centroid values (= vertex means) of a nodal field, per element."""
    vals = u.values if isinstance(u, NodalField) else np.asarray(u)
    return vals[mesh.triangles].mean(axis=1)


def quad_values(mesh, u):
    """Values of a nodal field at the 3-point quadrature nodes.

    Edge midpoints of a P1 field are vertex-pair means, so this is exact.
    """
    vals = u.values if isinstance(u, NodalField) else np.asarray(u)
    v = vals[mesh.triangles]  # (M, 3)
    return np.stack([(v[:, 0] + v[:, 1]) / 2.0,
                     (v[:, 1] + v[:, 2]) / 2.0,
                     (v[:, 2] + v[:, 0]) / 2.0], axis=1)


def l2_norm(mesh, u):
    """L2 norm of a P1 field, via the 3-point rule (exact for squares)."""
    if isinstance(u, ComplexNodalField):
        return float(np.sqrt(l2_norm(mesh, u.re) ** 2 + l2_norm(mesh, u.im) ** 2))
    q = quad_values(mesh, u)
    return float(np.sqrt(max(integrate(mesh, q * q), 0.0)))


def l2_error_vs(mesh, u, f):
    """L2 distance between a P1 field and a point function ``f(x, y)``.

    ``f`` is evaluated exactly at the 3-point quadrature nodes, so this
    measures the true discretization error, not the nodal one.
    """
    qp = mesh.quad_points
    exact = f(qp[..., 0], qp[..., 1])
    diff = quad_values(mesh, u) - exact
    return float(np.sqrt(max(integrate(mesh, np.abs(diff) ** 2), 0.0)))
