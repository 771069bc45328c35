"""Piecewise linear finite elements with homogeneous Dirichlet conditions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, InvalidInputError
from .mesh import Triangulation
from .sparse import as_csr


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle in barycentric coordinates.

    Weights are normalised to sum to one, so that ``area * sum(w * g)``
    approximates the integral of ``g`` over a triangle of that area.
    """

    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,)
    degree: int


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int) -> QuadratureRule:
    """Collapsed (Duffy) Gauss-Legendre rule exact for polynomials of total ``degree``."""
    if degree < 0:
        raise InvalidInputError("quadrature degree must be nonnegative")
    if degree <= 1:
        return QuadratureRule(np.full((1, 3), 1.0 / 3.0), np.ones(1), degree)
    # x = xi, y = eta * (1 - xi); the Jacobian (1 - xi) raises the xi-degree by one
    n_xi = math.ceil((degree + 2) / 2)
    n_eta = math.ceil((degree + 1) / 2)
    gx, wx = np.polynomial.legendre.leggauss(n_xi)
    ge, we = np.polynomial.legendre.leggauss(n_eta)
    xi, wxi = 0.5 * (gx + 1.0), 0.5 * wx
    eta, weta = 0.5 * (ge + 1.0), 0.5 * we
    XI, ETA = np.meshgrid(xi, eta, indexing="ij")
    W = np.outer(wxi * (1.0 - xi), weta) * 2.0
    x = XI.ravel()
    y = (ETA * (1.0 - XI)).ravel()
    points = np.column_stack([1.0 - x - y, x, y])
    points.setflags(write=False)
    weights = W.ravel()
    weights.setflags(write=False)
    return QuadratureRule(points, weights, degree)


class FeSpace:
    """P1 space on ``mesh``; interior vertices carry the degrees of freedom.

    With ``dirichlet=False`` every vertex is free, which is only meant for
    checking local element matrices.
    """

    def __init__(self, mesh: Triangulation, dirichlet: bool = True):
        self.mesh = mesh
        self.dirichlet = dirichlet
        if dirichlet:
            self.free = np.flatnonzero(~mesh.boundary_vertex)
        else:
            self.free = np.arange(mesh.n_vertices)
        self.dof_of_vertex = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.dof_of_vertex[self.free] = np.arange(len(self.free))
        self._quad = {}
        self._matrices = {}
        self._finder = None
        self._grads = None

    @property
    def n_dofs(self) -> int:
        return len(self.free)

    def __repr__(self):
        return f"FeSpace({self.mesh.n_elements} elements, {self.n_dofs} dofs)"

    # -- vectors ------------------------------------------------------------

    def to_full(self, coeffs) -> np.ndarray:
        full = np.zeros(self.mesh.n_vertices)
        full[self.free] = coeffs
        return full

    def function(self, coeffs=None) -> "FeFunction":
        if coeffs is None:
            coeffs = np.zeros(self.n_dofs)
        return FeFunction(self, np.asarray(coeffs, dtype=float))

    # -- geometry and quadrature -------------------------------------------

    @property
    def areas(self) -> np.ndarray:
        return self.mesh.geometry().area

    @property
    def gradients(self) -> np.ndarray:
        """(ne, 3, 2) constant gradients of the barycentric coordinates."""
        if self._grads is None:
            p = self.mesh.vertices[self.mesh.elements]
            B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
            Binv = np.linalg.inv(B)
            g = np.empty((len(p), 3, 2))
            g[:, 1] = Binv[:, 0]
            g[:, 2] = Binv[:, 1]
            g[:, 0] = -g[:, 1] - g[:, 2]
            self._grads = g
        return self._grads

    def quadrature(self, degree: int):
        """Physical points and weights: ``(rule, X, Y, JW)`` with arrays of shape (ne, nq)."""
        if degree not in self._quad:
            rule = triangle_quadrature(degree)
            p = self.mesh.vertices[self.mesh.elements]  # (ne, 3, 2)
            X = p[:, :, 0] @ rule.points.T
            Y = p[:, :, 1] @ rule.points.T
            JW = self.areas[:, None] * rule.weights[None, :]
            self._quad[degree] = (rule, X, Y, JW)
        return self._quad[degree]

    def at_quadrature(self, coeffs, degree: int) -> np.ndarray:
        rule = triangle_quadrature(degree)
        full = self.to_full(coeffs)
        return full[self.mesh.elements] @ rule.points.T

    def load_vector(self, values: np.ndarray, degree: int) -> np.ndarray:
        """Entries ``sum_q JW * values * phi_i`` for tabulated ``values`` (ne, nq)."""
        rule, _, _, JW = self.quadrature(degree)
        local = (values * JW) @ rule.points  # (ne, 3)
        full = np.bincount(
            self.mesh.elements.ravel(), local.ravel(), minlength=self.mesh.n_vertices
        )
        return full[self.free]

    def _restrict(self, local: np.ndarray):
        el = self.mesh.elements
        rows = np.repeat(el, 3, axis=1).ravel()
        cols = np.tile(el, (1, 3)).ravel()
        n = self.mesh.n_vertices
        A = sp.coo_array((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        A = A[self.free][:, self.free]
        return as_csr(A)

    # -- matrices -------------------------------------------------------------

    def stiffness(self):
        if "K" not in self._matrices:
            self._matrices["K"] = assemble_stiffness(self)
        return self._matrices["K"]

    def mass(self):
        if "M" not in self._matrices:
            self._matrices["M"] = assemble_mass(self)
        return self._matrices["M"]

    def locate(self, points) -> np.ndarray:
        """Index of an element containing each point, ``-1`` if outside."""
        if self._finder is None:
            from matplotlib.tri import Triangulation as MplTriangulation

            v = self.mesh.vertices
            tri = MplTriangulation(v[:, 0], v[:, 1], self.mesh.elements)
            self._finder = tri.get_trifinder()
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self._finder(points[:, 0], points[:, 1]), dtype=np.int64)


@dataclass(eq=False)
class FeFunction:
    """Nodal coefficients at the free vertices of ``space``."""

    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise InvalidInputError(
                f"expected {self.space.n_dofs} coefficients, got {self.coeffs.shape}"
            )

    def full(self) -> np.ndarray:
        """Values at every mesh vertex (zero on the Dirichlet boundary)."""
        return self.space.to_full(self.coeffs)

    def copy(self) -> "FeFunction":
        return FeFunction(self.space, self.coeffs.copy())

    def evaluate(self, points):
        return evaluate(self, points)


def assemble_stiffness(space: FeSpace):
    """Matrix of ``int grad(phi_i) . grad(phi_j)`` over the free basis functions."""
    G = space.gradients
    local = space.areas[:, None, None] * np.einsum("eik,ejk->eij", G, G)
    return space._restrict(local)


def assemble_mass(space: FeSpace, weight=None, degree: int | None = None):
    """Matrix of ``int weight * phi_i * phi_j``; ``weight`` may be a constant or
    a callable ``weight(x, y)``.  Constant weights use the exact P1 mass matrix."""
    if weight is None or np.isscalar(weight):
        c = 1.0 if weight is None else float(weight)
        base = (np.ones((3, 3)) + np.eye(3)) / 12.0
        local = c * space.areas[:, None, None] * base[None]
        return space._restrict(local)
    degree = 4 if degree is None else degree
    rule, X, Y, JW = space.quadrature(degree)
    wq = np.broadcast_to(weight(X, Y), X.shape) * JW
    local = np.einsum("eq,qi,qj->eij", wq, rule.points, rule.points)
    return space._restrict(local)


def assemble_gram(space: FeSpace, eps: float, nu: float):
    """Gram matrix of the inner product ``eps (grad u, grad v) + nu (u, v)``."""
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    if nu < 0:
        raise InvalidInputError("nu must be nonnegative")
    G = eps * space.stiffness()
    if nu:
        G = G + nu * space.mass()
    return as_csr(G)


def assemble_semilinear_residual(space: FeSpace, problem, u, degree: int | None = None) -> np.ndarray:
    """Vector of ``eps (grad u, grad phi_i) + (q u, phi_i) - (f(., u), phi_i)``.

    Nonlinear and variable-coefficient terms use the problem's quadrature degree
    unless a higher ``degree`` is given.
    """
    degree = problem.quad_degree if degree is None else degree
    if degree < problem.quad_degree:
        raise ConfigurationError(
            f"quadrature degree {degree} below the required {problem.quad_degree}"
        )
    c = u.coeffs if isinstance(u, FeFunction) else np.asarray(u, dtype=float)
    if c.shape != (space.n_dofs,):
        raise InvalidInputError("coefficient vector does not match the space")
    out = problem.eps * (space.stiffness() @ c)
    if callable(problem.q):
        out = out + assemble_mass(space, problem.q, degree=degree) @ c
    elif problem.q:
        out = out + float(problem.q) * (space.mass() @ c)
    _, X, Y, _ = space.quadrature(degree)
    U = space.at_quadrature(c, degree)
    return out - space.load_vector(problem.f(X, Y, U), degree)


def nodal_interpolant(space: FeSpace, g) -> FeFunction:
    """Interpolate a callable ``g(x, y)`` or an :class:`FeFunction` on another mesh.

    Boundary values are discarded (forced to zero).
    """
    pts = space.mesh.vertices[space.free]
    if isinstance(g, FeFunction):
        values = evaluate(g, pts)
    else:
        values = np.broadcast_to(np.asarray(g(pts[:, 0], pts[:, 1]), dtype=float), len(pts))
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("interpolated function is not finite at a free vertex")
    return FeFunction(space, np.array(values, dtype=float))


def evaluate(u: FeFunction, points):
    """Barycentric evaluation at a point (2,) or an array of points (n, 2)."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    space = u.space
    ids = space.locate(pts)
    if np.any(ids < 0):
        bad = pts[ids < 0][0]
        raise InvalidInputError(f"point {tuple(bad)} lies outside the domain")
    el = space.mesh.elements[ids]
    p = space.mesh.vertices[el]
    G = space.gradients[ids]  # (n, 3, 2)
    lam = np.einsum("nik,nk->ni", G, pts - p[:, 0])
    lam[:, 0] += 1.0
    vals = np.einsum("ni,ni->n", lam, u.full()[el])
    return float(vals[0]) if single else vals


def prolongate(u: FeFunction, child: FeSpace) -> FeFunction:
    """Represent ``u`` exactly on the space of the mesh obtained by one refinement."""
    parent_mesh = u.space.mesh
    cm = child.mesh
    if (
        cm.n_parent_vertices != parent_mesh.n_vertices
        or cm.generation != parent_mesh.generation + 1
        or not np.array_equal(cm.vertices[: parent_mesh.n_vertices], parent_mesh.vertices)
    ):
        raise InvalidInputError("child mesh is not a refinement of the function's mesh")
    full = np.empty(cm.n_vertices)
    nvp = parent_mesh.n_vertices
    full[:nvp] = u.full()
    # new vertices are midpoints of parent edges; they are numbered after all old
    # vertices, so their endpoints are always known already
    a, b = cm.vertex_parents[:, 0], cm.vertex_parents[:, 1]
    full[nvp:] = 0.5 * (full[a] + full[b])
    return FeFunction(child, full[child.free])


def integrate(space: FeSpace, integrand, degree: int = 2, per_element: bool = False):
    """Quadrature of ``integrand(x, y)`` over the domain (or over each element)."""
    _, X, Y, JW = space.quadrature(degree)
    vals = np.broadcast_to(np.asarray(integrand(X, Y), dtype=float), X.shape)
    local = np.sum(vals * JW, axis=1)
    return local if per_element else float(local.sum())


def write_coefficients(u: FeFunction, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("".join(f"{c!r}\n" for c in u.coeffs.tolist()))


def read_coefficients(space: FeSpace, path) -> FeFunction:
    with open(path) as fh:
        values = [float(line) for line in fh if line.strip()]
    return FeFunction(space, np.array(values))
