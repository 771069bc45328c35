"""Conforming triangulations with newest vertex bisection.

Elements are stored in a canonical local order ``(newest, a, b)``, counter-
clockwise, so that the refinement edge is always ``(a, b)`` -- the edge
opposite local vertex 0.  Refining an element inserts the midpoint ``m`` of
``(a, b)`` and produces the children ``(m, newest, a)`` and ``(m, b, newest)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

# local edge j is opposite local vertex j
_LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Immutable 2D triangle mesh with hierarchy information.

    ``vertex_parents`` lists, for every vertex created by the refinement that
    produced this mesh, the two endpoints of the parent edge it bisects.
    Vertices ``0 .. n_parent_vertices-1`` coincide with the parent mesh.
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary_vertex: np.ndarray
    refinement_edge: np.ndarray
    parent_of: np.ndarray | None = None
    generation: int = 0
    n_parent_vertices: int | None = None
    vertex_parents: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("vertices", "elements", "boundary_vertex", "refinement_edge"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def __len__(self):
        return self.n_elements

    # -- topology ---------------------------------------------------------

    def _edge_data(self):
        if "edges" not in self._cache:
            pairs = self.elements[:, _LOCAL_EDGES]  # (ne, 3, 2)
            pairs = np.sort(pairs.reshape(-1, 2), axis=1)
            edges, inverse, counts = np.unique(
                pairs, axis=0, return_inverse=True, return_counts=True
            )
            self._cache["edges"] = (
                edges,
                inverse.reshape(-1, 3),
                counts,
            )
        return self._cache["edges"]

    @property
    def edges(self) -> np.ndarray:
        """Global edge list as sorted vertex pairs."""
        return self._edge_data()[0]

    @property
    def element_edges(self) -> np.ndarray:
        """(ne, 3) global id of local edge j (opposite local vertex j)."""
        return self._edge_data()[1]

    @property
    def edge_element_count(self) -> np.ndarray:
        return self._edge_data()[2]

    @property
    def boundary_edge(self) -> np.ndarray:
        return self.edge_element_count == 1

    def edge_neighbors(self) -> np.ndarray:
        """(n_edges, 2) adjacent element ids; -1 in the second slot on the boundary."""
        if "edge_neighbors" not in self._cache:
            e2e = self.element_edges.ravel()
            owner = np.repeat(np.arange(self.n_elements), 3)
            order = np.argsort(e2e, kind="stable")
            e_sorted, own_sorted = e2e[order], owner[order]
            nb = np.full((len(self.edges), 2), -1, dtype=np.int64)
            first = np.ones(len(e_sorted), dtype=bool)
            first[1:] = e_sorted[1:] != e_sorted[:-1]
            nb[e_sorted[first], 0] = own_sorted[first]
            nb[e_sorted[~first], 1] = own_sorted[~first]
            self._cache["edge_neighbors"] = nb
        return self._cache["edge_neighbors"]

    # -- geometry ---------------------------------------------------------

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.elements]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def geometry(self) -> "ElementGeometry":
        if "geometry" not in self._cache:
            self._cache["geometry"] = ElementGeometry.of(self)
        return self._cache["geometry"]

    def is_conforming(self) -> bool:
        """Every edge belongs to one (boundary) or two (interior) elements,
        and boundary edges have both endpoints flagged as boundary."""
        counts = self.edge_element_count
        if np.any(counts > 2) or np.any(counts < 1):
            return False
        bedges = self.edges[counts == 1]
        if not np.all(self.boundary_vertex[bedges]):
            return False
        # no hanging nodes: a vertex lying strictly inside an edge it is not part of
        return _no_hanging_nodes(self)


@dataclass(frozen=True)
class ElementGeometry:
    """Per-element geometric quantities (lengths in domain units)."""

    area: np.ndarray
    diameter: np.ndarray
    edge_lengths: np.ndarray  # (ne, 3), edge j opposite vertex j
    normals: np.ndarray  # (ne, 3, 2) unit outward normal of edge j

    @classmethod
    def of(cls, mesh: Triangulation) -> "ElementGeometry":
        p = mesh.vertices[mesh.elements]  # (ne, 3, 2)
        tangents = p[:, _LOCAL_EDGES[:, 1]] - p[:, _LOCAL_EDGES[:, 0]]
        lengths = np.linalg.norm(tangents, axis=2)
        # counter-clockwise orientation: outward normal is tangent rotated clockwise
        normals = np.stack([tangents[..., 1], -tangents[..., 0]], axis=2)
        normals /= lengths[..., None]
        return cls(
            area=mesh.signed_areas(),
            diameter=lengths.max(axis=1),
            edge_lengths=lengths,
            normals=normals,
        )


def _no_hanging_nodes(mesh: Triangulation) -> bool:
    # a hanging node splits one side of an edge only; then the edge is seen once
    # but is not on the outer boundary. Outer boundary edges lie on the convex hull
    # for the rectangular domains we build, so test collinearity with the hull.
    counts = mesh.edge_element_count
    bedges = mesh.edges[counts == 1]
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    p = mesh.vertices[bedges]  # (nb, 2, 2)
    tol = 1e-12 * max(1.0, float(np.max(hi - lo)))
    on_side = np.zeros(len(bedges), dtype=bool)
    for axis in (0, 1):
        for value in (lo[axis], hi[axis]):
            on_side |= np.all(np.abs(p[:, :, axis] - value) < tol, axis=1)
    return bool(np.all(on_side))


def _canonical_elements(vertices, elements, refinement_edge):
    """Roll each element so that its refinement edge becomes local edge 0."""
    elements = np.asarray(elements, dtype=np.int64)
    refinement_edge = np.asarray(refinement_edge, dtype=np.int64)
    idx = (np.arange(3)[None, :] + refinement_edge[:, None]) % 3
    return np.take_along_axis(elements, idx, axis=1)


def longest_edge_labels(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Refinement edge = longest edge, ties broken by the smallest opposite vertex index."""
    p = vertices[elements]
    t = p[:, _LOCAL_EDGES[:, 1]] - p[:, _LOCAL_EDGES[:, 0]]
    lengths = np.linalg.norm(t, axis=2)
    longest = lengths.max(axis=1, keepdims=True)
    tie = np.isclose(lengths, longest, rtol=1e-12, atol=0.0)
    # among tied edges pick the one whose opposite vertex has the smallest index
    key = np.where(tie, elements, np.iinfo(np.int64).max)
    return np.argmin(key, axis=1)


def make_triangulation(vertices, elements, boundary_vertex=None, refinement_edge=None):
    """Build a generation-0 mesh; orientation is fixed to counter-clockwise."""
    vertices = np.array(vertices, dtype=float)
    elements = np.array(elements, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise InvalidInputError("vertices must have shape (n, 2)")
    if elements.ndim != 2 or elements.shape[1] != 3:
        raise InvalidInputError("elements must have shape (m, 3)")
    if elements.size and (elements.min() < 0 or elements.max() >= len(vertices)):
        raise InvalidInputError("element references a missing vertex")
    p = vertices[elements]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    if np.any(det == 0):
        raise InvalidInputError("degenerate element")
    flip = det < 0
    elements[flip] = elements[flip][:, [0, 2, 1]]
    if refinement_edge is None:
        refinement_edge = longest_edge_labels(vertices, elements)
    elements = _canonical_elements(vertices, elements, refinement_edge)
    if boundary_vertex is None:
        tmp = Triangulation(
            vertices, elements, np.zeros(len(vertices), bool), np.zeros(len(elements), np.int64)
        )
        boundary_vertex = np.zeros(len(vertices), dtype=bool)
        boundary_vertex[tmp.edges[tmp.boundary_edge].ravel()] = True
    return Triangulation(
        vertices=vertices,
        elements=elements,
        boundary_vertex=np.asarray(boundary_vertex, dtype=bool).copy(),
        refinement_edge=np.zeros(len(elements), dtype=np.int64),
    )


def create_square_mesh(corner_lo, corner_hi, divisions: int) -> Triangulation:
    """Uniform mesh of a rectangle: ``divisions`` squares per side, each cut
    along its lower-left to upper-right diagonal (``2 * divisions**2`` triangles)."""
    lo = np.asarray(corner_lo, dtype=float)
    hi = np.asarray(corner_hi, dtype=float)
    if int(divisions) != divisions or divisions < 1:
        raise InvalidInputError("divisions must be a positive integer")
    if lo.shape != (2,) or hi.shape != (2,) or np.any(hi <= lo):
        raise InvalidInputError(f"degenerate rectangle {tuple(lo)} - {tuple(hi)}")
    n = int(divisions)
    xs = np.linspace(lo[0], hi[0], n + 1)
    ys = np.linspace(lo[1], hi[1], n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i] = vertex at (x_i, y_j)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper
    boundary = (
        np.isclose(vertices[:, 0], lo[0])
        | np.isclose(vertices[:, 0], hi[0])
        | np.isclose(vertices[:, 1], lo[1])
        | np.isclose(vertices[:, 1], hi[1])
    )
    return make_triangulation(vertices, elements, boundary_vertex=boundary)


def refine(mesh: Triangulation, marked) -> Triangulation:
    """Newest vertex bisection of ``marked`` elements plus conforming closure.

    Every marked element is bisected at least once (marked elements end up
    split into two or four children). The child mesh records ``parent_of``
    for each element and ``vertex_parents`` for each new vertex.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked, dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_elements):
        raise InvalidInputError("marked element id out of range")

    el = mesh.elements
    e2e = mesh.element_edges
    n_edges = len(mesh.edges)
    edge_marked = np.zeros(n_edges, dtype=bool)
    edge_marked[e2e[marked, 0]] = True
    # closure: any element with a marked edge must bisect its refinement edge
    while True:
        need = edge_marked[e2e].any(axis=1) & ~edge_marked[e2e[:, 0]]
        if not need.any():
            break
        edge_marked[e2e[need, 0]] = True

    nv = mesh.n_vertices
    new_edges = np.flatnonzero(edge_marked)
    midpoint = np.full(n_edges, -1, dtype=np.int64)
    midpoint[new_edges] = nv + np.arange(len(new_edges))
    endpoints = mesh.edges[new_edges]
    new_vertices = 0.5 * (mesh.vertices[endpoints[:, 0]] + mesh.vertices[endpoints[:, 1]])
    vertices = np.vstack([mesh.vertices, new_vertices])
    boundary = np.concatenate([mesh.boundary_vertex, mesh.boundary_edge[new_edges]])

    bisect = edge_marked[e2e[:, 0]]
    keep_ids = np.flatnonzero(~bisect)
    ids = np.flatnonzero(bisect)
    p, a, b = el[ids, 0], el[ids, 1], el[ids, 2]
    m = midpoint[e2e[ids, 0]]
    m_pa = midpoint[e2e[ids, 2]]  # edge (p, a) is local edge 2
    m_bp = midpoint[e2e[ids, 1]]  # edge (b, p) is local edge 1

    children = [el[keep_ids]]
    parents = [keep_ids]
    # first child (m, p, a), refined again when (p, a) is marked
    once = m_pa < 0
    children.append(np.column_stack([m[once], p[once], a[once]]))
    parents.append(ids[once])
    twice = ~once
    children.append(np.column_stack([m_pa[twice], m[twice], p[twice]]))
    children.append(np.column_stack([m_pa[twice], a[twice], m[twice]]))
    parents += [ids[twice], ids[twice]]
    # second child (m, b, p), refined again when (b, p) is marked
    once = m_bp < 0
    children.append(np.column_stack([m[once], b[once], p[once]]))
    parents.append(ids[once])
    twice = ~once
    children.append(np.column_stack([m_bp[twice], m[twice], b[twice]]))
    children.append(np.column_stack([m_bp[twice], p[twice], m[twice]]))
    parents += [ids[twice], ids[twice]]

    parent_of = np.concatenate(parents)
    order = np.argsort(parent_of, kind="stable")
    elements = np.vstack(children)[order]
    return Triangulation(
        vertices=vertices,
        elements=elements,
        boundary_vertex=boundary,
        refinement_edge=np.zeros(len(elements), dtype=np.int64),
        parent_of=parent_of[order],
        generation=mesh.generation + 1,
        n_parent_vertices=nv,
        vertex_parents=endpoints.copy(),
    )


def refine_uniform(mesh: Triangulation) -> Triangulation:
    return refine(mesh, np.arange(mesh.n_elements))


def element_angles(mesh: Triangulation) -> np.ndarray:
    """(ne, 3) interior angle at each local vertex, in radians."""
    p = mesh.vertices[mesh.elements]
    angles = np.empty((mesh.n_elements, 3))
    for j in range(3):
        u = p[:, (j + 1) % 3] - p[:, j]
        w = p[:, (j + 2) % 3] - p[:, j]
        cross = u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]
        dot = np.einsum("ij,ij->i", u, w)
        angles[:, j] = np.arctan2(np.abs(cross), dot)
    return angles


def angle_classes(mesh: Triangulation, decimals: int = 9) -> set:
    """Distinct sorted angle triples, rounded; a proxy for similarity classes."""
    a = np.round(np.sort(element_angles(mesh), axis=1), decimals)
    return {tuple(row) for row in np.unique(a, axis=0)}


def mesh_statistics(mesh: Triangulation):
    """Return ``(min_angle, max_h, element_count)``."""
    return (
        float(element_angles(mesh).min()),
        float(mesh.geometry().diameter.max()),
        mesh.n_elements,
    )


def write_mesh(mesh: Triangulation, path) -> None:
    lines = [f"vertices {mesh.n_vertices} elements {mesh.n_elements}"]
    lines += [
        f"{x!r} {y!r} {int(b)}"
        for (x, y), b in zip(mesh.vertices.tolist(), mesh.boundary_vertex.tolist())
    ]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.elements.tolist()]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> Triangulation:
    """Read the text format written by :func:`write_mesh`.

    Element rows are taken to be in canonical order (newest vertex first).
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "vertices" or header[2] != "elements":
            raise InvalidInputError(f"{path}: bad mesh header {' '.join(header)!r}")
        nv, ne = int(header[1]), int(header[3])
        vdata = np.loadtxt(fh, max_rows=nv, ndmin=2) if nv else np.zeros((0, 3))
        edata = np.loadtxt(fh, max_rows=ne, dtype=np.int64, ndmin=2) if ne else np.zeros((0, 3), np.int64)
    if vdata.shape != (nv, 3) or edata.shape != (ne, 3):
        raise InvalidInputError(f"{path}: truncated mesh file")
    return Triangulation(
        vertices=vdata[:, :2].copy(),
        elements=edata,
        boundary_vertex=vdata[:, 2].astype(bool),
        refinement_edge=np.zeros(ne, dtype=np.int64),
    )
