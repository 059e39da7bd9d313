"""2D quadratic-triangle and 1D quadratic-line meshes, builders, and text IO.

Conventions
-----------
* 2D elements are 6-node quadratic triangles ordered
  ``[v0, v1, v2, m01, m12, m20]`` with counterclockwise corners.
* 1D elements are 3-node quadratic segments ordered ``[v0, v1, m01]``.
* Boundary groups are named sets of quadratic edges ``(v0, v1, mid)``.
"""

from dataclasses import dataclass, field

import numpy as np

_MERGE_DECIMALS = 9


class MeshError(ValueError):
    pass


@dataclass
class Mesh2D:
    """Conforming quadratic-triangle mesh with named boundary edge groups."""

    nodes: np.ndarray  # (n_nodes, 2), cm
    elements: np.ndarray  # (n_elem, 6) int
    boundary_groups: dict = field(default_factory=dict)  # name -> (n_edges, 3) int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def corner_determinants(self) -> np.ndarray:
        c = self.nodes[self.elements[:, :3]]
        e0 = c[:, 1] - c[:, 0]
        e1 = c[:, 2] - c[:, 0]
        return e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0]

    def area(self) -> float:
        return float(0.5 * self.corner_determinants().sum())

    def validate(self) -> None:
        if np.any(self.corner_determinants() <= 0.0):
            raise MeshError("mesh contains an element with nonpositive area")
        for name, edges in self.boundary_groups.items():
            edges = np.asarray(edges)
            if edges.ndim != 2 or edges.shape[1] != 3:
                raise MeshError(f"boundary group {name!r} is not an (n, 3) edge array")


@dataclass
class Mesh1D:
    """Quadratic segment mesh on an interval."""

    nodes: np.ndarray  # (n_nodes,), cm
    elements: np.ndarray  # (n_elem, 3) int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def validate(self) -> None:
        if self.n_nodes != 2 * self.n_elements + 1:
            raise MeshError("1D mesh must satisfy n_nodes = 2*n_elements + 1")
        h = self.nodes[self.elements[:, 1]] - self.nodes[self.elements[:, 0]]
        if np.any(h <= 0.0):
            raise MeshError("1D mesh contains a degenerate or reversed element")


def interval_mesh(n_elements: int, x0: float = 0.0, x1: float = 1.0) -> Mesh1D:
    """Uniform quadratic mesh of [x0, x1] with node order = coordinate order."""
    if n_elements < 1 or x1 <= x0:
        raise MeshError("interval mesh needs n_elements >= 1 and x1 > x0")
    nodes = np.linspace(x0, x1, 2 * n_elements + 1)
    base = 2 * np.arange(n_elements)
    elements = np.stack([base, base + 2, base + 1], axis=1)
    return Mesh1D(nodes=nodes, elements=elements)


def rect_mesh(nx: int, ny: int, x0: float, x1: float, y0: float, y1: float) -> Mesh2D:
    """Structured triangulated rectangle, each grid quad split along its up diagonal.

    Nodes lie on the (2nx+1) x (2ny+1) refined lattice so that quadratic edges
    of neighbouring blocks coincide exactly after merging.
    """
    if nx < 1 or ny < 1:
        raise MeshError("rect mesh needs nx, ny >= 1")
    xs = np.linspace(x0, x1, 2 * nx + 1)
    ys = np.linspace(y0, y1, 2 * ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)

    def nid(i, j):
        return i * (2 * ny + 1) + j

    elements = []
    for i in range(nx):
        for j in range(ny):
            a, b = 2 * i, 2 * j
            sw, se = nid(a, b), nid(a + 2, b)
            ne, nw = nid(a + 2, b + 2), nid(a, b + 2)
            s, e = nid(a + 1, b), nid(a + 2, b + 1)
            n, w = nid(a + 1, b + 2), nid(a, b + 1)
            c = nid(a + 1, b + 1)
            # lower-right triangle (sw, se, ne) then upper-left (sw, ne, nw)
            elements.append([sw, se, ne, s, e, c])
            elements.append([sw, ne, nw, c, n, w])
    return Mesh2D(nodes=nodes, elements=np.asarray(elements, dtype=np.int64))


def merge_meshes(meshes) -> Mesh2D:
    """Glue meshes by exact node-coordinate coincidence (rounded keys).

    Boundary groups are dropped; callers rebuild groups on the merged mesh.
    """
    all_nodes = np.vstack([m.nodes for m in meshes])
    keys = np.round(all_nodes, _MERGE_DECIMALS)
    _, first_idx, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    # preserve first-appearance order so merging is independent of key sorting
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    remap = rank[inverse]
    nodes = all_nodes[first_idx[order]]

    elements = []
    offset = 0
    for m in meshes:
        elements.append(remap[m.elements + offset])
        offset += m.n_nodes
    return Mesh2D(nodes=nodes, elements=np.vstack(elements))


def boundary_edges(mesh: Mesh2D) -> np.ndarray:
    """All exterior quadratic edges (v0, v1, mid), oriented as in their element."""
    elems = mesh.elements
    local = [(0, 1, 3), (1, 2, 4), (2, 0, 5)]
    edges = np.vstack([elems[:, list(loc)] for loc in local])
    key = np.sort(edges[:, :2], axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return edges[counts[inv] == 1]


def edges_on_segment(mesh: Mesh2D, p0, p1, tol: float = 1e-9) -> np.ndarray:
    """Boundary edges whose three nodes lie on the segment p0-p1, ordered p0 -> p1."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    L2 = float(d @ d)
    edges = boundary_edges(mesh)
    on = []
    for edge in edges:
        pts = mesh.nodes[edge]
        rel = pts - p0
        t = rel @ d / L2
        perp = rel - t[:, None] * d
        if np.all(np.abs(perp) < tol) and np.all(t > -tol) and np.all(t < 1 + tol):
            on.append((t[0], edge))
    on.sort(key=lambda pair: pair[0])
    if not on:
        return np.empty((0, 3), dtype=np.int64)
    return np.array([e for _, e in on], dtype=np.int64)


def chain_nodes(mesh: Mesh2D, edges: np.ndarray, p0, tol: float = 1e-9) -> np.ndarray:
    """Ordered node sequence along a chain of quadratic edges starting nearest p0."""
    if len(edges) == 0:
        return np.empty(0, dtype=np.int64)
    p0 = np.asarray(p0, dtype=float)
    seq = []
    for edge in edges:
        v0, v1, mid = edge
        if seq and v0 != seq[-1]:
            v0, v1 = v1, v0
        if not seq:
            if np.linalg.norm(mesh.nodes[v1] - p0) < np.linalg.norm(mesh.nodes[v0] - p0):
                v0, v1 = v1, v0
            seq.append(int(v0))
        if v0 != seq[-1]:
            raise MeshError("edge chain is not contiguous")
        seq.extend([int(mid), int(v1)])
    return np.asarray(seq, dtype=np.int64)


# ---------------------------------------------------------------------------
# Text exchange format (see README: "Mesh exchange format")
# ---------------------------------------------------------------------------

_FORMAT_TAG = "comrom-mesh 1"


def write_mesh(mesh: Mesh2D, path) -> None:
    lines = [f"# {_FORMAT_TAG}", f"nodes {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    lines.append(f"elements {mesh.n_elements}")
    lines += [" ".join(map(str, row)) for row in mesh.elements]
    for name, edges in mesh.boundary_groups.items():
        lines.append(f"group {name} {len(edges)}")
        lines += [" ".join(map(str, row)) for row in np.asarray(edges)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh2D:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw or raw[0] != f"# {_FORMAT_TAG}":
        raise MeshError(f"not a {_FORMAT_TAG} file: {path}")
    pos = 1

    def expect(keyword):
        nonlocal pos
        parts = raw[pos].split()
        if parts[0] != keyword:
            raise MeshError(f"expected {keyword!r} at line {pos + 1} of {path}")
        pos += 1
        return parts[1:]

    (n_nodes,) = expect("nodes")
    n_nodes = int(n_nodes)
    nodes = np.array([[float(t) for t in raw[pos + i].split()] for i in range(n_nodes)])
    pos += n_nodes
    (n_elem,) = expect("elements")
    n_elem = int(n_elem)
    elements = np.array(
        [[int(t) for t in raw[pos + i].split()] for i in range(n_elem)], dtype=np.int64
    )
    pos += n_elem
    groups = {}
    while pos < len(raw):
        name, count = expect("group")
        count = int(count)
        groups[name] = np.array(
            [[int(t) for t in raw[pos + i].split()] for i in range(count)], dtype=np.int64
        )
        pos += count
    mesh = Mesh2D(nodes=nodes, elements=elements, boundary_groups=groups)
    mesh.validate()
    return mesh
