"""Thermal-fin catalog: aluminum conductivity, Rod/Bracket/Cross archetypes,
and the grid fin-system generator.

Geometry conventions (reference domains, cm):

* ``line`` port: the unit interval, eight quadratic elements, 17 DoFs.
* ``rod``: rectangle [0, mu1] x [0, 1] whose two end segments are rigid 1-cm
  ports; the thickness parameter mu2 scales the midspan cross-section, with
  straight tapers back to unit height over the blocks next to the ports.
* ``bracket``: L of a fixed unit corner square with +x and +y arms; mu1 and
  mu2 stretch the arm lengths, ports ride rigidly at the arm tips.
* ``cross``: plus of a fixed unit center square with four arms; mu1 stretches
  both horizontal arms, mu2 both vertical arms.

All components take mu3 in [0, 10] W/cm^2 as their constant volumetric source.
"""

import numpy as np

from .components import ArchetypeComponent, PortMap
from .library import ComponentLibrary
from .materials import AluminumConductivity
from .meshing import chain_nodes, edges_on_segment, interval_mesh, merge_meshes, rect_mesh
from .ports import ArchetypePort
from .system import ComponentSpec, assemble_system

_DEFAULT_MATERIAL = AluminumConductivity()

ROD_BOX = np.array([[3.0, 6.0], [0.25, 1.5], [0.0, 10.0]])
ARM_BOX = np.array([[0.25, 1.5], [0.25, 1.5], [0.0, 10.0]])
ROD_REF = np.array([4.0, 1.0, 0.0])
ARM_REF = np.array([1.0, 1.0, 0.0])

_ROD_XB = np.array([0.0, 0.2, 1.4, 2.6, 3.8, 4.0])
_ROD_S = np.array([1.0, 1.0, 0.0, 0.0, 1.0, 1.0])  # 0 marks the mu2-scaled span

BOUNDARY_VALUES = (25.0, 125.0, 275.0, 100.0)  # left, right, bottom, top, K


def conductivity(v):
    """Aluminum conductivity value and derivative at temperature(s) ``v``."""
    k, dk, _ = _DEFAULT_MATERIAL.clamped(v)
    return k, dk


def rod_node_map(xy, mu):
    mu1, mu2 = float(mu[0]), float(mu[1])
    x_targets = np.array([0.0, 0.2, 1.4, mu1 - 1.4, mu1 - 0.2, mu1])
    s_values = np.where(_ROD_S == 0.0, mu2, 1.0)
    X = np.interp(xy[:, 0], _ROD_XB, x_targets)
    s = np.interp(xy[:, 0], _ROD_XB, s_values)
    Y = 0.5 + s * (xy[:, 1] - 0.5)
    return np.stack([X, Y], axis=1)


def bracket_node_map(xy, mu):
    mu1, mu2 = float(mu[0]), float(mu[1])
    X = np.interp(xy[:, 0], [-0.5, 0.5, 1.5], [-0.5, 0.5, 0.5 + mu1])
    Y = np.interp(xy[:, 1], [-0.5, 0.5, 1.5], [-0.5, 0.5, 0.5 + mu2])
    return np.stack([X, Y], axis=1)


def cross_node_map(xy, mu):
    mu1, mu2 = float(mu[0]), float(mu[1])
    X = np.interp(xy[:, 0], [-1.5, -0.5, 0.5, 1.5], [-0.5 - mu1, -0.5, 0.5, 0.5 + mu1])
    Y = np.interp(xy[:, 1], [-1.5, -0.5, 0.5, 1.5], [-0.5 - mu2, -0.5, 0.5, 0.5 + mu2])
    return np.stack([X, Y], axis=1)


NODE_MAP_REGISTRY = {
    "rod": rod_node_map,
    "bracket": bracket_node_map,
    "cross": cross_node_map,
}


def _port_map(mesh, p0, p1, name, groups):
    edges = edges_on_segment(mesh, p0, p1)
    if len(edges) == 0:
        raise ValueError(f"no boundary edges found for port {name}")
    groups[name] = edges
    return PortMap(archetype_port="line", nodes=chain_nodes(mesh, edges, p0))


def _build_rod() -> ArchetypeComponent:
    mesh = rect_mesh(20, 8, 0.0, 4.0, 0.0, 1.0)
    groups = {}
    ports = [
        _port_map(mesh, (0.0, 0.0), (0.0, 1.0), "port_0", groups),
        _port_map(mesh, (4.0, 0.0), (4.0, 1.0), "port_1", groups),
    ]
    mesh.boundary_groups = groups
    return ArchetypeComponent(
        id="rod", mesh=mesh, ports=ports, param_box=ROD_BOX, mu_ref=ROD_REF,
        node_map=rod_node_map, kind="rod", source_param=2,
    )


def _build_bracket() -> ArchetypeComponent:
    mesh = merge_meshes(
        [
            rect_mesh(8, 8, -0.5, 0.5, -0.5, 0.5),
            rect_mesh(7, 8, 0.5, 1.5, -0.5, 0.5),
            rect_mesh(8, 7, -0.5, 0.5, 0.5, 1.5),
        ]
    )
    groups = {}
    ports = [
        _port_map(mesh, (1.5, -0.5), (1.5, 0.5), "port_0", groups),
        _port_map(mesh, (-0.5, 1.5), (0.5, 1.5), "port_1", groups),
    ]
    mesh.boundary_groups = groups
    return ArchetypeComponent(
        id="bracket", mesh=mesh, ports=ports, param_box=ARM_BOX, mu_ref=ARM_REF,
        node_map=bracket_node_map, kind="bracket", source_param=2,
    )


def _build_cross() -> ArchetypeComponent:
    mesh = merge_meshes(
        [
            rect_mesh(8, 8, -0.5, 0.5, -0.5, 0.5),
            rect_mesh(7, 8, -1.5, -0.5, -0.5, 0.5),
            rect_mesh(7, 8, 0.5, 1.5, -0.5, 0.5),
            rect_mesh(8, 7, -0.5, 0.5, -1.5, -0.5),
            rect_mesh(8, 7, -0.5, 0.5, 0.5, 1.5),
        ]
    )
    groups = {}
    ports = [
        _port_map(mesh, (-1.5, -0.5), (-1.5, 0.5), "port_0", groups),
        _port_map(mesh, (1.5, -0.5), (1.5, 0.5), "port_1", groups),
        _port_map(mesh, (-0.5, -1.5), (0.5, -1.5), "port_2", groups),
        _port_map(mesh, (-0.5, 1.5), (0.5, 1.5), "port_3", groups),
    ]
    mesh.boundary_groups = groups
    return ArchetypeComponent(
        id="cross", mesh=mesh, ports=ports, param_box=ARM_BOX, mu_ref=ARM_REF,
        node_map=cross_node_map, kind="cross", source_param=2,
    )


def build_catalog() -> ComponentLibrary:
    """Meshed (untrained) library of the line port and the three archetypes."""
    lib = ComponentLibrary(node_map_registry=dict(NODE_MAP_REGISTRY))
    lib.ports["line"] = ArchetypePort(id="line", mesh=interval_mesh(8, 0.0, 1.0))
    for builder in (_build_rod, _build_bracket, _build_cross):
        comp = builder()
        lib.components[comp.id] = comp
    return lib


# ---------------------------------------------------------------------------
# Fin systems
# ---------------------------------------------------------------------------


class FinSystemSpec:
    """Parameter tuple of one thermal-fin system.

    ``n_fin`` rods per row/column direction; a single shared rod ``length``;
    one thickness per rod row and per rod column (``n_fin + 1`` each); one
    volumetric source per interior cross, as an ``(n_fin - 1, n_fin - 1)``
    array indexed by (column-1, row-1).
    """

    def __init__(self, n_fin, length, row_thicknesses, col_thicknesses, sources):
        self.n_fin = int(n_fin)
        self.length = float(length)
        self.row_thicknesses = np.asarray(row_thicknesses, dtype=float)
        self.col_thicknesses = np.asarray(col_thicknesses, dtype=float)
        self.sources = np.asarray(sources, dtype=float)
        self.validate()

    def validate(self):
        n = self.n_fin
        if n < 2:
            raise ValueError("fin systems need n_fin >= 2")
        if self.row_thicknesses.shape != (n + 1,) or self.col_thicknesses.shape != (n + 1,):
            raise ValueError("thickness arrays must have n_fin + 1 entries each")
        if self.sources.shape != (n - 1, n - 1):
            raise ValueError("sources must be an (n_fin - 1) x (n_fin - 1) array")
        lo1, hi1 = ROD_BOX[0]
        if not (lo1 <= self.length <= hi1):
            raise ValueError(f"rod length {self.length} outside [{lo1}, {hi1}]")
        lo2, hi2 = ROD_BOX[1]
        for t in np.concatenate([self.row_thicknesses, self.col_thicknesses]):
            if not (lo2 <= t <= hi2):
                raise ValueError(f"thickness {t} outside [{lo2}, {hi2}]")
        lo3, hi3 = ROD_BOX[2]
        if np.any(self.sources < lo3) or np.any(self.sources > hi3):
            raise ValueError(f"sources outside [{lo3}, {hi3}]")

    @property
    def n_parameters(self) -> int:
        return self.n_fin**2 + 4

    def to_dict(self) -> dict:
        return {
            "n_fin": self.n_fin,
            "length": self.length,
            "row_thicknesses": self.row_thicknesses.tolist(),
            "col_thicknesses": self.col_thicknesses.tolist(),
            "sources": self.sources.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FinSystemSpec":
        return cls(
            data["n_fin"],
            data["length"],
            data["row_thicknesses"],
            data["col_thicknesses"],
            data["sources"],
        )


def reference_spec(n_fin: int, hot_cross=None, source_value: float = 10.0) -> FinSystemSpec:
    """All-reference geometry; optionally one heated interior cross.

    ``hot_cross`` is a (column, row) pair of interior junction indices,
    1-based from the bottom-left; ``(1, 1)`` heats the bottom-left cross.
    """
    n = int(n_fin)
    sources = np.zeros((n - 1, n - 1))
    if hot_cross is not None:
        i, j = hot_cross
        sources[i - 1, j - 1] = source_value
    return FinSystemSpec(n, 4.0, np.ones(n + 1), np.ones(n + 1), sources)


def sample_test_params(n_fin: int, n: int, seed: int) -> list:
    """Uniform draws of full fin-system parameter tuples (deterministic in seed)."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        length = ROD_BOX[0, 0] + (ROD_BOX[0, 1] - ROD_BOX[0, 0]) * rng.random()
        row_t = ROD_BOX[1, 0] + (ROD_BOX[1, 1] - ROD_BOX[1, 0]) * rng.random(n_fin + 1)
        col_t = ROD_BOX[1, 0] + (ROD_BOX[1, 1] - ROD_BOX[1, 0]) * rng.random(n_fin + 1)
        src = ROD_BOX[2, 1] * rng.random((n_fin - 1, n_fin - 1))
        out.append(FinSystemSpec(n_fin, length, row_t, col_t, src))
    return out


def fin_component_count(n_fin: int) -> int:
    return (3 * n_fin + 1) * (n_fin + 1)


# bracket local ports face (+x, +y) in the reference; rotation k maps them to
# these physical directions
_BRACKET_FACING = {
    0: ("+x", "+y"),
    1: ("+y", "-x"),
    2: ("-x", "-y"),
    3: ("-y", "+x"),
}
_CROSS_FACING = ("-x", "+x", "-y", "+y")


def fin_layout(spec: FinSystemSpec, boundary=BOUNDARY_VALUES):
    """Component specs, connectivity, and Dirichlet data of a fin system.

    The grid carries a junction component (bracket at corners, cross
    elsewhere) at each lattice point and rods between neighbouring junctions;
    outward-facing edge-cross ports become the four Dirichlet boundaries.
    """
    n = spec.n_fin
    L = spec.length
    t_row = spec.row_thicknesses
    t_col = spec.col_thicknesses
    u_left, u_right, u_bottom, u_top = boundary

    X = np.zeros(n + 1)
    Y = np.zeros(n + 1)
    for i in range(n):
        X[i + 1] = X[i] + 1.0 + t_col[i] + t_col[i + 1] + L
        Y[i + 1] = Y[i] + 1.0 + t_row[i] + t_row[i + 1] + L

    specs = []
    junction_index = {}
    junction_facing = {}

    def add(spec_obj):
        specs.append(spec_obj)
        return len(specs) - 1

    corners = {(0, 0): 0, (n, 0): 1, (n, n): 2, (0, n): 3}
    for j in range(n + 1):
        for i in range(n + 1):
            shift = (X[i], Y[j])
            if (i, j) in corners:
                rot = corners[(i, j)]
                facing = _BRACKET_FACING[rot]
                # arm lengths: the arm toward +-x spans the column band width,
                # the arm toward +-y the row band width
                mu = [0.0, 0.0, 0.0]
                for port, face in enumerate(facing):
                    mu[port] = t_col[i] if face in ("+x", "-x") else t_row[j]
                idx = add(ComponentSpec("bracket", tuple(mu), rotation=rot,
                                        shift=shift, label=f"junction({i},{j})"))
                junction_facing[(i, j)] = facing
            else:
                interior = 1 <= i <= n - 1 and 1 <= j <= n - 1
                src = spec.sources[i - 1, j - 1] if interior else 0.0
                idx = add(ComponentSpec("cross", (t_col[i], t_row[j], src),
                                        shift=shift, label=f"junction({i},{j})"))
                junction_facing[(i, j)] = _CROSS_FACING
            junction_index[(i, j)] = idx

    def junction_port(i, j, face):
        facing = junction_facing[(i, j)]
        if face not in facing:
            raise ValueError(f"junction ({i},{j}) has no port facing {face}")
        return junction_index[(i, j)], facing.index(face)

    connectivity = []
    for j in range(n + 1):
        for i in range(n):
            shift = (X[i] + 0.5 + t_col[i], Y[j] - 0.5)
            idx = add(ComponentSpec("rod", (L, t_row[j], 0.0), shift=shift,
                                    label=f"hrod({i},{j})"))
            connectivity.append((junction_port(i, j, "+x"), (idx, 0)))
            connectivity.append(((idx, 1), junction_port(i + 1, j, "-x")))
    for i in range(n + 1):
        for j in range(n):
            shift = (X[i] - 0.5, Y[j + 1] - 0.5 - t_row[j + 1])
            idx = add(ComponentSpec("rod", (L, t_col[i], 0.0), rotation=3,
                                    shift=shift, label=f"vrod({i},{j})"))
            connectivity.append((junction_port(i, j + 1, "-y"), (idx, 0)))
            connectivity.append(((idx, 1), junction_port(i, j, "+y")))

    dirichlet = []
    for j in range(1, n):
        dirichlet.append((junction_port(0, j, "-x"), u_left))
        dirichlet.append((junction_port(n, j, "+x"), u_right))
    for i in range(1, n):
        dirichlet.append((junction_port(i, 0, "-y"), u_bottom))
        dirichlet.append((junction_port(i, n, "+y"), u_top))

    return specs, connectivity, dirichlet


def fin_system(library, spec: FinSystemSpec, boundary=BOUNDARY_VALUES):
    """Assemble the fin system described by ``spec`` against a library."""
    specs, connectivity, dirichlet = fin_layout(spec, boundary)
    return assemble_system(library, specs, connectivity, dirichlet)
