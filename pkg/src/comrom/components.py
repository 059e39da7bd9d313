"""Archetype and instantiated components: bubble/port structure, lifts, maps.

An archetype owns a reference mesh whose boundary carries one node-chain per
local port, a parameter box, a piecewise-affine vertex map rule, and (after
training) hierarchical bubble modes, lifted port modes, reduced-quadrature
rules, and error/contraction tables keyed by fidelity multi-index.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import FeSpace2D, GeometricMapEval


class FidelityError(IndexError):
    pass


@dataclass(frozen=True)
class FidelityIndex:
    """Multi-index selecting one bubble level and one level per local port."""

    bubble: int
    ports: tuple

    @classmethod
    def coerce(cls, f, n_ports: int) -> "FidelityIndex":
        if isinstance(f, FidelityIndex):
            fi = f
        elif isinstance(f, int):
            fi = cls(f, (f,) * n_ports)
        else:
            f = tuple(int(x) for x in f)
            fi = cls(f[0], f[1:])
        if len(fi.ports) != n_ports:
            raise FidelityError(f"fidelity {fi} does not match {n_ports} ports")
        return fi

    @classmethod
    def uniform(cls, level: int, n_ports: int) -> "FidelityIndex":
        return cls(level, (level,) * n_ports)

    def as_tuple(self) -> tuple:
        return (self.bubble, *self.ports)

    def incremented(self, by: int = 1, cap=None) -> "FidelityIndex":
        if cap is None:
            return FidelityIndex(self.bubble + by, tuple(p + by for p in self.ports))
        return FidelityIndex(
            min(self.bubble + by, cap), tuple(min(p + by, cap) for p in self.ports)
        )

    def __le__(self, other: "FidelityIndex") -> bool:
        return self.bubble <= other.bubble and all(
            a <= b for a, b in zip(self.ports, other.ports)
        )


@dataclass
class PortMap:
    """Correspondence of one local port with its archetype port.

    ``nodes`` lists the component's node indices along the port in the
    canonical local orientation; entry ``i`` matches node ``i`` of the
    archetype port mesh.
    """

    archetype_port: str
    nodes: np.ndarray

    def trace(self, u: np.ndarray) -> np.ndarray:
        return u[self.nodes].copy()


class ArchetypeComponent:
    """Reference-domain building block of the trained library."""

    def __init__(self, id, mesh, ports, param_box, mu_ref, node_map, kind=None,
                 source_param=None):
        self.id = id
        self.space = FeSpace2D(mesh)
        self.mesh = mesh
        self.ports = list(ports)
        self.param_box = np.asarray(param_box, dtype=float)
        self.mu_ref = np.asarray(mu_ref, dtype=float)
        self.node_map = node_map
        self.kind = kind if kind is not None else id
        self.source_param = source_param

        port_dofs = (
            np.concatenate([p.nodes for p in self.ports])
            if self.ports
            else np.empty(0, dtype=np.int64)
        )
        if len(np.unique(port_dofs)) != len(port_dofs):
            raise ValueError(f"component {id!r}: port node sets overlap")
        self.port_dofs = port_dofs
        mask = np.ones(self.space.n_dofs, dtype=bool)
        mask[port_dofs] = False
        self.bubble_dofs = np.nonzero(mask)[0]
        self._edge_endpoints = _midside_edge_table(mesh)
        self._lift_factor = None
        self._stiffness = None

        # trained data, populated by the offline phase
        self.bubble_modes: np.ndarray | None = None
        self.bubble_sizes: list = []
        self.lifted: dict = {}  # (port_index, flipped) -> (n_dofs, n_modes)
        self.rq_rules: dict = {}  # fidelity tuple -> RqRule
        self.eps_rb: dict = {}  # fidelity tuple -> float
        self.eta: dict = {}  # fidelity tuple -> float
        self.eta_skipped: dict = {}

    # -- structure -----------------------------------------------------------

    @property
    def n_ports(self) -> int:
        return len(self.ports)

    @property
    def n_bubble_dofs(self) -> int:
        return len(self.bubble_dofs)

    @property
    def n_fidelities(self) -> int:
        return len(self.bubble_sizes)

    def depth(self, library) -> int:
        """Usable hierarchy depth: the shallowest of bubble and port ladders."""
        levels = [self.n_fidelities]
        levels += [
            library.port(pm.archetype_port).n_fidelities for pm in self.ports
        ]
        return min(levels)

    def fidelity_cap(self, library) -> int:
        """Highest level assignable online.

        The finest trained level is reserved as the comparison space, and a
        level is only assignable if the uniform contraction factors of it and
        every coarser level are valid (below one), since the estimator
        refuses invalid entries.
        """
        cap = self.depth(library) - 1
        valid = 0
        for level in range(1, cap + 1):
            key = FidelityIndex.uniform(level, self.n_ports).as_tuple()
            eta = self.eta.get(key)
            if eta is None or not 0.0 <= eta < 1.0:
                break
            valid = level
        return valid

    def coerce_fidelity(self, f) -> FidelityIndex:
        return FidelityIndex.coerce(f, self.n_ports)

    # -- geometry --------------------------------------------------------------

    def check_parameters(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        lo, hi = self.param_box[:, 0], self.param_box[:, 1]
        if mu.shape != lo.shape or np.any(mu < lo - 1e-12) or np.any(mu > hi + 1e-12):
            raise ValueError(
                f"parameters {mu} outside the box of archetype {self.id!r}"
            )
        return mu

    def map_nodes(self, mu) -> np.ndarray:
        """Physical node positions under the piecewise-affine map at ``mu``.

        Vertices follow the archetype's map rule; midside nodes are placed at
        mapped-edge midpoints so each element's geometry is exactly affine.
        """
        mu = self.check_parameters(mu)
        pos = self.node_map(self.mesh.nodes, mu)
        mids, va, vb = self._edge_endpoints
        pos[mids] = 0.5 * (pos[va] + pos[vb])
        return pos

    def geometric_map(self, mu) -> GeometricMapEval:
        """Per-element Jacobian data of the map at ``mu`` (det J > 0 enforced)."""
        nodes = self.map_nodes(mu)
        ref = self.mesh.nodes[self.mesh.elements[:, :3]]
        phys = nodes[self.mesh.elements[:, :3]]
        Aref = np.stack([ref[:, 1] - ref[:, 0], ref[:, 2] - ref[:, 0]], axis=2)
        Aphys = np.stack([phys[:, 1] - phys[:, 0], phys[:, 2] - phys[:, 0]], axis=2)
        jac = np.einsum("epq,eqd->epd", Aphys, np.linalg.inv(Aref))
        try:
            return GeometricMapEval.from_jacobians(jac, nodes=nodes)
        except ValueError as exc:
            raise ValueError(f"archetype {self.id!r} at mu={mu}: {exc}") from exc

    def port_endpoints(self, mu=None) -> np.ndarray:
        """First/last port node coordinates per port, (n_ports, 2, 2)."""
        nodes = self.mesh.nodes if mu is None else self.map_nodes(mu)
        return np.stack([nodes[[p.nodes[0], p.nodes[-1]]] for p in self.ports])

    # -- lifting and decomposition ----------------------------------------------

    def _lift_solver(self):
        if self._lift_factor is None:
            if self._stiffness is None:
                self._stiffness = self.space.stiffness()
            Kbb = sp.csc_matrix(self._stiffness[self.bubble_dofs][:, self.bubble_dofs])
            self._lift_factor = spla.factorized(Kbb)
        return self._lift_factor

    def lift_traces(self, traces: dict) -> np.ndarray:
        """Harmonic extension of nodal port data into the component interior.

        ``traces`` maps local port index to a nodal vector on that port; ports
        not present are held at zero. The result matches the data on every
        port and its Laplace weak form vanishes against all bubble functions.
        """
        if self._stiffness is None:
            self._stiffness = self.space.stiffness()
        g = np.zeros(self.space.n_dofs)
        for p, values in traces.items():
            g[self.ports[p].nodes] = values
        rhs = -(self._stiffness[self.bubble_dofs][:, self.port_dofs] @ g[self.port_dofs])
        g[self.bubble_dofs] = self._lift_solver()(rhs)
        return g

    def bubble_port_split(self, u: np.ndarray):
        """Split a nodal function into its bubble part and per-port traces.

        Returns ``(u_b, traces)`` with ``u = u_b + lift(traces)`` exactly and
        ``u_b`` vanishing on every port.
        """
        u = np.asarray(u, dtype=float)
        traces = {p: pm.trace(u) for p, pm in enumerate(self.ports)}
        u_b = u - self.lift_traces(traces)
        u_b[self.port_dofs] = 0.0
        return u_b, traces

    def elliptic_lift(self, port: int, data: np.ndarray, test_space="truth") -> np.ndarray:
        """Lift port data into the interior against a chosen test space.

        ``test_space`` is ``"truth"`` for the full bubble FE space or
        ``("rb", level)`` for a trained bubble RB level; either way the result
        equals ``data`` on the given port and zero on all others, and its
        Laplace form vanishes against the test space.
        """
        data = np.asarray(data, dtype=float)
        if data.shape != (len(self.ports[port].nodes),):
            raise ValueError("boundary data does not match the port FE space")
        if test_space == "truth":
            return self.lift_traces({port: data})
        tag, level = test_space
        if tag != "rb":
            raise ValueError(f"unknown test space {test_space!r}")
        xi = self.bubble_basis(level)
        if xi.shape[1] == 0:
            return self.lift_traces({port: data})
        if self._stiffness is None:
            self._stiffness = self.space.stiffness()
        seed = np.zeros(self.space.n_dofs)
        seed[self.ports[port].nodes] = data
        K = self._stiffness
        gram = xi.T @ (K @ xi)
        coef = np.linalg.solve(gram, -(xi.T @ (K @ seed)))
        return seed + xi @ coef

    # -- trained bases -----------------------------------------------------------

    def set_bubble_modes(self, modes: np.ndarray, sizes) -> None:
        sizes = list(sizes)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("bubble fidelity sizes must be strictly increasing")
        trace_max = (
            np.abs(modes[self.port_dofs]).max()
            if modes.size and len(self.port_dofs)
            else 0.0
        )
        if trace_max > 1e-10:
            raise ValueError(
                f"bubble modes of {self.id!r} have nonzero port trace ({trace_max:.2e})"
            )
        self.bubble_modes = np.asarray(modes, dtype=float)
        self.bubble_sizes = sizes

    def set_lifted_modes(self, port: int, modes: np.ndarray, flipped_modes: np.ndarray):
        self.lifted[(port, False)] = np.asarray(modes, dtype=float)
        self.lifted[(port, True)] = np.asarray(flipped_modes, dtype=float)

    def bubble_basis(self, level: int) -> np.ndarray:
        if not 1 <= level <= self.n_fidelities:
            raise FidelityError(
                f"bubble fidelity {level} outside 1..{self.n_fidelities} for {self.id!r}"
            )
        return self.bubble_modes[:, : self.bubble_sizes[level - 1]]

    def lifted_basis(self, port: int, level: int, flipped: bool, library) -> np.ndarray:
        ap = library.port(self.ports[port].archetype_port)
        if not 1 <= level <= ap.n_fidelities:
            raise FidelityError(
                f"port fidelity {level} outside 1..{ap.n_fidelities} for "
                f"{self.id!r} port {port}"
            )
        return self.lifted[(port, flipped)][:, : ap.fidelity_sizes[level - 1]]

    def rb_space(self, f, library, flips=None):
        """Ordered reduced basis for a fidelity multi-index.

        Columns are the first bubble modes of the bubble level followed by the
        first lifted modes of each port's level, so the basis of a lower
        multi-index is a group-wise prefix of any higher one.

        Returns ``(basis, slices)`` where ``slices`` maps ``"bubble"`` and
        each port index to its column range.
        """
        fi = self.coerce_fidelity(f)
        if flips is None:
            flips = (False,) * self.n_ports
        blocks = [self.bubble_basis(fi.bubble)]
        slices = {"bubble": slice(0, blocks[0].shape[1])}
        start = blocks[0].shape[1]
        for p, level in enumerate(fi.ports):
            block = self.lifted_basis(p, level, flips[p], library)
            blocks.append(block)
            slices[p] = slice(start, start + block.shape[1])
            start += block.shape[1]
        return np.hstack(blocks), slices


@dataclass
class InstantiatedComponent:
    """A placed copy of an archetype with fixed parameters.

    ``rotation`` counts quarter turns; together with ``shift`` it locates the
    component in the system plane. Rotations are isometries, so reference-
    domain assembly is unaffected; placement only matters for conformity.
    """

    archetype: ArchetypeComponent
    mu: np.ndarray
    rotation: int = 0
    shift: np.ndarray = field(default_factory=lambda: np.zeros(2))
    source: float = 0.0
    label: str = ""

    _geo: GeometricMapEval = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.mu = self.archetype.check_parameters(self.mu)
        self.shift = np.asarray(self.shift, dtype=float)

    @property
    def geometry(self) -> GeometricMapEval:
        if self._geo is None:
            self._geo = self.archetype.geometric_map(self.mu)
        return self._geo

    def place(self, points: np.ndarray) -> np.ndarray:
        """Apply the rigid placement (counterclockwise quarter turns, then shift)."""
        k = self.rotation % 4
        x, y = points[..., 0], points[..., 1]
        if k == 1:
            x, y = -y, x
        elif k == 2:
            x, y = -x, -y
        elif k == 3:
            x, y = y, -x
        return np.stack([x, y], axis=-1) + self.shift

    def port_endpoints_physical(self) -> np.ndarray:
        return self.place(self.archetype.port_endpoints(self.mu))

    def port_nodes_physical(self, port: int) -> np.ndarray:
        nodes = self.geometry.nodes[self.archetype.ports[port].nodes]
        return self.place(nodes)


def _midside_edge_table(mesh):
    """Arrays (midside_node, vertex_a, vertex_b) for all quadratic edges."""
    pairs = {}
    for elem in mesh.elements:
        for mid, a, b in ((elem[3], elem[0], elem[1]), (elem[4], elem[1], elem[2]),
                          (elem[5], elem[2], elem[0])):
            pairs[int(mid)] = (int(a), int(b))
    mids = np.fromiter(pairs.keys(), dtype=np.int64)
    va = np.fromiter((pairs[m][0] for m in mids), dtype=np.int64)
    vb = np.fromiter((pairs[m][1] for m in mids), dtype=np.int64)
    return mids, va, vb
