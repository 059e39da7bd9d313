"""System assembly from instantiated components and the truth solve.

Continuity across shared ports is imposed by identifying the port DoFs of the
two members in a single global numbering; Dirichlet boundary ports are
constrained to their constant value at every port node.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .components import InstantiatedComponent
from .fem import DomainViolationError, assemble_jacobian, assemble_residual
from .newton import newton_solve

_CONFORM_TOL = 1e-10


class SystemError(ValueError):
    pass


@dataclass
class ComponentSpec:
    """Declarative description of one instantiated component.

    The volumetric source is not a separate field: it is the component
    parameter designated by the archetype's ``source_param``.
    """

    archetype: str
    mu: tuple
    rotation: int = 0
    shift: tuple = (0.0, 0.0)
    label: str = ""


@dataclass
class GlobalPort:
    """One global port: up to two (component, local port) members.

    ``flips`` records each member's orientation relative to the canonical
    (first member's) traversal. Boundary ports carry a Dirichlet value.
    """

    members: list
    flips: list
    dirichlet: float | None = None

    @property
    def is_boundary(self) -> bool:
        return len(self.members) == 1


@dataclass
class System:
    components: list
    global_ports: list
    library: object
    n_truth_dofs: int = 0
    dof_maps: list = field(default_factory=list)
    port_global_dofs: list = field(default_factory=list)
    constrained_dofs: np.ndarray = None
    constrained_values: np.ndarray = None

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def mu(self) -> list:
        return [c.mu.copy() for c in self.components]

    def component_gram(self, i: int) -> sp.csr_matrix:
        c = self.components[i]
        return c.archetype.space.h1_gram(c.geometry)

    def component_norm(self, i: int, values: np.ndarray) -> float:
        g = self.component_gram(i)
        return float(np.sqrt(max(values @ (g @ values), 0.0)))

    def v_norm(self, component_values) -> float:
        total = 0.0
        for i in range(self.n_components):
            v = component_values[i]
            total += float(v @ (self.component_gram(i) @ v))
        return float(np.sqrt(max(total, 0.0)))

    def adjacency(self):
        """Component adjacency sets induced by shared global ports."""
        neigh = [set() for _ in self.components]
        for gp in self.global_ports:
            if len(gp.members) == 2:
                (a, _), (b, _) = gp.members
                neigh[a].add(b)
                neigh[b].add(a)
        return neigh

    def graph_distances(self, start: int) -> np.ndarray:
        """BFS hop counts from a component (unreachable = -1)."""
        neigh = self.adjacency()
        dist = np.full(self.n_components, -1, dtype=int)
        dist[start] = 0
        queue = [start]
        while queue:
            i = queue.pop(0)
            for j in neigh[i]:
                if dist[j] < 0:
                    dist[j] = dist[i] + 1
                    queue.append(j)
        return dist


@dataclass
class SystemSolution:
    """Solution of a truth or reduced system problem.

    ``kind`` tags the representation; ``component_values`` always holds the
    reconstructed nodal coefficients per component, so norms and errors are
    evaluable component-wise regardless of provenance.
    """

    system: System
    kind: str
    component_values: list
    fidelity: list = None
    newton_iterations: int = 0
    data: dict = field(default_factory=dict)

    def v_norm(self) -> float:
        return self.system.v_norm(self.component_values)


def assemble_system(
    library,
    specs,
    connectivity,
    dirichlet,
    check_conformity: bool = True,
) -> System:
    """Build a :class:`System` from component specs and port connectivity.

    ``connectivity`` holds pairs ``((ci, pi), (cj, pj))`` of connected local
    ports; ``dirichlet`` holds ``((ci, pi), value)`` entries for boundary
    ports. Every local port must appear exactly once across the two lists.

    Raises
    ------
    SystemError
        On ports used more than once (or by more than two components), ports
        left unassigned, or geometrically non-conforming connections.
    """
    components = []
    for s in specs:
        arch = library.component(s.archetype)
        mu = np.asarray(s.mu, dtype=float)
        source = mu[arch.source_param] if arch.source_param is not None else 0.0
        components.append(
            InstantiatedComponent(
                archetype=arch,
                mu=mu,
                rotation=s.rotation,
                shift=np.asarray(s.shift, dtype=float),
                source=float(source),
                label=s.label,
            )
        )

    seen = {}
    for pair in connectivity:
        for c, p in pair:
            if (c, p) in seen:
                raise SystemError(f"local port {(c, p)} used by more than two components")
            seen[(c, p)] = True
    for (c, p), _ in dirichlet:
        if (c, p) in seen:
            raise SystemError(f"local port {(c, p)} is both connected and Dirichlet")
        seen[(c, p)] = True
    for ci, comp in enumerate(components):
        for p in range(comp.archetype.n_ports):
            if (ci, p) not in seen:
                raise SystemError(f"local port {(ci, p)} is neither connected nor Dirichlet")

    global_ports = []
    for (ca, pa), (cb, pb) in connectivity:
        flip = False
        if check_conformity:
            ea = components[ca].port_nodes_physical(pa)
            eb = components[cb].port_nodes_physical(pb)
            if np.allclose(ea, eb, atol=_CONFORM_TOL, rtol=0.0):
                flip = False
            elif np.allclose(ea, eb[::-1], atol=_CONFORM_TOL, rtol=0.0):
                flip = True
            else:
                raise SystemError(
                    f"ports {(ca, pa)} and {(cb, pb)} do not conform geometrically"
                )
        global_ports.append(GlobalPort(members=[(ca, pa), (cb, pb)], flips=[False, flip]))
    for (c, p), value in dirichlet:
        global_ports.append(
            GlobalPort(members=[(c, p)], flips=[False], dirichlet=float(value))
        )
    if not any(gp.is_boundary for gp in global_ports):
        raise SystemError("system has no Dirichlet boundary port")

    system = System(components=components, global_ports=global_ports, library=library)
    _number_truth_dofs(system)
    return system


def _number_truth_dofs(system: System) -> None:
    """Assign global truth DoF ids; shared port nodes get one id."""
    next_id = 0
    port_ids = []
    for gp in system.global_ports:
        c0, p0 = gp.members[0]
        n = len(system.components[c0].archetype.ports[p0].nodes)
        ids = np.arange(next_id, next_id + n)
        next_id += n
        port_ids.append(ids)
    system.port_global_dofs = port_ids

    dof_maps = []
    for ci, comp in enumerate(system.components):
        arch = comp.archetype
        dmap = np.full(arch.space.n_dofs, -1, dtype=np.int64)
        n_interior = arch.n_bubble_dofs
        dmap[arch.bubble_dofs] = np.arange(next_id, next_id + n_interior)
        next_id += n_interior
        dof_maps.append(dmap)
    for gi, gp in enumerate(system.global_ports):
        for (c, p), flip in zip(gp.members, gp.flips):
            nodes = system.components[c].archetype.ports[p].nodes
            ids = system.port_global_dofs[gi]
            dof_maps[c][nodes] = ids[::-1] if flip else ids
    system.dof_maps = dof_maps
    system.n_truth_dofs = next_id

    constrained = []
    values = []
    for gi, gp in enumerate(system.global_ports):
        if gp.dirichlet is not None:
            constrained.append(system.port_global_dofs[gi])
            values.append(np.full(len(system.port_global_dofs[gi]), gp.dirichlet))
    system.constrained_dofs = (
        np.concatenate(constrained) if constrained else np.empty(0, dtype=np.int64)
    )
    system.constrained_values = (
        np.concatenate(values) if values else np.empty(0)
    )


def truth_residual(system: System, u: np.ndarray, material) -> np.ndarray:
    res = np.zeros(system.n_truth_dofs)
    for ci, comp in enumerate(system.components):
        dmap = system.dof_maps[ci]
        r = assemble_residual(
            comp.archetype.space,
            u[dmap],
            material,
            source=comp.source,
            geo=comp.geometry,
            out_of_range="clamp",
        )
        np.add.at(res, dmap, r)
    return res


def truth_jacobian(system: System, u: np.ndarray, material) -> sp.csr_matrix:
    blocks_r, blocks_c, blocks_v = [], [], []
    for ci, comp in enumerate(system.components):
        dmap = system.dof_maps[ci]
        J = assemble_jacobian(
            comp.archetype.space,
            u[dmap],
            material,
            geo=comp.geometry,
            out_of_range="clamp",
        ).tocoo()
        blocks_r.append(dmap[J.row])
        blocks_c.append(dmap[J.col])
        blocks_v.append(J.data)
    n = system.n_truth_dofs
    return sp.coo_matrix(
        (np.concatenate(blocks_v), (np.concatenate(blocks_r), np.concatenate(blocks_c))),
        shape=(n, n),
    ).tocsr()


def _linearized_initial_guess(system: System, material) -> np.ndarray:
    """One linear solve with the conductivity frozen at the mean boundary value."""
    from scipy.sparse.linalg import spsolve

    mean = (
        float(np.mean(system.constrained_values))
        if len(system.constrained_values)
        else 1.0
    )
    u = np.full(system.n_truth_dofs, mean)
    u[system.constrained_dofs] = system.constrained_values
    r = truth_residual(system, u, material)
    J = truth_jacobian(system, u, material)
    free = np.ones(system.n_truth_dofs, dtype=bool)
    free[system.constrained_dofs] = False
    du = spsolve(sp.csc_matrix(J)[free][:, free], -r[free])
    u[free] += du
    lo, hi = material.domain
    return np.clip(u, lo, hi)


def solve_truth(
    system: System,
    material,
    u0: np.ndarray | None = None,
    abs_tol: float | None = None,
    max_iter: int = 30,
) -> SystemSolution:
    """Newton-solve the assembled truth problem.

    The default residual tolerance scales with the square root of the system
    size, tracking the roundoff floor of the assembled residual 2-norm. The
    converged solution is checked against the material domain; a violation
    raises :class:`DomainViolationError` naming the offending value.
    """
    if abs_tol is None:
        abs_tol = 3e-11 * np.sqrt(system.n_truth_dofs)
    if u0 is None:
        u0 = _linearized_initial_guess(system, material)
    else:
        u0 = np.asarray(u0, dtype=float).copy()
    u0[system.constrained_dofs] = system.constrained_values

    u, hist = newton_solve(
        lambda v: truth_residual(system, v, material),
        lambda v: truth_jacobian(system, v, material),
        u0,
        constrained_dofs=system.constrained_dofs,
        abs_tol=abs_tol,
        max_iter=max_iter,
    )

    lo, hi = material.domain
    if np.any(u < lo) or np.any(u > hi):
        bad = int(np.argmax((u < lo) | (u > hi)))
        raise DomainViolationError(
            f"converged solution value {u[bad]:.6g} at global DoF {bad} lies outside "
            f"the material domain [{lo:g}, {hi:g}]",
            value=float(u[bad]),
        )

    values = [u[system.dof_maps[ci]] for ci in range(system.n_components)]
    return SystemSolution(
        system=system,
        kind="truth",
        component_values=values,
        newton_iterations=hist.n_iterations,
        data={"global_vector": u, "history": hist},
    )
