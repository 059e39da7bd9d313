"""Random-subsystem snapshot generation for component-wise training.

Each training subsystem centers one archetype component, connects each of its
local ports with probability ``nu`` to a uniformly drawn library component,
assigns uniform parameters from the boxes, and applies uniform constant
Dirichlet values to every boundary port. The truth solve on the subsystem is
then restricted to the center component and split into bubble and port parts.
"""

from dataclasses import dataclass, field

import numpy as np

from .newton import NewtonError
from .system import ComponentSpec, assemble_system, solve_truth


@dataclass
class Snapshot:
    """One extracted component solution with the parameters that produced it."""

    values: np.ndarray
    mu: np.ndarray
    source: float


@dataclass
class SnapshotSet:
    """Training snapshots per archetype component and per archetype port."""

    full: dict = field(default_factory=dict)  # comp id -> list[Snapshot]
    bubble: dict = field(default_factory=dict)  # comp id -> list[Snapshot]
    port_traces: dict = field(default_factory=dict)  # port id -> list[np.ndarray]
    n_failed: int = 0

    def check_decomposition(self, library, tol: float = 1e-10) -> float:
        """Largest H1 reconstruction error of bubble + lifted ports vs full."""
        worst = 0.0
        for cid, snaps in self.full.items():
            comp = library.component(cid)
            for snap, bub in zip(snaps, self.bubble[cid]):
                traces = {p: pm.trace(snap.values) for p, pm in enumerate(comp.ports)}
                recon = bub.values + comp.lift_traces(traces)
                from .fem import h1_norm

                worst = max(worst, h1_norm(comp.space, recon - snap.values))
        if worst > tol:
            raise AssertionError(f"snapshot decomposition identity violated: {worst:.3e}")
        return worst


@dataclass
class SubsystemSpec:
    """Declarative training subsystem: center component plus port attachments.

    ``attachments[p]`` is either ``("dirichlet", value)`` or
    ``("component", archetype_id, neighbor_port, mu, boundary_values)`` where
    ``boundary_values`` covers the neighbor's remaining ports.
    """

    center_archetype: str
    center_mu: np.ndarray
    attachments: list


def _uniform_mu(rng, box):
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(len(box))


def sample_subsystems(
    library,
    comp_id: str,
    n_sample: int,
    nu: float,
    rng,
    boundary_range=(1.0, 250.0),
) -> list:
    """Draw ``n_sample`` training subsystems for one archetype component."""
    if not 0.0 <= nu <= 1.0:
        raise ValueError(f"connection probability must lie in [0, 1], got {nu}")
    lo, hi = boundary_range
    comp = library.component(comp_id)
    ids = library.component_ids
    specs = []
    for _ in range(n_sample):
        center_mu = _uniform_mu(rng, comp.param_box)
        attachments = []
        for _p in range(comp.n_ports):
            if rng.random() < nu:
                neighbor_id = ids[rng.integers(len(ids))]
                neighbor = library.component(neighbor_id)
                nb_port = int(rng.integers(neighbor.n_ports))
                nb_mu = _uniform_mu(rng, neighbor.param_box)
                nb_bvals = lo + (hi - lo) * rng.random(neighbor.n_ports - 1)
                attachments.append(
                    ("component", neighbor_id, nb_port, nb_mu, nb_bvals)
                )
            else:
                attachments.append(("dirichlet", float(lo + (hi - lo) * rng.random())))
        specs.append(SubsystemSpec(comp_id, center_mu, attachments))
    return specs


def _assemble_subsystem(library, spec: SubsystemSpec):
    comp_specs = [ComponentSpec(archetype=spec.center_archetype, mu=tuple(spec.center_mu))]
    connectivity = []
    dirichlet = []
    for p, att in enumerate(spec.attachments):
        if att[0] == "dirichlet":
            dirichlet.append(((0, p), att[1]))
        else:
            _, nb_id, nb_port, nb_mu, nb_bvals = att
            ci = len(comp_specs)
            comp_specs.append(ComponentSpec(archetype=nb_id, mu=tuple(nb_mu)))
            connectivity.append(((0, p), (ci, nb_port)))
            others = [q for q in range(library.component(nb_id).n_ports) if q != nb_port]
            for q, val in zip(others, nb_bvals):
                dirichlet.append(((ci, q), float(val)))
    # training subsystems are connectivity-only; no physical placement exists
    return assemble_system(library, comp_specs, connectivity, dirichlet,
                           check_conformity=False)


def generate_snapshots(
    library,
    specs_by_component: dict,
    material,
    abs_tol: float | None = None,
    max_iter: int = 40,
    log=None,
    workers: int = 1,
) -> SnapshotSet:
    """Solve every training subsystem and harvest center-component snapshots.

    Newton failures are counted and the subsystem skipped. Subsystem solves
    are independent; with ``workers > 1`` they run on a thread pool and are
    merged back in spec order, so results do not depend on scheduling.
    """

    def solve_one(spec):
        system = _assemble_subsystem(library, spec)
        try:
            sol = solve_truth(system, material, abs_tol=abs_tol, max_iter=max_iter)
        except NewtonError as exc:
            return exc
        return sol.component_values[0]

    out = SnapshotSet()
    for cid in specs_by_component:
        out.full[cid] = []
        out.bubble[cid] = []
    for cid, specs in specs_by_component.items():
        comp = library.component(cid)
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(solve_one, specs))
        else:
            results = [solve_one(spec) for spec in specs]
        for spec, result in zip(specs, results):
            if isinstance(result, NewtonError):
                out.n_failed += 1
                if log is not None:
                    log(f"snapshot solve failed for {cid}: {result}")
                continue
            u = result
            mu = np.asarray(spec.center_mu, dtype=float)
            source = mu[comp.source_param] if comp.source_param is not None else 0.0
            out.full[cid].append(Snapshot(values=u, mu=mu, source=source))
            u_b, traces = comp.bubble_port_split(u)
            out.bubble[cid].append(Snapshot(values=u_b, mu=mu, source=source))
            for p, pm in enumerate(comp.ports):
                out.port_traces.setdefault(pm.archetype_port, []).append(traces[p])
    return out
