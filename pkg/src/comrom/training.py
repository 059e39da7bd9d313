"""Offline pipeline: snapshots, nested POD, residual-error/quadrature training,
and contraction estimation, producing a persisted component library.

The hyperreduction tolerance of every reduced space is coupled to that
space's estimated residual error (a fixed small ratio of it), so refined
spaces automatically receive more accurate quadrature rules.
"""

import itertools
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .components import FidelityIndex
from .eqp import train_eqp
from .fem import assemble_jacobian, assemble_residual, dual_norm, h1_norm, h1_project
from .library import ComponentLibrary, library_stats
from .newton import newton_solve
from .pod import pod
from .ports import reverse_port_values
from .reduced import solve_component_reduced
from .snapshots import generate_snapshots, sample_subsystems


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainingConfig:
    seed: int = 2024
    n_sample: int = 100
    nu: float = 0.8
    pod_tolerances: tuple = (0.1, 0.01, 0.001, 0.0001)
    eqp_ratio: float = 0.01
    eqp_tol_floor: float = 1e-9
    fidelity_family: str = "diagonal"  # "diagonal" or "all"
    boundary_range: tuple = (1.0, 250.0)
    newton_tol: float = 1e-9

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise TrainingError(f"unknown training config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if not 0.0 <= cfg.nu <= 1.0:
            raise TrainingError("nu must lie in [0, 1]")
        if cfg.n_sample < 1:
            raise TrainingError("n_sample must be positive")
        if cfg.fidelity_family not in ("diagonal", "all"):
            raise TrainingError("fidelity_family must be 'diagonal' or 'all'")
        cfg.pod_tolerances = tuple(cfg.pod_tolerances)
        cfg.boundary_range = tuple(cfg.boundary_range)
        return cfg


def fidelity_family(component, library, which: str):
    """Multi-indices to train: the uniform diagonal, or the full product set."""
    if which == "diagonal":
        depth = component.depth(library)
        return [FidelityIndex.uniform(j, component.n_ports) for j in range(1, depth + 1)]
    axes = [range(1, component.n_fidelities + 1)]
    for p in range(component.n_ports):
        port = library.port(component.ports[p].archetype_port)
        axes.append(range(1, port.n_fidelities + 1))
    return [FidelityIndex(t[0], tuple(t[1:])) for t in itertools.product(*axes)]


def estimate_rb_error(component, f, snapshots, material, library) -> float:
    """Max dual norm of the truth residual at projected training snapshots.

    Each snapshot is H1-projected onto the multi-indexed reduced space and the
    residual is assembled at the snapshot's own parameters; the supremum space
    is the full component truth space with free port DoFs.
    """
    if not snapshots:
        raise TrainingError("cannot estimate the reduced-space error without snapshots")
    basis, _ = component.rb_space(f, library)
    space = component.space
    worst = 0.0
    for snap in snapshots:
        coef = h1_project(space, snap.values, basis)
        z = basis @ coef
        geo = component.geometric_map(snap.mu)
        r = assemble_residual(space, z, material, source=snap.source, geo=geo,
                              out_of_range="clamp")
        worst = max(worst, dual_norm(space, r))
    return worst


def _solve_component_truth(component, traces, mu, source, material, u0, tol):
    space = component.space
    geo = component.geometric_map(mu)
    u_init = u0.copy()
    for p, vals in traces.items():
        u_init[component.ports[p].nodes] = vals
    u, _ = newton_solve(
        lambda v: assemble_residual(space, v, material, source=source, geo=geo,
                                    out_of_range="clamp"),
        lambda v: assemble_jacobian(space, v, material, geo=geo, out_of_range="clamp"),
        u_init,
        constrained_dofs=component.port_dofs,
        abs_tol=tol,
        max_iter=40,
    )
    return u


def estimate_contraction(component, f, snapshots, material, library,
                         newton_tol: float = 1e-9, truth_solutions=None):
    """Worst observed error-contraction ratio under a one-level refinement.

    For each training snapshot, the component truth problem (ports pinned to
    the snapshot trace) is compared against hyperreduced solves at ``f`` and
    ``f + 1`` whose port data is the snapshot trace projected onto the
    respective port mode sets. Ratios with truth error below 1e-12 are
    skipped and counted, as are ratios where both errors sit at the solver
    noise floor and carry no contraction information.
    """
    fi = component.coerce_fidelity(f)
    fi_ref = fi.incremented(1)
    noise = 100.0 * newton_tol
    worst = 0.0
    n_skipped = 0
    n_used = 0
    for si, snap in enumerate(snapshots):
        traces = {p: pm.trace(snap.values) for p, pm in enumerate(component.ports)}
        if truth_solutions is not None:
            u_h = truth_solutions[si]
        else:
            u_h = _solve_component_truth(component, traces, snap.mu, snap.source,
                                         material, snap.values, newton_tol)
        solves = {}
        for tag, fx in (("coarse", fi), ("fine", fi_ref)):
            coeffs = {}
            for p, pm in enumerate(component.ports):
                port = library.port(pm.archetype_port)
                modes = port.modes(fx.ports[p])
                gram = port.space.h1_gram()
                coeffs[p] = modes.T @ (gram @ traces[p])
            u, _ = solve_component_reduced(
                component, fx, coeffs, snap.mu, material, library,
                abs_tol=newton_tol, max_iter=60,
            )
            solves[tag] = u
        den = h1_norm(component.space, u_h - solves["coarse"])
        num = h1_norm(component.space, u_h - solves["fine"])
        if den < 1e-12 or (den < noise and num < noise):
            n_skipped += 1
            continue
        worst = max(worst, num / den)
        n_used += 1
    if n_used == 0:
        raise TrainingError(
            f"all contraction ratios for {component.id!r} at {fi.as_tuple()} were "
            f"degenerate (errors at or below the solver noise floor)"
        )
    return worst, n_skipped


def train_library(catalog: ComponentLibrary, config: TrainingConfig, material,
                  log=print, workers: int = 1, keep_snapshots: bool = False) -> dict:
    """Run the full offline pipeline in place on ``catalog``; returns a report.

    With ``keep_snapshots`` the report carries the generated snapshot set
    under ``"snapshots"`` so callers can re-verify trained rules against it.
    """

    def say(msg):
        if log is not None:
            log(msg)

    t0 = time.time()
    report = {"config": config.to_dict(), "components": {}, "n_failed_solves": 0}
    comp_ids = sorted(catalog.components)

    # snapshot generation, one deterministic substream per component
    specs_by_component = {}
    for k, cid in enumerate(comp_ids):
        rng = np.random.default_rng([config.seed, k])
        specs_by_component[cid] = sample_subsystems(
            catalog, cid, config.n_sample, config.nu, rng,
            boundary_range=config.boundary_range,
        )
    say(f"solving {config.n_sample} training subsystems per component")
    # subsystem tolerances follow the size-scaled floor of solve_truth
    snapshots = generate_snapshots(catalog, specs_by_component, material,
                                   log=log, workers=workers)
    report["n_failed_solves"] = snapshots.n_failed

    say("building port mode hierarchies")
    for pid in sorted(catalog.ports):
        port = catalog.port(pid)
        traces = snapshots.port_traces.get(pid, [])
        if not traces:
            raise TrainingError(f"no port snapshots collected for {pid!r}")
        modes, sizes = pod(traces, port.space.h1_gram(), config.pod_tolerances)
        port.set_modes(modes, sizes)
        report.setdefault("ports", {})[pid] = {"sizes": sizes, "n_snapshots": len(traces)}

    say("building bubble hierarchies and lifted port bases")
    for cid in comp_ids:
        comp = catalog.component(cid)
        bubbles = [s.values for s in snapshots.bubble[cid]]
        if not bubbles:
            raise TrainingError(f"no snapshots collected for {cid!r}")
        modes, sizes = pod(bubbles, comp.space.h1_gram(), config.pod_tolerances)
        comp.set_bubble_modes(modes, sizes)
        if len(sizes) < 2:
            raise TrainingError(
                f"{cid!r} trained only {len(sizes)} bubble level(s); the adaptive "
                f"online phase needs at least two (increase n_sample)"
            )
        for p, pm in enumerate(comp.ports):
            port = catalog.port(pm.archetype_port)
            lifted = np.column_stack(
                [comp.lift_traces({p: port.pod_modes[:, j]})
                 for j in range(port.pod_modes.shape[1])]
            )
            flipped = np.column_stack(
                [comp.lift_traces({p: reverse_port_values(port.pod_modes[:, j])})
                 for j in range(port.pod_modes.shape[1])]
            )
            comp.set_lifted_modes(p, lifted, flipped)
        report["components"][cid] = {
            "bubble_sizes": sizes,
            "n_snapshots": len(bubbles),
            "n_bubble_dofs": comp.n_bubble_dofs,
            "n_truth_points": comp.space.quad.n_points,
        }

    say("estimating reduced-space residual errors and training quadrature rules")
    for cid in comp_ids:
        comp = catalog.component(cid)
        family = fidelity_family(comp, catalog, config.fidelity_family)
        eps_tab, q_tab = {}, {}
        for fi in family:
            key = fi.as_tuple()
            eps = estimate_rb_error(comp, fi, snapshots.full[cid], material, catalog)
            comp.eps_rb[key] = eps
            eps_tab[key] = eps
            eps_tilde = max(config.eqp_ratio * eps, config.eqp_tol_floor)
            rule = train_eqp(comp, fi, snapshots.full[cid], catalog, material, eps_tilde)
            comp.rq_rules[key] = rule
            q_tab[key] = rule.n_points
            say(f"  {cid} f={key}: eps_rb={eps:.3e}, rq points={rule.n_points}")
        report["components"][cid]["eps_rb"] = {str(k): v for k, v in eps_tab.items()}
        report["components"][cid]["rq_points"] = {str(k): v for k, v in q_tab.items()}

    say("estimating error contraction factors")
    for cid in comp_ids:
        comp = catalog.component(cid)
        family = fidelity_family(comp, catalog, config.fidelity_family)
        bubble_finest = comp.n_fidelities
        eta_tab = {}
        truth_solutions = []
        for snap in snapshots.full[cid]:
            traces = {p: pm.trace(snap.values) for p, pm in enumerate(comp.ports)}
            truth_solutions.append(
                _solve_component_truth(comp, traces, snap.mu, snap.source,
                                       material, snap.values, config.newton_tol)
            )
        for fi in family:
            port_finests = [
                catalog.port(pm.archetype_port).n_fidelities for pm in comp.ports
            ]
            if fi.bubble >= bubble_finest or any(
                p >= pf for p, pf in zip(fi.ports, port_finests)
            ):
                continue
            eta, skipped = estimate_contraction(comp, fi, snapshots.full[cid],
                                                material, catalog,
                                                newton_tol=config.newton_tol,
                                                truth_solutions=truth_solutions)
            key = fi.as_tuple()
            comp.eta[key] = eta
            comp.eta_skipped[key] = skipped
            eta_tab[key] = eta
            say(f"  {cid} f={key}: eta={eta:.4f} ({skipped} degenerate ratios skipped)")
        values = np.array(list(eta_tab.values()))
        report["components"][cid]["eta"] = {str(k): v for k, v in eta_tab.items()}
        report["components"][cid]["eta_stats"] = {
            "min": float(values.min()),
            "median": float(np.median(values)),
            "max": float(values.max()),
            "n_invalid": int((values >= 1.0).sum()),
        }

    report["library_stats"] = library_stats(catalog)
    report["wall_time_s"] = time.time() - t0
    catalog.provenance = {
        "config": config.to_dict(),
        "snapshot_failures": snapshots.n_failed,
    }
    if keep_snapshots:
        report["snapshots"] = snapshots
    return report
