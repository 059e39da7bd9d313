"""Online adaptive (and uniform) fidelity refinement driven by the estimator.

The loop starts every component at the coarsest multi-index, solves at the
current assignment and at the assignment incremented by one everywhere,
estimates the error hierarchically, and refines the worst components until
the tolerance, the fidelity cap, or the iteration budget is reached. The
finest trained level always stays reserved as the comparison space, so
assignments cap at one below it.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .components import FidelityIndex
from .estimator import hierarchical_estimate, true_error
from .reduced import solve_reduced
from .system import System


@dataclass
class IterationRecord:
    iteration: int
    assignment: list
    n_rb: int
    q_rb: int
    estimate: float
    relative_estimate: float
    refined: list
    true_error: float | None = None
    true_relative_error: float | None = None
    effectivity: float | None = None


@dataclass
class RefinementState:
    """Trajectory of the refinement loop."""

    assignment: list
    iterations: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)


def _cap(system: System, ci: int) -> int:
    return system.components[ci].archetype.fidelity_cap(system.library)


def _at_cap(system: System, assignment) -> bool:
    for ci, fi in enumerate(assignment):
        cap = _cap(system, ci)
        if fi.bubble < cap or any(p < cap for p in fi.ports):
            return False
    return True


def adaptive_solve(
    system: System,
    material,
    rel_tol: float = 0.01,
    n_ref: int = 10,
    delta_percent: float = 10.0,
    abs_tol: float | None = None,
    refine_all: bool = False,
    track_truth: bool = False,
    newton_tol: float = 1e-9,
):
    """Adaptively refine component fidelities until the error estimate passes.

    Convergence is judged on the relative estimate (estimate over the refined
    solution's V-norm) unless ``abs_tol`` is given, which switches to the
    absolute estimate. ``delta_percent`` sets the share of components refined
    per iteration (all of them with ``refine_all``). With ``track_truth`` each
    iteration also records the true error and the estimator effectivity.

    Returns ``(solution, state, reports)`` where ``solution`` is the last
    coarse-level solve and ``reports`` the per-iteration error reports.
    """
    if n_ref < 1:
        raise ValueError("need at least one refinement iteration")
    for ci in range(system.n_components):
        if _cap(system, ci) < 1:
            arch = system.components[ci].archetype
            raise ValueError(
                f"archetype {arch.id!r} has no assignable fidelity level (its "
                f"coarsest contraction factor is missing or not below one)"
            )
    assignment = [
        FidelityIndex.uniform(1, system.components[ci].archetype.n_ports)
        for ci in range(system.n_components)
    ]
    state = RefinementState(assignment=assignment)
    reports = []
    solution = None
    warm = None
    warm_ref = None

    for k in range(n_ref):
        solution = solve_reduced(system, assignment, material, warm_start=warm,
                                 abs_tol=newton_tol)
        warm = solution
        if _at_cap(system, assignment):
            state.stop_reason = "all components at the fidelity cap"
            break
        refined_assignment = [fi.incremented(1) for fi in assignment]
        refined = solve_reduced(system, refined_assignment, material,
                                warm_start=warm_ref or solution, abs_tol=newton_tol)
        warm_ref = refined

        report = hierarchical_estimate(solution, refined, assignment)
        reports.append(report)
        record = IterationRecord(
            iteration=k,
            assignment=[fi.as_tuple() for fi in assignment],
            n_rb=solution.data["n_rb"],
            q_rb=solution.data["q_rb"],
            estimate=report.estimate,
            relative_estimate=report.relative_estimate,
            refined=[],
        )
        if track_truth:
            err = true_error(system, solution, material, estimate=report.estimate)
            record.true_error = err.total
            record.true_relative_error = err.total / err.truth_norm
            record.effectivity = err.effectivity
        state.iterations.append(record)

        if abs_tol is not None:
            converged = report.estimate <= abs_tol
        else:
            converged = report.relative_estimate <= rel_tol
        if converged:
            state.converged = True
            state.stop_reason = "tolerance met"
            break

        refinable = [
            ci
            for ci in range(system.n_components)
            if assignment[ci].bubble < _cap(system, ci)
            or any(p < _cap(system, ci) for p in assignment[ci].ports)
        ]
        if refine_all:
            chosen = refinable
        else:
            n_refine = max(1, math.ceil(system.n_components * delta_percent / 100.0))
            ranked = [ci for ci in report.ranking().tolist() if ci in set(refinable)]
            chosen = ranked[:n_refine]
        if not chosen:
            state.stop_reason = "all assignable fidelity levels exhausted"
            break
        record.refined = sorted(chosen)
        for ci in chosen:
            assignment[ci] = assignment[ci].incremented(1, cap=_cap(system, ci))
    else:
        state.stop_reason = "iteration budget exhausted"

    state.assignment = assignment
    return solution, state, reports


def uniform_solve(system: System, material, rel_tol: float = 0.01, n_ref: int = 10,
                  **kwargs):
    """Refinement baseline that enriches every component each iteration."""
    return adaptive_solve(system, material, rel_tol=rel_tol, n_ref=n_ref,
                          refine_all=True, **kwargs)
