"""Hierarchical error estimation from solutions at successive fidelity levels."""

from dataclasses import dataclass, field

import numpy as np

from .system import SystemSolution, solve_truth


class EstimatorError(ValueError):
    pass


@dataclass
class ErrorReport:
    """Component-wise indicators and the system-level estimate they sum to."""

    component_estimates: np.ndarray
    component_differences: np.ndarray
    etas: np.ndarray
    estimate: float
    reference_norm: float

    @property
    def relative_estimate(self) -> float:
        return self.estimate / self.reference_norm if self.reference_norm > 0 else np.inf

    def ranking(self) -> np.ndarray:
        """Component indices by descending indicator, ties by ascending index."""
        order = np.lexsort((np.arange(len(self.component_estimates)),
                            -self.component_estimates))
        return order


def hierarchical_estimate(
    coarse: SystemSolution, refined: SystemSolution, f_assignment
) -> ErrorReport:
    """Estimate the coarse solution's error from its distance to the refined one.

    Per component the indicator is the V-norm of the difference amplified by
    ``1 / (1 - eta)`` with the trained contraction factor of the component's
    assigned multi-index; the system estimate is the plain sum. The relative
    figure normalizes by the refined solution's V-norm.

    Raises
    ------
    EstimatorError
        If the two solutions live on different systems or a required
        contraction factor is missing or not below one.
    """
    system = coarse.system
    if refined.system is not system:
        raise EstimatorError("solutions must come from the same assembled system")
    n = system.n_components
    diffs = np.empty(n)
    etas = np.empty(n)
    for ci in range(n):
        comp = system.components[ci]
        eta = system.library.eta_value(comp.archetype.id, f_assignment[ci])
        if not 0.0 <= eta < 1.0:
            key = comp.archetype.coerce_fidelity(f_assignment[ci]).as_tuple()
            raise EstimatorError(
                f"contraction factor {eta:.4f} for {comp.archetype.id!r} at {key} "
                f"is not in [0, 1); the hierarchical estimate is invalid there"
            )
        etas[ci] = eta
        delta = refined.component_values[ci] - coarse.component_values[ci]
        diffs[ci] = system.component_norm(ci, delta)
    estimates = diffs / (1.0 - etas)
    return ErrorReport(
        component_estimates=estimates,
        component_differences=diffs,
        etas=etas,
        estimate=float(estimates.sum()),
        reference_norm=refined.v_norm(),
    )


@dataclass
class TrueErrorReport:
    total: float
    per_component: np.ndarray
    truth_norm: float
    effectivity: float | None = None


def true_error(
    system,
    reduced_solution: SystemSolution,
    material,
    truth_solution: SystemSolution | None = None,
    estimate: float | None = None,
) -> TrueErrorReport:
    """V-norm distance of a reduced solution from the truth solve (oracle path)."""
    if truth_solution is None:
        truth_solution = solve_truth(system, material)
    per = np.array(
        [
            system.component_norm(
                ci, truth_solution.component_values[ci] - reduced_solution.component_values[ci]
            )
            for ci in range(system.n_components)
        ]
    )
    total = float(np.sqrt((per**2).sum()))
    eff = None
    if estimate is not None and total > 0:
        eff = float(estimate / total)
    return TrueErrorReport(
        total=total,
        per_component=per,
        truth_norm=truth_solution.v_norm(),
        effectivity=eff,
    )
