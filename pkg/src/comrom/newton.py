"""Newton solver with optional halving line search and Dirichlet constraints."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class NewtonError(RuntimeError):
    pass


@dataclass
class NewtonHistory:
    residual_norms: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    n_iterations: int = 0
    converged: bool = False


def newton_solve(
    residual_fn,
    jacobian_fn,
    u0: np.ndarray,
    constrained_dofs=None,
    abs_tol: float = 1e-10,
    max_iter: int = 30,
    max_halvings: int = 25,
):
    """Solve ``residual(u) = 0`` on the free DoFs by undamped Newton.

    ``u0`` carries the fixed values of ``constrained_dofs``; those entries are
    never updated. If a full step increases the residual norm, the step is
    halved until it decreases (or ``max_halvings`` is hit, in which case the
    last trial step is taken).

    Returns ``(u, history)``; raises :class:`NewtonError` on non-convergence
    or on a singular Jacobian.
    """
    u = np.asarray(u0, dtype=float).copy()
    free = np.ones(u.shape[0], dtype=bool)
    if constrained_dofs is not None and len(constrained_dofs):
        free[np.asarray(constrained_dofs, dtype=int)] = False

    hist = NewtonHistory()
    r = residual_fn(u)[free]
    rnorm = float(np.linalg.norm(r))
    hist.residual_norms.append(rnorm)
    if rnorm <= abs_tol:
        hist.converged = True
        return u, hist

    for _ in range(max_iter):
        J = jacobian_fn(u)
        if sp.issparse(J):
            Jff = sp.csc_matrix(J)[free][:, free]
            try:
                du = spla.spsolve(Jff, -r)
            except RuntimeError as exc:
                raise NewtonError(f"linear solve failed: {exc}") from exc
        else:
            try:
                du = np.linalg.solve(np.asarray(J)[np.ix_(free, free)], -r)
            except np.linalg.LinAlgError as exc:
                raise NewtonError(f"linear solve failed: {exc}") from exc
        if not np.all(np.isfinite(du)):
            raise NewtonError("linear solve produced non-finite step (singular Jacobian)")

        step = 1.0
        for _ in range(max_halvings):
            trial = u.copy()
            trial[free] += step * du
            r_trial = residual_fn(trial)[free]
            rnorm_trial = float(np.linalg.norm(r_trial))
            if np.isfinite(rnorm_trial) and (rnorm_trial < rnorm or rnorm_trial <= abs_tol):
                break
            step *= 0.5
        u = trial
        r, rnorm = r_trial, rnorm_trial
        hist.residual_norms.append(rnorm)
        hist.step_norms.append(float(np.linalg.norm(step * du)))
        hist.n_iterations += 1
        if rnorm <= abs_tol:
            hist.converged = True
            return u, hist

    raise NewtonError(
        f"Newton did not converge in {max_iter} iterations "
        f"(last residual norm {rnorm:.3e}, tol {abs_tol:.3e})"
    )
