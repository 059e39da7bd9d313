"""Reduced-quadrature training: sparse nonnegative rules via linear programming.

For a component and fidelity multi-index, the rule must reproduce, over the
training snapshots projected onto that reduced space, every residual entry
computed with the truth rule to a prescribed tolerance, plus the reference
volume. The weights minimize an l1 objective (their sum), which drives most
of them to zero; weights below 1e-12 are pruned.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .fem import h1_project, residual_samples

_PRUNE = 1e-12
_VOL_RTOL = 1e-6


class EqpError(RuntimeError):
    pass


@dataclass
class RqRule:
    """Sparse reduced-quadrature rule: a reweighted subset of the truth points."""

    fidelity: tuple
    indices: np.ndarray
    weights: np.ndarray
    tolerance: float

    @property
    def n_points(self) -> int:
        return len(self.indices)

    def full_weights(self, n_truth: int) -> np.ndarray:
        w = np.zeros(n_truth)
        w[self.indices] = self.weights
        return w


def _test_basis(component, fi, library, include_flipped: bool = True):
    """Columns: f-space basis (bubble then lifted ports), optionally plus the
    flipped-orientation lifted functions so trained rules stay valid when an
    interface reverses a port."""
    basis, _ = component.rb_space(fi, library)
    n_space = basis.shape[1]
    if include_flipped and component.n_ports:
        flipped = [
            component.lifted_basis(p, fi.ports[p], True, library)
            for p in range(component.n_ports)
        ]
        basis = np.hstack([basis] + flipped)
    return basis, n_space


def snapshot_rq_matrices(component, fi, library, snapshots, material, projected=None):
    """Per-snapshot residual sample matrices and truth-rule targets.

    Returns a list of ``(S, b)`` with ``S`` of shape (n_test, Q) and
    ``b = S @ truth_weights``; the snapshots are H1-projected onto the
    ``fi``-space before sampling.
    """
    space = component.space
    fi = component.coerce_fidelity(fi)
    w_truth = space.quad.flat_weights
    basis, _ = component.rb_space(fi, library)
    test, _ = _test_basis(component, fi, library)
    out = []
    for snap in snapshots:
        if projected is None:
            coef = h1_project(space, snap.values, basis)
            z = basis @ coef
        else:
            z = projected[id(snap)]
        geo = component.geometric_map(snap.mu)
        S = residual_samples(space, z, test, material, snap.source, geo)
        out.append((S, S @ w_truth))
    return out


def train_eqp(
    component,
    f,
    snapshots,
    library,
    material,
    eps_tilde: float,
    max_rounds: int = 30,
    initial_batch: int = 12,
) -> RqRule:
    """Train the reduced-quadrature rule for one fidelity multi-index.

    The LP works with a growing active subset of snapshot constraints; after
    each solve the candidate rule is checked against every snapshot and the
    violators join the active set, so the returned rule satisfies the
    tolerance on the full training set. Large instances switch from simplex
    to interior-point (with crossover, so solutions stay vertex-sparse).

    Raises
    ------
    EqpError
        If ``eps_tilde`` is not positive, the LP solver reports failure, or
        constraint generation stalls (with the binding constraint reported).
    """
    if not np.isfinite(eps_tilde):
        return _volume_only_rule(component, f, eps_tilde)
    if eps_tilde <= 0:
        raise EqpError(f"hyperreduction tolerance must be positive, got {eps_tilde}")
    if not snapshots:
        raise EqpError("cannot train a reduced rule without snapshots")

    fi = component.coerce_fidelity(f)
    space = component.space
    w_truth = space.quad.flat_weights
    Q = space.quad.n_points
    _, n_space = _test_basis(component, fi, library)
    row_tol = eps_tilde / n_space
    # the LP is posed a hair inside the budget so solver roundoff cannot push
    # the verified violations past the declared tolerance
    row_tol_lp = row_tol * (1.0 - 1e-6)
    volume = float(w_truth.sum())
    vol_tol = _VOL_RTOL * volume
    vol_tol_lp = vol_tol * (1.0 - 1e-6)

    mats = snapshot_rq_matrices(component, fi, library, snapshots, material)
    n_snap = len(mats)
    stride = max(1, n_snap // max(initial_batch, 1))
    active = list(range(0, n_snap, stride))[:initial_batch]

    rule = None
    worst_info = None
    for _ in range(max_rounds):
        # rows are scaled to O(1) feasibility targets so tight absolute
        # tolerances survive the LP solver's relative feasibility control
        rows = [np.ones((1, Q)) / volume]
        rhs_hi = [np.array([(volume + vol_tol_lp) / volume])]
        rhs_lo = [np.array([(volume - vol_tol_lp) / volume])]
        for n in active:
            S, b = mats[n]
            d = np.maximum(np.abs(b), row_tol)
            rows.append(S / d[:, None])
            rhs_hi.append((b + row_tol_lp) / d)
            rhs_lo.append((b - row_tol_lp) / d)
        A = np.vstack(rows)
        hi = np.concatenate(rhs_hi)
        lo = np.concatenate(rhs_lo)
        method = "highs-ipm" if A.shape[0] * A.shape[1] > 2_000_000 else "highs"
        res = linprog(
            np.ones(Q),
            A_ub=np.vstack([A, -A]),
            b_ub=np.concatenate([hi, -lo]),
            bounds=(0, None),
            method=method,
            options={"primal_feasibility_tolerance": 1e-10},
        )
        if res.status != 0:
            raise EqpError(
                f"reduced-quadrature LP failed for {component.id!r} at {fi.as_tuple()} "
                f"(tolerance {eps_tilde:.3e}, per-row {row_tol:.3e}): {res.message}"
            )
        rho = np.asarray(res.x).copy()
        rho[rho < _PRUNE] = 0.0
        keep = np.nonzero(rho)[0]
        rule = RqRule(
            fidelity=fi.as_tuple(),
            indices=keep.astype(np.int64),
            weights=rho[keep],
            tolerance=eps_tilde,
        )

        worst_val = 0.0
        worst_info = None
        additions = []
        for n in range(n_snap):
            S, b = mats[n]
            err = np.abs(S @ rho - b).max()
            if err > row_tol + 1e-12:
                additions.append((err, n))
            if err > worst_val:
                worst_val = err
                worst_info = (n, err)
        if not additions:
            return rule
        # most snapshots tend to bind at these tolerances: absorb violators
        # in large batches so the active set converges in few rounds
        additions.sort(reverse=True)
        for _, n in additions[:40]:
            if n not in active:
                active.append(n)

    n, err = worst_info
    raise EqpError(
        f"constraint generation stalled for {component.id!r} at {fi.as_tuple()}: "
        f"snapshot {n} violates the per-row tolerance {row_tol:.3e} by "
        f"{err - row_tol:.3e} after {max_rounds} rounds"
    )


def _volume_only_rule(component, f, eps_tilde) -> RqRule:
    """Degenerate rule when the tolerance is infinite: match the volume only."""
    fi = component.coerce_fidelity(f)
    w = component.space.quad.flat_weights
    volume = float(w.sum())
    vol_tol = _VOL_RTOL * volume
    Q = len(w)
    res = linprog(
        np.ones(Q),
        A_ub=np.vstack([np.ones((1, Q)), -np.ones((1, Q))]),
        b_ub=np.array([volume + vol_tol, -(volume - vol_tol)]),
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise EqpError(f"volume-only LP failed: {res.message}")
    rho = np.asarray(res.x)
    rho[rho < _PRUNE] = 0.0
    keep = np.nonzero(rho)[0]
    return RqRule(
        fidelity=fi.as_tuple(),
        indices=keep.astype(np.int64),
        weights=rho[keep],
        tolerance=eps_tilde,
    )


def verify_rule(component, rule: RqRule, f, snapshots, library, material) -> dict:
    """Re-verify a rule's constraint violations with freshly assembled samples.

    Returns the maximum violation over all snapshots and test functions, the
    per-row tolerance, and the volume error.
    """
    fi = component.coerce_fidelity(f)
    _, n_space = _test_basis(component, fi, library)
    w_truth = component.space.quad.flat_weights
    rho = rule.full_weights(len(w_truth))
    worst = 0.0
    for S, b in snapshot_rq_matrices(component, fi, library, snapshots, material):
        worst = max(worst, float(np.abs(S @ rho - b).max()))
    return {
        "max_violation": worst,
        "row_tolerance": rule.tolerance / n_space,
        "tolerance": rule.tolerance,
        "volume_error": abs(float(rho.sum() - w_truth.sum())),
        "n_points": rule.n_points,
    }
