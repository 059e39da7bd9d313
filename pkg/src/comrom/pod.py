"""Proper orthogonal decomposition with nested tolerance-driven truncation."""

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp


class PodError(ValueError):
    pass


def pod(snapshots, inner_product, tolerances):
    """Nested POD bases of a snapshot set in a given inner product.

    One eigendecomposition of the snapshot correlation matrix serves every
    tolerance: the size for tolerance ``delta`` is the smallest ``n`` whose
    discarded-energy ratio ``sqrt(sum_{i>n} lambda_i / sum_i lambda_i)`` drops
    to ``delta`` or below, so coarser bases are exact prefixes of finer ones.

    Parameters
    ----------
    snapshots : (n_dofs, n_snap) array or list of vectors.
    inner_product : sparse/dense Gram matrix of the norm used for truncation
        and orthonormalization.
    tolerances : strictly decreasing sequence of truncation tolerances.

    Returns
    -------
    modes : (n_dofs, sizes[-1]) array with inner-product-orthonormal columns.
    sizes : strictly increasing basis sizes, one per tolerance; tolerances
        whose (tie-bumped) size would exceed the snapshot rank are dropped,
        so small snapshot sets yield a shorter hierarchy.
    """
    U = np.column_stack(snapshots) if isinstance(snapshots, (list, tuple)) else np.asarray(snapshots)
    if U.ndim != 2 or U.shape[1] == 0:
        raise PodError("POD needs at least one snapshot")
    tolerances = list(tolerances)
    if any(b >= a for a, b in zip(tolerances, tolerances[1:])):
        raise PodError("POD tolerances must be strictly decreasing")
    if any(t <= 0.0 for t in tolerances):
        raise PodError("POD tolerances must be positive")

    G = inner_product
    GU = G @ U if sp.issparse(G) else np.asarray(G) @ U
    corr = U.T @ GU
    corr = 0.5 * (corr + corr.T)
    lam, vec = la.eigh(corr)
    lam = lam[::-1].copy()
    vec = vec[:, ::-1].copy()
    lam[lam < 0.0] = 0.0
    total = float(lam.sum())
    if total <= 0.0:
        raise PodError("POD of an all-zero snapshot set")

    rank = int(np.sum(lam > 1e-14 * lam[0]))
    tail = np.sqrt(np.concatenate([[total], total - np.cumsum(lam)]).clip(min=0.0) / total)
    sizes = []
    for delta in tolerances:
        n = max(int(np.argmax(tail <= delta)), 1)
        if sizes:
            n = max(n, sizes[-1] + 1)
        if n > rank:
            break  # snapshot rank exhausted: ladder truncates to fewer levels
        sizes.append(n)

    n_max = sizes[-1]
    modes = U @ (vec[:, :n_max] / np.sqrt(lam[:n_max]))
    for j in range(n_max):
        pivot = np.argmax(np.abs(modes[:, j]))
        if modes[pivot, j] < 0:
            modes[:, j] = -modes[:, j]
    return modes, sizes
