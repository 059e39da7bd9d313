import numpy as np
import pytest
import scipy.sparse as sp

from comrom.pod import PodError, pod


def identity_gram(n):
    return sp.identity(n, format="csr")


def test_single_snapshot_yields_its_normalization(rng):
    u = rng.normal(size=30)
    modes, sizes = pod([u], identity_gram(30), [0.5, 0.1])
    assert sizes == [1]
    np.testing.assert_allclose(np.abs(modes[:, 0]), np.abs(u) / np.linalg.norm(u),
                               atol=1e-12)


def test_two_orthogonal_equal_norm_snapshots():
    u1 = np.zeros(10)
    u1[0] = 2.0
    u2 = np.zeros(10)
    u2[1] = 2.0
    # tail after one mode is sqrt(1/2) > 0.1, so delta = 0.1 keeps both
    modes, sizes = pod([u1, u2], identity_gram(10), [0.1])
    assert sizes == [2]
    np.testing.assert_allclose(modes.T @ modes, np.eye(2), atol=1e-12)


def decaying_snapshots(rng, n_dofs=40, n_snap=20, rate=0.6):
    left = np.linalg.qr(rng.normal(size=(n_dofs, n_snap)))[0]
    right = np.linalg.qr(rng.normal(size=(n_snap, n_snap)))[0]
    return left @ np.diag(rate ** np.arange(n_snap)) @ right


def test_sizes_match_dense_svd_oracle(rng):
    U = decaying_snapshots(rng)
    tolerances = [0.3, 0.05, 0.01, 0.001]
    modes, sizes = pod(U, identity_gram(40), tolerances)

    sv = np.linalg.svd(U, compute_uv=False)
    energies = sv**2
    total = energies.sum()
    # tails[n-1] = discarded-energy ratio when keeping n modes
    tails = np.sqrt(np.maximum(total - np.cumsum(energies), 0.0) / total)
    oracle_sizes = []
    for delta in tolerances:
        n = 1
        while n <= len(energies) and tails[n - 1] > delta:
            n += 1
        if oracle_sizes:
            n = max(n, oracle_sizes[-1] + 1)
        oracle_sizes.append(n)
    assert sizes == oracle_sizes


def test_subspaces_match_dense_svd_oracle(rng):
    U = decaying_snapshots(rng)
    modes, sizes = pod(U, identity_gram(40), [0.3, 0.05, 0.01])
    u_svd, _, _ = np.linalg.svd(U, full_matrices=False)
    for n in sizes:
        # principal angles between the two n-dimensional subspaces; the
        # correlation-matrix path squares the condition number, so the match
        # degrades with the kept singular-value ratio
        s = np.linalg.svd(modes[:, :n].T @ u_svd[:, :n], compute_uv=False)
        assert np.arccos(np.clip(s, -1, 1)).max() < 1e-6


def test_nesting_is_exact_prefix(rng):
    U = rng.normal(size=(25, 12))
    modes_all, sizes = pod(U, identity_gram(25), [0.5, 0.1, 0.01])
    modes_coarse, sizes_coarse = pod(U, identity_gram(25), [0.5])
    assert sizes_coarse[0] == sizes[0]
    np.testing.assert_array_equal(modes_coarse, modes_all[:, : sizes_coarse[0]])


def test_orthonormal_in_weighted_inner_product(rng):
    n = 30
    A = rng.normal(size=(n, n))
    G = sp.csr_matrix(A @ A.T + n * np.eye(n))
    U = rng.normal(size=(n, 8))
    modes, sizes = pod(U, G, [0.2, 0.01])
    gram = modes.T @ (G @ modes)
    np.testing.assert_allclose(gram, np.eye(modes.shape[1]), atol=1e-9)


def test_all_zero_snapshots_rejected():
    with pytest.raises(PodError, match="all-zero"):
        pod(np.zeros((10, 3)), identity_gram(10), [0.1])


def test_bad_tolerance_ladders_rejected(rng):
    U = rng.normal(size=(10, 3))
    with pytest.raises(PodError):
        pod(U, identity_gram(10), [0.1, 0.1])
    with pytest.raises(PodError):
        pod(U, identity_gram(10), [0.1, 0.0])


def test_rank_truncation_drops_unreachable_levels(rng):
    u = rng.normal(size=12)
    U = np.column_stack([u, 2 * u, -u])  # rank one
    modes, sizes = pod(U, identity_gram(12), [0.5, 0.1, 0.01])
    assert sizes == [1]
    assert modes.shape == (12, 1)
