"""Archetype interface ports: 1D reference space, Neumann eigenbasis, mode data."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .fem import FeSpace1D
from .meshing import Mesh1D


def port_eigenbasis(port_mesh: Mesh1D):
    """All generalized eigenpairs of (stiffness, mass) on the port FE space.

    No essential boundary conditions are applied, so the first eigenvalue is
    zero with a constant eigenvector. Eigenvalues come back ascending and the
    eigenvectors are L2-normalized (mass-orthonormal) with a deterministic
    sign convention.
    """
    space = FeSpace1D(port_mesh)
    K = space.stiffness.toarray()
    M = space.mass.toarray()
    try:
        lam, vec = la.eigh(K, M)
    except la.LinAlgError as exc:
        raise RuntimeError(f"port eigenproblem failed: {exc}") from exc
    lam = np.where(np.abs(lam) < 1e-12, 0.0, lam)
    for j in range(vec.shape[1]):
        pivot = np.argmax(np.abs(vec[:, j]))
        if vec[pivot, j] < 0:
            vec[:, j] = -vec[:, j]
    return lam, vec


@dataclass
class ArchetypePort:
    """Reference port: 1D mesh, eigenbasis, and trained hierarchical modes.

    ``pod_modes`` (H1-orthonormal columns) and the strictly increasing
    ``fidelity_sizes`` are populated by offline training; the finest fidelity
    uses all columns.
    """

    id: str
    mesh: Mesh1D
    space: FeSpace1D = None
    eigenvalues: np.ndarray = None
    eigenbasis: np.ndarray = None
    pod_modes: np.ndarray = field(default=None, repr=False)
    fidelity_sizes: list = field(default_factory=list)

    def __post_init__(self):
        if self.space is None:
            self.space = FeSpace1D(self.mesh)
        if self.eigenbasis is None:
            self.eigenvalues, self.eigenbasis = port_eigenbasis(self.mesh)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_fidelities(self) -> int:
        return len(self.fidelity_sizes)

    def modes(self, fidelity: int) -> np.ndarray:
        """Port modes of the given fidelity level (1-based), a prefix slice."""
        if not 1 <= fidelity <= self.n_fidelities:
            raise IndexError(
                f"port fidelity {fidelity} outside 1..{self.n_fidelities} for {self.id!r}"
            )
        return self.pod_modes[:, : self.fidelity_sizes[fidelity - 1]]

    def set_modes(self, modes: np.ndarray, sizes) -> None:
        sizes = list(sizes)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("port fidelity sizes must be strictly increasing")
        if sizes and sizes[-1] > modes.shape[1]:
            raise ValueError("fidelity sizes exceed available port modes")
        self.pod_modes = np.asarray(modes, dtype=float)
        self.fidelity_sizes = sizes


def reverse_port_values(values: np.ndarray) -> np.ndarray:
    """Pull nodal port data through an orientation flip (exact permutation)."""
    return values[::-1].copy() if values.ndim == 1 else values[::-1, :].copy()
