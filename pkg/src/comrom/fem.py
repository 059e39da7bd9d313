"""Finite-element kernel: P2 spaces, nonlinear diffusion assembly, norms.

All integration happens in reference coordinates: a geometric map enters only
through its per-element Jacobian ``J``, inverse, and determinant, so the same
space serves every parameterized instantiation of its mesh.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .meshing import Mesh1D, Mesh2D
from .quadrature import QuadRule, gauss_segment, truth_quadrature


class SpaceMismatchError(ValueError):
    pass


class DomainViolationError(RuntimeError):
    """A field value left the material's validity domain."""

    def __init__(self, message, point=None, value=None):
        super().__init__(message)
        self.point = point
        self.value = value


# ---------------------------------------------------------------------------
# Reference shape functions
# ---------------------------------------------------------------------------


def tri6_shape(points: np.ndarray):
    """Values and (xi, eta)-gradients of the 6-node Lagrange triangle basis.

    Node order: corners (0,0), (1,0), (0,1), then midsides 01, 12, 20.
    Returns ``N`` of shape (nq, 6) and ``dN`` of shape (nq, 6, 2).
    """
    xi = points[:, 0]
    eta = points[:, 1]
    l0 = 1.0 - xi - eta
    l1 = xi
    l2 = eta
    N = np.stack(
        [
            l0 * (2 * l0 - 1),
            l1 * (2 * l1 - 1),
            l2 * (2 * l2 - 1),
            4 * l0 * l1,
            4 * l1 * l2,
            4 * l2 * l0,
        ],
        axis=1,
    )
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    dN = np.empty((len(points), 6, 2))
    for d in range(2):
        dN[:, 0, d] = (4 * l0 - 1) * dl[0, d]
        dN[:, 1, d] = (4 * l1 - 1) * dl[1, d]
        dN[:, 2, d] = (4 * l2 - 1) * dl[2, d]
        dN[:, 3, d] = 4 * (l0 * dl[1, d] + l1 * dl[0, d])
        dN[:, 4, d] = 4 * (l1 * dl[2, d] + l2 * dl[1, d])
        dN[:, 5, d] = 4 * (l2 * dl[0, d] + l0 * dl[2, d])
    return N, dN


def seg3_shape(points: np.ndarray):
    """Values and derivatives of the quadratic segment basis on [0, 1].

    Node order: endpoints 0, 1, then midpoint.
    """
    x = np.asarray(points)
    N = np.stack([(1 - x) * (1 - 2 * x), x * (2 * x - 1), 4 * x * (1 - x)], axis=1)
    dN = np.stack([4 * x - 3, 4 * x - 1, 4 - 8 * x], axis=1)
    return N, dN


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass
class FeFunction:
    """Coefficient vector over the nodal degrees of freedom of a space."""

    space: "FeSpace2D"
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.n_dofs,):
            raise SpaceMismatchError(
                f"coefficient length {self.values.shape} does not match "
                f"space with {self.space.n_dofs} DoFs"
            )

    def copy(self) -> "FeFunction":
        return FeFunction(self.space, self.values.copy())


@dataclass
class GeometricMapEval:
    """Per-element Jacobian data of a piecewise-affine geometric map."""

    jac: np.ndarray  # (n_elem, 2, 2)
    det: np.ndarray  # (n_elem,)
    inv: np.ndarray  # (n_elem, 2, 2)
    nodes: np.ndarray | None = None  # mapped node coordinates, when available

    @classmethod
    def from_jacobians(cls, jac: np.ndarray, nodes=None) -> "GeometricMapEval":
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(det <= 0.0):
            bad = int(np.argmax(det <= 0.0))
            raise ValueError(f"geometric map has nonpositive determinant on element {bad}")
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1] / det
        inv[:, 0, 1] = -jac[:, 0, 1] / det
        inv[:, 1, 0] = -jac[:, 1, 0] / det
        inv[:, 1, 1] = jac[:, 0, 0] / det
        return cls(jac=jac, det=det, inv=inv, nodes=nodes)


def identity_geometry(space: "FeSpace2D") -> GeometricMapEval:
    eye = np.broadcast_to(np.eye(2), (space.mesh.n_elements, 2, 2)).copy()
    return GeometricMapEval.from_jacobians(eye, nodes=space.mesh.nodes.copy())


# ---------------------------------------------------------------------------
# 2D space
# ---------------------------------------------------------------------------


class FeSpace2D:
    """P2 scalar space on a triangle mesh with precomputed quadrature tables."""

    def __init__(self, mesh: Mesh2D, quad_degree: int = 4):
        mesh.validate()
        self.mesh = mesh
        self.quad: QuadRule = truth_quadrature(mesh, quad_degree)
        self.n_dofs = mesh.n_nodes
        self.elements = mesh.elements

        nq = self.quad.weights.shape[1]
        ref_pts = _local_rule_points(quad_degree)
        self.shape_values, dN = tri6_shape(ref_pts)  # (nq, 6), (nq, 6, 2)

        corners = mesh.nodes[mesh.elements[:, :3]]
        A = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
        detA = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        Ainv = np.empty_like(A)
        Ainv[:, 0, 0] = A[:, 1, 1] / detA
        Ainv[:, 0, 1] = -A[:, 0, 1] / detA
        Ainv[:, 1, 0] = -A[:, 1, 0] / detA
        Ainv[:, 1, 1] = A[:, 0, 0] / detA
        # gradient in mesh coordinates: dN_mesh = Ainv^T dN_local
        self.shape_grads = np.einsum("ekd,qik->eqid", Ainv, dN)
        self.nq = nq

        self._h1_gram_identity = None
        self._h1_factor = None

    # -- element-level evaluation ------------------------------------------

    def local_values(self, u: np.ndarray) -> np.ndarray:
        """Function values at all quadrature points, shape (n_elem, nq)."""
        return np.einsum("qi,ei->eq", self.shape_values, u[self.elements])

    def local_gradients(self, u: np.ndarray) -> np.ndarray:
        """Mesh-coordinate gradients at all quadrature points, (n_elem, nq, 2)."""
        return np.einsum("eqid,ei->eqd", self.shape_grads, u[self.elements])

    def values_at(self, u: np.ndarray, flat_index: np.ndarray) -> np.ndarray:
        """Values of a nodal function at a subset of flattened truth points."""
        e = flat_index // self.nq
        q = flat_index % self.nq
        return np.einsum("pi,pi->p", self.shape_values[q], u[self.elements[e]])

    def gradients_at(self, u: np.ndarray, flat_index: np.ndarray) -> np.ndarray:
        e = flat_index // self.nq
        q = flat_index % self.nq
        return np.einsum("pid,pi->pd", self.shape_grads[e, q], u[self.elements[e]])

    # -- Gram matrices -------------------------------------------------------

    def h1_gram(self, geo: GeometricMapEval | None = None) -> sp.csr_matrix:
        """Sparse H1 Gram matrix, mass plus stiffness, on the mapped geometry."""
        if geo is None:
            if self._h1_gram_identity is None:
                self._h1_gram_identity = self._assemble_gram(identity_geometry(self))
            return self._h1_gram_identity
        return self._assemble_gram(geo)

    def _assemble_gram(self, geo: GeometricMapEval) -> sp.csr_matrix:
        wdet = self.quad.weights * geo.det[:, None]
        G = np.einsum("ekd,eqik->eqid", geo.inv, self.shape_grads)
        mass = np.einsum("eq,qi,qj->eij", wdet, self.shape_values, self.shape_values)
        stiff = np.einsum("eq,eqid,eqjd->eij", wdet, G, G)
        return _scatter_matrix(self, mass + stiff)

    def stiffness(self, geo: GeometricMapEval | None = None) -> sp.csr_matrix:
        """Laplace stiffness matrix (unit conductivity)."""
        if geo is None:
            geo = identity_geometry(self)
        wdet = self.quad.weights * geo.det[:, None]
        G = np.einsum("ekd,eqik->eqid", geo.inv, self.shape_grads)
        stiff = np.einsum("eq,eqid,eqjd->eij", wdet, G, G)
        return _scatter_matrix(self, stiff)

    def h1_solver(self):
        """Cached factorization of the identity-geometry H1 Gram."""
        if self._h1_factor is None:
            self._h1_factor = spla.factorized(sp.csc_matrix(self.h1_gram()))
        return self._h1_factor


def _local_rule_points(degree: int) -> np.ndarray:
    from .quadrature import triangle_rule

    pts, _ = triangle_rule(degree)
    return pts


def _scatter_matrix(space: FeSpace2D, local: np.ndarray) -> sp.csr_matrix:
    e = space.elements
    rows = np.repeat(e, 6, axis=1).ravel()
    cols = np.tile(e, (1, 6)).ravel()
    mat = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs)
    )
    return mat.tocsr()


# ---------------------------------------------------------------------------
# Nonlinear diffusion forms
# ---------------------------------------------------------------------------


def _as_values(u) -> np.ndarray:
    return u.values if isinstance(u, FeFunction) else np.asarray(u, dtype=float)


def _material_at_points(space, u_q, material, geo, out_of_range):
    k, dk, mask = material.clamped(u_q)
    if out_of_range == "error" and np.any(mask):
        e, q = np.unravel_index(int(np.argmax(mask)), mask.shape)
        pt = space.quad.points[e, q]
        raise DomainViolationError(
            f"field value {u_q[e, q]:.6g} at reference point ({pt[0]:.6g}, {pt[1]:.6g}) "
            f"lies outside the material domain {material.domain}",
            point=pt,
            value=float(u_q[e, q]),
        )
    return k, dk


def assemble_residual(
    space: FeSpace2D,
    u,
    material,
    source: float = 0.0,
    geo: GeometricMapEval | None = None,
    out_of_range: str = "error",
) -> np.ndarray:
    """Residual vector of the nonlinear diffusion form.

    Entry ``i`` is the quadrature sum of
    ``k(u) (J^-T grad u) . (J^-T grad phi_i) det J - source phi_i det J``
    over the reference domain.
    """
    u = _as_values(u)
    if geo is None:
        geo = identity_geometry(space)
    u_q = space.local_values(u)
    k, _ = _material_at_points(space, u_q, material, geo, out_of_range)
    g_ref = space.local_gradients(u)
    g = np.einsum("ekd,eqk->eqd", geo.inv, g_ref)
    G = np.einsum("ekd,eqik->eqid", geo.inv, space.shape_grads)
    wdet = space.quad.weights * geo.det[:, None]
    r_local = np.einsum("eq,eqd,eqid->ei", wdet * k, g, G)
    r_local -= source * np.einsum("eq,qi->ei", wdet, space.shape_values)
    res = np.zeros(space.n_dofs)
    np.add.at(res, space.elements, r_local)
    return res


def assemble_jacobian(
    space: FeSpace2D,
    u,
    material,
    geo: GeometricMapEval | None = None,
    out_of_range: str = "error",
) -> sp.csr_matrix:
    """Gateaux derivative of :func:`assemble_residual` at ``u`` (sparse)."""
    u = _as_values(u)
    if geo is None:
        geo = identity_geometry(space)
    u_q = space.local_values(u)
    k, dk = _material_at_points(space, u_q, material, geo, out_of_range)
    g = np.einsum("ekd,eqk->eqd", geo.inv, space.local_gradients(u))
    G = np.einsum("ekd,eqik->eqid", geo.inv, space.shape_grads)
    wdet = space.quad.weights * geo.det[:, None]
    # d/du_j of k(u) grad u . grad phi_i = dk N_j (grad u . grad phi_i) + k grad phi_j . grad phi_i
    term1 = np.einsum("eq,eqd,eqid,qj->eij", wdet * dk, g, G, space.shape_values)
    term2 = np.einsum("eq,eqid,eqjd->eij", wdet * k, G, G)
    return _scatter_matrix(space, term1 + term2)


def residual_samples(
    space: FeSpace2D,
    u,
    test_basis: np.ndarray,
    material,
    source: float,
    geo: GeometricMapEval | None = None,
) -> np.ndarray:
    """Unweighted residual integrand samples against a set of test functions.

    Returns ``S`` of shape (n_test, n_points) with
    ``S[j, q] = r(u, phi_j; x_q)`` such that the weighted sum over the truth
    quadrature weights reproduces the residual entries. Used to pose the
    reduced-quadrature matching constraints.
    """
    u = _as_values(u)
    if geo is None:
        geo = identity_geometry(space)
    u_q = space.local_values(u)
    k, _ = _material_at_points(space, u_q, material, geo, "clamp")
    g = np.einsum("ekd,eqk->eqd", geo.inv, space.local_gradients(u))
    G = np.einsum("ekd,eqik->eqid", geo.inv, space.shape_grads)
    B_loc = test_basis[space.elements]  # (E, 6, m)
    # flux . test-gradient and source terms, per element and point
    Gt = np.einsum("eqid,eim->eqmd", G, B_loc)
    vals = np.einsum("qi,eim->eqm", space.shape_values, B_loc)
    samples = np.einsum("eq,eqd,eqmd->eqm", k * geo.det[:, None], g, Gt)
    samples -= source * geo.det[:, None, None] * vals
    return samples.reshape(-1, test_basis.shape[1]).T


# ---------------------------------------------------------------------------
# Inner products, projection, dual norm
# ---------------------------------------------------------------------------


def h1_inner(space: FeSpace2D, v, w, geo: GeometricMapEval | None = None) -> float:
    if isinstance(v, FeFunction) and isinstance(w, FeFunction) and v.space is not w.space:
        raise SpaceMismatchError("H1 inner product requires functions on the same space")
    G = space.h1_gram(geo)
    return float(_as_values(v) @ (G @ _as_values(w)))


def h1_norm(space: FeSpace2D, v, geo: GeometricMapEval | None = None) -> float:
    return float(np.sqrt(max(h1_inner(space, v, v, geo), 0.0)))


def h1_project(space: FeSpace2D, v, basis: np.ndarray, geo=None) -> np.ndarray:
    """Coefficients of the H1-orthogonal projection of ``v`` onto ``span(basis)``.

    ``basis`` holds one function per column. The residual ``v - P v`` is
    H1-orthogonal to every column.
    """
    v = _as_values(v)
    basis = np.asarray(basis, dtype=float)
    if basis.size == 0:
        return np.zeros(0)
    G = space.h1_gram(geo)
    GB = G @ basis
    gram = basis.T @ GB
    rhs = GB.T @ v
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"rank-deficient projection Gram matrix: {exc}") from exc


def dual_norm(space: FeSpace2D, functional: np.ndarray, constrained_dofs=None) -> float:
    """Riesz dual norm of a functional over the free DoFs of the space.

    Solves ``(z, v)_H1 = functional(v)`` for all free ``v`` and returns the
    H1 norm of ``z``. Constrained DoFs are excluded from the supremum.
    """
    f = np.asarray(functional, dtype=float)
    if constrained_dofs is None or len(constrained_dofs) == 0:
        z = space.h1_solver()(f)
        return float(np.sqrt(max(f @ z, 0.0)))
    mask = np.ones(space.n_dofs, dtype=bool)
    mask[np.asarray(constrained_dofs, dtype=int)] = False
    if not mask.any():
        raise ValueError("dual norm undefined: no free DoFs remain")
    G = space.h1_gram()[mask][:, mask].tocsc()
    z = spla.spsolve(G, f[mask])
    return float(np.sqrt(max(f[mask] @ z, 0.0)))


# ---------------------------------------------------------------------------
# 1D space (ports)
# ---------------------------------------------------------------------------


class FeSpace1D:
    """P2 scalar space on a segment mesh, with mass/stiffness matrices."""

    def __init__(self, mesh: Mesh1D, n_gauss: int = 3):
        mesh.validate()
        self.mesh = mesh
        self.n_dofs = mesh.n_nodes
        pts, wts = gauss_segment(n_gauss)
        N, dN = seg3_shape(pts)
        h = mesh.nodes[mesh.elements[:, 1]] - mesh.nodes[mesh.elements[:, 0]]
        mass = np.einsum("q,qi,qj->ij", wts, N, N)[None, :, :] * h[:, None, None]
        stiff = np.einsum("q,qi,qj->ij", wts, dN, dN)[None, :, :] / h[:, None, None]

        e = mesh.elements
        rows = np.repeat(e, 3, axis=1).ravel()
        cols = np.tile(e, (1, 3)).ravel()
        shape = (self.n_dofs, self.n_dofs)
        self.mass = sp.coo_matrix((mass.ravel(), (rows, cols)), shape=shape).tocsr()
        self.stiffness = sp.coo_matrix((stiff.ravel(), (rows, cols)), shape=shape).tocsr()

    def h1_gram(self) -> sp.csr_matrix:
        return self.mass + self.stiffness

    def l2_norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(v @ (self.mass @ v), 0.0)))

    def h1_norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(v @ (self.h1_gram() @ v), 0.0)))
