"""Quadrature rules on the reference triangle, reference segment, and meshes."""

from dataclasses import dataclass

import numpy as np


class QuadratureError(ValueError):
    pass


# Symmetric Gauss rules on the reference triangle {(x, y): x, y >= 0, x + y <= 1}.
# Weights are in barycentric normalization (sum to 1); only rules with strictly
# positive weights are admitted.
_A1 = 0.445948490915965
_A2 = 0.091576213509771
_W1 = 0.223381589678011
_W2 = 0.109951743655322

_TRI_RULES = {
    1: (np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([1.0])),
    2: (
        np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]]),
        np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
    ),
    4: (
        np.array(
            [
                [_A1, _A1],
                [1.0 - 2.0 * _A1, _A1],
                [_A1, 1.0 - 2.0 * _A1],
                [_A2, _A2],
                [1.0 - 2.0 * _A2, _A2],
                [_A2, 1.0 - 2.0 * _A2],
            ]
        ),
        np.array([_W1, _W1, _W1, _W2, _W2, _W2]),
    ),
    5: (
        np.array(
            [
                [1.0 / 3.0, 1.0 / 3.0],
                [0.470142064105115, 0.470142064105115],
                [0.059715871789770, 0.470142064105115],
                [0.470142064105115, 0.059715871789770],
                [0.101286507323456, 0.101286507323456],
                [0.797426985353087, 0.101286507323456],
                [0.101286507323456, 0.797426985353087],
            ]
        ),
        np.array(
            [
                0.225,
                0.132394152788506,
                0.132394152788506,
                0.132394152788506,
                0.125939180544827,
                0.125939180544827,
                0.125939180544827,
            ]
        ),
    ),
}


def triangle_rule(degree: int):
    """Return (points, weights) exact to ``degree`` on the reference triangle.

    Weights sum to the reference-triangle area 1/2 and are strictly positive.
    Degree-3 requests are served by the 6-point degree-4 rule, which is the
    smallest positive rule covering it.
    """
    if degree < 1:
        raise QuadratureError(f"quadrature degree must be >= 1, got {degree}")
    for deg in sorted(_TRI_RULES):
        if deg >= degree:
            pts, wts = _TRI_RULES[deg]
            return pts.copy(), 0.5 * wts
    raise QuadratureError(f"no triangle rule of degree >= {degree} available")


def gauss_segment(npts: int):
    """Gauss-Legendre rule on [0, 1] (points, weights)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class QuadRule:
    """Quadrature rule over every element of a 2D mesh, in reference coordinates.

    Attributes
    ----------
    points : (n_elem, nq, 2) reference-domain coordinates of the quadrature points.
    weights : (n_elem, nq) area-weighted quadrature weights; the weights of one
        element sum to that element's reference area.
    element : (n_elem * nq,) element index of each flattened point.
    degree : polynomial degree the rule integrates exactly per element.
    """

    points: np.ndarray
    weights: np.ndarray
    element: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return self.weights.size

    @property
    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, 2)

    @property
    def flat_weights(self) -> np.ndarray:
        return self.weights.reshape(-1)


def truth_quadrature(mesh, degree: int = 4) -> QuadRule:
    """Build the reference-domain quadrature rule over all elements of ``mesh``.

    Each element carries the mapped reference-triangle rule of the requested
    degree; weights absorb the element's (constant) corner-map determinant so
    that the weights of an element sum to its reference area.

    Raises
    ------
    QuadratureError
        If an element has nonpositive reference area.
    """
    ref_pts, ref_wts = triangle_rule(degree)
    corners = mesh.nodes[mesh.elements[:, :3]]  # (n_elem, 3, 2)
    e0 = corners[:, 1] - corners[:, 0]
    e1 = corners[:, 2] - corners[:, 0]
    det = e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0]
    if np.any(det <= 0.0):
        bad = int(np.argmax(det <= 0.0))
        raise QuadratureError(
            f"element {bad} has nonpositive reference area ({0.5 * det[bad]:g})"
        )
    # x = c0 + x_hat * (c1 - c0) + y_hat * (c2 - c0)
    pts = (
        corners[:, None, 0, :]
        + ref_pts[None, :, 0, None] * e0[:, None, :]
        + ref_pts[None, :, 1, None] * e1[:, None, :]
    )
    wts = ref_wts[None, :] * det[:, None]
    element = np.repeat(np.arange(mesh.n_elements), len(ref_wts))
    return QuadRule(points=pts, weights=wts, element=element, degree=degree)
