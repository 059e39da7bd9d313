"""Temperature-dependent conductivity models exposed to the assembly kernel.

A material provides ``evaluate(v) -> (k, dk/dv)`` plus a validity ``domain``;
arguments outside the domain are clamped for evaluation and reported by the
solver if they persist in a converged solution.
"""

import numpy as np

# Log-log polynomial fit (base-10) for the thermal conductivity of aluminum
# alloy 3003-F over 1-300 K, W/K. Full-precision fit coefficients; published
# 3-decimal roundings of these reproduce neither endpoint of the fit's range.
ALUMINUM_3003_COEFFS = (
    0.63736,
    -1.1437,
    7.4624,
    -12.6905,
    11.9165,
    -6.18721,
    1.63939,
    -0.172667,
)

_LN10 = np.log(10.0)


class ConductivityModel:
    """Base interface: subclasses implement ``evaluate`` on in-domain values."""

    domain = (-np.inf, np.inf)

    def evaluate(self, v):
        raise NotImplementedError

    def clamped(self, v):
        """Evaluate with arguments clamped to the domain; also return a violation mask."""
        v = np.asarray(v, dtype=float)
        lo, hi = self.domain
        mask = (v < lo) | (v > hi)
        k, dk = self.evaluate(np.clip(v, lo, hi))
        return k, dk, mask


class AluminumConductivity(ConductivityModel):
    """Aluminum 3003-F conductivity, log10(k) = sum_i c_i log10(v)^i on [1, 300] K."""

    domain = (1.0, 300.0)

    def __init__(self, coeffs=ALUMINUM_3003_COEFFS):
        self.coeffs = np.asarray(coeffs, dtype=float)

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        L = np.log10(v)
        logk = np.polynomial.polynomial.polyval(L, self.coeffs)
        k = 10.0**logk
        dpoly = np.polynomial.polynomial.polyval(L, np.polynomial.polynomial.polyder(self.coeffs))
        # d/dv 10^{p(log10 v)} = k * p'(log10 v) / v  (the ln10 factors cancel)
        dk = k * dpoly / v
        return k, dk


class ConstantConductivity(ConductivityModel):
    """Constant-k stub used to reduce the nonlinear form to linear diffusion."""

    def __init__(self, k: float = 1.0):
        self.k = float(k)

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        return np.full_like(v, self.k), np.zeros_like(v)
