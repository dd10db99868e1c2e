"""Conformal coordinates for the unit ball and the boundary bridge charts.

The ball is covered by the cylinder chart (z, x3) with z in the closed unit
disk, in which the Euclidean metric pulls back to A^2 (dz^2 + B^2 dx3^2).
Near each n-th root of unity a Moebius chart maps the closed left half-plane
into the disk; its pullback metric is a^2 (dzeta^2 + b^2 dxi3^2).

All functions are pure and broadcast over numpy arrays.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OutOfChartError",
    "ConformalCoords",
    "BridgeChart",
    "eval_B",
    "eval_A",
    "chart_calX",
    "chart_psi_phi",
    "lambda_m",
    "lambda_m_inverse",
    "Lambda_m",
    "pullback_factors",
    "cap_mean_curvature",
]


class OutOfChartError(ValueError):
    """Raised when a point lies outside the domain of the requested chart."""


@dataclass(frozen=True)
class ConformalCoords:
    """A point of the cylinder chart: horizontal complex z, vertical x3."""

    z: complex
    x3: float

    def __post_init__(self):
        if not (np.isfinite(self.z) and np.isfinite(self.x3)):
            raise ValueError("non-finite conformal coordinates")


@dataclass(frozen=True)
class BridgeChart:
    """Index data of the half-plane chart at the m-th root of unity."""

    m: int
    n: int

    def __post_init__(self):
        if self.n < 3 or not (1 <= self.m <= self.n):
            raise ValueError(f"bridge index m={self.m} out of range for n={self.n}")

    @property
    def root(self) -> complex:
        return np.exp(2j * np.pi * self.m / self.n)


def eval_B(z):
    """Horizontal conformal factor B(z) = (1 + |z|^2) / 2."""
    z = np.asarray(z, dtype=np.complex128)
    out = 0.5 * (1.0 + np.abs(z) ** 2)
    return out if out.ndim else float(out)


def eval_A(z, x3):
    """Vertical conformal factor A(z, x3) = 1 / (1 + B(z) (cosh x3 - 1))."""
    z = np.asarray(z, dtype=np.complex128)
    x3 = np.asarray(x3, dtype=np.float64)
    out = 1.0 / (1.0 + eval_B(z) * (np.cosh(x3) - 1.0))
    return out if out.ndim else float(out)


def _calX(z, x3):
    z = np.asarray(z, dtype=np.complex128)
    x3 = np.asarray(x3, dtype=np.float64)
    a = eval_A(z, x3)
    w = a * z
    v = a * eval_B(z) * np.sinh(x3)
    return np.stack(np.broadcast_arrays(w.real, w.imag, v), axis=-1)


def chart_calX(z, x3, check=True):
    """Map cylinder coordinates into the closed unit ball.

    calX(z, x3) = A(z, x3) (z, B(z) sinh x3).  Points with |z| = 1 land on
    the unit sphere for every x3.  With ``check`` (default) inputs with
    |z| > 1 raise :class:`OutOfChartError`; pass ``check=False`` for the
    analytic continuation used by stencils that cross the boundary wall.
    """
    if check and np.any(np.abs(np.asarray(z, dtype=np.complex128)) > 1.0 + 1e-12):
        raise OutOfChartError("chart_calX requires |z| <= 1")
    return _calX(z, x3)


def chart_psi_phi(psi, phi, x3):
    """The (psi, phi, x3) parametrization of the ball; conversion helper.

    X(psi, phi, x3) = (sin(psi) e^{i phi}, sinh x3) / (cosh x3 + cos psi);
    equals chart_calX at z = sin(psi)/(1 + cos(psi)) e^{i phi}.
    """
    psi = np.asarray(psi, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    x3 = np.asarray(x3, dtype=np.float64)
    den = np.cosh(x3) + np.cos(psi)
    w = np.sin(psi) * np.exp(1j * phi) / den
    return np.stack(np.broadcast_arrays(w.real, w.imag, np.sinh(x3) / den), axis=-1)


def lambda_m(zeta, m, n, check=True):
    """Moebius chart lambda_m(zeta) = e^{2 pi i m / n} (1 + zeta)/(1 - zeta).

    Maps the closed left half-plane into the closed unit disk; the imaginary
    axis goes to the unit circle and zeta = 0 to the m-th root of unity.
    """
    zeta = np.asarray(zeta, dtype=np.complex128)
    if check and np.any(zeta.real > 1e-12):
        raise OutOfChartError("lambda_m requires Re(zeta) <= 0")
    out = np.exp(2j * np.pi * m / n) * (1.0 + zeta) / (1.0 - zeta)
    return out if out.ndim else complex(out)


def lambda_m_inverse(z, m, n):
    """Inverse of lambda_m: zeta = (w - 1)/(w + 1) with w = z e^{-2 pi i m/n}."""
    z = np.asarray(z, dtype=np.complex128)
    w = z * np.exp(-2j * np.pi * m / n)
    out = (w - 1.0) / (w + 1.0)
    return out if out.ndim else complex(out)


def Lambda_m(zeta, xi3, m, n, check=True):
    """Chart of the half-plane cylinder: (zeta, xi3) -> (lambda_m(zeta), 2 xi3)."""
    z = lambda_m(zeta, m, n, check=check)
    x3 = 2.0 * np.asarray(xi3, dtype=np.float64)
    if np.ndim(z) == 0 and x3.ndim == 0:
        return ConformalCoords(complex(z), float(x3))
    return np.asarray(z), x3


def pullback_factors(zeta, xi3):
    """Conformal factors of (calX . Lambda_m)* g_eucl = a^2 (dzeta^2 + b^2 dxi3^2).

    a(zeta, xi3) = 2 / (|1 - zeta|^2 + (1 + |zeta|^2)(cosh(2 xi3) - 1)),
    b(zeta) = 1 + |zeta|^2.  Independent of the bridge index m.
    """
    zeta = np.asarray(zeta, dtype=np.complex128)
    xi3 = np.asarray(xi3, dtype=np.float64)
    b = 1.0 + np.abs(zeta) ** 2
    a = 2.0 / (np.abs(1.0 - zeta) ** 2 + b * (np.cosh(2.0 * xi3) - 1.0))
    if a.ndim == 0:
        return float(a), float(b)
    a, b = np.broadcast_arrays(a, b)
    return a, b


def cap_mean_curvature(x3):
    """Mean curvature of the leaf x3 = const: H = 2 sinh x3.

    The mean curvature convention is the sum of the principal curvatures.
    """
    out = 2.0 * np.sinh(np.asarray(x3, dtype=np.float64))
    return out if out.ndim else float(out)
