"""Singular harmonic Green's functions on the unit disk.

Implements the explicit series solutions of the Robin problem
n dG/dr - G = 0 on the boundary circle: the polylog building blocks H_k,
the boundary-singular G_n, the puncture-singular Gtilde_n, their quotients
Gamma_n = G_n(z^n)/B and the expansion constant c(n) controlling the
catenoid matching.

Two independent evaluation routes are kept for G_n:

* the direct series  -n/2 + Re sum_j n z^j / (nj - 1)            (slow near |z|=1)
* the resummed form  -n/2 + Re [H_0 + H_1/n + H_2/n^2 + tail]    (fast everywhere)

where H_0 = -log(1-z) is closed form, H_1/H_2 are evaluated through
dilogarithm/trilogarithm expansions about z = 1, and the k >= 3 tail has the
closed per-term coefficient 1/(j (nj)^2 (nj-1)).  Every value carries a
rigorous truncation bound.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import zeta as _zeta

from ._kernels import power_series

__all__ = [
    "GreenSeries",
    "polylog_Hk",
    "green_Gn",
    "green_Gn_with_bound",
    "green_Gn_tilde",
    "gamma_fn",
    "fn_value",
    "fn_derivatives",
    "h_n",
    "robin_defect_series",
    "robin_defect_abel_limit",
    "expansion_constant_c",
    "expansion_constant_c_limit",
    "zeta_tail_bound",
]


@dataclass(frozen=True)
class GreenSeries:
    """Evaluation policy for the G_n family.

    J is the direct-series truncation order; the reported truncation error
    bound is n |z|^(J+1) / ((nJ - 1)(1 - |z|)).  With guard="adaptive" the
    resummed route takes over near the unit circle.
    """

    n: int
    J: int = 4096
    guard: str = "adaptive"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("GreenSeries requires n >= 2")
        if self.J < 64:
            raise ValueError("series truncation J must be >= 64")
        if self.guard not in ("adaptive", "direct", "resummed"):
            raise ValueError(f"unknown guard policy {self.guard!r}")

    def truncation_bound(self, z):
        az = np.abs(np.asarray(z, dtype=np.complex128))
        with np.errstate(divide="ignore", over="ignore"):
            b = self.n * az ** (self.J + 1) / ((self.n * self.J - 1.0) * (1.0 - az))
        return np.where(az < 1.0, b, np.inf)


def _zeta_neg_table(kmax):
    # zeta(-m) = -B_{m+1}/(m+1); even negative arguments vanish
    from scipy.special import bernoulli

    bern = bernoulli(kmax + 1)
    table = {0: -0.5}
    for m in range(1, kmax + 1, 2):
        table[-m] = -bern[m + 1] / (m + 1)
    return table


_ZETA_NEG = _zeta_neg_table(80)


def _zeta_int(s):
    if s >= 2:
        return float(_zeta(s))
    return _ZETA_NEG.get(s, 0.0)


def _series_polylog(z, s, J):
    coeffs = 1.0 / np.arange(1.0, J + 1.0) ** s
    return power_series(z, coeffs)


def _li2(z):
    """Dilogarithm on the closed disk (and a little beyond), z != 1.

    Series for |z| <= 0.5, expansion of Li_2(e^mu) about mu = 0 otherwise;
    accurate to ~1e-13 for |log z| < 2 pi.
    """
    z = np.asarray(z, dtype=np.complex128)
    out = np.empty(z.shape, dtype=np.complex128)
    inner = np.abs(z) <= 0.5
    if np.any(inner):
        out[inner] = _series_polylog(z[inner], 2, 56)
    if np.any(~inner):
        mu = np.log(z[~inner])
        acc = np.zeros(mu.shape, dtype=np.complex128)
        fact = 1.0
        for k in range(2, 64):
            fact *= k
            zk = _zeta_int(2 - k)
            if zk:
                acc += zk * mu**k / fact
        out[~inner] = np.pi**2 / 6 - mu * (np.log(-mu) - 1.0) + acc
    return out


def _li3(z):
    """Trilogarithm, same evaluation strategy as :func:`_li2`."""
    z = np.asarray(z, dtype=np.complex128)
    out = np.empty(z.shape, dtype=np.complex128)
    inner = np.abs(z) <= 0.5
    if np.any(inner):
        out[inner] = _series_polylog(z[inner], 3, 44)
    if np.any(~inner):
        mu = np.log(z[~inner])
        acc = np.zeros(mu.shape, dtype=np.complex128)
        fact = 2.0
        for k in range(3, 64):
            fact *= k
            zk = _zeta_int(3 - k)
            if zk:
                acc += zk * mu**k / fact
        out[~inner] = (_zeta_int(3) + np.pi**2 / 6 * mu
                       + mu**2 / 2.0 * (1.5 - np.log(-mu)) + acc)
    return out


def polylog_Hk(k, z, J=4096):
    """H_k(z) = sum_{j>=1} z^j / j^{k+1}, with its truncation bound.

    k = 0 is evaluated in closed form as -log(1 - z) (bound 0).  Returns
    ``(value, bound)``; z = 1 with k = 0 raises.
    """
    z = np.asarray(z, dtype=np.complex128)
    if k < 0:
        raise ValueError("polylog order k must be >= 0")
    if k == 0:
        if np.any(z == 1.0):
            raise ValueError("H_0 is singular at z = 1")
        val = -np.log(1.0 - z)
        return (val if val.ndim else complex(val)), 0.0
    az = np.abs(z)
    if np.any(az > 1.0 + 1e-12):
        raise ValueError("polylog_Hk requires |z| <= 1")
    val = _series_polylog(z, k + 1, J)
    azm = float(np.max(az)) if az.size else 0.0
    if azm < 1.0:
        bound = azm ** (J + 1) / ((J + 1) ** (k + 1) * (1.0 - azm))
    else:
        bound = 1.0 / (k * J**k)
    return (val if val.ndim else complex(val)), float(bound)


def _gn_direct(z, n, J):
    j = np.arange(1.0, J + 1.0)
    val = -0.5 * n + np.real(power_series(z, n / (n * j - 1.0)))
    az = np.abs(np.asarray(z))
    azm = float(np.max(az)) if az.size else 0.0
    bound = (n * azm ** (J + 1) / ((n * J - 1.0) * (1.0 - azm))
             if azm < 1.0 else np.inf)
    return val, bound


def _gn_resummed(z, n, J=96):
    z = np.asarray(z, dtype=np.complex128)
    if np.any(z == 1.0):
        raise ValueError("G_n is singular at z = 1")
    azm = float(np.max(np.abs(z))) if z.size else 0.0
    if azm > 1.0:
        # analytic continuation for boundary-crossing stencils only
        J = max(16, min(J, int(0.5 / max(azm - 1.0, 1e-3))))
    j = np.arange(1.0, J + 1.0)
    rj = 1.0 / (j * (n * j) ** 2 * (n * j - 1.0))
    tail = np.real(power_series(z, rj))
    val = (-0.5 * n
           + np.real(-np.log(1.0 - z) + _li2(z) / n + _li3(z) / n**2)
           + tail)
    bound = 2.0 / (3.0 * n**3 * J**3) * max(1.0, azm) ** 2 + 1e-13
    return val, bound


def green_Gn_with_bound(z, params, path=None):
    """Evaluate G_n with its truncation bound along a chosen route."""
    z = np.asarray(z, dtype=np.complex128)
    if path is None:
        path = params.guard
    if path == "direct":
        return _gn_direct(z, params.n, params.J)
    if path == "resummed":
        return _gn_resummed(z, params.n)
    azm = float(np.max(np.abs(z))) if z.size else 0.0
    if azm <= 0.6:
        return _gn_direct(z, params.n, min(params.J, 512))
    return _gn_resummed(z, params.n)


def green_Gn(z, params):
    """G_n(z) = -n/2 + Re sum_j n z^j/(nj - 1), harmonic in the disk."""
    scalar = np.ndim(z) == 0
    val, _ = green_Gn_with_bound(z, params)
    return float(val) if scalar else val


def green_Gn_tilde(z, n):
    """Gtilde_n(z) = -n - log|z|; harmonic in the punctured disk."""
    z = np.asarray(z, dtype=np.complex128)
    az = np.abs(z)
    if np.any(az == 0.0):
        raise ValueError("Gtilde_n is singular at z = 0")
    out = -n - np.log(az)
    return out if out.ndim else float(out)


def fn_value(z, n, J=96):
    """f_n(z) = sum_k H_k(z^n)/n^k = sum_j n z^{nj}/(nj-1), complex valued.

    Resummed evaluation: G_n(z^n) = -n/2 + Re f_n(z).
    """
    z = np.asarray(z, dtype=np.complex128)
    w = z**n
    if np.any(w == 1.0):
        raise ValueError("f_n is singular at the n-th roots of unity")
    azm = float(np.max(np.abs(w))) if w.size else 0.0
    if azm > 1.0:
        J = max(16, min(J, int(0.5 / max(azm - 1.0, 1e-3))))
    j = np.arange(1.0, J + 1.0)
    rj = 1.0 / (j * (n * j) ** 2 * (n * j - 1.0))
    return (-np.log(1.0 - w) + _li2(w) / n + _li3(w) / n**2
            + power_series(w, rj))


def fn_derivatives(z, n, J=96):
    """(f_n, f_n', f_n'') using the closed-form recursions.

    f' = n z^{n-1}/(1 - z^n) + f/z and
    f'' = n(n-1) z^{n-2}/(1-z^n) + n^2 z^{2n-2}/(1-z^n)^2 + f'/z - f/z^2,
    regular at z = 0 for n >= 3.
    """
    z = np.asarray(z, dtype=np.complex128)
    f = fn_value(z, n, J)
    small = np.abs(z) < 1e-9
    zs = np.where(small, 1.0, z)
    w = z**n
    fp = n * z ** (n - 1) / (1.0 - w) + np.where(small, 0.0, f / zs)
    fpp = (n * (n - 1) * z ** (n - 2) / (1.0 - w)
           + n**2 * z ** (2 * n - 2) / (1.0 - w) ** 2
           + np.where(small, 0.0, fp / zs)
           - np.where(small, 0.0, f / zs**2))
    return f, fp, fpp


def gamma_fn(z, params, kind="plain"):
    """Gamma_n(z) = G_n(z^n)/B(z) or its tilde version; in ker L_gr.

    kind="plain" is singular at the n-th roots of unity, kind="tilde" at
    z = 0; singular inputs raise.
    """
    from .ball_geometry import eval_B

    z = np.asarray(z, dtype=np.complex128)
    n = params.n
    if kind == "plain":
        w = z**n
        if np.any(np.abs(w - 1.0) < 1e-14):
            raise ValueError("Gamma_n is singular at the n-th roots of unity")
        val, _ = green_Gn_with_bound(w, params)
    elif kind == "tilde":
        val = green_Gn_tilde(z**n, n)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    out = val / eval_B(z)
    return out if np.ndim(out) else float(out)


def h_n(z, m, n):
    """Regular part h_n = 1/(z_m (z - z_m)) - n z^{n-2}/(z^n - 1).

    Continuous across z = z_m (the poles cancel); evaluated by the explicit
    polynomial quotient near the root and by the difference elsewhere.
    The paper displays the negative of this function; only its modulus
    enters the |h_n(z_m)| <= c n bound.
    """
    z = np.asarray(z, dtype=np.complex128)
    zm = np.exp(2j * np.pi * m / n)
    near = np.abs(z - zm) < 0.2
    out = np.empty(z.shape, dtype=np.complex128)
    if np.any(~near):
        zf = z[~near]
        out[~near] = 1.0 / (zm * (zf - zm)) - n * zf ** (n - 2) / (zf**n - 1.0)
    if np.any(near):
        zn = z[near]
        num = -(zn ** (n - 2))
        for k in range(2, n):
            inner = np.zeros_like(zn)
            for ell in range(0, k - 1):
                inner += zn ** (k - 2 - ell) * zm**ell
            num = num + zm * zn ** (n - 1 - k) * inner
        den = np.zeros_like(zn)
        for k in range(0, n):
            den += zn ** (n - 1 - k) * zm**k
        out[near] = -num / (zm * den)
    return out if out.ndim else complex(out)


def robin_defect_series(params, kind="plain", mode="abel", phi=np.pi,
                        q=0.999, J=None, test_function=None):
    """Boundary Robin defect of the truncated series, n dG/dr - G at r = 1.

    For kind="tilde" the identity holds exactly and 0.0 is returned.  For
    the G_n series each boundary mode contributes n cos(j phi), a
    non-decaying oscillation that only vanishes after Abel/Cesaro averaging,
    so the defect is reported in a distributional mode:

    * mode="abel": |n/2 + n sum_{j<=J} q^j cos(j phi)|, to be compared with
      the Abel limit plus the geometric tail bound n q^(J+1)/(1-q).
    * mode="test_function": the truncated defect integrated against a smooth
      test function supported away from phi = 0.
    """
    if kind == "tilde":
        return 0.0
    if kind != "plain":
        raise ValueError(f"unknown kind {kind!r}")
    n = params.n
    if J is None:
        J = params.J
    j = np.arange(1, J + 1)
    if mode == "abel":
        if abs(phi) < 1e-12:
            raise ValueError("pointwise defect at phi = 0 (z = 1) is singular")
        return float(abs(0.5 * n + n * np.sum(q**j * np.cos(j * phi))))
    if mode == "test_function":
        if test_function is None:
            # smooth bump supported in (pi/2, 3 pi/2)
            def test_function(p):
                t = (p - np.pi / 2) / np.pi
                inside = (t > 0) & (t < 1)
                out = np.zeros_like(p)
                w = t[inside] * (1 - t[inside])
                out[inside] = np.exp(-1.0 / np.maximum(w, 1e-300))
                return out

        p = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
        defect = 0.5 * n + n * np.cos(np.outer(p, j)).sum(axis=1)
        w = test_function(p)
        norm = np.trapezoid(w, p)
        return float(abs(np.trapezoid(defect * w, p) / norm))
    raise ValueError(f"unknown mode {mode!r}")


def robin_defect_abel_limit(params, phi, q):
    """Abel-regularized boundary defect n/2 + n Re(q e^{i phi}/(1 - q e^{i phi}))."""
    w = q * np.exp(1j * phi)
    return float(0.5 * params.n + params.n * np.real(w / (1.0 - w)))


def zeta_tail_bound(n, K):
    """Tail bound zeta(2)/(n^K (n-1)) for the c(n) series truncated at K."""
    return float(_zeta(2)) / (n**K * (n - 1.0))


def expansion_constant_c(n, K=64):
    """c(n) = -log n + sum_{k>=1} zeta(k+1)/n^k.

    The constant term of G_n(z^n) + n/2 + log|z - z_m| at the roots of
    unity; |c(n)| <= c log n.
    """
    k = np.arange(1, K + 1)
    return float(-np.log(n) + np.sum(_zeta(k + 1) / np.power(float(n), k)))


def expansion_constant_c_limit(n, t_lo=3e-6, t_hi=3e-4, npts=8):
    """Oracle for c(n): extrapolated limit of G_n(z^n) + n/2 + log|z - z_m|.

    Samples along the radius towards z_m = 1 and removes the O(t log t) and
    O(t) error terms by a least-squares fit; noisier than the zeta series
    but an independent evaluation path.
    """
    params = GreenSeries(n=n)
    t = np.geomspace(t_lo, t_hi, npts)
    w = (1.0 - t) ** n
    g, _ = green_Gn_with_bound(w, params, path="resummed")
    samples = g + 0.5 * n + np.log(t)
    basis = np.stack([np.ones_like(t), t * np.log(t), t,
                      t**2 * np.log(t), t**2], axis=1)
    coef, *_ = np.linalg.lstsq(basis, samples, rcond=None)
    return float(coef[0])
