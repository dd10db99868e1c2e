"""Scale matching between the Green's function graphs and the catenoids.

Pins the bridge scale eps (and neck scale eps_tilde for genus 1) to the
number of boundary components n by solving the transcendental balance
between the log-expansions of the scaled catenoids and of
tau G_n(z^n) + tau_tilde Gtilde_n(z^n).
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .ball_geometry import eval_B
from .green_functions import (GreenSeries, expansion_constant_c, fn_value,
                              green_Gn_tilde)

__all__ = [
    "MatchingParams",
    "g_n_eval",
    "invert_gn",
    "solve_matching",
    "critical_catenoid_sstar",
    "verify_matched_expansion",
    "profile_BG",
]


@dataclass(frozen=True)
class MatchingParams:
    """All scales of the construction for a given (n, genus).

    genus 1: d_n = g_n^{-1}(-n/2 + c(n) + 1), eps_tilde = 2 e^{-1 - n d_n/2},
    eps = d_n * eps_tilde, tau = eps, tau_tilde = eps_tilde / n.

    genus 0: eps = 2 e^{-n/2 + c(n)} and tau = eps.  (The matched expansion
    eps log(eps/(2|z - z_m|)) forces the factor 2 in front of the
    exponential; see the decisions ledger.)
    """

    n: int
    genus: int
    eps: float
    c_n: float
    tau: float
    eps_tilde: float | None = None
    tau_tilde: float | None = None
    d_n: float | None = None

    def __post_init__(self):
        if self.genus not in (0, 1):
            raise ValueError("genus must be 0 or 1")
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps out of (0, 1)")
        if self.genus == 1 and not (self.eps_tilde and 0.0 < self.eps_tilde < 1.0):
            raise ValueError("genus 1 requires eps_tilde in (0, 1)")

    @property
    def roots(self):
        m = np.arange(1, self.n + 1)
        return np.exp(2j * np.pi * m / self.n)

    def balance_residuals(self):
        """Relative residuals of the two balance equations of the matching.

        Genus 1: -et - e n/2 = et log(et/2) and
                 -et - e n/2 + e c(n) = e log(e/2).
        Genus 0: only the second, with the et terms dropped.
        """
        n, e, c = self.n, self.eps, self.c_n
        if self.genus == 1:
            et = self.eps_tilde
            r1 = (-et - e * n / 2 - et * np.log(et / 2)) / (et * abs(np.log(et / 2)))
            r2 = (-et - e * n / 2 + e * c - e * np.log(e / 2)) / (e * abs(np.log(e / 2)))
            return abs(r1), abs(r2)
        r2 = (-e * n / 2 + e * c - e * np.log(e / 2)) / (e * abs(np.log(e / 2)))
        return (abs(r2),)


def g_n_eval(t, n):
    """g_n(t) = log t - (n/2) t + 1/t, strictly decreasing on (0, inf)."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0.0):
        raise ValueError("g_n is defined for t > 0")
    out = np.log(t) - 0.5 * n * t + 1.0 / t
    return out if out.ndim else float(out)


def invert_gn(y, n, tol=1e-13):
    """Unique t > 0 with g_n(t) = y, by bracketing bisection + Newton polish."""
    lo, hi = 1e-12, 1e3
    t = brentq(lambda t: g_n_eval(t, n) - y, lo, hi, xtol=1e-14, rtol=8.9e-16)
    for _ in range(4):
        g = g_n_eval(t, n) - y
        dg = 1.0 / t - 0.5 * n - 1.0 / t**2
        step = g / dg
        if not np.isfinite(step):
            break
        t -= step
    if abs(g_n_eval(t, n) - y) > tol * max(1.0, abs(y)):
        raise RuntimeError("invert_gn did not converge")
    return float(t)


def solve_matching(n, genus):
    """Solve the scale-matching equations; returns :class:`MatchingParams`."""
    if n < 3:
        raise ValueError("need n >= 3")
    c_n = expansion_constant_c(n)
    if genus == 0:
        eps = 2.0 * np.exp(-0.5 * n + c_n)
        return MatchingParams(n=n, genus=0, eps=float(eps), c_n=c_n, tau=float(eps))
    d_n = invert_gn(-0.5 * n + c_n + 1.0, n)
    eps_tilde = 2.0 * np.exp(-1.0 - 0.5 * n * d_n)
    eps = d_n * eps_tilde
    return MatchingParams(n=n, genus=1, eps=float(eps), c_n=c_n, tau=float(eps),
                          eps_tilde=float(eps_tilde), tau_tilde=float(eps_tilde / n),
                          d_n=float(d_n))


def critical_catenoid_sstar():
    """The root of s tanh s = 1 (the critical catenoid scale), to 1e-14."""
    s = brentq(lambda s: s * np.tanh(s) - 1.0, 1.0, 1.5, xtol=1e-15)
    for _ in range(3):
        f = s * np.tanh(s) - 1.0
        df = np.tanh(s) + s / np.cosh(s) ** 2
        s -= f / df
    return float(s)


def profile_BG(z, params, series=None):
    """B(z) * (graph profile): tau G_n(z^n) (+ tau_tilde Gtilde_n(z^n)).

    This is the function whose bi-graph forms the sheets away from the
    catenoids; dividing by B gives the profile itself.
    """
    z = np.asarray(z, dtype=np.complex128)
    n = params.n
    val = params.tau * (-0.5 * n + np.real(fn_value(z, n)))
    if params.genus == 1:
        val = val + params.tau_tilde * green_Gn_tilde(z**n, n)
    return val


def verify_matched_expansion(n, genus, region, nladder=8, r_hi=0.1):
    """Log-log slope fit of the matched-expansion remainder.

    region="root_m": R(z) = [tau G_n + tau_tilde Gtilde_n](z^n) minus the
    catenoid leading term eps log(eps/(2|z - z_m|)), sampled along a radius
    toward z_m = e^{2 pi i/n}; claimed order |z - z_m| (slope >= 0.9).

    region="puncture" (genus 1): the B-divided profile Gtilde-script minus
    2 eps_tilde log(eps_tilde/(2|z|)); claimed order |z|^2 (slope >= 1.9).

    Returns a dict with the fitted slope and the ladder samples.
    """
    params = solve_matching(n, genus)
    eps = params.eps
    if region == "root_m":
        r_lo = 4.0 * eps
        t = np.geomspace(r_lo, r_hi, nladder)
        zm = np.exp(2j * np.pi / n)
        # approach along the inward radius, staying inside the disk
        z = zm * (1.0 - t)
        lead = eps * np.log(eps / (2.0 * np.abs(z - zm)))
        rem = np.abs(profile_BG(z, params) - lead)
        dist = np.abs(z - zm)
    elif region == "puncture":
        if genus != 1:
            raise ValueError("puncture region requires genus 1")
        et = params.eps_tilde
        r_lo = 4.0 * et
        t = np.geomspace(r_lo, r_hi, nladder)
        z = t * np.exp(1j * np.pi / (2 * n))
        lead = 2.0 * et * np.log(et / (2.0 * np.abs(z)))
        rem = np.abs(profile_BG(z, params) / eval_B(z) - lead)
        dist = np.abs(z)
    else:
        raise ValueError(f"unknown region {region!r}")
    if np.any(dist >= 1.0):
        raise ValueError("radius ladder leaves the chart")
    slope, icept = np.polyfit(np.log(dist), np.log(np.maximum(rem, 1e-300)), 1)
    model_lo = np.exp(icept + slope * np.log(dist[0]))
    return {
        "region": region,
        "slope": float(slope),
        "distances": dist,
        "remainders": rem,
        "smallest_radius_ratio": float(rem[0] / model_lo),
    }
