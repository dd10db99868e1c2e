"""Assembly of the approximate minimal surfaces and their perturbations.

The genus-0 surface is a pair of graph sheets over the unit disk joined by
n boundary half-catenoid bridges at the roots of unity; the genus-1 surface
adds a catenoid neck through the center.  The atlas decomposes the surface
into the regions

    cat0 (neck chart), glu0 (neck gluing annulus, both sheets),
    gr   (graph region, both sheets),
    catm (bridge chart), glum (bridge gluing half-annuli, both sheets),

with quintic-smoothstep cutoffs blending the Green's-function profile into
the exact (arccosh) catenoid graphs.  Meshing is watertight by construction:
each sheet is a structured polar patch up to a boundary band that is meshed
per bridge in the Moebius chart, so every interface circle carries the same
nodes on both sides.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ball_geometry as bg
from ._kernels import count_self_intersections, smoothstep_quintic
from .green_functions import GreenSeries
from .matching import MatchingParams, profile_BG, solve_matching

__all__ = [
    "ScaleCollisionError",
    "SmallnessError",
    "SurfaceAtlas",
    "SurfaceMesh",
    "RegionGrid",
    "cutoff_eval",
    "bridge_profile",
    "neck_profile",
    "build_surface",
    "perturb_surface",
    "perturbed_chart_points",
]

_KIND_DISK, _KIND_NECK, _KIND_TUBE, _KIND_BAND = 0, 1, 2, 3


class ScaleCollisionError(RuntimeError):
    """The scale-separation inequalities of the construction fail."""


class SmallnessError(ValueError):
    """A perturbation exceeds its admissible smallness window."""


def _step(x, lo, hi, falling):
    s = smoothstep_quintic((np.asarray(x, dtype=np.float64) - lo) / (hi - lo))
    return 1.0 - s if falling else s


def cutoff_eval(profile, x, params):
    """Evaluate one of the construction's cutoff profiles at x.

    Profiles (quintic smoothstep transitions, C^2 plateaus):

    * "eta0":    1 on (0, eps_t^(1/2)/2], 0 on [2 eps_t^(1/2), inf);  x = |z|
    * "etabar":  1 on (0, eps^(2/3)/2], 0 on [2 eps^(2/3), inf); x = rho = 2|zeta|
    * "kappa0":  1 for |z| < 2 eps_t^(1/2), 0 beyond 3 eps_t^(1/2)
    * "kappabar":1 for |zeta| < 2 eps^(2/3), 0 beyond 3 eps^(2/3)
    * "xi":      0 below the gluing interval, 1 above (x in the axial s/sigma)
    * "theta":   0 for x < -1, 1 for x > 1 (the +/- splitting profile)
    """
    e = params.eps
    if profile == "eta0":
        if params.genus != 1:
            raise ValueError("eta0 requires the genus-1 scales")
        et = params.eps_tilde
        return _step(x, 0.5 * np.sqrt(et), 2.0 * np.sqrt(et), falling=True)
    if profile == "etabar":
        return _step(x, 0.5 * e ** (2 / 3), 2.0 * e ** (2 / 3), falling=True)
    if profile == "kappa0":
        if params.genus != 1:
            raise ValueError("kappa0 requires the genus-1 scales")
        et = params.eps_tilde
        return _step(x, 2.0 * np.sqrt(et), 3.0 * np.sqrt(et), falling=True)
    if profile == "kappabar":
        return _step(x, 2.0 * e ** (2 / 3), 3.0 * e ** (2 / 3), falling=True)
    if profile == "xi":
        return _step(x, 0.0, 1.0, falling=False)
    if profile == "theta":
        return _step(x, -1.0, 1.0, falling=False)
    raise ValueError(f"unknown cutoff profile {profile!r}")


_RES_SCALE = {"coarse": 0.7, "default": 1.0, "fine": 2.0}


class SurfaceAtlas:
    """Region decomposition, profiles and scales of one built surface."""

    def __init__(self, params: MatchingParams, resolution="default"):
        self.params = params
        self.resolution = resolution
        if resolution not in _RES_SCALE:
            raise ValueError(f"unknown resolution preset {resolution!r}")
        self.scale = _RES_SCALE[resolution]
        n, e = params.n, params.eps
        self.series = GreenSeries(n=n)

        self.rho_cat = 0.5 * e ** (2 / 3)       # bridge chart outer rho
        self.rho_glu = 2.0 * e ** (2 / 3)       # bridge gluing outer rho
        self.sigma_in = float(np.arccosh(max(self.rho_cat / e, 1.0)))
        if params.genus == 1:
            et = params.eps_tilde
            self.r_neck_in = 0.5 * np.sqrt(et)
            self.r_glu0_out = 2.0 * np.sqrt(et)
            self.s_in = float(np.arccosh(self.r_neck_in / et))
            self.s_eps = float(np.arccosh(1.0 / et))
        else:
            self.r_neck_in = None
            self.r_glu0_out = None
            self.s_in = None
            self.s_eps = None
        self.R_band = 1.0 - 5.0 * e ** (2 / 3)
        self._check_feasible()
        self.regions = self._region_table()
        self.symmetry = {"rotation_order": n, "conjugation": True,
                         "vertical_flip": True}
        self._corner_cache = None

    # -- feasibility ----------------------------------------------------

    def _check_feasible(self):
        p = self.params
        n, e = p.n, p.eps
        checks = []
        # bridge zones of adjacent roots must stay disjoint (kappabar reach
        # 3 eps^(2/3) in |zeta| maps to ~ 6 eps^(2/3) in z)
        checks.append(("bridge-zones-disjoint: 12 eps^(2/3) < 2 sin(pi/n)",
                       12.0 * e ** (2 / 3) < 2.0 * np.sin(np.pi / n)))
        checks.append(("bridge-plateau-order: eps < eps^(2/3)/2",
                       e < 0.5 * e ** (2 / 3)))
        checks.append(("band-separation: R_band > 1 - 2 sin(pi/(2n))",
                       1.0 - self.R_band < 2.0 * np.sin(np.pi / (2 * n))))
        if p.genus == 1:
            et = p.eps_tilde
            checks.append(("neck-plateau-inside-graph: 3 sqrt(eps_t) < 1 - 8 eps^(2/3)",
                           3.0 * np.sqrt(et) < 1.0 - 8.0 * e ** (2 / 3)))
            checks.append(("neck-plateau-order: eps_t < sqrt(eps_t)/2",
                           et < 0.5 * np.sqrt(et)))
            checks.append(("neck-below-band: 3 sqrt(eps_t) < R_band",
                           3.0 * np.sqrt(et) < self.R_band))
        failed = [name for name, ok in checks if not ok]
        if failed:
            raise ScaleCollisionError(
                "construction infeasible at n=%d genus=%d: %s"
                % (p.n, p.genus, "; ".join(failed)))

    def _region_table(self):
        p = self.params
        t = []
        if p.genus == 1:
            t.append({"name": "cat0", "chart": "neck",
                      "bounds": {"s": (-self.s_in, self.s_in), "phi": (0.0, 2 * np.pi)}})
            t.append({"name": "glu0", "chart": "disk",
                      "bounds": {"r": (self.r_neck_in, self.r_glu0_out)}})
        t.append({"name": "gr", "chart": "disk",
                  "bounds": {"r": (self.r_glu0_out or 0.0, 1.0),
                             "excluded_rho": self.rho_glu}})
        t.append({"name": "catm", "chart": "bridge",
                  "bounds": {"sigma": (-self.sigma_in, self.sigma_in),
                             "theta": (np.pi / 2, 3 * np.pi / 2)}})
        t.append({"name": "glum", "chart": "bridge",
                  "bounds": {"rho": (self.rho_cat, self.rho_glu)}})
        return t

    # -- cutoffs and profiles --------------------------------------------

    def eta0(self, r):
        return cutoff_eval("eta0", r, self.params)

    def etabar(self, rho):
        return cutoff_eval("etabar", rho, self.params)

    def script_G(self, z):
        """The graph profile (negative on the kept domain): BG/B."""
        return profile_BG(z, self.params) / bg.eval_B(z)

    def upper_height(self, z):
        """Upper-sheet height over the disk, neck blend included (genus 1)."""
        z = np.asarray(z, dtype=np.complex128)
        G = -self.script_G(z)
        if self.params.genus == 0:
            return G
        r = np.abs(z)
        eta = self.eta0(r)
        out = (1.0 - eta) * G
        m = eta > 0.0
        if np.any(m):
            et = self.params.eps_tilde
            out = np.where(m, out + eta * 2.0 * et *
                           np.arccosh(np.maximum(r, et) / et), out)
        return out

    def bridge_upper_xi3(self, rho, theta):
        """Upper-sheet xi3 height of the bridge blend (the -Upsilon-bar)."""
        rho = np.asarray(rho, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        e = self.params.eps
        zeta = 0.5 * rho * np.exp(1j * theta)
        G = -self.script_G(bg.lambda_m(zeta, self.params.n, self.params.n,
                                       check=False))
        eta = self.etabar(rho)
        return (1.0 - eta) * 0.5 * G + eta * 0.5 * e * np.arccosh(
            np.maximum(rho, e) / e)

    # profile gradients (used for smallness checks and diagnostics)

    def script_G_gradient(self, z):
        """Flat gradient of script_G as a complex number gx + i gy."""
        return self.script_G_jet(z)[1]

    def script_G_jet(self, z):
        """(value, gradient, hessian) of script_G with analytic derivatives.

        gradient is complex gx + i gy; hessian is (..., 2, 2).
        """
        from .green_functions import fn_derivatives

        z = np.asarray(z, dtype=np.complex128)
        p = self.params
        f, fp, fpp = fn_derivatives(z, p.n)
        val = p.tau * (-0.5 * p.n + np.real(f))
        dBG = p.tau * np.conj(fp)  # grad Re f = (Re f', -Im f')
        # Hess Re f = [[Re f'', -Im f''], [-Im f'', -Re f'']]
        H = np.empty(z.shape + (2, 2))
        H[..., 0, 0] = p.tau * np.real(fpp)
        H[..., 0, 1] = -p.tau * np.imag(fpp)
        H[..., 1, 0] = H[..., 0, 1]
        H[..., 1, 1] = -H[..., 0, 0]
        if p.genus == 1:
            r2 = np.abs(z) ** 2
            val = val + p.tau_tilde * (-p.n - 0.5 * p.n * np.log(r2))
            dBG = dBG - p.tau_tilde * p.n * z / r2
            x, y = z.real, z.imag
            c = p.tau_tilde * p.n
            H[..., 0, 0] += -c * (r2 - 2 * x**2) / r2**2
            H[..., 1, 1] += -c * (r2 - 2 * y**2) / r2**2
            H[..., 0, 1] += c * 2 * x * y / r2**2
            H[..., 1, 0] = H[..., 0, 1]
        B = bg.eval_B(z)
        g = val / B
        dg = (dBG - g * z) / B
        # Hess g = (Hess BG - g Hess B - dg dB^T - dB dg^T)/B, Hess B = I
        dgv = np.stack([dg.real, dg.imag], axis=-1)
        zv = np.stack([z.real, z.imag], axis=-1)
        Hg = (H - g[..., None, None] * np.eye(2)
              - dgv[..., :, None] * zv[..., None, :]
              - zv[..., :, None] * dgv[..., None, :]) / B[..., None, None]
        return g, dg, Hg

    def upper_height_jet(self, z):
        """(value, gradient, hessian) of the blended upper-sheet height."""
        z = np.asarray(z, dtype=np.complex128)
        g, dg, Hg = self.script_G_jet(z)
        val, dv, Hv = -g, -dg, -Hg
        if self.params.genus == 0:
            return val, dv, Hv
        et = self.params.eps_tilde
        r = np.abs(z)
        lo, hi = 0.5 * np.sqrt(et), 2.0 * np.sqrt(et)
        inside = r < hi
        if not np.any(inside):
            return val, dv, Hv
        x = np.clip((r - lo) / (hi - lo), 0.0, 1.0)
        s = x**3 * (x * (6.0 * x - 15.0) + 10.0)
        sp = (30.0 * x**2 * (x - 1.0) ** 2) / (hi - lo)
        spp = (60.0 * x * (x - 1.0) * (2.0 * x - 1.0)) / (hi - lo) ** 2
        eta, detar, detarr = 1.0 - s, -sp, -spp
        rr = np.maximum(r, et * (1 + 1e-15))
        N = 2.0 * et * np.arccosh(rr / et)
        Np = 2.0 * et / np.sqrt(rr**2 - et**2)
        Npp = -2.0 * et * rr / (rr**2 - et**2) ** 1.5
        # radial-profile gradients/Hessians
        zv = np.stack([z.real, z.imag], axis=-1)
        rhat = zv / np.maximum(r, 1e-300)[..., None]
        eye = np.eye(2)
        proj = rhat[..., :, None] * rhat[..., None, :]
        orth = eye - proj

        def radial_jet(f, fp, fpp):
            grad = fp[..., None] * rhat
            hess = (fpp[..., None, None] * proj
                    + (fp / np.maximum(r, 1e-300))[..., None, None] * orth)
            return grad, hess

        dN, HN = radial_jet(N, Np, Npp)
        deta, Heta = radial_jet(eta, detar, detarr)
        diff = N - val
        ddiff = dN - np.stack([dv.real, dv.imag], axis=-1)
        Hdiff = HN - Hv
        newv = val + eta * diff
        dvv = np.stack([dv.real, dv.imag], axis=-1) + eta[..., None] * ddiff \
            + diff[..., None] * deta
        Hnew = (Hv + eta[..., None, None] * Hdiff
                + deta[..., :, None] * ddiff[..., None, :]
                + ddiff[..., :, None] * deta[..., None, :]
                + diff[..., None, None] * Heta)
        val = np.where(inside, newv, val)
        dvv = np.where(inside[..., None], dvv,
                       np.stack([dv.real, dv.imag], axis=-1))
        Hv = np.where(inside[..., None, None], Hnew, Hv)
        return val, dvv[..., 0] + 1j * dvv[..., 1], Hv

    # -- region sample grids ----------------------------------------------

    def region_grids(self, pad=2):
        """Structured curvature/residual sample grids, one per region."""
        p = self.params
        sc = self.scale
        grids = []
        nth = max(24, int(24 * sc))
        if p.genus == 1:
            ns = max(33, 2 * int(4 * self.s_in * sc) + 1)
            nphi = max(32, int(32 * sc))
            grids.append(RegionGrid("cat0", "neck",
                                    np.linspace(-self.s_in, self.s_in, ns),
                                    2 * np.pi * np.arange(nphi) / nphi,
                                    sheet=0, atlas=self))
            nr0 = max(9, int(9 * sc))
            r0 = np.geomspace(self.r_neck_in, self.r_glu0_out, nr0)
            for sheet in (+1, -1):
                grids.append(RegionGrid("glu0", "disk", np.log(r0),
                                        2 * np.pi * np.arange(nphi) / nphi,
                                        sheet=sheet, atlas=self))
        nsig = max(25, 2 * int(5 * self.sigma_in * sc) + 1)
        grids.append(RegionGrid("catm", "bridge",
                                np.linspace(-self.sigma_in, self.sigma_in, nsig),
                                np.pi / 2 + np.pi * np.arange(nth + 1) / nth,
                                sheet=0, atlas=self))
        nrho = max(11, int(11 * sc))
        rho = np.geomspace(self.rho_cat, self.rho_glu, nrho)
        for sheet in (+1, -1):
            grids.append(RegionGrid("glum", "bridge", np.log(rho),
                                    np.pi / 2 + np.pi * np.arange(nth + 1) / nth,
                                    sheet=sheet, atlas=self))
        r_lo = self.r_glu0_out if p.genus == 1 else 0.04
        nr = max(28, int(28 * sc))
        nph = max(96, int(96 * sc) // (2 * p.n) * 2 * p.n)
        rgr = np.geomspace(r_lo, 1.0 - 2.5 * p.eps ** (2 / 3), nr)
        for sheet in (+1, -1):
            grids.append(RegionGrid("gr", "disk", np.log(rgr),
                                    2 * np.pi * np.arange(nph) / nph,
                                    sheet=sheet, atlas=self))
        return grids

    def smallness_windows(self, w_eval):
        """Check the admissible perturbation windows; returns sup ratios.

        w_eval: callable z -> w.  Windows: |w/(eps_t cosh s)| <= 1 on the
        neck, |w/(eps cosh sigma)| <= 1 on the bridges, |w| <= 1 on the
        graph region (discrete C^0 surrogates of the C^2 conditions).
        """
        p = self.params
        out = {}
        sig = np.linspace(-self.sigma_in, self.sigma_in, 65)
        th = np.linspace(np.pi / 2, 3 * np.pi / 2, 17)
        zeta = 0.5 * p.eps * np.cosh(sig)[:, None] * np.exp(1j * th[None, :])
        zb = bg.lambda_m(zeta, p.n, p.n, check=False)
        out["bridge |w|/(eps cosh sigma)"] = float(np.max(
            np.abs(w_eval(zb)) / (p.eps * np.cosh(sig)[:, None])))
        if p.genus == 1:
            s = np.linspace(-self.s_in, self.s_in, 65)
            zn = p.eps_tilde * np.cosh(s)[:, None] * np.exp(
                1j * np.linspace(0, 2 * np.pi, 17)[None, :])
            out["neck |w|/(eps_t cosh s)"] = float(np.max(
                np.abs(w_eval(zn)) / (p.eps_tilde * np.cosh(s)[:, None])))
        r = np.geomspace(self.r_glu0_out or 0.05, 0.98, 24)
        zg = r[:, None] * np.exp(1j * np.linspace(0, 2 * np.pi, 33)[None, :])
        out["graph |w|"] = float(np.max(np.abs(w_eval(zg))))
        return out


@dataclass
class RegionGrid:
    """One structured sample grid of a region: axes in chart coordinates.

    p1/p2 are the chart axes: (s, phi) on the neck, (sigma, theta) or
    (log rho, theta) on the bridges, (log r, phi) on the disk.  ``sheet``
    is +1 upper, -1 lower, 0 for charts covering both sheets.
    """

    region: str
    chart: str
    p1: np.ndarray
    p2: np.ndarray
    sheet: int
    atlas: SurfaceAtlas
    m: int = 0  # bridge index; 0 = the template bridge at z_m = 1

    def mesh_params(self):
        return np.meshgrid(self.p1, self.p2, indexing="ij")

    def mask(self):
        """Valid-sample mask (graph region excludes the bridge notches)."""
        P1, P2 = self.mesh_params()
        if self.region != "gr":
            return np.ones(P1.shape, bool)
        z = np.exp(P1) * np.exp(1j * P2)
        n = self.atlas.params.n
        zeta = bg.lambda_m_inverse(z ** 1, n, n)
        # distance to the nearest root in the rotation-reduced chart
        ang = np.mod(np.angle(z) + np.pi / n, 2 * np.pi / n) - np.pi / n
        znear = np.abs(z) * np.exp(1j * ang)
        zeta = bg.lambda_m_inverse(znear, n, n)
        return 2.0 * np.abs(zeta) > self.atlas.rho_glu * 1.05

    def z_of(self, P1=None, P2=None):
        """Disk coordinate z of the sample points."""
        if P1 is None:
            P1, P2 = self.mesh_params()
        at, p = self.atlas, self.atlas.params
        if self.chart == "disk":
            return np.exp(P1) * np.exp(1j * P2)
        if self.chart == "neck":
            return p.eps_tilde * np.cosh(P1) * np.exp(1j * P2)
        if self.region == "catm":
            zeta = 0.5 * p.eps * np.cosh(P1) * np.exp(1j * P2)
        else:
            zeta = 0.5 * np.exp(P1) * np.exp(1j * P2)
        rot = np.exp(2j * np.pi * (self.m or p.n) / p.n)
        return rot * (1.0 + zeta) / (1.0 - zeta)


# ----------------------------------------------------------------------
# chart embeddings (unperturbed and perturbed)
# ----------------------------------------------------------------------

def _neck_normal(params, s, phi):
    """g-unit normal of the neck catenoid in (x1, x2, x3) chart components."""
    et = params.eps_tilde
    z = et * np.cosh(s) * np.exp(1j * phi)
    x3 = 2.0 * et * s
    B = bg.eval_B(z)
    A = bg.eval_A(z, x3)
    den = A * np.sqrt(4.0 * B**2 / np.cosh(s) ** 2 + np.tanh(s) ** 2)
    horiz = -(2.0 * B / np.cosh(s)) * np.exp(1j * phi) / den
    vert = np.tanh(s) / (B * den)
    return np.stack(np.broadcast_arrays(horiz.real, horiz.imag, vert), axis=-1)


def _bridge_normal(params, sigma, theta):
    """g_m-unit normal of the half-catenoid in (xi1, xi2, xi3) components."""
    e = params.eps
    zeta = 0.5 * e * np.cosh(sigma) * np.exp(1j * theta)
    xi3 = 0.5 * e * sigma
    a, b = bg.pullback_factors(zeta, xi3)
    den = a * np.sqrt(b**2 / np.cosh(sigma) ** 2 + np.tanh(sigma) ** 2)
    horiz = -(b / np.cosh(sigma)) * np.exp(1j * theta) / den
    vert = np.tanh(sigma) / (b * den)
    N = np.stack(np.broadcast_arrays(horiz.real, horiz.imag, vert), axis=-1)
    return N, a


def perturbed_chart_points(atlas, grid: RegionGrid, P1, P2, w_vals, order=0):
    """Embedded R^3 points of a region grid displaced by the field values.

    ``w_vals`` are the perturbation samples at (P1, P2) (zeros give the
    unperturbed surface).  order=0 returns the R^3 points; order=1 also
    returns the intermediate cylinder/half-plane coordinates used by the
    pullback curvature routes.
    """
    p = atlas.params
    n = p.n
    sheet = grid.sheet
    w = np.asarray(w_vals, dtype=np.float64)
    if grid.chart == "neck":
        s, phi = P1, P2
        et = p.eps_tilde
        z = et * np.cosh(s) * np.exp(1j * phi)
        x3 = 2.0 * et * s
        disp = 0.5 * w[..., None] * _neck_normal(p, s, phi)
        zx = np.stack(np.broadcast_arrays(z.real, z.imag, x3), axis=-1) + disp
        pts = bg.chart_calX(zx[..., 0] + 1j * zx[..., 1], zx[..., 2], check=False)
        return (pts, zx) if order else pts
    if grid.chart == "disk":
        r = np.exp(P1)
        z = r * np.exp(1j * P2)
        h = atlas.upper_height(z)
        if p.genus == 1:
            eta = atlas.eta0(r)
            svals = np.arccosh(np.maximum(r, p.eps_tilde * (1 + 1e-15)) / p.eps_tilde)
            Nn = _neck_normal(p, sheet * svals, P2)
            e3 = np.zeros(Nn.shape)
            e3[..., 2] = 1.0
            Xi = sheet * (1.0 - eta)[..., None] * e3 + 0.5 * eta[..., None] * Nn
        else:
            Xi = np.zeros(np.broadcast_shapes(z.shape, ()) + (3,))
            Xi = np.zeros(z.shape + (3,))
            Xi[..., 2] = sheet
        zx = np.stack(np.broadcast_arrays(z.real, z.imag, sheet * h), axis=-1)
        zx = zx + w[..., None] * Xi
        pts = bg.chart_calX(zx[..., 0] + 1j * zx[..., 1], zx[..., 2], check=False)
        return (pts, zx) if order else pts
    # bridge charts: work in (zeta, xi3), then Lambda_m and calX
    if grid.region == "catm":
        sigma, theta = P1, P2
        zeta = 0.5 * p.eps * np.cosh(sigma) * np.exp(1j * theta)
        xi3 = 0.5 * p.eps * sigma
        N, a = _bridge_normal(p, sigma, theta)
        zz = np.stack(np.broadcast_arrays(zeta.real, zeta.imag, xi3), axis=-1)
        zz = zz + (0.5 * a * w)[..., None] * N
    else:
        rho = np.exp(P1)
        theta = P2
        zeta = 0.5 * rho * np.exp(1j * theta)
        xi3 = sheet * atlas.bridge_upper_xi3(rho, theta)
        eta = atlas.etabar(rho)
        svals = np.arccosh(np.maximum(rho, p.eps * (1 + 1e-15)) / p.eps)
        N, a = _bridge_normal(p, sheet * svals, theta)
        e3 = np.zeros(N.shape)
        e3[..., 2] = 1.0
        Xi = 0.5 * (sheet * (1.0 - eta)[..., None] * e3 + (eta * a)[..., None] * N)
        zz = np.stack(np.broadcast_arrays(zeta.real, zeta.imag, xi3), axis=-1)
        zz = zz + w[..., None] * Xi
    rot = np.exp(2j * np.pi * (grid.m or n) / n)
    zdisk = rot * (1.0 + (zz[..., 0] + 1j * zz[..., 1])) / (1.0 - (zz[..., 0] + 1j * zz[..., 1]))
    pts = bg.chart_calX(zdisk, 2.0 * zz[..., 2], check=False)
    return (pts, zz) if order else pts


def bridge_profile(rho, theta, m, params):
    """Upsilon-bar: the blended lower xi3-graph of the m-th bridge.

    (1 - etabar) * (1/2) G-bar + etabar * G^cat_(eps/2) with the exact
    arccosh catenoid graph; rho below the catenoid waist is rejected.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < params.eps):
        raise ValueError("rho below the catenoid waist eps")
    at = SurfaceAtlas(params) if not isinstance(params, SurfaceAtlas) else params
    return -at.bridge_upper_xi3(rho, theta)


def neck_profile(r, phi, params):
    """Upsilon-tilde: the blended lower x3-graph of the neck (genus 1)."""
    r = np.asarray(r, dtype=np.float64)
    if params.genus != 1:
        raise ValueError("neck profile requires genus 1")
    if np.any(r < params.eps_tilde):
        raise ValueError("r below the neck waist eps_tilde")
    at = SurfaceAtlas(params) if not isinstance(params, SurfaceAtlas) else params
    z = r * np.exp(1j * np.asarray(phi))
    return -at.upper_height(z)


# ----------------------------------------------------------------------
# meshing
# ----------------------------------------------------------------------

class _VertexRegistry:
    def __init__(self, tol=1e-12):
        self.tol = tol
        self.table = {}
        self.pos = []
        self.meta = []

    def add(self, p, meta):
        key0 = tuple(int(np.floor(c / self.tol + 0.5)) for c in p)
        for d0 in (0, -1, 1):
            for d1 in (0, -1, 1):
                for d2 in (0, -1, 1):
                    k = (key0[0] + d0, key0[1] + d1, key0[2] + d2)
                    i = self.table.get(k)
                    if i is not None and np.max(np.abs(self.pos[i] - p)) < self.tol:
                        return i
        i = len(self.pos)
        self.table[key0] = i
        self.pos.append(np.asarray(p, dtype=np.float64))
        self.meta.append(meta)
        return i


@dataclass
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    tri_region: np.ndarray
    region_names: list
    v_kind: np.ndarray
    v_sheet: np.ndarray
    v_m: np.ndarray
    v_p1: np.ndarray
    v_p2: np.ndarray
    normals: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.normals is None:
            self.normals = self._vertex_normals()

    def _vertex_normals(self):
        v, t = self.vertices, self.triangles
        fn = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        acc = np.zeros_like(v)
        for k in range(3):
            np.add.at(acc, t[:, k], fn)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        norm[norm < 1e-300] = 1.0
        return acc / norm

    def edge_set(self):
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self):
        return int(len(self.vertices) - len(self.edge_set()) + len(self.triangles))

    def boundary_edges(self):
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        eu, counts = np.unique(e, axis=0, return_counts=True)
        return eu[counts == 1]

    def boundary_loops(self):
        """Number of closed boundary curves (components of boundary edges)."""
        be = self.boundary_edges()
        parent = {}

        def find(a):
            while parent.setdefault(a, a) != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in be:
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[ra] = rb
        return len({find(int(a)) for a in be[:, 0]} | {find(int(b)) for b in be[:, 1]})

    def boundary_vertex_ids(self):
        be = self.boundary_edges()
        return np.unique(be)

    def genus(self):
        b = self.boundary_loops()
        return int((2 - b - self.euler_characteristic()) // 2)

    def equivariance_defect(self):
        """Max displacement of the vertex set under the symmetry generators."""
        from scipy.spatial import cKDTree

        v = self.vertices
        tree = cKDTree(v)
        n = int(np.max(self.v_m)) if np.any(self.v_m > 0) else 1
        worst = 0.0
        ang = 2.0 * np.pi / n
        R = np.array([[np.cos(ang), -np.sin(ang), 0.0],
                      [np.sin(ang), np.cos(ang), 0.0],
                      [0.0, 0.0, 1.0]])
        for M in (R, np.diag([1.0, -1.0, 1.0]), np.diag([1.0, 1.0, -1.0])):
            d, _ = tree.query(v @ M.T, k=1)
            worst = max(worst, float(np.max(d)))
        return worst

    def count_intersections(self):
        return count_self_intersections(self.vertices, self.triangles)

    def export_obj(self, path):
        """ASCII OBJ with per-vertex normals, one object per region."""
        lines = ["# fbms surface mesh"]
        for p in self.vertices:
            lines.append("v %.12e %.12e %.12e" % (p[0], p[1], p[2]))
        for nrm in self.normals:
            lines.append("vn %.12e %.12e %.12e" % (nrm[0], nrm[1], nrm[2]))
        for rid, rname in enumerate(self.region_names):
            sel = np.flatnonzero(self.tri_region == rid)
            if len(sel) == 0:
                continue
            lines.append("o %s" % rname)
            for ti in sel:
                a, b, c = (self.triangles[ti] + 1)
                lines.append("f %d//%d %d//%d %d//%d" % (a, a, b, b, c, c))
        data = "\n".join(lines) + "\n"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(data)
        return data


def _wedge_outer_limit(atlas, theta, which="auto"):
    """First exit |zeta|(theta) of the template wedge: the ray leaves either
    through the wedge side arg(z) = +-pi/n or through |z| = R_band."""
    p = atlas.params
    n = p.n

    def inside(t):
        z = (1.0 + t * np.exp(1j * theta)) / (1.0 - t * np.exp(1j * theta))
        return (np.abs(z) >= atlas.R_band) and (abs(np.angle(z)) <= np.pi / n + 1e-15)

    t_lo = atlas.rho_cat  # |zeta| of the notch is rho_cat/2 < this
    t_hi = t_lo
    step = 1.3
    while inside(t_hi) and t_hi < 1e3:
        t_lo = t_hi
        t_hi *= step
    for _ in range(80):
        mid = 0.5 * (t_lo + t_hi)
        if inside(mid):
            t_lo = mid
        else:
            t_hi = mid
    t = 0.5 * (t_lo + t_hi)
    z = (1.0 + t * np.exp(1j * theta)) / (1.0 - t * np.exp(1j * theta))
    kind = "side" if abs(np.angle(z)) >= np.pi / n - 1e-9 else "circle"
    return t, kind, z


def _band_grid(atlas):
    """Template wedge band: theta columns, each with graded |zeta| rows."""
    n = atlas.params.n
    sc = atlas.scale
    m_half = max(8, int(8 * sc))
    # corner where the wedge side meets the R_band circle (closed form)
    z_corner = atlas.R_band * np.exp(1j * np.pi / n)
    zeta_c = (z_corner - 1.0) / (z_corner + 1.0)
    th_c = float(np.mod(np.angle(zeta_c), 2 * np.pi))
    th_half = np.linspace(np.pi / 2, np.pi, m_half + 1)
    keep = np.abs(th_half - th_c) > 0.35 * (np.pi / 2) / m_half
    keep[0] = keep[-1] = True  # never drop the wall or the center column
    th_half = np.sort(np.concatenate([th_half[keep], [th_c]]))
    thetas = np.concatenate([th_half, (2 * np.pi - th_half[-2::-1])])
    outer = np.empty(len(thetas))
    kinds = []
    zs = np.empty(len(thetas), dtype=np.complex128)
    for i, th in enumerate(thetas):
        outer[i], kind, zs[i] = _wedge_outer_limit(atlas, th)
        kinds.append(kind)
    nu = max(6, int(6 * sc)) + 1
    return thetas, outer, kinds, zs, nu


def build_surface(n, genus, resolution="default"):
    """Construct the atlas and a watertight triangle mesh of the surface.

    The fundamental wedge (one bridge) is meshed once; the full mesh is the
    orbit under the rotations by 2 pi/n, so the symmetry group acts on the
    vertex set exactly.  Boundary vertices lie on the unit sphere to
    floating-point accuracy.
    """
    params = solve_matching(n, genus)
    atlas = SurfaceAtlas(params, resolution)
    sc = atlas.scale
    reg = _VertexRegistry()
    tris = []
    tri_region = []
    region_names = [r["name"] for r in atlas.regions]
    rindex = {name: i for i, name in enumerate(region_names)}

    thetas, outer, kinds, z_exit, nu = _band_grid(atlas)
    zeta_in = 0.5 * atlas.rho_cat

    def add_quad_grid(ids, region_of):
        n1, n2 = ids.shape
        for i in range(n1 - 1):
            for j in range(n2 - 1):
                a, b, c, d = ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]
                if not (a == b or b == c or a == c):
                    tris.append((a, b, c))
                    tri_region.append(region_of(i, j))
                if not (a == c or c == d or a == d):
                    tris.append((a, c, d))
                    tri_region.append(region_of(i, j))

    def register_patch(pts0, meta_kind, meta_sheet, p1g, p2g, mi_list):
        """Register the template patch and its rotated copies; returns ids
        keyed by bridge index (rotation acts on the point set exactly)."""
        out = {}
        for mi in mi_list:
            ang = 2.0 * np.pi * mi / n
            ca, sa = np.cos(ang), np.sin(ang)
            pts = np.empty_like(pts0)
            pts[..., 0] = ca * pts0[..., 0] - sa * pts0[..., 1]
            pts[..., 1] = sa * pts0[..., 0] + ca * pts0[..., 1]
            pts[..., 2] = pts0[..., 2]
            ids = np.empty(pts.shape[:2], dtype=int)
            for i in range(pts.shape[0]):
                for j in range(pts.shape[1]):
                    ids[i, j] = reg.add(pts[i, j],
                                        (meta_kind, meta_sheet, mi,
                                         p1g[i, j], p2g[i, j]))
            out[mi] = ids
        return out

    # ---- per-bridge pieces: band (2 sheets) and tube -------------------
    # template at z_m = 1 (mi = n), rotated copies for the other bridges
    uu = np.linspace(0.0, 1.0, nu)
    lt = np.log(zeta_in) + uu[None, :] * (np.log(outer)[:, None] - np.log(zeta_in))
    tgrid = np.exp(lt)                        # (ntheta, nu) |zeta| values
    THg = np.broadcast_to(thetas[:, None], tgrid.shape)
    rho_g = 2.0 * tgrid
    zeta_g = tgrid * np.exp(1j * THg)
    zdisk_g = (1.0 + zeta_g) / (1.0 - zeta_g)
    glum_cut = rho_g < atlas.rho_glu
    for sheet in (+1, -1):
        xi3 = sheet * atlas.bridge_upper_xi3(rho_g, THg)
        pts0 = bg.chart_calX(zdisk_g, 2.0 * xi3, check=False)
        ids_by_m = register_patch(pts0, _KIND_BAND, sheet, np.log(rho_g), THg,
                                  range(1, n + 1))
        for mi in range(1, n + 1):
            add_quad_grid(ids_by_m[mi], lambda i, j: (
                rindex["glum"] if glum_cut[i, min(j + 1, nu - 1)] else rindex["gr"]))
    nsig = max(13, 2 * int(5 * atlas.sigma_in * sc) + 1)
    sig = np.linspace(-atlas.sigma_in, atlas.sigma_in, nsig)
    zeta_t = 0.5 * params.eps * np.cosh(sig)[:, None] * np.exp(1j * thetas)[None, :]
    zdisk_t = (1.0 + zeta_t) / (1.0 - zeta_t)
    pts0 = bg.chart_calX(zdisk_t, params.eps * sig[:, None]
                         * np.ones((1, len(thetas))), check=False)
    SGg = np.broadcast_to(sig[:, None], zeta_t.shape)
    THt = np.broadcast_to(thetas[None, :], zeta_t.shape)
    ids_by_m = register_patch(pts0, _KIND_TUBE, 0, SGg, THt, range(1, n + 1))
    for mi in range(1, n + 1):
        add_quad_grid(ids_by_m[mi], lambda i, j: rindex["catm"])

    # ---- sheet annuli (the gr + glu0 patch), angular set from the band --
    circle_sel = [i for i, k in enumerate(kinds) if k == "circle"]
    # the wedge corners R_band e^{+-i pi/n} terminate the circle piece and
    # are shared with the side seams; they must be ring nodes too
    phis0 = np.sort(np.concatenate([np.angle(z_exit[circle_sel]),
                                    [-np.pi / n, np.pi / n]]))
    Phi = np.sort(np.mod(np.concatenate(
        [phis0 + 2 * np.pi * mi / n for mi in range(n)]), 2 * np.pi))
    Phi = Phi[np.concatenate([[True], np.diff(Phi) > 1e-12])]
    r_lo = atlas.r_neck_in if genus == 1 else 0.05
    nring = max(24, int(10 * sc * np.log(atlas.R_band / r_lo)))
    rings = np.geomspace(r_lo, atlas.R_band, nring)
    if genus == 1:
        rings = np.sort(np.concatenate([rings, [atlas.r_glu0_out]]))
    Zg = rings[:, None] * np.exp(1j * Phi)[None, :]
    H_up = atlas.upper_height(Zg)
    for sheet in (+1, -1):
        pts0 = bg.chart_calX(Zg, sheet * H_up, check=False)
        LRg = np.broadcast_to(np.log(rings)[:, None], Zg.shape)
        PHg = np.broadcast_to(Phi[None, :], Zg.shape)
        ids = register_patch(pts0, _KIND_DISK, sheet, LRg, PHg, [n])[n]
        ids = np.concatenate([ids, ids[:, :1]], axis=1)
        if genus == 1:
            add_quad_grid(ids, lambda i, j: (
                rindex["glu0"] if rings[i] < atlas.r_glu0_out * 0.999 else rindex["gr"]))
        else:
            add_quad_grid(ids, lambda i, j: rindex["gr"])
        if genus == 0:
            zc = bg.chart_calX(0.0, float(sheet * atlas.upper_height(np.array(0.0j))),
                               check=False)
            c_id = reg.add(zc, (_KIND_DISK, sheet, 0, np.log(1e-15), 0.0))
            for j in range(len(Phi)):
                a, b = ids[0, j], ids[0, j + 1]
                tris.append((c_id, a, b) if sheet > 0 else (c_id, b, a))
                tri_region.append(rindex["gr"])

    # ---- neck tube ------------------------------------------------------
    if genus == 1:
        ns = max(17, 2 * int(4 * atlas.s_in * sc) + 1)
        sv = np.linspace(-atlas.s_in, atlas.s_in, ns)
        Zn = params.eps_tilde * np.cosh(sv)[:, None] * np.exp(1j * Phi)[None, :]
        pts0 = bg.chart_calX(Zn, 2 * params.eps_tilde * sv[:, None]
                             * np.ones((1, len(Phi))), check=False)
        Sg = np.broadcast_to(sv[:, None], Zn.shape)
        PHg = np.broadcast_to(Phi[None, :], Zn.shape)
        ids = register_patch(pts0, _KIND_NECK, 0, Sg, PHg, [n])[n]
        ids = np.concatenate([ids, ids[:, :1]], axis=1)
        add_quad_grid(ids, lambda i, j: rindex["cat0"])

    meta = np.array(reg.meta, dtype=object)
    mesh = SurfaceMesh(
        vertices=np.array(reg.pos),
        triangles=np.array(tris, dtype=np.int64),
        tri_region=np.array(tri_region, dtype=np.int32),
        region_names=region_names,
        v_kind=np.array([m[0] for m in reg.meta], dtype=np.int8),
        v_sheet=np.array([m[1] for m in reg.meta], dtype=np.int8),
        v_m=np.array([m[2] for m in reg.meta], dtype=np.int32),
        v_p1=np.array([m[3] for m in reg.meta], dtype=np.float64),
        v_p2=np.array([m[4] for m in reg.meta], dtype=np.float64),
    )
    return atlas, mesh


def perturb_surface(atlas, w_eval, mesh: SurfaceMesh, check_smallness=True):
    """Displace mesh vertices by the perturbation field per region rules.

    ``w_eval``: callable z -> w on the quotient disk domain.  Graph sheets
    move along the blended vertical/normal fields, catenoid charts along
    their chart normals with the construction's scalings; boundary vertices
    stay on the unit sphere exactly.
    """
    if check_smallness:
        windows = atlas.smallness_windows(w_eval)
        bad = {k: v for k, v in windows.items() if v > 1.0}
        if bad:
            raise SmallnessError(f"perturbation outside smallness windows: {bad}")
    p = atlas.params
    n = p.n
    out = np.empty_like(mesh.vertices)
    for kind in (_KIND_DISK, _KIND_NECK, _KIND_TUBE, _KIND_BAND):
        sel = np.flatnonzero(mesh.v_kind == kind)
        if len(sel) == 0:
            continue
        p1 = mesh.v_p1[sel]
        p2 = mesh.v_p2[sel]
        sheets = mesh.v_sheet[sel]
        ms = mesh.v_m[sel]
        if kind == _KIND_DISK:
            center = ~np.isfinite(p1)
            p1c = np.where(center, np.log(1e-12), p1)
            z = np.exp(p1c) * np.exp(1j * p2)
            z = np.where(center, 0.0, z)
            w = w_eval(z)
            for sheet in (+1, -1):
                ss = sheets == sheet
                if not np.any(ss):
                    continue
                g = RegionGrid("gr", "disk", np.zeros(1), np.zeros(1), sheet, atlas)
                pts = perturbed_chart_points(atlas, g, p1c[ss], p2[ss], w[ss])
                out[sel[ss]] = pts
        elif kind == _KIND_NECK:
            z = p.eps_tilde * np.cosh(p1) * np.exp(1j * p2)
            w = w_eval(z)
            g = RegionGrid("cat0", "neck", np.zeros(1), np.zeros(1), 0, atlas)
            out[sel] = perturbed_chart_points(atlas, g, p1, p2, w)
        else:
            for mi in np.unique(ms):
                mm = ms == mi
                if kind == _KIND_TUBE:
                    zeta = 0.5 * p.eps * np.cosh(p1[mm]) * np.exp(1j * p2[mm])
                    z = np.exp(2j * np.pi * mi / n) * (1 + zeta) / (1 - zeta)
                    w = w_eval(z)
                    g = RegionGrid("catm", "bridge", np.zeros(1), np.zeros(1), 0,
                                   atlas, m=int(mi))
                    out[sel[mm]] = perturbed_chart_points(atlas, g, p1[mm], p2[mm], w)
                else:
                    zeta = 0.5 * np.exp(p1[mm]) * np.exp(1j * p2[mm])
                    z = np.exp(2j * np.pi * mi / n) * (1 + zeta) / (1 - zeta)
                    w = w_eval(z)
                    for sheet in (+1, -1):
                        ss = sheets[mm] == sheet
                        if not np.any(ss):
                            continue
                        g = RegionGrid("glum", "bridge", np.zeros(1), np.zeros(1),
                                       sheet, atlas, m=int(mi))
                        out[sel[mm][ss]] = perturbed_chart_points(
                            atlas, g, p1[mm][ss], p2[mm][ss], w[ss])
    return out
