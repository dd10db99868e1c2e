"""Global linearized operator, approximate inverse, and the corrector.

The residual is the weighted mean curvature gamma^2 H(w) sampled on the
atlas region grids.  The approximate inverse follows the construction's
pipeline: split the residual between the sheets, solve one Robin problem on
the punctured disk (the z -> z^n reduction), correct with the catenoid
solvers on the neck/bridge cylinders, blend with the construction cutoffs,
and add the deficiency combination fixed by the gluing-zone matching
system.  The corrector runs either the fixed-point iteration
w <- w - M(gamma^2 H(w)) or a frozen-Jacobian least-squares Newton step in
a compact symmetric basis.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import ball_geometry as bg
from .curvature import (catenoid_region_H_exact, disk_graph_H_exact,
                        parametric_mean_curvature)
from .green_functions import GreenSeries, green_Gn_with_bound
from .linear_analysis import (jacobi_mode_solve, solve_jacobi, solve_robin_disk,
                              weight_gamma)
from .matching import solve_matching
from .surface import RegionGrid, SurfaceAtlas, cutoff_eval

__all__ = [
    "GlobalField",
    "DeficiencyMatch",
    "SolveReport",
    "assemble_residual",
    "partition_decompose",
    "deficiency_match",
    "apply_approx_inverse",
    "solve_corrector",
    "SymmetricBasis",
    "residual_norm",
]


def _gamma_choice(params):
    # the puncture factor |z| belongs to the genus-1 weight only; z = 0 is
    # an interior point of the genus-0 surface
    return "full" if params.genus == 1 else "roots"


@dataclass
class GlobalField:
    """Per-region sampled scalar field stitched over the surface domain."""

    atlas: SurfaceAtlas
    grids: list
    values: dict  # key: grid index -> array on that grid

    @classmethod
    def zeros(cls, atlas, grids=None):
        grids = atlas.region_grids() if grids is None else grids
        vals = {i: np.zeros((len(g.p1), len(g.p2))) for i, g in enumerate(grids)}
        return cls(atlas, grids, vals)

    def copy(self):
        return GlobalField(self.atlas, self.grids,
                           {k: v.copy() for k, v in self.values.items()})

    def combine(self, other, a=1.0, b=1.0):
        return GlobalField(self.atlas, self.grids,
                           {k: a * v + b * other.values[k]
                            for k, v in self.values.items()})

    def scale(self, a):
        return GlobalField(self.atlas, self.grids,
                           {k: a * v for k, v in self.values.items()})

    def sup_norm(self, nu=0.0):
        """gamma^{-nu}-weighted sup over all region samples."""
        out = 0.0
        choice = _gamma_choice(self.atlas.params)
        for i, g in enumerate(self.grids):
            P1, P2 = g.mesh_params()
            z = g.z_of(P1, P2)
            gam = weight_gamma(z, self.atlas.params.n, choice)
            mask = g.mask()
            v = np.abs(self.values[i]) * gam ** (-nu)
            out = max(out, float(np.max(v[mask])))
        return out

    def symmetrize(self):
        """Project onto the symmetry class (average conjugate angles)."""
        for i, g in enumerate(self.grids):
            v = self.values[i]
            if g.chart == "disk" or g.chart == "neck":
                n2 = v.shape[1]
                idx = (-np.arange(n2)) % n2
                self.values[i] = 0.5 * (v + v[:, idx])
        return self


def region_weight(atlas, grid, P1=None, P2=None):
    """gamma^2 weight at the grid samples."""
    if P1 is None:
        P1, P2 = grid.mesh_params()
    z = grid.z_of(P1, P2)
    return weight_gamma(z, atlas.params.n, _gamma_choice(atlas.params)) ** 2


class _BaseCurvature:
    """Cached high-accuracy H(0) per region grid."""

    def __init__(self, atlas, grids):
        self.atlas = atlas
        self.grids = grids
        self.H0_best = {}
        self.H0_fd = {}
        self._gamma2 = {}
        for i, g in enumerate(grids):
            if g.region in ("cat0", "catm"):
                self.H0_best[i] = catenoid_region_H_exact(atlas, g)
            elif g.region in ("gr", "glu0"):
                P1, P2 = g.mesh_params()
                z = g.z_of(P1, P2)
                self.H0_best[i] = disk_graph_H_exact(atlas, z, sheet=g.sheet)
            else:
                self.H0_best[i] = parametric_mean_curvature(
                    atlas, g, route="pullback", stencil_h=1e-4)
            self.H0_fd[i] = parametric_mean_curvature(
                atlas, g, stencil_h=self._stencil_for(g))
            self._gamma2[i] = region_weight(atlas, g)

    def _stencil_for(self, g):
        # the graph grid reaches close to the unit circle; grid-spacing
        # stencils there would push the profile continuation too far out
        if g.region == "gr":
            return min(0.01, 0.25 / self.atlas.params.n)
        return None

    def residual(self, w_eval=None):
        """GlobalField of gamma^2 H(w); H(w) = H_best(0) + (H_fd(w) - H_fd(0))."""
        vals = {}
        for i, g in enumerate(self.grids):
            if w_eval is None:
                H = self.H0_best[i]
            else:
                Hw = parametric_mean_curvature(self.atlas, g, w=w_eval,
                                               stencil_h=self._stencil_for(g))
                H = self.H0_best[i] + (Hw - self.H0_fd[i])
            vals[i] = self._gamma2[i] * H
        return GlobalField(self.atlas, self.grids, vals)


def assemble_residual(atlas, w_eval=None, base=None):
    """gamma^2 H(w) on the atlas region grids as a GlobalField.

    ``w_eval`` is a callable of the disk coordinate z (or None for the
    unperturbed surface).  The unperturbed curvature is evaluated on each
    region's best route (analytic catenoid/graph formulas, small-stencil
    pullback in the bridge gluing bands); the perturbation enters through
    the grid-stencil difference H_fd(w) - H_fd(0), which cancels the
    stencil bias.
    """
    if base is None:
        base = _BaseCurvature(atlas, atlas.region_grids())
    return base.residual(w_eval), base


def residual_norm(fieldobj, nu=0.1):
    return fieldobj.sup_norm(nu=nu)


def partition_decompose(fieldobj: GlobalField, width=0.35):
    """Split a field into bump-localized components around 0 and the roots.

    Returns {"center": f0, "root_m": fm, "rest-check": sum-defect}; the
    bumps are functions of the bridge half-plane radius (fixed size, so the
    supports are n-independent neighborhoods of the singular points), and
    f0 picks up the complement, so f0 + sum fm = f exactly.
    """
    atlas = fieldobj.atlas
    n = atlas.params.n
    f0 = fieldobj.copy()
    fm = fieldobj.copy()
    defect = 0.0
    for i, g in enumerate(fieldobj.grids):
        P1, P2 = g.mesh_params()
        z = g.z_of(P1, P2)
        ang = np.mod(np.angle(z) + np.pi / n, 2 * np.pi / n) - np.pi / n
        znear = np.abs(z) * np.exp(1j * ang)
        zeta = bg.lambda_m_inverse(znear, n, n)
        x = np.abs(zeta) / width
        bump = 1.0 - cutoff_eval("theta", 2.0 * x - 1.0, atlas.params)
        fm.values[i] = bump * fieldobj.values[i]
        f0.values[i] = (1.0 - bump) * fieldobj.values[i]
        defect = max(defect, float(np.max(np.abs(
            fm.values[i] + f0.values[i] - fieldobj.values[i]))))
    return {"center": f0, "roots": fm, "partition_defect": defect}


@dataclass
class DeficiencyMatch:
    a0: float
    a1: float
    b0: float
    b1: float
    c0_star: float
    c1_star: float
    d0_star: float
    d1_star: float
    determinant: float

    def residuals(self, s_eps, n, c_n):
        r1 = (self.c0_star * n - self.b1 * n / 2 - 2 * n * self.b0
              + 2 * n * self.b0 * s_eps - 2 * n * self.b0 - self.d0_star)
        r2 = (self.c0_star * n + self.c1_star + self.b1 * (c_n - n / 2)
              - self.b0 * n - self.b1 - self.d0_star)
        return abs(r1), abs(r2)


def deficiency_match(c0_star, c1_star, d0_star, d1_star, s_eps, n, c_n,
                     genus=1):
    """Solve the gluing-zone matching system for the kernel amplitudes.

    The two reduced equations (a0 = 2n b0 and a1 = b1 substituted):

        (2 n s_eps - 4 n) b0 - (n/2) b1 = d0* - c0* n
        -n b0 + (c(n) - n/2 - 1) b1     = d0* - c0* n - c1*

    For genus 0 the neck row is dropped (b0 = a0 = 0) and the bridge row is
    solved for b1 alone.
    """
    if genus == 0:
        denom = c_n - n / 2.0 - 1.0
        b1 = (d1_star - c0_star * n - c1_star) / denom
        return DeficiencyMatch(a0=0.0, a1=b1, b0=0.0, b1=b1,
                               c0_star=c0_star, c1_star=c1_star,
                               d0_star=d0_star, d1_star=d1_star,
                               determinant=denom)
    A = np.array([[2 * n * s_eps - 4 * n, -n / 2.0],
                  [-float(n), c_n - n / 2.0 - 1.0]])
    rhs = np.array([d0_star - c0_star * n,
                    d0_star - c0_star * n - c1_star])
    det = float(np.linalg.det(A))
    if abs(det) < 1e-12:
        raise RuntimeError("deficiency matching system is singular")
    b0, b1 = np.linalg.solve(A, rhs)
    return DeficiencyMatch(a0=float(2 * n * b0), a1=float(b1), b0=float(b0),
                           b1=float(b1), c0_star=c0_star, c1_star=c1_star,
                           d0_star=d0_star, d1_star=d1_star, determinant=det)


class ApproximateInverse:
    """The construction's partition-of-unity approximate inverse M_app.

    Callable on a GlobalField f (gamma^2-weighted).  Returns a quotient
    field w_app: a callable of z plus region-aware evaluation, assembled as

        xi+ psi(z+) + xi- psi(z-) - eta0 v_cat0 - sum_m eta_m v_catm + kappa.
    """

    def __init__(self, atlas, base, delta=-0.9, nu=0.1):
        self.atlas = atlas
        self.base = base
        self.delta = delta
        self.nu = nu
        p = atlas.params
        self.n = p.n
        self.s_eps = float(np.arccosh(1.0 / p.eps_tilde)) if p.genus == 1 else 0.0
        self.series = GreenSeries(n=p.n)

    # -- stage 1: sheet sources on the disk -----------------------------

    def _disk_source(self, f: GlobalField):
        """Quotient source q(z) = f/gamma^2 interpolated onto a solver grid;
        the theta-split weight fades the deep-catenoid parts."""
        atlas = self.atlas
        p = atlas.params
        nr, nth = 193, 64
        r_min = (0.5 * p.eps_tilde if p.genus == 1 else
                 0.02 * p.eps ** (2 / 3))
        t = np.linspace(np.log(r_min), 0.0, nr)
        # half-offset angles keep the grid away from the roots of unity,
        # where the gamma^{-2} unweighting is singular
        th = 2 * np.pi * (np.arange(nth) + 0.5) / nth
        Z = np.exp(t)[:, None] * np.exp(1j * th)[None, :]
        g = self._eval_quotient_field(f, Z, unweight=True)
        # theta-split: fade with the + sheet's axial coordinate
        if p.genus == 1:
            s_ax = np.arccosh(np.maximum(np.abs(Z) / p.eps_tilde, 1.0))
            wt = cutoff_eval("theta", s_ax, p)
            g = g * wt
        ang = np.mod(np.angle(Z) + np.pi / self.n, 2 * np.pi / self.n) - np.pi / self.n
        znear = np.abs(Z) * np.exp(1j * ang)
        zeta = bg.lambda_m_inverse(znear, self.n, self.n)
        sg_ax = np.arccosh(np.maximum(2.0 * np.abs(zeta) / p.eps, 1.0))
        g = g * cutoff_eval("theta", sg_ax, p)
        return t, th, Z, g

    def _eval_quotient_field(self, f: GlobalField, Z, unweight=False):
        """Nearest-region bilinear interpolation of a GlobalField at Z."""
        atlas = self.atlas
        p = atlas.params
        out = np.zeros(Z.shape)
        filled = np.zeros(Z.shape, bool)
        r = np.abs(Z)
        ang = np.mod(np.angle(Z) + np.pi / self.n, 2 * np.pi / self.n) - np.pi / self.n
        znear = r * np.exp(1j * ang)
        zeta = bg.lambda_m_inverse(znear, self.n, self.n)
        rho = 2.0 * np.abs(zeta)
        theta = np.mod(np.angle(zeta), 2 * np.pi)

        def interp(grid, vals, X1, X2, sel):
            p1, p2 = grid.p1, grid.p2
            i = np.clip(np.searchsorted(p1, X1[sel]) - 1, 0, len(p1) - 2)
            j = np.clip(np.searchsorted(p2, X2[sel]) - 1, 0, len(p2) - 2)
            t1 = np.clip((X1[sel] - p1[i]) / (p1[i + 1] - p1[i]), 0, 1)
            t2 = np.clip((X2[sel] - p2[j]) / (p2[j + 1] - p2[j]), 0, 1)
            v = ((1 - t1) * (1 - t2) * vals[i, j] + t1 * (1 - t2) * vals[i + 1, j]
                 + (1 - t1) * t2 * vals[i, j + 1] + t1 * t2 * vals[i + 1, j + 1])
            out[sel] = v
            filled[sel] = True

        by_region = {}
        for i, g in enumerate(f.grids):
            by_region.setdefault((g.region, g.sheet), (g, f.values[i]))
        # bridge tube zone
        if ("catm", 0) in by_region:
            g, vals = by_region[("catm", 0)]
            sel = (rho <= atlas.rho_cat) & ~filled
            if np.any(sel):
                sg = np.arccosh(np.maximum(rho / p.eps, 1.0))
                interp(g, vals, sg, theta, sel)
        if ("glum", 1) in by_region:
            g, vals = by_region[("glum", 1)]
            sel = (rho > atlas.rho_cat) & (rho <= atlas.rho_glu) & ~filled
            if np.any(sel):
                interp(g, vals, np.log(np.maximum(rho, 1e-300)), theta, sel)
        if p.genus == 1:
            g, vals = by_region[("cat0", 0)]
            sel = (r < atlas.r_neck_in) & ~filled
            if np.any(sel):
                s_ax = np.arccosh(np.maximum(r / p.eps_tilde, 1.0))
                interp(g, vals, s_ax, np.mod(np.angle(Z), 2 * np.pi), sel)
            g, vals = by_region[("glu0", 1)]
            sel = (r >= atlas.r_neck_in) & (r < atlas.r_glu0_out) & ~filled
            if np.any(sel):
                interp(g, vals, np.log(np.maximum(r, 1e-300)),
                       np.mod(np.angle(Z), 2 * np.pi), sel)
        g, vals = by_region[("gr", 1)]
        sel = ~filled
        if np.any(sel):
            interp(g, vals, np.log(np.clip(r, np.exp(g.p1[0]), np.exp(g.p1[-1]))),
                   np.mod(np.angle(Z), 2 * np.pi), sel)
        if unweight:
            gam = weight_gamma(Z, self.n, _gamma_choice(p))
            out = out / np.maximum(gam, 1e-10) ** 2
        return out

    # -- stage 2: the Robin solve -----------------------------------------
    # The z -> z^n reduction (solve_robin_disk) compresses the neck to
    # radii eps_t^n, so the inverse works with the unreduced modal problem
    # Delta v = q, dv/dr - v = 0 at r = 1 (Robin coefficient 1; the
    # reduction remains a preprocessing mode of the component solver).  The
    # section-7-normalized constants c0* = c_hat/n and the transported c1*
    # quadrature are recovered for the deficiency system.

    def _robin_stage(self, t, th, Z, q):
        from .linear_analysis import _mode_bvp_logr, solve_robin_radial

        n = self.n
        nth = len(th)
        # cosine-mode amplitudes; the half-offset sample phase is undone
        raw = np.fft.rfft(q, axis=1) / nth
        phase = np.exp(1j * np.arange(raw.shape[1]) * (th[0]))
        spec_q = (raw * phase[None, :]).real
        kmax = min(nth // 2 - 1, 4 * n)
        r = np.exp(t)
        # mode 0 by the explicit quadrature (well-conditioned constant split)
        q0 = CubicSpline(r, spec_q[:, 0])

        def q0_ext(s):
            return q0(np.clip(s, r[0], 1.0))

        rad = solve_robin_radial(q0_ext, 1)
        c_hat = rad.c0_star           # v0 = Psi0 + c_hat, dv - v = 0 at 1
        c0_star = c_hat / n
        modes = {}
        for k in range(n, kmax + 1, n):
            qk = 2.0 * spec_q[:, k]
            if np.max(np.abs(qk)) < 1e-14 * max(np.max(np.abs(q)), 1e-300):
                continue
            modes[k] = _mode_bvp_logr(qk, t, k, 1)
        # c1*: radial constant of the half-plane problem at z_m, computed by
        # the transported quadrature on the bridge chart
        c1_star = self._c1_quadrature(t, th, q)
        return {"t": t, "r": r, "rad": rad, "c0_star": float(c0_star),
                "c_hat": float(c_hat), "c1_star": float(c1_star),
                "modes": modes}

    def _c1_quadrature(self, t, th, q, nrho=257, nang=32):
        from scipy.integrate import cumulative_simpson

        from ._kernels import smoothstep_quintic

        n = self.n
        x = np.linspace(0.0, 1.0, nrho) ** 3.0
        rho = x[1:] / 3.0
        ang = np.pi / 2 + np.pi * (np.arange(nang) + 0.5) / nang
        zeta = rho[:, None] * np.exp(1j * ang)[None, :]
        ZZ = (1.0 + zeta) / (1.0 - zeta)      # reduced-disk coordinate
        zz = ZZ ** (1.0 / n)                  # principal unreduced branch
        chi = 1.0 - smoothstep_quintic((np.abs(zeta) - 0.2) / (1 / 3 - 0.2))
        # evaluate q at zz by spline interpolation of its angular modes
        raw = np.fft.rfft(q, axis=1) / q.shape[1]
        phase = np.exp(1j * np.arange(raw.shape[1]) * th[0])
        spec_q = (raw * phase[None, :]).real
        r = np.exp(t)
        val = np.zeros(zz.shape)
        rr = np.clip(np.abs(zz), r[0], 1.0)
        for k in range(0, min(q.shape[1] // 2, 4 * n) + 1, n):
            qk = spec_q[:, k] * (1 if k == 0 else 2)
            if np.max(np.abs(qk)) < 1e-300:
                continue
            val += CubicSpline(r, qk)(rr) * np.cos(k * np.angle(zz))
        F = np.abs(zz) ** (2.0 - 2 * n) * val / n**2
        Fhat = np.abs(1.0 - zeta) ** 4 / 4.0 * chi * F
        Fmean = Fhat.mean(axis=1)
        xs = np.concatenate([[0.0], rho])
        ys = np.concatenate([[0.0], rho * Fmean])
        inner = cumulative_simpson(ys, x=xs, initial=0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            gg = np.where(xs > 0, inner / np.maximum(xs, 1e-300), 0.0)
        return -float(cumulative_simpson(gg, x=xs, initial=0.0)[-1])

    def _psi_eval_factory(self, dec):
        r = dec["r"]
        rad = dec["rad"]
        v0 = CubicSpline(rad.r, rad.psi0)
        c_hat = dec["c_hat"]
        mode_spl = {k: CubicSpline(r, wk) for k, wk in dec["modes"].items()}
        r_lo = r[0]

        def psi(z):
            z = np.asarray(z, dtype=np.complex128)
            rr = np.clip(np.abs(z), r_lo, 1.0)
            v = v0(rr) + c_hat
            ang = np.angle(z)
            for k, sp in mode_spl.items():
                v = v + sp(rr) * np.cos(k * ang)
            return v / bg.eval_B(z)

        return psi

    # -- stage 3: catenoid corrections ------------------------------------

    def _linearized(self, w_eval, t_scale):
        """gamma^2 L w via the centered difference of the residual."""
        tt = 1e-3 * t_scale
        rp = self.base.residual(lambda z: tt * w_eval(z))
        rm = self.base.residual(lambda z: -tt * w_eval(z))
        return rp.combine(rm, 1.0 / (2 * tt), -1.0 / (2 * tt))

    def __call__(self, f: GlobalField, report=False):
        atlas = self.atlas
        p = atlas.params
        n = self.n
        # Robin stage
        t, th, Z, q = self._disk_source(f)
        dec = self._robin_stage(t, th, Z, q)
        psi = self._psi_eval_factory(dec)
        psi_field = _QuotientPsi(atlas, psi, self.s_eps)
        # error after the graph stage
        h = f.combine(self._linearized(psi_field, p.eps), 1.0, -1.0)
        # catenoid corrections from the localized error
        parts = partition_decompose(h)
        d0 = 0.0
        v0 = None
        if p.genus == 1:
            d0, v0 = self._neck_solve(parts["center"])
        d1, vm = self._bridge_solve(parts["roots"])
        dm = deficiency_match(dec["c0_star"], dec["c1_star"], d0, d1,
                              self.s_eps, n, p.c_n, genus=p.genus)
        w_app = _CompositeW(atlas, psi, v0, vm, dm, self.s_eps)
        if not report:
            return w_app
        return w_app, {"c0_star": dec["c0_star"], "c1_star": dec["c1_star"],
                       "d0_star": d0, "d1_star": d1, "match": dm}

    def _neck_solve(self, f0: GlobalField):
        atlas = self.atlas
        p = atlas.params
        idx = [i for i, g in enumerate(f0.grids) if g.region == "cat0"][0]
        grid = f0.grids[idx]
        vals = f0.values[idx]
        P1, P2 = grid.mesh_params()
        z = grid.z_of(P1, P2)
        gam = weight_gamma(z, self.n, _gamma_choice(p))
        src = 2.0 * p.eps_tilde**2 * np.cosh(P1) ** 2 / gam**2 * vals
        sp_modes = _cylinder_modes(grid.p1, grid.p2, src, kstep=self.n)

        def f_cyl(s, phi):
            return _eval_cylinder_modes(sp_modes, s, phi, grid.p1[-1])

        from .linear_analysis import neck_scale_transform, neck_scale_inverse

        F = neck_scale_transform(f_cyl, self.n)
        sol, d0 = solve_jacobi(F, "neck_scaled", self.delta, n=self.n,
                               kmax=self.n)
        v = neck_scale_inverse(lambda s, ph: sol(s, ph) - d0, self.n)
        return d0, v

    def _bridge_solve(self, fm: GlobalField):
        atlas = self.atlas
        p = atlas.params
        idx = [i for i, g in enumerate(fm.grids) if g.region == "catm"][0]
        grid = fm.grids[idx]
        vals = fm.values[idx]
        P1, P2 = grid.mesh_params()
        z = grid.z_of(P1, P2)
        gam = weight_gamma(z, self.n, _gamma_choice(p))
        src = p.eps**2 * np.cosh(P1) ** 2 / gam**2 * vals
        sp_modes = _cylinder_modes(grid.p1, grid.p2, src, kstep=2,
                                   base=np.pi / 2, half=True)

        def f_cyl(sg, th):
            return _eval_cylinder_modes(sp_modes, sg, th, grid.p1[-1],
                                        base=np.pi / 2)

        sol, d1 = solve_jacobi(f_cyl, "half_bridge", self.delta, kmax=8)

        def v(sg, thv):
            return sol(sg, thv) - d1

        return d1, v


def _cylinder_modes(p1, p2, vals, kstep=1, base=0.0, half=False):
    """Even-mode splines of a cylinder field, tapered to 0 beyond the grid."""
    out = {}
    span = p2[-1] - p2[0] if half else 2 * np.pi
    wgt = np.ones(len(p2))
    taper = np.clip((p1[-1] - np.abs(p1)) / max(p1[-1] * 0.2, 1.0), 0.0, 1.0)
    kcap = max(kstep, (len(p2) // 2 - 1) // kstep * kstep)
    for k in range(0, min(9 * kstep, kcap + 1), kstep):
        ck = np.cos(k * (p2 - base))
        norm = np.sum(ck * ck * wgt)
        if norm < 1e-14:
            continue
        coef = (vals * (ck * wgt)[None, :]).sum(axis=1) / norm
        coef = coef * taper
        if np.max(np.abs(coef)) < 1e-300:
            continue
        sym = 0.5 * (coef + coef[::-1])
        out[k] = (CubicSpline(p1, sym), base)
    return out


def _eval_cylinder_modes(mode_spl, s, phi, s_max, base=0.0):
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros(np.broadcast_shapes(np.shape(s), np.shape(phi)))
    sc = np.clip(s, -s_max, s_max)
    damp = np.exp(-np.maximum(np.abs(s) - s_max, 0.0))
    for k, (sp, b) in mode_spl.items():
        out = out + sp(sc) * np.cos(k * (np.asarray(phi) - b)) * damp
    return out


class _QuotientPsi:
    """xi+ psi(z+) + xi- psi(z-) as a callable of the quotient coordinate."""

    def __init__(self, atlas, psi, s_eps):
        self.atlas = atlas
        self.psi = psi
        self.s_eps = s_eps

    def __call__(self, z):
        z = np.asarray(z, dtype=np.complex128)
        p = self.atlas.params
        val = self.psi(z)
        if p.genus != 1:
            return val
        # inside the neck zone both transported copies contribute, glued by
        # the xi indicator over the lower gluing band
        r = np.abs(z)
        s_ax = np.arccosh(np.maximum(r / p.eps_tilde, 1.0))
        sg = self.atlas.s_in
        Sg = float(np.arccosh(self.atlas.r_glu0_out / p.eps_tilde))
        xi_minus = cutoff_eval("xi", (s_ax - sg) / max(Sg - sg, 1e-9), p)
        sel = s_ax < Sg + 2.0
        if np.any(sel):
            z_minus = np.exp(-s_ax[sel] - self.s_eps) * np.exp(1j * np.angle(z[sel]))
            val = val.copy()
            val[sel] = val[sel] + (1.0 - xi_minus[sel]) * self.psi(z_minus)
        return val


class _CompositeW:
    """w_app = psi-blend - eta0 v0 - sum_m eta_m v_m + kappa, on the quotient."""

    def __init__(self, atlas, psi, v0, vm, dm: DeficiencyMatch, s_eps):
        self.atlas = atlas
        self.psi_blend = _QuotientPsi(atlas, psi, s_eps)
        self.v0 = v0
        self.vm = vm
        self.dm = dm
        self.s_eps = s_eps
        self.series = GreenSeries(n=atlas.params.n)

    def __call__(self, z):
        atlas = self.atlas
        p = atlas.params
        n = p.n
        z = np.asarray(z, dtype=np.complex128)
        out = np.asarray(self.psi_blend(z), dtype=np.float64).copy()
        r = np.abs(z)
        ang = np.mod(np.angle(z) + np.pi / n, 2 * np.pi / n) - np.pi / n
        zeta = bg.lambda_m_inverse(r * np.exp(1j * ang), n, n)
        rho = 2.0 * np.abs(zeta)
        theta = np.mod(np.angle(zeta), 2 * np.pi)
        dm = self.dm
        # catenoid corrections
        if self.v0 is not None and p.genus == 1:
            eta0 = cutoff_eval("eta0", r, p)
            selv = eta0 > 0
            if np.any(selv):
                s_ax = np.arccosh(np.maximum(r[selv] / p.eps_tilde, 1.0))
                out[selv] -= eta0[selv] * self.v0(s_ax, np.angle(z[selv]))
        etam = cutoff_eval("etabar", rho, p)
        selm = etam > 0
        if np.any(selm):
            sg_ax = np.arccosh(np.maximum(rho[selm] / p.eps, 1.0))
            out[selm] -= etam[selm] * self.vm(sg_ax, theta[selm])
        # deficiency terms
        kap_m = cutoff_eval("kappabar", np.abs(zeta), p)
        u_m = 1.0 - np.arccosh(np.maximum(rho / p.eps, 1.0)) * np.tanh(
            np.arccosh(np.maximum(rho / p.eps, 1.0)))
        kappa = kap_m * (dm.a1 * u_m + dm.d1_star)
        if p.genus == 1:
            kap_0 = cutoff_eval("kappa0", r, p)
            s_ax = np.arccosh(np.maximum(r / p.eps_tilde, 1.0))
            u_0 = 1.0 - s_ax * np.tanh(s_ax)
            kappa = kappa + kap_0 * (dm.a0 * u_0 + dm.d0_star)
        else:
            kap_0 = np.zeros_like(kap_m)
        outer = np.clip(1.0 - kap_0 - kap_m, 0.0, 1.0)
        sel = outer > 0
        if np.any(sel):
            zo = z[sel]
            chi_n = _chi_n(zo, n)
            G_t = (-n - n * np.log(np.maximum(np.abs(zo), 1e-300))) / bg.eval_B(zo)
            gval, _ = green_Gn_with_bound(zo**n, self.series)
            G_p = gval / bg.eval_B(zo)
            kappa[sel] = kappa[sel] + outer[sel] * (
                dm.c0_star * n + dm.c1_star * chi_n
                + dm.b0 * G_t + dm.b1 * G_p)
        return out + kappa


def _chi_n(z, n):
    """The fixed deficiency cutoff chi(z^n): 1 near the roots, 0 near 0."""
    zeta = (z**n - 1.0) / (z**n + 1.0)
    x = (np.abs(zeta) - 0.2) / (1.0 / 3.0 - 0.2)
    from ._kernels import smoothstep_quintic

    return 1.0 - smoothstep_quintic(x)


# ----------------------------------------------------------------------
# corrector iteration
# ----------------------------------------------------------------------

class SymmetricBasis:
    """Compact analytic basis of symmetric perturbation fields.

    Disk elements: even-reflected log-radial gaussians times cos(j n phi);
    neck elements: gaussians in the axial coordinate times cos(j n phi);
    bridge elements: axial gaussians times the wall-Neumann modes
    cos(2k(theta - pi/2)) in the nearest-root half-plane chart.
    """

    def __init__(self, atlas, n_disk=10, n_neck=8, n_bridge=24, jmax=2):
        self.atlas = atlas
        p = atlas.params
        n = p.n
        self.elements = []
        r_lo = atlas.r_glu0_out if p.genus == 1 else 0.05
        mus = np.linspace(np.log(r_lo), 0.0, n_disk)
        wid = (mus[1] - mus[0]) * 1.2 if n_disk > 1 else 1.0

        def mk_disk(mu, j):
            def f(z):
                x = np.log(np.maximum(np.abs(z), 1e-300))
                prof = np.exp(-((x - mu) / wid) ** 2) + np.exp(-((x + mu) / wid) ** 2)
                return prof * np.cos(j * n * np.angle(z))
            return f

        for mu in mus:
            for j in range(jmax + 1):
                self.elements.append(("disk", mk_disk(mu, j)))
        if p.genus == 1:
            s_hi = atlas.s_in + 1.5
            cs = np.linspace(0.0, s_hi, n_neck)
            widn = (cs[1] - cs[0]) * 1.2

            def mk_neck(c, j):
                def f(z):
                    s = np.arccosh(np.maximum(np.abs(z) / p.eps_tilde, 1.0))
                    prof = np.exp(-((s - c) / widn) ** 2) + np.exp(-((s + c) / widn) ** 2)
                    cutoff = np.exp(-np.maximum(s - s_hi - 2.0, 0.0) ** 2)
                    return prof * cutoff * np.cos(j * n * np.angle(z))
                return f

            for c in cs:
                for j in range(jmax + 1):
                    self.elements.append(("neck", mk_neck(c, j)))
        sg_hi = atlas.sigma_in + 1.5
        cb = np.linspace(0.0, sg_hi, n_bridge)
        widb = (cb[1] - cb[0]) * 1.2

        def mk_bridge(c, k):
            def f(z):
                ang = np.mod(np.angle(z) + np.pi / n, 2 * np.pi / n) - np.pi / n
                zeta = bg.lambda_m_inverse(np.abs(z) * np.exp(1j * ang), n, n)
                sg = np.arccosh(np.maximum(2.0 * np.abs(zeta) / p.eps, 1.0))
                th = np.angle(zeta)
                prof = np.exp(-((sg - c) / widb) ** 2) + np.exp(-((sg + c) / widb) ** 2)
                cutoff = np.exp(-np.maximum(sg - sg_hi - 2.0, 0.0) ** 2)
                return prof * cutoff * np.cos(2 * k * (th - np.pi / 2))
            return f

        for c in cb:
            for k in range(3):
                self.elements.append(("bridge", mk_bridge(c, k)))

    def __len__(self):
        return len(self.elements)

    def combine(self, coefs):
        elements = self.elements

        def w(z):
            out = np.zeros(np.shape(z))
            for c, (_kind, f) in zip(coefs, elements):
                if c != 0.0:
                    out = out + c * f(z)
            return out

        return w


@dataclass
class SolveReport:
    n: int
    genus: int
    mode: str
    initial_residual: float
    residuals: list
    final_residual: float
    converged: bool
    diverged: bool
    iterations: int
    orthogonality_initial: float = None
    orthogonality_final: float = None
    deficiency: dict = None
    params: dict = None
    monotone: bool = True

    def to_dict(self):
        return {
            "n": self.n, "genus": self.genus, "mode": self.mode,
            "initial_residual": self.initial_residual,
            "residuals": list(self.residuals),
            "final_residual": self.final_residual,
            "converged": self.converged, "diverged": self.diverged,
            "iterations": self.iterations,
            "orthogonality_initial": self.orthogonality_initial,
            "orthogonality_final": self.orthogonality_final,
            "deficiency": self.deficiency, "params": self.params,
            "monotone": self.monotone,
        }


def _jacobian(atlas, base, basis, nu):
    cols = []
    scales = {"disk": atlas.params.eps, "neck": atlas.params.eps_tilde or atlas.params.eps,
              "bridge": atlas.params.eps}
    weights = _row_weights(atlas, base, nu)
    for kind, f in basis.elements:
        t = 1e-4 * scales[kind]
        rp = base.residual(lambda z: t * f(z))
        rm = base.residual(lambda z: -t * f(z))
        dr = rp.combine(rm, 1.0 / (2 * t), -1.0 / (2 * t))
        cols.append(_flatten(dr) * weights)
    return np.stack(cols, axis=1), weights


def _flatten(fieldobj):
    out = []
    for i, g in enumerate(fieldobj.grids):
        mask = g.mask()
        out.append(fieldobj.values[i][mask])
    return np.concatenate(out)


def _row_weights(atlas, base, nu):
    out = []
    choice = _gamma_choice(atlas.params)
    for g in base.grids:
        P1, P2 = g.mesh_params()
        z = g.z_of(P1, P2)
        gam = weight_gamma(z, atlas.params.n, choice) ** (-nu)
        out.append(gam[g.mask()])
    return np.concatenate(out)


def solve_corrector(atlas, mode="newton", tol=None, max_iter=5, nu=0.1,
                    delta=-0.9, basis=None, base=None):
    """Drive the weighted residual ||gamma^2 H(w)|| toward zero.

    mode="newton": frozen-Jacobian least-squares steps in the symmetric
    basis (the discretized DH dw = -H system).  mode="banach": the
    fixed-point iteration w <- -M(gamma^2(H(0) + Q(w))) with the
    approximate inverse M refined by Richardson iterations.

    Returns (w_eval, coefs_or_None, SolveReport).
    """
    p = atlas.params
    if base is None:
        base = _BaseCurvature(atlas, atlas.region_grids())
    r0_field = base.residual(None)
    r0 = residual_norm(r0_field, nu)
    if tol is None:
        tol = 0.05 * r0
    residuals = [r0]
    diverged = False
    if mode == "newton":
        if basis is None:
            basis = SymmetricBasis(atlas)
        J, weights = _jacobian(atlas, base, basis, nu)
        coefs = np.zeros(len(basis))
        w_eval = basis.combine(coefs)
        JTJ = J.T @ J + 1e-10 * np.trace(J.T @ J) / J.shape[1] * np.eye(J.shape[1])
        for _it in range(max_iter):
            r_field = base.residual(w_eval if np.any(coefs) else None)
            r = _flatten(r_field) * weights
            step = np.linalg.solve(JTJ, J.T @ r)
            coefs = coefs - step
            w_eval = basis.combine(coefs)
            rn = residual_norm(base.residual(w_eval), nu)
            residuals.append(rn)
            if len(residuals) >= 3 and residuals[-1] > residuals[-2] > residuals[-3]:
                diverged = True
                break
            if rn <= tol:
                break
        final = residuals[-1]
        rep = SolveReport(n=p.n, genus=p.genus, mode=mode,
                          initial_residual=r0, residuals=residuals,
                          final_residual=final, converged=final <= tol,
                          diverged=diverged, iterations=len(residuals) - 1,
                          monotone=all(np.diff(residuals) <= 1e-12))
        return w_eval, coefs, rep
    if mode == "banach":
        Mapp = ApproximateInverse(atlas, base, delta=delta, nu=nu)
        w_eval = None
        w_prev = None
        for _it in range(max_iter):
            if w_eval is None:
                rhs = r0_field
            else:
                rp = base.residual(w_eval)
                rm = base.residual(lambda z: -w_eval(z))
                rhs = rp.combine(rm, 0.5, 0.5)
            w_new = Mapp(rhs)
            if w_eval is None:
                w_eval = lambda z, f=w_new: -f(z)
            else:
                w_eval = lambda z, f=w_new: -f(z)
            rn = residual_norm(base.residual(w_eval), nu)
            residuals.append(rn)
            if len(residuals) >= 3 and residuals[-1] > residuals[-2] > residuals[-3]:
                diverged = True
                break
            if rn <= tol:
                break
        final = residuals[-1]
        rep = SolveReport(n=p.n, genus=p.genus, mode=mode,
                          initial_residual=r0, residuals=residuals,
                          final_residual=final, converged=final <= tol,
                          diverged=diverged, iterations=len(residuals) - 1,
                          monotone=all(np.diff(residuals) <= 1e-12))
        return w_eval, None, rep
    raise ValueError(f"unknown mode {mode!r}")
