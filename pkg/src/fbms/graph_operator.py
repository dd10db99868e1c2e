"""Mean curvature of vertical graphs over the horizontal disk.

A graph z -> calX(z, u(z)) has mean curvature

    H(u) = (1/(A(u)^3 B)) div( A(u)^2 B^2 grad u / W ) + 2 W sinh u,
    W = sqrt(1 + B^2 |grad u|^2),

with the flat metric of the disk computing grad/div.  The linearization at
u = 0 is L_gr v = Delta(B v).  Discretization: spectral (FFT) collocation in
the angle, second-order centered differences in the radius with a parity
ghost row across r = 0 and one-sided closure at r = 1.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .ball_geometry import eval_A, eval_B

__all__ = [
    "InvalidFieldError",
    "DiskField",
    "mean_curvature_graph",
    "linearized_graph_operator",
    "area_functional",
    "unit_normal_graph",
    "orthogonality_defect",
    "chart_radial_tangent",
    "chart_vertical_tangent",
]


class InvalidFieldError(ValueError):
    """Input field violates the operator's domain (NaN or over-steep)."""


@dataclass(frozen=True)
class DiskField:
    """Real samples u(r_i, phi_j) on a uniform polar tensor grid.

    The radii are staggered, r_i = (2i + 1)/(2 nr - 1), so the first node
    sits at half a spacing from the origin (the parity ghost row across
    r = 0 is then exactly the (r_0, phi + pi) row) and the last node is on
    the boundary circle r = 1.  The angles are uniform on the full circle.
    Declared symmetries: invariance under rotation by 2 pi / rotation_order,
    invariance under conjugation (phi -> -phi), and the flip_odd tag marking
    the u -> -u pairing of the two sheets.
    """

    values: np.ndarray
    rotation_order: int = 1
    conjugation_even: bool = False
    flip_odd: bool = False
    r: np.ndarray = field(init=False, repr=False)
    phi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 4 or v.shape[1] < 4:
            raise ValueError("DiskField needs an (nr >= 4, nphi >= 4) grid")
        nr, nphi = v.shape
        if nphi % 2 or nphi % max(self.rotation_order, 1):
            raise ValueError("nphi must be even and divisible by the rotation order")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "r", (2.0 * np.arange(nr) + 1.0) / (2 * nr - 1))
        object.__setattr__(self, "phi", 2.0 * np.pi * np.arange(nphi) / nphi)

    @classmethod
    def from_function(cls, f, nr, nphi, **symmetry):
        r = (2.0 * np.arange(nr) + 1.0) / (2 * nr - 1)
        phi = 2.0 * np.pi * np.arange(nphi) / nphi
        z = r[:, None] * np.exp(1j * phi[None, :])
        return cls(np.asarray(f(z), dtype=np.float64), **symmetry)

    @property
    def dr(self):
        return 2.0 / (2 * self.values.shape[0] - 1)

    @property
    def dphi(self):
        return 2.0 * np.pi / self.values.shape[1]

    @property
    def z(self):
        return self.r[:, None] * np.exp(1j * self.phi[None, :])

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=np.float64))

    def symmetrize(self):
        """Project onto the declared symmetry class (group averaging)."""
        v = self.values
        if self.rotation_order > 1:
            shift = v.shape[1] // self.rotation_order
            v = np.mean([np.roll(v, k * shift, axis=1)
                         for k in range(self.rotation_order)], axis=0)
        if self.conjugation_even:
            v = 0.5 * (v + np.roll(v[:, ::-1], 1, axis=1))
        return self.with_values(v)

    def symmetry_defect(self):
        return float(np.max(np.abs(self.values - self.symmetrize().values)))

    # -- discrete derivatives ------------------------------------------

    def _ghost_row(self):
        # value at radius -dr: u(-dr, phi) = u(dr, phi + pi)
        return np.roll(self.values[0], self.values.shape[1] // 2)

    def d_phi(self, order=1):
        v = self.values
        k = np.fft.rfftfreq(v.shape[1], d=1.0 / v.shape[1])
        spec = np.fft.rfft(v, axis=1)
        if order == 1:
            kk = 1j * k
            if v.shape[1] % 2 == 0:
                kk = kk.copy()
                kk[-1] = 0.0  # drop the unpaired Nyquist derivative
        elif order == 2:
            kk = -(k**2)
        else:
            raise ValueError("order must be 1 or 2")
        return np.fft.irfft(spec * kk, n=v.shape[1], axis=1)

    def d_r(self):
        v = self.values
        dr = self.dr
        out = np.empty_like(v)
        out[1:-1] = (v[2:] - v[:-2]) / (2 * dr)
        out[0] = (v[1] - self._ghost_row()) / (2 * dr)
        out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * dr)
        return out

    def d_rr(self):
        v = self.values
        dr = self.dr
        out = np.empty_like(v)
        out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / dr**2
        out[0] = (v[1] - 2 * v[0] + self._ghost_row()) / dr**2
        out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / dr**2
        return out

    def gradient(self):
        """Flat gradient in the polar frame: (u_r, u_phi / r)."""
        return self.d_r(), self.d_phi() / self.r[:, None]

    def laplacian(self):
        return (self.d_rr() + self.d_r() / self.r[:, None]
                + self.d_phi(order=2) / self.r[:, None] ** 2)

    def boundary_radial_derivative(self):
        """One-sided second-order du/dr on the ring r = 1."""
        v = self.values
        return (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * self.dr)


def _check_domain(u: DiskField):
    v = u.values
    if not np.all(np.isfinite(v)):
        raise InvalidFieldError("field contains non-finite values")
    gr, gp = u.gradient()
    B = eval_B(u.z)
    steep = np.sqrt(gr**2 + gp**2) * B
    if np.max(np.abs(v)) > 1.0 or np.max(steep) > 1.0:
        raise InvalidFieldError(
            "C^1 surrogate bound violated: sup(|u|, B|grad u|) > 1")
    return gr, gp, B


def _divergence(u: DiskField, Fr, Fp):
    """Flat divergence (1/r) d_r(r F_r) + (1/r) d_phi F_phi on u's grid."""
    r = u.r[:, None]
    rFr = u.with_values(r * Fr)
    return rFr.d_r() / r + u.with_values(Fp).d_phi() / r


def mean_curvature_graph(u: DiskField) -> DiskField:
    """Mean curvature H(u) of the graph calX(z, u(z)), sampled on u's grid."""
    gr, gp, B = _check_domain(u)
    A = eval_A(u.z, u.values)
    W = np.sqrt(1.0 + B**2 * (gr**2 + gp**2))
    coef = A**2 * B**2 / W
    div = _divergence(u, coef * gr, coef * gp)
    H = div / (A**3 * B) + 2.0 * W * np.sinh(u.values)
    return u.with_values(H)


def linearized_graph_operator(v: DiskField) -> DiskField:
    """L_gr v = Delta(B v) with the flat disk Laplacian."""
    B = eval_B(v.z)
    return v.with_values(v.with_values(B * v.values).laplacian())


def area_functional(u: DiskField) -> float:
    """Area of the graph: integral of A(u)^2 sqrt(1 + B^2 |grad u|^2).

    Trapezoidal quadrature in r (the r = 0 node carries measure zero) and
    the uniform-angle rule; u = 0 gives the disk area pi.
    """
    gr, gp, B = _check_domain(u)
    A = eval_A(u.z, u.values)
    W = np.sqrt(1.0 + B**2 * (gr**2 + gp**2))
    integrand = A**2 * W * u.r[:, None]
    radial = np.concatenate([np.zeros((1, integrand.shape[1])), integrand], axis=0)
    x = np.concatenate([[0.0], u.r])
    return float(np.trapezoid(radial, x=x, axis=0).sum() * u.dphi)


def unit_normal_graph(u: DiskField):
    """Unit normal N = (-B grad u + (1/B) d_x3) / (A(u) W) in the chart frame.

    Returns an (nr, nphi, 3) array of components in the orthogonal frame
    (e_r, e_phi, d_x3) of the cylinder chart; unit length in the metric
    A^2 (dz^2 + B^2 dx3^2).
    """
    gr, gp, B = _check_domain(u)
    A = eval_A(u.z, u.values)
    W = np.sqrt(1.0 + B**2 * (gr**2 + gp**2))
    fac = 1.0 / (A * W)
    return np.stack([-B * gr * fac, -B * gp * fac, fac / B], axis=-1)


def chart_radial_tangent(r, phi, x3, dx3_dr):
    """d/dr of calX(r e^{i phi}, x3(r)) with analytic chart derivatives."""
    r = np.asarray(r, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    x3 = np.asarray(x3, dtype=np.float64)
    z = r * np.exp(1j * phi)
    B = eval_B(z)
    A = eval_A(z, x3)
    sh, ch = np.sinh(x3), np.cosh(x3)
    dB = r
    dA = -(A**2) * (ch - 1.0) * dB
    e = np.exp(1j * phi)
    horiz = dA * z + A * e
    vert = dA * B * sh + A * dB * sh
    Tr = np.stack(np.broadcast_arrays(horiz.real, horiz.imag, vert), axis=-1)
    Tx3 = chart_vertical_tangent(z, x3)
    return Tr + np.asarray(dx3_dr)[..., None] * Tx3


def chart_vertical_tangent(z, x3):
    """d/dx3 of calX(z, x3)."""
    z = np.asarray(z, dtype=np.complex128)
    x3 = np.asarray(x3, dtype=np.float64)
    B = eval_B(z)
    A = eval_A(z, x3)
    sh, ch = np.sinh(x3), np.cosh(x3)
    dA = -(A**2) * B * sh
    horiz = dA * z
    vert = dA * B * sh + A * B * ch
    return np.stack(np.broadcast_arrays(horiz.real, horiz.imag, vert), axis=-1)


def _defect_from_tangents(T, P):
    nT = np.linalg.norm(T, axis=-1)
    nP = np.linalg.norm(P, axis=-1)
    if np.any(nT < 1e-14):
        raise ValueError("degenerate boundary tangent")
    cosang = np.abs(np.sum(T * P, axis=-1)) / (nT * nP)
    return float(np.max(1.0 - cosang))


def orthogonality_defect(surface, step=None):
    """Deviation of the boundary tangent from the sphere normal direction.

    The graph (or surface) meets S^2 orthogonally iff the tangent in the
    boundary-transverse direction is collinear with the sphere normal
    (= the boundary point itself); the defect is max(1 - |cos angle|) over
    the boundary ring.

    Accepts either a :class:`DiskField` (the radial tangent is assembled
    from analytic chart derivatives plus the one-sided du/dr of the field)
    or an array of sample rows of shape (k, m, 3) marching toward the
    boundary, the last row on S^2, with ``step`` the parameter spacing.
    """
    if isinstance(surface, DiskField):
        ur1 = surface.boundary_radial_derivative()
        u1 = surface.values[-1]
        T = chart_radial_tangent(1.0, surface.phi, u1, ur1)
        P = np.stack([np.cos(surface.phi), np.sin(surface.phi),
                      np.zeros_like(surface.phi)], axis=-1)
        # boundary point calX(e^{i phi}, u) = (z, sinh u)/cosh u
        P = np.stack([np.cos(surface.phi) / np.cosh(u1),
                      np.sin(surface.phi) / np.cosh(u1),
                      np.tanh(u1)], axis=-1)
        return _defect_from_tangents(T, P)
    rows = np.asarray(surface, dtype=np.float64)
    if rows.ndim != 3 or rows.shape[0] < 2 or rows.shape[2] != 3:
        raise ValueError("expected sample rows of shape (k, m, 3)")
    if step is None:
        raise ValueError("sample-row mode requires the parameter step")
    if rows.shape[0] >= 3:
        T = (3 * rows[-1] - 4 * rows[-2] + rows[-3]) / (2 * step)
    else:
        T = (rows[-1] - rows[-2]) / step
    return _defect_from_tangents(T, rows[-1])
