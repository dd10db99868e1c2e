"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time: numba is used when it imports
cleanly and the environment variable ``FBMS_DISABLE_NUMBA`` is unset/empty.
Both implementations of every kernel are kept importable (``*_numpy`` /
``*_numba``) so the benchmark suite can time them against each other.

Set ``FBMS_DISABLE_NUMBA=1`` to force the numpy path.
"""

import os

import numpy as np

_DISABLED = bool(os.environ.get("FBMS_DISABLE_NUMBA", ""))

try:  # pragma: no cover - exercised via the env flag in tests
    if _DISABLED:
        raise ImportError("numba disabled by FBMS_DISABLE_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        def wrapper(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrapper


# ----------------------------------------------------------------------
# power series  sum_j c_j z^j  (c 1-based: c[0] multiplies z^1)
# ----------------------------------------------------------------------

def power_series_numpy(z, coeffs):
    """Evaluate sum_{j>=1} coeffs[j-1] * z**j by Horner's scheme."""
    z = np.asarray(z, dtype=np.complex128)
    acc = np.zeros_like(z)
    for c in coeffs[::-1]:
        acc = z * (c + acc)
    return acc


@njit(cache=True)
def _power_series_numba(z_flat, coeffs):
    out = np.zeros(z_flat.shape[0], dtype=np.complex128)
    for i in range(z_flat.shape[0]):
        z = z_flat[i]
        acc = 0.0 + 0.0j
        for k in range(coeffs.shape[0] - 1, -1, -1):
            acc = z * (coeffs[k] + acc)
        out[i] = acc
    return out


def power_series_numba(z, coeffs):
    z = np.asarray(z, dtype=np.complex128)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    return _power_series_numba(np.ascontiguousarray(z.ravel()), coeffs).reshape(z.shape)


# ----------------------------------------------------------------------
# quintic smoothstep (C^2, zero first and second derivatives at 0 and 1)
# ----------------------------------------------------------------------

def smoothstep_quintic_numpy(x):
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


@njit(cache=True)
def _smoothstep_quintic_numba(x_flat):
    out = np.empty(x_flat.shape[0])
    for i in range(x_flat.shape[0]):
        x = x_flat[i]
        if x <= 0.0:
            out[i] = 0.0
        elif x >= 1.0:
            out[i] = 1.0
        else:
            out[i] = x * x * x * (x * (6.0 * x - 15.0) + 10.0)
    return out


def smoothstep_quintic_numba(x):
    x = np.asarray(x, dtype=np.float64)
    return _smoothstep_quintic_numba(np.ascontiguousarray(x.ravel())).reshape(x.shape)


# ----------------------------------------------------------------------
# flat polar Laplacian, centered second order, parity ghost row across r=0
# ----------------------------------------------------------------------

def polar_laplacian_numpy(u, r, dphi, parity_center):
    """Flat Laplacian u_rr + u_r/r + u_pp/r^2 on a uniform (r, phi) grid.

    ``u`` has shape (nr, nphi); the angle is periodic.  When
    ``parity_center`` is true the grid is assumed to start at r = dr and a
    ghost row at -dr is synthesized from u(dr, phi+pi).  One-sided
    second-order stencils close the outer edge (and the inner edge when no
    parity row is available).
    """
    u = np.asarray(u, dtype=np.float64)
    nr, nphi = u.shape
    dr = r[1] - r[0]
    upp = (np.roll(u, -1, axis=1) - 2.0 * u + np.roll(u, 1, axis=1)) / dphi**2

    urr = np.empty_like(u)
    ur = np.empty_like(u)
    urr[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dr**2
    ur[1:-1] = (u[2:] - u[:-2]) / (2.0 * dr)
    if parity_center:
        ghost = np.roll(u[0], nphi // 2)
        urr[0] = (u[1] - 2.0 * u[0] + ghost) / dr**2
        ur[0] = (u[1] - ghost) / (2.0 * dr)
    else:
        urr[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / dr**2
        ur[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dr)
    urr[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / dr**2
    ur[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * dr)

    rcol = r[:, None]
    return urr + ur / rcol + upp / rcol**2


@njit(cache=True)
def _polar_laplacian_numba(u, r, dphi, parity_center):
    nr, nphi = u.shape
    dr = r[1] - r[0]
    out = np.empty_like(u)
    half = nphi // 2
    for i in range(nr):
        ri = r[i]
        for j in range(nphi):
            jm = j - 1 if j > 0 else nphi - 1
            jp = j + 1 if j < nphi - 1 else 0
            upp = (u[i, jp] - 2.0 * u[i, j] + u[i, jm]) / dphi**2
            if 0 < i < nr - 1:
                urr = (u[i + 1, j] - 2.0 * u[i, j] + u[i - 1, j]) / dr**2
                ur = (u[i + 1, j] - u[i - 1, j]) / (2.0 * dr)
            elif i == 0:
                if parity_center:
                    g = u[0, (j + half) % nphi]
                    urr = (u[1, j] - 2.0 * u[0, j] + g) / dr**2
                    ur = (u[1, j] - g) / (2.0 * dr)
                else:
                    urr = (2.0 * u[0, j] - 5.0 * u[1, j] + 4.0 * u[2, j] - u[3, j]) / dr**2
                    ur = (-3.0 * u[0, j] + 4.0 * u[1, j] - u[2, j]) / (2.0 * dr)
            else:
                urr = (2.0 * u[-1, j] - 5.0 * u[-2, j] + 4.0 * u[-3, j] - u[-4, j]) / dr**2
                ur = (3.0 * u[-1, j] - 4.0 * u[-2, j] + u[-3, j]) / (2.0 * dr)
            out[i, j] = urr + ur / ri + upp / ri**2
    return out


def polar_laplacian_numba(u, r, dphi, parity_center):
    u = np.ascontiguousarray(u, dtype=np.float64)
    r = np.ascontiguousarray(r, dtype=np.float64)
    return _polar_laplacian_numba(u, r, float(dphi), bool(parity_center))


# ----------------------------------------------------------------------
# triangle mesh self-intersection test (broad phase: uniform grid on AABBs)
# ----------------------------------------------------------------------

@njit(cache=True)
def _tri_tri_overlap(p1, q1, r1, p2, q2, r2, eps):
    # Separating-axis test for two triangles; conservative (returns True
    # only for a genuine overlap larger than eps).
    axes = np.empty((11, 3))
    e11 = q1 - p1
    e12 = r1 - p1
    e21 = q2 - p2
    e22 = r2 - p2
    n1 = np.array([e11[1] * e12[2] - e11[2] * e12[1],
                   e11[2] * e12[0] - e11[0] * e12[2],
                   e11[0] * e12[1] - e11[1] * e12[0]])
    n2 = np.array([e21[1] * e22[2] - e21[2] * e22[1],
                   e21[2] * e22[0] - e21[0] * e22[2],
                   e21[0] * e22[1] - e21[1] * e22[0]])
    axes[0] = n1
    axes[1] = n2
    edges1 = (e11, e12, r1 - q1)
    edges2 = (e21, e22, r2 - q2)
    k = 2
    for a in edges1:
        for b in edges2:
            axes[k, 0] = a[1] * b[2] - a[2] * b[1]
            axes[k, 1] = a[2] * b[0] - a[0] * b[2]
            axes[k, 2] = a[0] * b[1] - a[1] * b[0]
            k += 1
    for k in range(11):
        ax = axes[k]
        norm = np.sqrt(ax[0] ** 2 + ax[1] ** 2 + ax[2] ** 2)
        if norm < 1e-300:
            continue
        lo1 = hi1 = ax[0] * p1[0] + ax[1] * p1[1] + ax[2] * p1[2]
        for v in (q1, r1):
            d = ax[0] * v[0] + ax[1] * v[1] + ax[2] * v[2]
            lo1 = min(lo1, d)
            hi1 = max(hi1, d)
        lo2 = hi2 = ax[0] * p2[0] + ax[1] * p2[1] + ax[2] * p2[2]
        for v in (q2, r2):
            d = ax[0] * v[0] + ax[1] * v[1] + ax[2] * v[2]
            lo2 = min(lo2, d)
            hi2 = max(hi2, d)
        if hi1 < lo2 + eps * norm or hi2 < lo1 + eps * norm:
            return False
    return True


@njit(cache=True)
def _count_intersections_numba(verts, tris, boxes, cell, nx, ny, nz, origin,
                               heads, nxt, order, eps):
    bad = 0
    for t in range(tris.shape[0]):
        a = tris[t, 0]
        b = tris[t, 1]
        c = tris[t, 2]
        lo0, lo1, lo2 = boxes[t, 0], boxes[t, 1], boxes[t, 2]
        hi0, hi1, hi2 = boxes[t, 3], boxes[t, 4], boxes[t, 5]
        i0 = int((lo0 - origin[0]) / cell)
        j0 = int((lo1 - origin[1]) / cell)
        k0 = int((lo2 - origin[2]) / cell)
        i1 = int((hi0 - origin[0]) / cell)
        j1 = int((hi1 - origin[1]) / cell)
        k1 = int((hi2 - origin[2]) / cell)
        # centers are binned per cell; AABB overlap implies the partner's
        # center cell lies within one cell of this AABB's cell range
        for ii in range(max(i0 - 1, 0), min(i1 + 1, nx - 1) + 1):
            for jj in range(max(j0 - 1, 0), min(j1 + 1, ny - 1) + 1):
                for kk in range(max(k0 - 1, 0), min(k1 + 1, nz - 1) + 1):
                    h = heads[(ii * ny + jj) * nz + kk]
                    while h != -1:
                        s = order[h]
                        h = nxt[h]
                        if s <= t:
                            continue
                        if (boxes[s, 0] > hi0 or boxes[s, 3] < lo0 or
                                boxes[s, 1] > hi1 or boxes[s, 4] < lo1 or
                                boxes[s, 2] > hi2 or boxes[s, 5] < lo2):
                            continue
                        sa = tris[s, 0]
                        sb = tris[s, 1]
                        sc = tris[s, 2]
                        if (sa == a or sa == b or sa == c or
                                sb == a or sb == b or sb == c or
                                sc == a or sc == b or sc == c):
                            continue
                        if _tri_tri_overlap(verts[a], verts[b], verts[c],
                                            verts[sa], verts[sb], verts[sc],
                                            eps):
                            bad += 1
                    # cell list exhausted
    return bad


def _build_grid(verts, tris, cell):
    lo = verts.min(axis=0) - 1e-9
    hi = verts.max(axis=0) + 1e-9
    nx, ny, nz = np.maximum(1, np.ceil((hi - lo) / cell).astype(np.int64))
    centers = verts[tris].mean(axis=1)
    idx = np.minimum(((centers - lo) / cell).astype(np.int64),
                     np.array([nx - 1, ny - 1, nz - 1]))
    flat = (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]
    order = np.argsort(flat, kind="stable").astype(np.int64)
    heads = np.full(int(nx * ny * nz), -1, dtype=np.int64)
    nxt = np.full(len(tris), -1, dtype=np.int64)
    for pos in range(len(tris) - 1, -1, -1):
        t = order[pos]
        c = flat[t]
        nxt[pos] = heads[c]
        heads[c] = pos
    return lo, int(nx), int(ny), int(nz), heads, nxt, order


def count_self_intersections_numba(verts, tris, eps=1e-12):
    verts = np.ascontiguousarray(verts, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    corners = verts[tris]
    boxes = np.concatenate([corners.min(axis=1), corners.max(axis=1)], axis=1)
    ext = corners.max(axis=1) - corners.min(axis=1)
    cell = max(float(np.max(ext)) * 1.01, 1e-6)
    lo, nx, ny, nz, heads, nxt, order = _build_grid(verts, tris, cell)
    return int(_count_intersections_numba(verts, tris,
                                          np.ascontiguousarray(boxes), cell,
                                          nx, ny, nz, np.ascontiguousarray(lo),
                                          heads, nxt, order, eps))


def _tri_tri_overlap_py(t1, t2, eps):
    axes = []
    e1 = [t1[1] - t1[0], t1[2] - t1[0], t1[2] - t1[1]]
    e2 = [t2[1] - t2[0], t2[2] - t2[0], t2[2] - t2[1]]
    axes.append(np.cross(e1[0], e1[1]))
    axes.append(np.cross(e2[0], e2[1]))
    for a in e1:
        for b in e2:
            axes.append(np.cross(a, b))
    for ax in axes:
        norm = np.linalg.norm(ax)
        if norm < 1e-300:
            continue
        d1 = t1 @ ax
        d2 = t2 @ ax
        if d1.max() < d2.min() + eps * norm or d2.max() < d1.min() + eps * norm:
            return False
    return True


def count_self_intersections_numpy(verts, tris, eps=1e-12):
    verts = np.asarray(verts, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.int64)
    ext = verts[tris].max(axis=1) - verts[tris].min(axis=1)
    cell = max(float(np.max(ext)) * 1.01, 1e-6)
    lo = verts.min(axis=0) - 1e-9
    centers = verts[tris].mean(axis=1)
    idx = ((centers - lo) / cell).astype(np.int64)
    buckets = {}
    for t, key in enumerate(map(tuple, idx)):
        buckets.setdefault(key, []).append(t)
    bad = 0
    for t in range(len(tris)):
        i, j, k = idx[t]
        tset = set(tris[t])
        for ii in range(i - 1, i + 2):
            for jj in range(j - 1, j + 2):
                for kk in range(k - 1, k + 2):
                    for s in buckets.get((ii, jj, kk), ()):
                        if s <= t or tset & set(tris[s]):
                            continue
                        if _tri_tri_overlap_py(verts[tris[t]], verts[tris[s]], eps):
                            bad += 1
    return bad


if NUMBA_ENABLED:
    power_series = power_series_numba
    smoothstep_quintic = smoothstep_quintic_numba
    polar_laplacian = polar_laplacian_numba
    count_self_intersections = count_self_intersections_numba
else:
    power_series = power_series_numpy
    smoothstep_quintic = smoothstep_quintic_numpy
    polar_laplacian = polar_laplacian_numpy
    count_self_intersections = count_self_intersections_numpy
