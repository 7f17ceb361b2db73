"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time: numba is used when it imports
cleanly and the environment variable ``EITDM_NUMBA`` is not set to ``0``.
Both paths produce identical results (same operations, same dtypes); the
test suite asserts this and ``benchmarks/bench_kernels.py`` compares their
throughput.
"""

import os

import numpy as np

_flag = os.environ.get("EITDM_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "off")

if NUMBA_REQUESTED:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def _maybe_njit(func):
    if NUMBA_ENABLED:
        return njit(cache=True)(func)
    return func


# ---------------------------------------------------------------------------
# P1 triangle stiffness
#
# For a linear triangle with vertices (x1,y1),(x2,y2),(x3,y3):
#   b = (y2-y3, y3-y1, y1-y2), c = (x3-x2, x1-x3, x2-x1)
#   grad(phi_i) = (b_i, c_i) / (2A)
#   K[i,j] = sigma * (b_i b_j + c_i c_j) / (4A)
# ---------------------------------------------------------------------------

def triangle_coefficients(xy, tris):
    """Per-element shape-function coefficients b, c and areas (vectorized)."""
    p1 = xy[tris[:, 0]]
    p2 = xy[tris[:, 1]]
    p3 = xy[tris[:, 2]]
    b = np.stack([p2[:, 1] - p3[:, 1], p3[:, 1] - p1[:, 1], p1[:, 1] - p2[:, 1]], axis=1)
    c = np.stack([p3[:, 0] - p2[:, 0], p1[:, 0] - p3[:, 0], p2[:, 0] - p1[:, 0]], axis=1)
    two_a = p2[:, 0] * p3[:, 1] - p3[:, 0] * p2[:, 1] \
        + p3[:, 0] * p1[:, 1] - p1[:, 0] * p3[:, 1] \
        + p1[:, 0] * p2[:, 1] - p2[:, 0] * p1[:, 1]
    return b, c, 0.5 * two_a


def _stiffness_values_loops(b, c, area, sigma):
    n_elem = b.shape[0]
    vals = np.empty((n_elem, 3, 3), dtype=np.float64)
    for e in range(n_elem):
        scale = sigma[e] / (4.0 * area[e])
        for i in range(3):
            for j in range(3):
                vals[e, i, j] = scale * (b[e, i] * b[e, j] + c[e, i] * c[e, j])
    return vals


_stiffness_values_fast = _maybe_njit(_stiffness_values_loops)


def _stiffness_values_numpy(b, c, area, sigma):
    scale = sigma / (4.0 * area)
    bb = b[:, :, None] * b[:, None, :]
    cc = c[:, :, None] * c[:, None, :]
    return scale[:, None, None] * (bb + cc)


def stiffness_values(b, c, area, sigma):
    """Element stiffness blocks (n_elem, 3, 3) for COO assembly."""
    if NUMBA_ENABLED:
        return _stiffness_values_fast(b, c, area, sigma)
    return _stiffness_values_numpy(b, c, area, sigma)


# ---------------------------------------------------------------------------
# Per-element gradients of a nodal field
# ---------------------------------------------------------------------------

def _element_gradients_loops(b, c, area, tris, u):
    n_elem = tris.shape[0]
    grads = np.empty((n_elem, 2), dtype=np.float64)
    for e in range(n_elem):
        gx = 0.0
        gy = 0.0
        for i in range(3):
            ui = u[tris[e, i]]
            gx += ui * b[e, i]
            gy += ui * c[e, i]
        inv = 1.0 / (2.0 * area[e])
        grads[e, 0] = gx * inv
        grads[e, 1] = gy * inv
    return grads


_element_gradients_fast = _maybe_njit(_element_gradients_loops)


def _element_gradients_numpy(b, c, area, tris, u):
    uv = u[tris]
    gx = np.einsum("ei,ei->e", uv, b)
    gy = np.einsum("ei,ei->e", uv, c)
    return np.stack([gx, gy], axis=1) / (2.0 * area)[:, None]


def element_gradients(b, c, area, tris, u):
    """Constant gradient of the P1 field ``u`` on each element, shape (n_elem, 2)."""
    if NUMBA_ENABLED:
        return _element_gradients_fast(b, c, area, tris, u)
    return _element_gradients_numpy(b, c, area, tris, u)


# ---------------------------------------------------------------------------
# Sensitivity aggregation: element-pair dot products scattered onto pixels
# ---------------------------------------------------------------------------

def _pair_pixel_sensitivities_loops(grads, areas, pairs, elem_pix, n_pix):
    n_meas = pairs.shape[0]
    n_elem = areas.shape[0]
    out = np.zeros((n_meas, n_pix), dtype=np.float64)
    for m in range(n_meas):
        ga = grads[pairs[m, 0]]
        gb = grads[pairs[m, 1]]
        for e in range(n_elem):
            p = elem_pix[e]
            if p >= 0:
                out[m, p] += areas[e] * (ga[e, 0] * gb[e, 0] + ga[e, 1] * gb[e, 1])
    return out


_pair_pixel_sensitivities_fast = _maybe_njit(_pair_pixel_sensitivities_loops)


def _pair_pixel_sensitivities_numpy(grads, areas, pairs, elem_pix, n_pix):
    keep = elem_pix >= 0
    pix = elem_pix[keep]
    ga = grads[pairs[:, 0]][:, keep, :]
    gb = grads[pairs[:, 1]][:, keep, :]
    sens = np.einsum("mek,mek->me", ga, gb) * areas[keep]
    out = np.zeros((pairs.shape[0], n_pix), dtype=np.float64)
    for m in range(pairs.shape[0]):
        out[m] = np.bincount(pix, weights=sens[m], minlength=n_pix)
    return out


def pair_pixel_sensitivities(grads, areas, pairs, elem_pix, n_pix):
    """Accumulate area * grad_a . grad_b per element into pixel columns.

    grads: (n_fields, n_elem, 2) element gradients of the injection solutions.
    pairs: (n_meas, 2) field-index pairs.
    elem_pix: (n_elem,) pixel column per element, -1 for elements outside
    the pixel support.
    """
    if NUMBA_ENABLED:
        return _pair_pixel_sensitivities_fast(grads, areas, pairs, elem_pix, n_pix)
    return _pair_pixel_sensitivities_numpy(grads, areas, pairs, elem_pix, n_pix)


# ---------------------------------------------------------------------------
# Binary morphology on uint8 images (0/1 values, zero padding outside)
# ---------------------------------------------------------------------------

def _binary_erode_loops(img, offsets):
    h, w = img.shape
    k = offsets.shape[0]
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            ok = True
            for t in range(k):
                yy = y + offsets[t, 0]
                xx = x + offsets[t, 1]
                if yy < 0 or yy >= h or xx < 0 or xx >= w or img[yy, xx] == 0:
                    ok = False
                    break
            if ok:
                out[y, x] = 1
    return out


_binary_erode_fast = _maybe_njit(_binary_erode_loops)


def _binary_dilate_loops(img, offsets):
    h, w = img.shape
    k = offsets.shape[0]
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            hit = False
            for t in range(k):
                yy = y - offsets[t, 0]
                xx = x - offsets[t, 1]
                if 0 <= yy < h and 0 <= xx < w and img[yy, xx] != 0:
                    hit = True
                    break
            if hit:
                out[y, x] = 1
    return out


_binary_dilate_fast = _maybe_njit(_binary_dilate_loops)


def _shifted(img, dy, dx):
    # s[y, x] = img[y - dy, x - dx], zero outside
    h, w = img.shape
    out = np.zeros((h, w), dtype=img.dtype)
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    yt = slice(max(-dy, 0), min(h - dy, h))
    xt = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = img[yt, xt]
    return out


def _binary_erode_numpy(img, offsets):
    out = np.ones(img.shape, dtype=np.uint8)
    for dy, dx in offsets:
        out &= _shifted(img, -int(dy), -int(dx))
    return out


def _binary_dilate_numpy(img, offsets):
    out = np.zeros(img.shape, dtype=np.uint8)
    for dy, dx in offsets:
        out |= _shifted(img, int(dy), int(dx))
    return out


def binary_erode(img, offsets):
    """Erosion: 1 where every structuring-element offset lands on foreground."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if NUMBA_ENABLED:
        return _binary_erode_fast(img, offsets)
    return _binary_erode_numpy(img, offsets)


def binary_dilate(img, offsets):
    """Dilation: 1 where the reflected structuring element hits foreground."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if NUMBA_ENABLED:
        return _binary_dilate_fast(img, offsets)
    return _binary_dilate_numpy(img, offsets)
