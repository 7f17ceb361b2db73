"""Guidance-image processing: RGB microscope frame to 64x64 binary mask.

The pipeline projects per-pixel log-chromaticity onto the direction that
minimizes the Shannon entropy of the resulting grayscale image (which
suppresses multiplicative shading exactly), thresholds it, cleans the
binary image with one opening and one dilation, and downsamples the
406x406 field of view to the 64x64 mask grid.
"""

from dataclasses import dataclass

import numpy as np

from .grids import PixelGrid
from . import kernels

GUIDANCE_SIZE = 406
MASK_SIZE = 64

# rows of the orthonormal projection from log-chromaticity to the 2D
# chromaticity plane
_V1 = np.array([1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0), 0.0])
_V2 = np.array([1.0 / np.sqrt(6.0), 1.0 / np.sqrt(6.0), -2.0 / np.sqrt(6.0)])
PROJECTION = np.stack([_V1, _V2])

_SE3 = np.array([(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)], dtype=np.int64)

_circle_cache = {}


def default_se():
    """3x3 all-ones structuring element offsets, origin at the center."""
    return _SE3.copy()


def circle_mask(size=GUIDANCE_SIZE):
    """Boolean mask of pixels whose centers lie inside the inscribed circle."""
    if size not in _circle_cache:
        half = 0.5 * size
        rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        dy = rr + 0.5 - half
        dx = cc + 0.5 - half
        _circle_cache[size] = dx * dx + dy * dy < half * half
    return _circle_cache[size]


def _validate_rgb(img):
    img = np.asarray(img)
    if img.shape != (GUIDANCE_SIZE, GUIDANCE_SIZE, 3) or img.dtype != np.uint8:
        raise ValueError(f"guidance image must be {GUIDANCE_SIZE}x{GUIDANCE_SIZE} RGB uint8")
    return img


def _chromaticity(img):
    """Per-pixel 2D chromaticity coordinates (chi1, chi2).

    Channels are clamped to >= 1 before the logs; the log-ratio against the
    per-pixel geometric mean cancels any common multiplicative factor, so
    gray pixels map to exactly (0, 0).
    """
    c = np.maximum(img.astype(np.float64), 1.0)
    logs = np.log(c)
    mean_log = logs.mean(axis=-1, keepdims=True)
    rho = logs - mean_log
    chi1 = rho @ _V1
    chi2 = rho @ _V2
    return chi1, chi2


def invariant_image(img, theta_deg):
    """Grayscale projection of log-chromaticity at angle theta (degrees)."""
    img = _validate_rgb(img)
    if not 1.0 <= theta_deg <= 180.0:
        raise ValueError("theta must lie in [1, 180] degrees")
    chi1, chi2 = _chromaticity(img)
    t = np.deg2rad(theta_deg)
    return np.exp(chi1 * np.cos(t) + chi2 * np.sin(t))


def _entropy_of_values(vals):
    """Shannon entropy (bits) with Scott's-rule binning on the middle 90%."""
    if vals.size == 0:
        return 0.0
    lo, hi = np.percentile(vals, [5.0, 95.0])
    mid = vals[(vals >= lo) & (vals <= hi)]
    if mid.size == 0:
        return 0.0
    vmin, vmax = mid.min(), mid.max()
    std = mid.std()
    width = 3.49 * std * mid.size ** (-1.0 / 3.0)
    if width <= 0 or vmax <= vmin:
        return 0.0
    n_bins = int(np.ceil((vmax - vmin) / width))
    counts, _ = np.histogram(mid, bins=n_bins, range=(vmin, vmax))
    p = counts[counts > 0] / mid.size
    return float(-(p * np.log2(p)).sum())


def projection_entropy(gray):
    """Entropy of the in-circle histogram of a 406x406 grayscale image."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.shape != (GUIDANCE_SIZE, GUIDANCE_SIZE):
        raise ValueError(f"expected a {GUIDANCE_SIZE}x{GUIDANCE_SIZE} grayscale image")
    return _entropy_of_values(gray[circle_mask()])


def select_theta(img):
    """Entropy-minimizing projection angle over the 180 integer degrees.

    Ties break toward the smallest angle; the scan is sequential so the
    result never depends on evaluation order.
    """
    img = _validate_rgb(img)
    chi1, chi2 = _chromaticity(img)
    inside = circle_mask()
    c1 = chi1[inside]
    c2 = chi2[inside]
    best_theta, best_h = None, None
    for deg in range(1, 181):
        t = np.deg2rad(float(deg))
        h = _entropy_of_values(np.exp(c1 * np.cos(t) + c2 * np.sin(t)))
        if best_h is None or h < best_h:
            best_theta, best_h = deg, h
    return best_theta


def threshold_image(gray, beta):
    """Binary image: 0 where gray < beta, else 1."""
    gray = np.asarray(gray, dtype=np.float64)
    if not np.isfinite(beta):
        raise ValueError("threshold must be finite")
    return (gray >= beta).astype(np.uint8)


def morph_open(img, se=None):
    """Opening: union of structuring-element translates inside the foreground."""
    se = _SE3 if se is None else np.asarray(se, dtype=np.int64)
    return kernels.binary_dilate(kernels.binary_erode(img, se), se)


def morph_dilate(img, se=None):
    """Dilation: positions where the reflected element hits the foreground."""
    se = _SE3 if se is None else np.asarray(se, dtype=np.int64)
    return kernels.binary_dilate(img, se)


def _downsample_weights():
    """(64, 406) row-overlap weights of the exact 406/64 box average."""
    scale = GUIDANCE_SIZE / MASK_SIZE
    w = np.zeros((MASK_SIZE, GUIDANCE_SIZE))
    for i in range(MASK_SIZE):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = int(np.ceil(hi))
        for j in range(j0, min(j1, GUIDANCE_SIZE)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


_DOWN_W = _downsample_weights()


def downsample_mask(img) -> np.ndarray:
    """406x406 binary -> 64x64 binary by box averaging, cut at one half.

    Output pixels whose centers fall outside the inscribed circle are
    forced to zero.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (GUIDANCE_SIZE, GUIDANCE_SIZE):
        raise ValueError(f"expected a {GUIDANCE_SIZE}x{GUIDANCE_SIZE} binary image")
    avg = _DOWN_W @ img @ _DOWN_W.T
    out = (avg >= 0.5).astype(np.uint8)
    out[~circle_mask(MASK_SIZE)] = 0
    return out


@dataclass(frozen=True)
class GuidanceReport:
    mask: np.ndarray
    theta_deg: int
    inverted: bool
    beta: float


def process_guidance_report(img, beta=0.5, se=None, invert="auto",
                            theta=None) -> GuidanceReport:
    """Full pipeline with the selected angle and polarity decision attached.

    ``invert`` handles target polarity: the threshold sends dark targets to
    0 while masks need objects at 1. "auto" inverts when the thresholded
    in-circle foreground fraction exceeds one half; "on"/"off" force it.
    Pass ``theta`` to skip the entropy scan and use a fixed angle.
    """
    img = _validate_rgb(img)
    if invert not in ("auto", "on", "off"):
        raise ValueError('invert must be "auto", "on", or "off"')
    theta = select_theta(img) if theta is None else int(theta)
    gray = invariant_image(img, theta)
    inside = circle_mask()
    vals = gray[inside]
    vmin, vmax = vals.min(), vals.max()
    norm = np.zeros_like(gray)
    if vmax > vmin:
        norm[inside] = (vals - vmin) / (vmax - vmin)
    bw = threshold_image(norm, beta)
    bw[~inside] = 0
    frac = bw[inside].mean() if inside.any() else 0.0
    inverted = bool(invert == "on" or (invert == "auto" and frac > 0.5))
    if inverted:
        bw = (inside & (bw == 0)).astype(np.uint8)
    bw = morph_open(bw, se)
    bw = morph_dilate(bw, se)
    return GuidanceReport(mask=downsample_mask(bw), theta_deg=theta,
                          inverted=inverted, beta=float(beta))


def process_guidance(img, beta=0.5, se=None, invert="auto") -> np.ndarray:
    """RGB guidance image -> 64x64 binary mask."""
    return process_guidance_report(img, beta=beta, se=se, invert=invert).mask


def synth_guidance(scene, rng_seed: int, shade_strength: float = 0.2,
                   noise_sigma: float = 2.0, radius_mm: float = 7.0) -> np.ndarray:
    """Synthetic microscope frame for a phantom scene.

    Bright background, dark disks at the scene's inclusion positions, a
    multiplicative linear shading ramp of relative depth ``shade_strength``
    along a random direction, and mild Gaussian channel noise. The shading
    only darkens, so the multiplicative model is never clipped at white.
    """
    if not 0.0 <= shade_strength < 1.0:
        raise ValueError("shade_strength must lie in [0, 1)")
    rng = np.random.default_rng(rng_seed)
    n = GUIDANCE_SIZE
    background = np.array([230.0, 225.0, 220.0])
    foreground = np.array([60.0, 55.0, 70.0])
    img = np.broadcast_to(background, (n, n, 3)).copy()

    scale = n / (2.0 * radius_mm)
    rr, cc = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    x = (cc + 0.5) / scale - radius_mm
    y = radius_mm - (rr + 0.5) / scale
    for inc in scene.inclusions:
        hit = (x - inc.center[0]) ** 2 + (y - inc.center[1]) ** 2 < inc.radius ** 2
        img[hit] = foreground

    phi = rng.uniform(0.0, 2.0 * np.pi)
    ramp = (x * np.cos(phi) + y * np.sin(phi)) / (2.0 * radius_mm) + 0.5
    ramp = np.clip(ramp, 0.0, 1.0)
    img *= (1.0 - shade_strength * ramp)[..., None]
    if noise_sigma > 0:
        img = img + rng.normal(0.0, noise_sigma, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
