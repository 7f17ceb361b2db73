"""Image-quality metrics: relative image error and structural similarity.

Both metrics run over the full 64x64 square including the out-of-circle
zeros. SSIM uses an 11x11 Gaussian window (sigma 1.5) evaluated only where
the window fits, with stabilizers C1 = (0.01 L)^2 and C2 = (0.03 L)^2 on a
unit dynamic range.
"""

import io

import numpy as np
from scipy.ndimage import correlate1d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class MetricError(Exception):
    pass


def rie(a, b) -> float:
    """Relative image error ||a - b|| / ||b||."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("images must share dimensions")
    ref = np.linalg.norm(b)
    if ref == 0:
        raise MetricError("reference image has zero norm")
    return float(np.linalg.norm(a - b) / ref)


def _gaussian_1d():
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * SSIM_SIGMA ** 2))
    return g / g.sum()


_G1 = _gaussian_1d()


def _windowed(img):
    """Valid-mode Gaussian-window local mean."""
    half = SSIM_WINDOW // 2
    tmp = correlate1d(img, _G1, axis=0, mode="constant")
    tmp = correlate1d(tmp, _G1, axis=1, mode="constant")
    return tmp[half:-half, half:-half]


def ssim_map(a, b, data_range=1.0) -> np.ndarray:
    """Per-position SSIM over all fully contained window placements."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("images must share dimensions")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels per side")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _windowed(a)
    mu_b = _windowed(b)
    var_a = _windowed(a * a) - mu_a * mu_a
    var_b = _windowed(b * b) - mu_b * mu_b
    cov = _windowed(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def mssim(a, b, data_range=1.0) -> float:
    """Mean SSIM over the valid window positions."""
    return float(np.mean(ssim_map(a, b, data_range)))


def batch_metrics(preds, truths, data_range=1.0):
    """Per-image (rie, mssim) pairs plus their means.

    Inputs are (n, 64, 64) stacks or (n, 4096) row arrays.
    """
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape:
        raise ValueError("prediction and truth batches must share shape")
    if preds.ndim == 2:
        side = int(np.sqrt(preds.shape[1]))
        preds = preds.reshape(-1, side, side)
        truths = truths.reshape(-1, side, side)
    rows = [(rie(p, t), mssim(p, t, data_range)) for p, t in zip(preds, truths)]
    r_mean = float(np.mean([r for r, _ in rows])) if rows else 0.0
    m_mean = float(np.mean([m for _, m in rows])) if rows else 0.0
    return rows, r_mean, m_mean


def write_report(fh, rows, r_mean, m_mean):
    """CSV report: index,rie,mssim rows and a final mean row."""
    own = False
    if not hasattr(fh, "write"):
        fh = io.open(fh, "w", encoding="utf-8", newline="\n")
        own = True
    try:
        fh.write("index,rie,mssim\n")
        for i, (r, m) in enumerate(rows):
            fh.write(f"{i},{r!r},{m!r}\n")
        fh.write(f"mean,{r_mean!r},{m_mean!r}\n")
    finally:
        if own:
            fh.close()
