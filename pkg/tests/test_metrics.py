"""Error and similarity metrics.

The SSIM oracle recomputes every valid window position directly from
2-D Gaussian weights via stride tricks, independent of the separable
filter implementation.
"""

import io

import numpy as np
import pytest

from eitdm import metrics


def _ssim_map_bruteforce(a, b, data_range=1.0):
    w = metrics.SSIM_WINDOW
    half = w // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * metrics.SSIM_SIGMA ** 2))
    g /= g.sum()
    weights = np.outer(g, g)
    c1 = (metrics.SSIM_K1 * data_range) ** 2
    c2 = (metrics.SSIM_K2 * data_range) ** 2
    wa = np.lib.stride_tricks.sliding_window_view(a, (w, w))
    wb = np.lib.stride_tricks.sliding_window_view(b, (w, w))
    mu_a = (wa * weights).sum(axis=(-2, -1))
    mu_b = (wb * weights).sum(axis=(-2, -1))
    var_a = (wa * wa * weights).sum(axis=(-2, -1)) - mu_a * mu_a
    var_b = (wb * wb * weights).sum(axis=(-2, -1)) - mu_b * mu_b
    cov = (wa * wb * weights).sum(axis=(-2, -1)) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def test_identities():
    rng = np.random.default_rng(1)
    a = rng.random((64, 64))
    b = rng.random((64, 64)) + 0.1
    assert metrics.rie(a, a) == 0.0
    assert metrics.rie(2.0 * b, b) == 1.0
    assert metrics.mssim(a, a) == 1.0


def test_rie_hand_value():
    a = np.array([1.0, 2.0, 2.0, 0.0])
    b = np.array([0.0, 2.0, 0.0, 0.0])
    assert metrics.rie(a, b) == pytest.approx(np.sqrt(5.0) / 2.0, rel=1e-15)


def test_ssim_map_matches_bruteforce_oracle():
    rng = np.random.default_rng(2)
    a = rng.random((64, 64))
    b = np.clip(a + 0.1 * rng.standard_normal((64, 64)), 0, 1)
    got = metrics.ssim_map(a, b)
    assert got.shape == (54, 54)
    want = _ssim_map_bruteforce(a, b)
    assert np.abs(got - want).max() < 1e-10


def test_mssim_symmetric():
    rng = np.random.default_rng(3)
    a = rng.random((64, 64))
    b = rng.random((64, 64))
    assert metrics.mssim(a, b) == metrics.mssim(b, a)


def test_orderings_track_degradation():
    rng = np.random.default_rng(4)
    truth = np.zeros((64, 64))
    truth[20:40, 20:40] = 1.0
    small = truth + 0.02 * rng.standard_normal(truth.shape)
    big = truth + 0.4 * rng.standard_normal(truth.shape)
    assert metrics.rie(small, truth) < metrics.rie(big, truth)
    assert metrics.mssim(small, truth) > metrics.mssim(big, truth)


def test_data_range_homogeneity():
    rng = np.random.default_rng(5)
    a = rng.random((64, 64))
    b = rng.random((64, 64))
    base = metrics.mssim(a, b, data_range=1.0)
    scaled = metrics.mssim(10.0 * a, 10.0 * b, data_range=10.0)
    assert scaled == pytest.approx(base, abs=1e-12)


def test_validation_errors():
    with pytest.raises(metrics.MetricError):
        metrics.rie(np.ones(4), np.zeros(4))
    with pytest.raises(ValueError):
        metrics.rie(np.ones(4), np.ones(5))
    with pytest.raises(ValueError):
        metrics.ssim_map(np.ones((10, 10)), np.ones((10, 10)))
    with pytest.raises(ValueError):
        metrics.batch_metrics(np.ones((2, 4096)), np.ones((3, 4096)))


def test_batch_accepts_flat_and_square():
    rng = np.random.default_rng(6)
    preds = rng.random((4, 64, 64))
    truths = rng.random((4, 64, 64)) + 0.05
    rows_sq, r_sq, m_sq = metrics.batch_metrics(preds, truths)
    rows_fl, r_fl, m_fl = metrics.batch_metrics(
        preds.reshape(4, 4096), truths.reshape(4, 4096))
    assert rows_sq == rows_fl
    assert (r_sq, m_sq) == (r_fl, m_fl)
    assert len(rows_sq) == 4
    assert r_sq == pytest.approx(np.mean([r for r, _ in rows_sq]))
    for p, t, (r, m) in zip(preds, truths, rows_sq):
        assert r == metrics.rie(p, t)
        assert m == metrics.mssim(p, t)


def test_batch_empty():
    rows, r_mean, m_mean = metrics.batch_metrics(
        np.zeros((0, 4096)), np.zeros((0, 4096)))
    assert rows == [] and r_mean == 0.0 and m_mean == 0.0


def test_report_round_trips_exact_floats(tmp_path):
    rows = [(0.123456789012345, 0.987654321), (1.0 / 3.0, 2.0 / 7.0)]
    buf = io.StringIO()
    metrics.write_report(buf, rows, 0.5, 0.25)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "index,rie,mssim"
    assert lines[-1] == f"mean,{0.5!r},{0.25!r}"
    assert len(lines) == 4
    for i, (r, m) in enumerate(rows):
        idx, rs, ms = lines[1 + i].split(",")
        assert int(idx) == i
        # repr round trip restores the exact double
        assert float(rs) == r and float(ms) == m
    path = tmp_path / "report.csv"
    metrics.write_report(path, rows, 0.5, 0.25)
    assert path.read_text(encoding="utf-8") == buf.getvalue()
