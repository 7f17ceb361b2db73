"""Reconstruction stack.

The dense normal-equation oracle comes first and runs on a reduced grid;
operator tests use exact affine fields; solver properties cover
optimality, linearity, regularization strength, and the structural term.
"""

import numpy as np
import pytest

from eitdm import recon
from eitdm.fem import MeasurementFrame, SensitivityMatrix
from eitdm.grids import PixelGrid


def _small_grid():
    return PixelGrid(radius=1.0, size=12)


def _small_sens(seed=0):
    grid = _small_grid()
    rng = np.random.default_rng(seed)
    j = rng.normal(size=(104, grid.n_support))
    return SensitivityMatrix(matrix=j, grid=grid,
                             reference_conductivity=0.05, current=1e-3)


def _disk_mask(grid, cx, cy, radius):
    centers = grid.pixel_centers()
    d2 = (centers[..., 0] - cx) ** 2 + (centers[..., 1] - cy) ** 2
    out = (d2 < radius ** 2).astype(np.uint8)
    out[~grid.in_circle] = 0
    return out


# ---------------------------------------------------------------- dense oracle

def test_matches_dense_normal_equation_oracle():
    sens = _small_sens(1)
    rng = np.random.default_rng(2)
    dv = rng.normal(size=104)
    lam = 0.37
    j = sens.matrix
    lap = recon.laplacian_operator(sens.grid).toarray()
    x_dense = np.linalg.solve(j.T @ j + lam * lap.T @ lap, j.T @ dv)
    got = sens.grid.restrict(recon.treg_gl(sens, dv, lam=lam))
    assert np.linalg.norm(got - x_dense) / np.linalg.norm(x_dense) < 1e-8


def test_default_lambda_formula(sens):
    lap = recon.laplacian_operator(sens.grid)
    want = recon.LAMBDA_FACTOR * (sens.matrix ** 2).sum() / (lap.data ** 2).sum()
    assert recon.default_lambda(sens) == pytest.approx(want, rel=1e-12)
    assert recon.default_lambda(sens) > 0


# ------------------------------------------------------------------- operators

def test_laplacian_structure():
    grid = _small_grid()
    lap = recon.laplacian_operator(grid)
    dense = lap.toarray()
    assert np.array_equal(np.diag(dense), np.full(grid.n_support, 4.0))
    assert np.abs(dense - dense.T).max() == 0.0
    sums = dense.sum(axis=1)
    assert (sums >= 0).all()
    # pixels with all four neighbours have a zero row sum
    idx = grid.support_index
    r, c = 6, 6
    assert idx[r, c] >= 0
    assert sums[idx[r, c]] == 0.0


def test_difference_operators_exact_on_ramps(grid):
    dx, dy = recon.difference_operators(grid)
    cols = np.tile(np.arange(64.0), (64, 1))
    rows = cols.T
    vc = grid.restrict(cols)
    vr = grid.restrict(rows)
    assert np.array_equal(dx @ vc, np.ones(grid.n_support))
    assert np.array_equal(dy @ vc, np.zeros(grid.n_support))
    assert np.array_equal(dx @ vr, np.zeros(grid.n_support))
    # y points upward, opposite the row index
    assert np.array_equal(dy @ vr, -np.ones(grid.n_support))


def test_cross_gradient_hand_example(grid):
    cols = np.tile(np.arange(64.0), (64, 1))
    rows = cols.T
    t = recon.cross_gradient(cols, rows, grid)
    assert (t[grid.in_circle] == -1.0).all()
    assert (t[~grid.in_circle] == 0.0).all()


def test_cross_gradient_self_and_parallel(grid):
    rng = np.random.default_rng(4)
    a = grid.embed(rng.normal(size=grid.n_support))
    assert np.abs(recon.cross_gradient(a, a, grid)).max() == 0.0
    x = np.tile(np.arange(64.0), (64, 1))
    y = x.T
    p = 0.5 * x + 0.25 * y
    q = 3.0 * p - 2.0
    assert np.abs(recon.cross_gradient(p, q, grid)).max() == 0.0


def test_cross_gradient_validates_shapes(grid):
    with pytest.raises(ValueError):
        recon.cross_gradient(np.zeros((64, 64)), np.zeros((32, 32)))


def test_smooth_mask_values(grid):
    mask = np.zeros((64, 64), dtype=np.uint8)
    mask[30, 30] = 1
    sm = recon.smooth_mask(mask, grid)
    patch = sm[29:32, 29:32]
    assert np.abs(patch - 1.0 / 9.0).max() < 1e-15
    assert sm.sum() == pytest.approx(1.0)
    full = recon.smooth_mask(np.ones((64, 64)), grid)
    assert full.max() <= 1.0 and full.min() >= 0.0
    assert (full[~grid.in_circle] == 0).all()


def test_structural_operator_consistency(grid):
    mask = _disk_mask(grid, 1.5, -0.8, 2.0)
    g = recon.structural_operator(mask, grid)
    sm = recon.smooth_mask(mask, grid)
    rng = np.random.default_rng(5)
    v = rng.normal(size=grid.n_support)
    want = grid.restrict(recon.cross_gradient(grid.embed(v), sm, grid))
    assert np.abs(g @ v - want).max() < 1e-13


# --------------------------------------------------------------------- solvers

def test_gamma_zero_reduces_exactly():
    sens = _small_sens(6)
    rng = np.random.default_rng(7)
    dv = rng.normal(size=104)
    mask = _disk_mask(sens.grid, 0.3, 0.1, 0.4)
    a = recon.treg_gl(sens, dv, lam=0.2)
    b = recon.cg_recon(sens, dv, mask, lam=0.2, gamma=0.0)
    assert np.array_equal(a, b)


def test_empty_mask_adds_nothing():
    sens = _small_sens(8)
    rng = np.random.default_rng(9)
    dv = rng.normal(size=104)
    empty = np.zeros((12, 12), dtype=np.uint8)
    a = recon.treg_gl(sens, dv, lam=0.15)
    b = recon.cg_recon(sens, dv, empty, lam=0.15, gamma=0.5)
    # a zero mask smooths to zero, so the structural term vanishes
    assert np.array_equal(a, b)


def test_solution_minimizes_objective():
    sens = _small_sens(10)
    rng = np.random.default_rng(11)
    dv = rng.normal(size=104)
    lam = 0.3
    lap = recon.laplacian_operator(sens.grid)
    x = sens.grid.restrict(recon.treg_gl(sens, dv, lam=lam))

    def objective(v):
        return (np.linalg.norm(sens.matrix @ v - dv) ** 2
                + lam * np.linalg.norm(lap @ v) ** 2)

    base = objective(x)
    for _ in range(20):
        d = rng.normal(size=x.size)
        d /= np.linalg.norm(d)
        assert objective(x + 1e-4 * d) > base
        assert objective(x - 1e-4 * d) > base


def test_linearity_in_data():
    sens = _small_sens(12)
    rng = np.random.default_rng(13)
    dv = rng.normal(size=104)
    a = recon.treg_gl(sens, dv, lam=0.1)
    b = recon.treg_gl(sens, 3.5 * dv, lam=0.1)
    assert np.abs(b - 3.5 * a).max() < 1e-10 * np.abs(a).max()


def test_heavier_smoothing_shrinks_solution():
    sens = _small_sens(14)
    rng = np.random.default_rng(15)
    dv = rng.normal(size=104)
    lo = np.linalg.norm(recon.treg_gl(sens, dv, lam=0.01))
    hi = np.linalg.norm(recon.treg_gl(sens, dv, lam=1e4))
    assert hi < 1e-2 * lo


def test_structural_weight_monotonically_flattens():
    sens = _small_sens(16)
    rng = np.random.default_rng(17)
    dv = rng.normal(size=104)
    mask = _disk_mask(sens.grid, 0.25, -0.2, 0.45)
    g = recon.structural_operator(mask, sens.grid)
    lam = 0.1
    prev = None
    for gamma in (0.0, 0.1 * lam, lam, 10 * lam, 100 * lam):
        x = sens.grid.restrict(
            recon.cg_recon(sens, dv, mask, lam=lam, gamma=gamma))
        resid = np.linalg.norm(g @ x)
        if prev is not None:
            assert resid <= prev * (1 + 1e-9)
        prev = resid


def test_batch_matches_single_solves():
    sens = _small_sens(18)
    rng = np.random.default_rng(19)
    frames = rng.normal(size=(5, 104))
    batch = recon.treg_gl_batch(sens, frames, lam=0.2)
    for i in range(5):
        assert np.array_equal(batch[i], recon.treg_gl(sens, frames[i], lam=0.2))


def test_accepts_measurement_frames():
    sens = _small_sens(20)
    rng = np.random.default_rng(21)
    vals = rng.normal(size=104)
    frame = MeasurementFrame(values=vals, kind="normalized-difference")
    assert np.array_equal(recon.treg_gl(sens, frame, lam=0.1),
                          recon.treg_gl(sens, vals, lam=0.1))


def test_validation_errors():
    sens = _small_sens(22)
    dv = np.zeros(104)
    with pytest.raises(recon.ReconError):
        recon.treg_gl(sens, dv, lam=-1.0)
    with pytest.raises(ValueError):
        recon.treg_gl(sens, np.zeros(50), lam=0.1)
    with pytest.raises(recon.ReconError):
        recon.cg_recon(sens, dv, np.ones((12, 12)), lam=0.1, gamma=-2.0)
    # 104 rows cannot determine every support pixel without smoothing
    assert sens.grid.n_support > 104
    with pytest.raises(recon.ReconError):
        recon.treg_gl(sens, dv, lam=0.0)
