"""Kernel correctness: hand oracles first, then loop-vs-vectorized parity.

Both execution paths (njit loops and pure numpy) must agree bitwise-close
on random inputs regardless of which one the environment flag selects.
"""

import os
import subprocess
import sys

import numpy as np

from eitdm import kernels


def _random_mesh_arrays(rng, n_nodes=30, n_tris=40):
    xy = rng.uniform(-5, 5, size=(n_nodes, 2))
    tris = np.empty((n_tris, 3), dtype=np.int64)
    for t in range(n_tris):
        while True:
            cand = rng.choice(n_nodes, size=3, replace=False)
            a, b, c = xy[cand]
            det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
            if det > 1e-3:  # CCW and non-degenerate
                tris[t] = cand
                break
    return xy, tris


# ---------------------------------------------------------------- coefficients

def test_unit_triangle_area_and_coefficients():
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2]])
    b, c, area = kernels.triangle_coefficients(xy, tris)
    assert abs(area[0] - 0.5) < 1e-15
    # opposite-edge convention: b_i = y_j - y_k, c_i = x_k - x_j
    assert np.allclose(b[0], [-1.0, 1.0, 0.0])
    assert np.allclose(c[0], [-1.0, 0.0, 1.0])


def test_unit_triangle_stiffness_oracle():
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2]])
    b, c, area = kernels.triangle_coefficients(xy, tris)
    k = kernels.stiffness_values(b, c, area, np.array([1.0]))
    expected = 0.5 * np.array([[2.0, -1.0, -1.0],
                               [-1.0, 1.0, 0.0],
                               [-1.0, 0.0, 1.0]])
    assert np.allclose(k[0], expected, atol=1e-14)


def test_stiffness_rows_sum_to_zero():
    rng = np.random.default_rng(5)
    xy, tris = _random_mesh_arrays(rng)
    b, c, area = kernels.triangle_coefficients(xy, tris)
    k = kernels.stiffness_values(b, c, area, rng.uniform(0.1, 2.0, len(tris)))
    assert np.abs(k.sum(axis=2)).max() < 1e-12
    assert np.abs(k - np.swapaxes(k, 1, 2)).max() == 0.0  # symmetric


def test_gradients_exact_for_linear_field():
    rng = np.random.default_rng(6)
    xy, tris = _random_mesh_arrays(rng)
    b, c, area = kernels.triangle_coefficients(xy, tris)
    u = 3.0 * xy[:, 0] - 2.0 * xy[:, 1] + 1.0
    g = kernels.element_gradients(b, c, area, tris, u)
    assert np.abs(g - np.array([3.0, -2.0])).max() < 1e-10


# ------------------------------------------------------------ path equivalence

def test_stiffness_paths_agree():
    rng = np.random.default_rng(7)
    for _ in range(10):
        xy, tris = _random_mesh_arrays(rng)
        b, c, area = kernels.triangle_coefficients(xy, tris)
        sigma = rng.uniform(0.01, 3.0, len(tris))
        kl = kernels._stiffness_values_loops(b, c, area, sigma)
        kv = kernels._stiffness_values_numpy(b, c, area, sigma)
        assert np.abs(kl - kv).max() < 1e-14


def test_gradient_paths_agree():
    rng = np.random.default_rng(8)
    for _ in range(10):
        xy, tris = _random_mesh_arrays(rng)
        b, c, area = kernels.triangle_coefficients(xy, tris)
        u = rng.normal(size=len(xy))
        gl = kernels._element_gradients_loops(b, c, area, tris, u)
        gv = kernels._element_gradients_numpy(b, c, area, tris, u)
        assert np.abs(gl - gv).max() < 1e-13


def _sensitivity_bruteforce(grads, areas, pairs, elem_pix, n_pix):
    out = np.zeros((len(pairs), n_pix))
    for m, (a, b) in enumerate(pairs):
        for k in range(len(areas)):
            p = elem_pix[k]
            if p >= 0:
                out[m, p] += areas[k] * (grads[a, k, 0] * grads[b, k, 0]
                                         + grads[a, k, 1] * grads[b, k, 1])
    return out


def test_sensitivity_accumulation_oracle_and_paths():
    rng = np.random.default_rng(9)
    for _ in range(5):
        n_inj, n_el, n_pix = 4, 60, 12
        grads = rng.normal(size=(n_inj, n_el, 2))
        areas = rng.uniform(0.1, 1.0, n_el)
        pairs = np.array([[0, 1], [1, 2], [2, 3], [3, 0], [0, 2]])
        elem_pix = rng.integers(-1, n_pix, n_el)
        want = _sensitivity_bruteforce(grads, areas, pairs, elem_pix, n_pix)
        got_l = kernels._pair_pixel_sensitivities_loops(
            grads, areas, pairs, elem_pix, n_pix)
        got_v = kernels._pair_pixel_sensitivities_numpy(
            grads, areas, pairs, elem_pix, n_pix)
        assert np.abs(got_l - want).max() < 1e-12
        assert np.abs(got_v - want).max() < 1e-12


def _erode_bruteforce(img, offsets):
    h, w = img.shape
    out = np.zeros_like(img)
    for r in range(h):
        for c in range(w):
            keep = 1
            for dy, dx in offsets:
                rr, cc = r + dy, c + dx
                v = img[rr, cc] if 0 <= rr < h and 0 <= cc < w else 0
                if v == 0:
                    keep = 0
                    break
            out[r, c] = keep
    return out


def _dilate_bruteforce(img, offsets):
    h, w = img.shape
    out = np.zeros_like(img)
    for r in range(h):
        for c in range(w):
            hit = 0
            for dy, dx in offsets:
                rr, cc = r + dy, c + dx
                if 0 <= rr < h and 0 <= cc < w and img[rr, cc]:
                    hit = 1
                    break
            out[r, c] = hit
    return out


def test_morphology_set_definition_oracle():
    rng = np.random.default_rng(10)
    se = np.array([(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)])
    for _ in range(25):
        img = (rng.random((16, 16)) < 0.5).astype(np.uint8)
        assert np.array_equal(kernels.binary_erode(img, se),
                              _erode_bruteforce(img, se))
        assert np.array_equal(kernels.binary_dilate(img, se),
                              _dilate_bruteforce(img, se))


def test_morphology_paths_agree():
    rng = np.random.default_rng(11)
    se = np.array([(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)])
    for _ in range(25):
        img = (rng.random((20, 20)) < 0.4).astype(np.uint8)
        assert np.array_equal(kernels._binary_erode_loops(img, se),
                              kernels._binary_erode_numpy(img, se))
        assert np.array_equal(kernels._binary_dilate_loops(img, se),
                              kernels._binary_dilate_numpy(img, se))


def test_env_flag_disables_compiled_path():
    code = "import eitdm.kernels as k; print(k.NUMBA_ENABLED)"
    env = dict(os.environ, EITDM_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
