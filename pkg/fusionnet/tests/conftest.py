"""Shared fixtures: synthetic containers and a finite-difference oracle."""

import json
import os

import numpy as np
import pytest
import torch

N_MEAS = 104
SIDE = 64
N_PIX = SIDE * SIDE

# Fixed projection so voltages are a learnable linear function of the
# image; the same mapping is used for every synthetic container.
_PROJECTION = np.random.default_rng(123).standard_normal(
    (N_MEAS, N_PIX)).astype(np.float32) / SIDE


def _blob_image(rng, n_objects):
    yy, xx = np.mgrid[0:SIDE, 0:SIDE]
    img = np.zeros((SIDE, SIDE), dtype=np.float32)
    for _ in range(n_objects):
        cx, cy = rng.uniform(12, 52, size=2)
        r = rng.uniform(4, 9)
        amp = rng.uniform(0.4, 1.0)
        img += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r ** 2))
    return np.clip(img, 0.0, 1.0)


def write_synthetic_container(root, counts=(4, 4, 0, 0), seed=0,
                              splits="auto", negate_val=False):
    """Writes a dataset directory in the on-disk container layout.

    Voltages are a fixed random projection of the truth image, so a
    model can actually learn the inverse map. ``negate_val`` flips the
    sign of the validation truths: the better the model fits the true
    mapping, the worse its validation loss, so the loss curve has a
    clean minimum (useful for early-stopping tests).
    """
    os.makedirs(root, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = int(sum(counts))
    object_counts = np.repeat(np.arange(1, 5), counts)
    truths = np.stack([_blob_image(rng, int(k)) for k in object_counts])
    truths = truths.reshape(n, N_PIX)
    masks = (truths > 0.15).astype(np.uint8)
    voltages = truths @ _PROJECTION.T
    voltages += 1e-4 * rng.standard_normal(voltages.shape).astype(np.float32)

    if splits == "auto":
        order = rng.permutation(n)
        n_test = max(n // 10, 1)
        n_val = max(n // 10, 1)
        splits = {"test": np.sort(order[:n_test]),
                  "val": np.sort(order[n_test:n_test + n_val]),
                  "train": np.sort(order[n_test + n_val:])}
    if negate_val and splits:
        truths[splits["val"]] *= -1.0

    voltages.astype("<f4").tofile(os.path.join(root, "voltages.f32le"))
    truths.astype("<f4").tofile(os.path.join(root, "truths.f32le"))
    masks.tofile(os.path.join(root, "masks.u8"))
    manifest = {"version": 1, "seed": int(seed),
                "counts": [int(c) for c in counts], "n": n,
                "geometry": {"radius_mm": 22.0, "n_electrodes": 16},
                "noise_plan": ["clean", 50, 40, 30],
                "order": "row-major", "endianness": "little"}
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    if splits:
        for name, idx in splits.items():
            with open(os.path.join(root, f"{name}.idx"), "w") as fh:
                fh.writelines(f"{int(j)}\n" for j in idx)
    return root


@pytest.fixture
def make_container(tmp_path):
    def _make(name="ds", **kwargs):
        return write_synthetic_container(str(tmp_path / name), **kwargs)
    return _make


def max_rel_grad_error(module, inputs, n_per_tensor=2, eps=1e-6, seed=0,
                       min_compared=20):
    """Worst relative disagreement between autodiff and central
    differences of a scalar loss, sampled per input and parameter
    tensor. Runs in double precision; the loss is a fixed random
    projection of the output so every element carries weight.

    Differencing resolves nothing where the gradient sits at the
    roundoff floor (|loss| * ulp / eps), so such coordinates are skipped
    rather than scored; the caller gets an error if too few remain.
    """
    module = module.double()
    inputs = [x.detach().double().requires_grad_(True) for x in inputs]
    gen = torch.Generator().manual_seed(seed)

    out = module(*inputs)
    proj = torch.randn(out.shape, generator=gen, dtype=torch.float64)

    def scalar():
        return float((module(*inputs_plain) * proj).sum())

    loss = (out * proj).sum()
    module.zero_grad()
    loss.backward()
    floor = max(abs(float(loss.detach())), 1.0) * 1e-6

    tensors = list(inputs) + [p for p in module.parameters()
                              if p.requires_grad]
    rng = np.random.default_rng(seed)

    inputs_plain = [x.detach() for x in inputs]
    worst = 0.0
    compared = 0
    with torch.no_grad():
        for t in tensors:
            picks = rng.choice(t.numel(),
                               size=min(n_per_tensor, t.numel()),
                               replace=False)
            data = t.data.view(-1)
            grad = t.grad.view(-1)
            for j in picks:
                j = int(j)
                orig = float(data[j])
                data[j] = orig + eps
                f_hi = scalar()
                data[j] = orig - eps
                f_lo = scalar()
                data[j] = orig
                fd = (f_hi - f_lo) / (2 * eps)
                ad = float(grad[j])
                if max(abs(fd), abs(ad)) < floor:
                    continue
                worst = max(worst, abs(fd - ad) / max(abs(fd), abs(ad)))
                compared += 1
    if compared < min_compared:
        raise RuntimeError(f"only {compared} coordinates carried enough "
                           f"gradient signal to difference")
    return worst


@pytest.fixture
def grad_oracle():
    return max_rel_grad_error


# -------------------------------------------------- acceptance reporting

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("model acceptance")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
