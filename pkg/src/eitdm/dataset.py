"""Deterministic dataset generation, stratified splitting, and disk format.

A dataset directory holds manifest.json plus flat little-endian arrays:
voltages.f32le (N x 104 normalized difference frames), truths.f32le
(N x 4096 images), masks.u8 (N x 4096 bytes), and newline-separated split
index files. Every byte is a pure function of the configuration.
"""

import json
import multiprocessing
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import SensorGeometry
from .grids import PixelGrid
from .mesh import build_mesh
from . import fem, phantoms

FORMAT_VERSION = 1
N_IMAGE = 64 * 64
DEFAULT_NOISE_PLAN = (None, 50.0, 40.0, 30.0)
DEFAULT_FORWARD_EDGE = 0.10   # mm
DEFAULT_JACOBIAN_EDGE = 0.22  # mm


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    seed: int
    counts: tuple                      # samples per object-count 1..4
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    forward_edge: float = DEFAULT_FORWARD_EDGE
    jacobian_edge: float = DEFAULT_JACOBIAN_EDGE
    noise_plan: tuple = DEFAULT_NOISE_PLAN
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if len(self.counts) != 4 or any(c < 0 for c in self.counts):
            raise ValueError("counts must be four non-negative integers")
        if not self.forward_edge < self.jacobian_edge:
            raise ValueError("forward mesh must be strictly finer than the jacobian mesh")
        if not self.noise_plan:
            raise ValueError("noise plan must not be empty")

    @property
    def n(self):
        return int(sum(self.counts))

    def object_count(self, index):
        edge = 0
        for k, c in enumerate(self.counts):
            edge += c
            if index < edge:
                return k + 1
        raise IndexError("sample index out of range")

    def manifest(self):
        g = self.geometry
        return {
            "version": self.version,
            "seed": int(self.seed),
            "counts": [int(c) for c in self.counts],
            "n": self.n,
            "geometry": {
                "radius_mm": g.radius,
                "electrode_count": g.electrode_count,
                "electrode_coverage": g.electrode_coverage,
                "contact_impedance_ohm_m2": g.contact_impedance,
                "forward_edge_mm": self.forward_edge,
                "jacobian_edge_mm": self.jacobian_edge,
            },
            "noise_plan": [None if s is None else float(s) for s in self.noise_plan],
            "order": "row-major",
            "endianness": "little",
        }


def config_from_manifest(manifest) -> DatasetConfig:
    g = manifest["geometry"]
    return DatasetConfig(
        seed=manifest["seed"],
        counts=tuple(manifest["counts"]),
        geometry=SensorGeometry(
            radius=g["radius_mm"],
            electrode_count=g["electrode_count"],
            electrode_coverage=g["electrode_coverage"],
            contact_impedance=g["contact_impedance_ohm_m2"],
        ),
        forward_edge=g["forward_edge_mm"],
        jacobian_edge=g["jacobian_edge_mm"],
        noise_plan=tuple(manifest["noise_plan"]),
        version=manifest["version"],
    )


def add_noise(frame, snr_db, rng_seed):
    """Additive Gaussian noise at the requested SNR; None means clean.

    The noise standard deviation is the frame RMS scaled by
    10^(-snr_db / 20), so the target SNR holds per frame.
    """
    values = frame.values if isinstance(frame, fem.MeasurementFrame) else np.asarray(frame)
    values = values.astype(np.float64, copy=True)
    if snr_db is not None:
        rms = float(np.sqrt(np.mean(values ** 2)))
        std = rms * 10.0 ** (-float(snr_db) / 20.0)
        values = values + np.random.default_rng(rng_seed).normal(0.0, std, values.shape)
    if isinstance(frame, fem.MeasurementFrame):
        return fem.MeasurementFrame(values=values, kind=frame.kind)
    return values


_worker_state = {}


def _init_worker(config):
    geometry = config.geometry
    mesh = build_mesh(geometry, config.forward_edge)
    reference = np.full(mesh.n_elements, phantoms.BACKGROUND_CONDUCTIVITY)
    v0 = fem.forward_frame(mesh, reference, geometry)
    _worker_state["config"] = config
    _worker_state["mesh"] = mesh
    _worker_state["grid"] = PixelGrid.for_geometry(geometry)
    _worker_state["v0"] = v0


def _make_sample(index):
    config = _worker_state["config"]
    mesh = _worker_state["mesh"]
    grid = _worker_state["grid"]
    v0 = _worker_state["v0"]
    scene = phantoms.sample_phantom(config.seed + index, config.object_count(index),
                                    config.geometry)
    sigma = phantoms.rasterize_field(scene, mesh)
    try:
        v1 = fem.forward_frame(mesh, sigma, config.geometry)
    except fem.SolverError as exc:
        raise DatasetError(f"forward solve failed at sample {index}: {exc}") from exc
    dv = fem.normalized_difference(v1, v0)
    snr = config.noise_plan[index % len(config.noise_plan)]
    dv = add_noise(dv, snr, rng_seed=config.seed + config.n + index)
    truth = phantoms.truth_image(scene, grid)
    mask = phantoms.mask_image(scene, grid)
    return (dv.values.astype("<f4"), truth.reshape(-1).astype("<f4"),
            mask.reshape(-1).astype(np.uint8))


def generate_dataset(config: DatasetConfig, out_dir, jobs: int = 1) -> Path:
    """Generate all samples and write the on-disk container.

    Per-sample seeds are config.seed + index (phantoms) and
    config.seed + n + index (noise draws), so generation parallelizes over
    indices without changing any byte of the output.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = config.n
    indices = range(n)
    if jobs > 1 and n > 1:
        with multiprocessing.Pool(jobs, initializer=_init_worker,
                                  initargs=(config,)) as pool:
            results = pool.map(_make_sample, indices, chunksize=max(1, n // (4 * jobs)))
    else:
        _init_worker(config)
        results = [_make_sample(i) for i in indices]

    voltages = np.stack([r[0] for r in results]) if n else np.empty((0, 104), "<f4")
    truths = np.stack([r[1] for r in results]) if n else np.empty((0, N_IMAGE), "<f4")
    masks = np.stack([r[2] for r in results]) if n else np.empty((0, N_IMAGE), np.uint8)
    write_arrays(out, config.manifest(), voltages, truths, masks)
    return out


def write_arrays(out_dir, manifest, voltages, truths, masks):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(voltages, dtype="<f4").tofile(out / "voltages.f32le")
    np.ascontiguousarray(truths, dtype="<f4").tofile(out / "truths.f32le")
    np.ascontiguousarray(masks, dtype=np.uint8).tofile(out / "masks.u8")
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def stratified_indices(counts, seed):
    """Per-type split: 10% test, 10% of the remainder validation, rest train.

    Fractions round down; whenever a type has at least a few samples each
    split receives at least one. Returns sorted (train, val, test) arrays.
    """
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    start = 0
    for c in counts:
        c = int(c)
        block = np.arange(start, start + c)
        start += c
        if c == 0:
            continue
        if c < 10:
            print(f"warning: only {c} samples of one type; splits may be degenerate",
                  file=sys.stderr)
        perm = rng.permutation(block)
        n_test = int(np.floor(0.1 * c))
        if n_test == 0 and c >= 3:
            n_test = 1
        rem = c - n_test
        n_val = int(np.floor(0.1 * rem))
        if n_val == 0 and rem >= 2:
            n_val = 1
        test.append(perm[:n_test])
        val.append(perm[n_test:n_test + n_val])
        train.append(perm[n_test + n_val:])
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.empty(0, np.int64)
    return cat(train), cat(val), cat(test)


def _write_index(path, indices):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in indices:
            fh.write(f"{int(i)}\n")


def stratified_split(dataset_dir, seed):
    """Write train.idx / val.idx / test.idx next to the arrays."""
    out = Path(dataset_dir)
    manifest = _read_manifest(out)
    train, val, test = stratified_indices(manifest["counts"], seed)
    _write_index(out / "train.idx", train)
    _write_index(out / "val.idx", val)
    _write_index(out / "test.idx", test)
    return train, val, test


def _read_manifest(out):
    path = out / "manifest.json"
    if not path.exists():
        raise DatasetError(f"missing manifest: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed manifest {path}: {exc}") from exc
    version = manifest.get("version")
    if version != FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset version {version!r}; "
                           f"this build reads version {FORMAT_VERSION}")
    return manifest


def _read_array(path, dtype, row_len, n):
    expected = n * row_len * np.dtype(dtype).itemsize
    actual = path.stat().st_size if path.exists() else -1
    if actual != expected:
        raise DatasetError(f"{path.name}: expected {expected} bytes, found {actual}")
    return np.fromfile(path, dtype=dtype).reshape(n, row_len)


@dataclass(frozen=True)
class Dataset:
    manifest: dict
    voltages: np.ndarray   # (n, 104) float32
    truths: np.ndarray     # (n, 4096) float32
    masks: np.ndarray      # (n, 4096) uint8
    splits: dict           # name -> index array (may be empty)

    @property
    def n(self):
        return self.voltages.shape[0]


def load_dataset(dataset_dir) -> Dataset:
    """Validate sizes against the manifest and map everything into memory."""
    out = Path(dataset_dir)
    manifest = _read_manifest(out)
    n = int(manifest["n"])
    if n != int(sum(manifest["counts"])):
        raise DatasetError("manifest n does not match counts")
    voltages = _read_array(out / "voltages.f32le", "<f4", 104, n)
    truths = _read_array(out / "truths.f32le", "<f4", N_IMAGE, n)
    masks = _read_array(out / "masks.u8", np.uint8, N_IMAGE, n)
    splits = {}
    for name in ("train", "val", "test"):
        path = out / f"{name}.idx"
        if path.exists():
            text = path.read_text(encoding="utf-8").split()
            splits[name] = np.array([int(t) for t in text], dtype=np.int64)
    return Dataset(manifest=manifest, voltages=voltages, truths=truths,
                   masks=masks, splits=splits)
