"""Command-line front end.

Subcommands:

* ``dataset gen``   sample phantoms, solve them, write arrays + split files
* ``forward``       one phantom -> measurement frame, printed or saved
* ``recon``         batch reconstruction of a dataset -> predictions.f32le
* ``guidance``      optical frame (PPM) -> 64x64 mask (PGM)
* ``metrics``       score predictions against truths, CSV report
* ``render``        one record of an array file -> PGM/PPM
* ``scaffold-demo`` end-to-end run on a fixed bench scene

Every run that produces files also writes a JSON run manifest next to them
(argv, resolved configuration, seeds, timings, output paths) so the run can
be repeated exactly.  All text output uses '.' decimals and LF newlines.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import fem
from .dataset import (DEFAULT_FORWARD_EDGE, DEFAULT_JACOBIAN_EDGE, Dataset,
                      DatasetConfig, DatasetError, add_noise,
                      config_from_manifest, generate_dataset, load_dataset,
                      stratified_split)
from .geometry import SensorGeometry
from .grids import PixelGrid
from .guidance import process_guidance_report, synth_guidance
from .mesh import MeshError, build_mesh
from .metrics import MetricError, batch_metrics, write_report
from .netpbm import NetpbmError, read_pgm, read_ppm, write_pgm, write_ppm
from .phantoms import (BACKGROUND_CONDUCTIVITY, PhantomError, rasterize_field,
                       sample_phantom, scaffold_scene, truth_image)
from .recon import (ReconError, NormalSolver, cg_recon, default_lambda,
                    structural_operator, treg_gl_batch)

N_IMAGE = 64 * 64

_DOMAIN_ERRORS = (MeshError, fem.SolverError, PhantomError, NetpbmError,
                  MetricError, DatasetError, ReconError, ValueError, OSError)


@dataclass
class RunManifest:
    """Reproducibility record written beside every file-producing run."""

    command: str
    argv: list
    config: dict
    seeds: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def write(self, path):
        payload = asdict(self)
        payload["outputs"] = [str(p) for p in payload["outputs"]]
        with open(path, "w", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True,
                      default=lambda o: o.item())  # numpy scalars
            fh.write("\n")


def _json_safe(mapping):
    out = {}
    for k, v in mapping.items():
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def _parse_counts(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("--counts needs four comma-separated integers")
    counts = tuple(int(p) for p in parts)
    if any(c < 0 for c in counts) or sum(counts) == 0:
        raise ValueError("--counts must be non-negative with a positive sum")
    return counts


def _parse_noise_plan(text):
    plan = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        plan.append(None if tok in ("clean", "none") else float(tok))
    if not plan:
        raise ValueError("--noise-plan is empty")
    return tuple(plan)


def _parse_clamp(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError("--clamp needs 'lo,hi'")
    lo, hi = float(parts[0]), float(parts[1])
    if not hi > lo:
        raise ValueError("--clamp needs lo < hi")
    return lo, hi


def _records_from_file(path, index):
    """Load record `index` of a flat array file as a 64x64 image.

    Files ending in .u8 hold byte masks; anything else is little-endian
    float32.  Both are sequences of 4096-entry row-major records.
    """
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".u8":
        arr = np.frombuffer(raw, dtype=np.uint8)
    else:
        arr = np.frombuffer(raw, dtype="<f4")
    if arr.size == 0 or arr.size % N_IMAGE:
        raise ValueError(f"{path} does not hold whole 64x64 records")
    n = arr.size // N_IMAGE
    if not 0 <= index < n:
        raise ValueError(f"--index {index} out of range for {n} records")
    return arr.reshape(n, 64, 64)[index].astype(np.float64), n


def _render_gray(img, lo, hi):
    t = np.clip(img, lo, hi)
    return np.rint((t - lo) / (hi - lo) * 255.0).astype(np.uint8)


def _render_signed(img, lo, hi):
    # blue-white-red about zero; saturation set by the wider clamp bound
    scale = max(abs(lo), abs(hi))
    t = np.clip(img, lo, hi) / scale
    r = np.where(t >= 0, 1.0, 1.0 + t)
    g = 1.0 - np.abs(t)
    b = np.where(t >= 0, 1.0 - t, 1.0)
    return np.rint(np.stack([r, g, b], axis=-1) * 255.0).astype(np.uint8)


def _dataset_jacobian(config: DatasetConfig):
    mesh = build_mesh(config.geometry, config.jacobian_edge)
    ref = np.full(mesh.n_elements, BACKGROUND_CONDUCTIVITY)
    return fem.jacobian(mesh, ref, config.geometry)


# ---------------------------------------------------------------- dataset gen

def _cmd_dataset_gen(args, argv):
    counts = _parse_counts(args.counts)
    plan = _parse_noise_plan(args.noise_plan)
    split_seed = args.seed if args.split_seed is None else args.split_seed
    config = DatasetConfig(seed=args.seed, counts=counts,
                           geometry=SensorGeometry(),
                           forward_edge=args.forward_h,
                           jacobian_edge=args.jacobian_h,
                           noise_plan=plan)
    out = Path(args.out)
    t0 = time.perf_counter()
    generate_dataset(config, out, jobs=args.jobs)
    t1 = time.perf_counter()
    stratified_split(out, split_seed)
    t2 = time.perf_counter()
    outputs = [out / n for n in ("manifest.json", "voltages.f32le",
                                 "truths.f32le", "masks.u8",
                                 "train.idx", "val.idx", "test.idx")]
    RunManifest("dataset gen", argv, _json_safe(config.manifest()),
                seeds={"dataset": args.seed, "split": split_seed},
                timings={"generate_s": t1 - t0, "split_s": t2 - t1},
                outputs=outputs).write(out / "run.json")
    print(f"wrote {config.n} samples to {out}")
    return 0


# -------------------------------------------------------------------- forward

def _cmd_forward(args, argv):
    geo = SensorGeometry()
    t0 = time.perf_counter()
    scene = sample_phantom(args.seed, args.objects, geo)
    mesh = build_mesh(geo, args.forward_h)
    field = rasterize_field(scene, mesh)
    v1 = fem.forward_frame(mesh, field, geo)
    if args.kind == "raw":
        frame = v1
    else:
        ref = np.full(mesh.n_elements, BACKGROUND_CONDUCTIVITY)
        v0 = fem.forward_frame(mesh, ref, geo)
        frame = fem.normalized_difference(v1, v0)
    if args.snr is not None:
        noise_seed = args.seed if args.noise_seed is None else args.noise_seed
        frame = add_noise(frame, args.snr, noise_seed)
    elapsed = time.perf_counter() - t0
    if args.out is None:
        for v in frame.values:
            print(f"{v:.9e}")
        return 0
    out = Path(args.out)
    frame.values.astype("<f4").tofile(out)
    RunManifest("forward", argv,
                {"objects": args.objects, "forward_h": args.forward_h,
                 "kind": args.kind, "snr_db": args.snr},
                seeds={"phantom": args.seed,
                       "noise": args.noise_seed if args.noise_seed is not None
                       else args.seed},
                timings={"solve_s": elapsed},
                outputs=[out]).write(out.with_name(out.name + ".run.json"))
    print(f"wrote {frame.values.size} values to {out}")
    return 0


# ---------------------------------------------------------------------- recon

_RECON_STATE = {}


def _init_recon_worker(manifest, lam, gamma):
    config = config_from_manifest(manifest)
    _RECON_STATE["sens"] = _dataset_jacobian(config)
    _RECON_STATE["lam"] = lam
    _RECON_STATE["gamma"] = gamma


def _recon_task(payload):
    dv, mask = payload
    return cg_recon(_RECON_STATE["sens"], dv, mask,
                    lam=_RECON_STATE["lam"], gamma=_RECON_STATE["gamma"])


def _select_rows(ds: Dataset, split):
    if split is None:
        return np.arange(ds.voltages.shape[0])
    idx = ds.splits.get(split)
    if idx is None or len(idx) == 0:
        raise DatasetError(f"split {split!r} not present; run a split first")
    return np.asarray(idx)


def _cmd_recon(args, argv):
    t0 = time.perf_counter()
    ds = load_dataset(args.data)
    config = config_from_manifest(ds.manifest)
    rows = _select_rows(ds, args.split)
    volts = ds.voltages[rows].astype(np.float64)
    sens = _dataset_jacobian(config)
    lam = default_lambda(sens) if args.lam is None else args.lam
    t1 = time.perf_counter()
    if args.method == "tikhonov":
        preds = treg_gl_batch(sens, volts, lam=lam)
    else:
        gamma = args.gamma  # None -> cg_recon defaults it to lam
        if args.mask == "dataset":
            masks = ds.masks[rows].reshape(-1, 64, 64)
            if args.jobs > 1:
                with Pool(args.jobs, initializer=_init_recon_worker,
                          initargs=(ds.manifest, lam, gamma)) as pool:
                    preds = np.stack(pool.map(
                        _recon_task, list(zip(volts, masks)), chunksize=4))
            else:
                preds = np.stack([cg_recon(sens, dv, m, lam=lam, gamma=gamma)
                                  for dv, m in zip(volts, masks)])
        else:
            # fixed external mask: one factorization serves every frame
            mask = read_pgm(args.mask).astype(np.float64) / 255.0
            if mask.shape != (64, 64):
                raise ReconError("--mask image must be 64x64")
            gamma = lam if args.gamma is None else args.gamma
            if gamma < 0:
                raise ReconError("gamma must be non-negative")
            if gamma == 0:
                solver = NormalSolver(sens, lam)
            else:
                g = structural_operator(mask, sens.grid)
                solver = NormalSolver(sens, lam, extra=g, gamma=gamma)
            preds = np.stack([solver.solve(dv) for dv in volts])
    t2 = time.perf_counter()
    out = Path(args.out)
    preds.reshape(len(rows), N_IMAGE).astype("<f4").tofile(out)
    RunManifest("recon", argv,
                {"data": str(args.data), "method": args.method,
                 "lambda": lam, "gamma": args.gamma, "mask": args.mask,
                 "split": args.split, "jobs": args.jobs, "rows": len(rows)},
                timings={"setup_s": t1 - t0, "solve_s": t2 - t1},
                outputs=[out]).write(out.with_name(out.name + ".run.json"))
    print(f"reconstructed {len(rows)} frames -> {out}")
    return 0


# ------------------------------------------------------------------- guidance

def _cmd_guidance(args, argv):
    img = read_ppm(args.input)
    t0 = time.perf_counter()
    report = process_guidance_report(img, beta=args.beta, invert=args.invert,
                                     theta=args.theta)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    write_pgm(out, (report.mask * 255).astype(np.uint8))
    RunManifest("guidance", argv,
                {"input": str(args.input), "beta": args.beta,
                 "invert": args.invert, "theta_deg": report.theta_deg,
                 "inverted": report.inverted},
                timings={"segment_s": elapsed},
                outputs=[out]).write(out.with_name(out.name + ".run.json"))
    print(f"theta={report.theta_deg} inverted={report.inverted} -> {out}")
    return 0


# -------------------------------------------------------------------- metrics

def _load_f32le(path, what):
    arr = np.fromfile(path, dtype="<f4")
    if arr.size == 0 or arr.size % N_IMAGE:
        raise MetricError(f"{what} file {path} does not hold 64x64 records")
    return arr.reshape(-1, N_IMAGE).astype(np.float64)


def _cmd_metrics(args, argv):
    preds = _load_f32le(args.pred, "prediction")
    truth_path = Path(args.truth)
    if truth_path.is_dir():
        truth_path = truth_path / "truths.f32le"
    truths = _load_f32le(truth_path, "truth")
    if args.split is not None:
        idx = np.loadtxt(args.split, dtype=np.int64, ndmin=1)
        truths = truths[idx]
    if preds.shape[0] != truths.shape[0]:
        raise MetricError(f"{preds.shape[0]} predictions vs "
                          f"{truths.shape[0]} truths")
    rows, r_mean, m_mean = batch_metrics(preds, truths,
                                         data_range=args.data_range)
    if args.out is None:
        write_report(sys.stdout, rows, r_mean, m_mean)
        return 0
    out = Path(args.out)
    with open(out, "w", newline="\n") as fh:
        write_report(fh, rows, r_mean, m_mean)
    RunManifest("metrics", argv,
                {"pred": str(args.pred), "truth": str(args.truth),
                 "split": args.split, "data_range": args.data_range,
                 "rie_mean": r_mean, "mssim_mean": m_mean},
                outputs=[out]).write(out.with_name(out.name + ".run.json"))
    print(f"mean rie={r_mean:.6f} mssim={m_mean:.6f} -> {out}")
    return 0


# --------------------------------------------------------------------- render

def _cmd_render(args, argv):
    lo, hi = _parse_clamp(args.clamp)
    img, n = _records_from_file(args.input, args.index)
    if Path(args.input).suffix == ".u8":
        img = img * 255.0  # masks are 0/1; show them full-scale
        lo, hi = 0.0, 255.0
    out = Path(args.out)
    if args.palette == "gray":
        write_pgm(out, _render_gray(img, lo, hi))
        mapping = "linear clamp [lo,hi] -> bytes [0,255]"
    else:
        write_ppm(out, _render_signed(img, lo, hi))
        mapping = ("clamp [lo,hi], scale by max(|lo|,|hi|); "
                   "-1 -> blue, 0 -> white, +1 -> red")
    RunManifest("render", argv,
                {"input": str(args.input), "index": args.index,
                 "records": n, "palette": args.palette,
                 "clamp": [lo, hi], "mapping": mapping},
                outputs=[out]).write(out.with_name(out.name + ".run.json"))
    print(f"rendered record {args.index}/{n} -> {out}")
    return 0


# -------------------------------------------------------------- scaffold-demo

def _cmd_scaffold_demo(args, argv):
    geo = SensorGeometry()
    grid = PixelGrid.for_geometry(geo)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}

    t0 = time.perf_counter()
    scene = scaffold_scene(args.variant)
    fmesh = build_mesh(geo, args.forward_h)
    ref = np.full(fmesh.n_elements, BACKGROUND_CONDUCTIVITY)
    v0 = fem.forward_frame(fmesh, ref, geo)
    v1 = fem.forward_frame(fmesh, rasterize_field(scene, fmesh), geo)
    dv = fem.normalized_difference(v1, v0)
    if args.snr is not None:
        dv = add_noise(dv, args.snr, args.seed)
    timings["forward_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    optical = synth_guidance(scene, rng_seed=args.seed)
    report = process_guidance_report(optical)
    timings["guidance_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    jmesh = build_mesh(geo, args.jacobian_h)
    sens = fem.jacobian(jmesh, np.full(jmesh.n_elements,
                                       BACKGROUND_CONDUCTIVITY), geo)
    lam = default_lambda(sens)
    treg = NormalSolver(sens, lam).solve(dv)
    dual = cg_recon(sens, dv, report.mask, lam=lam)
    timings["recon_s"] = time.perf_counter() - t0

    truth = truth_image(scene, grid)
    preds = np.stack([treg, dual])
    truths = np.stack([truth, truth])
    rows, r_mean, m_mean = batch_metrics(preds, truths)

    write_ppm(out / "optical.ppm", optical)
    write_pgm(out / "mask.pgm", (report.mask * 255).astype(np.uint8))
    lo, hi = -0.2, 1.0
    write_ppm(out / "truth.ppm", _render_signed(truth, lo, hi))
    write_ppm(out / "tikhonov.ppm", _render_signed(treg, lo, hi))
    write_ppm(out / "dual.ppm", _render_signed(dual, lo, hi))
    preds.reshape(2, N_IMAGE).astype("<f4").tofile(out / "predictions.f32le")
    truths.reshape(2, N_IMAGE).astype("<f4").tofile(out / "truths.f32le")
    with open(out / "report.csv", "w", newline="\n") as fh:
        write_report(fh, rows, r_mean, m_mean)

    outputs = [out / n for n in ("optical.ppm", "mask.pgm", "truth.ppm",
                                 "tikhonov.ppm", "dual.ppm",
                                 "predictions.f32le", "truths.f32le",
                                 "report.csv")]
    RunManifest("scaffold-demo", argv,
                {"variant": args.variant, "snr_db": args.snr,
                 "forward_h": args.forward_h, "jacobian_h": args.jacobian_h,
                 "lambda": lam, "theta_deg": report.theta_deg,
                 "clamp": [lo, hi]},
                seeds={"noise": args.seed, "optical": args.seed},
                timings=timings, outputs=outputs).write(out / "run.json")
    for name, (r, m) in zip(("tikhonov", "dual"), rows):
        print(f"{name}: rie={r:.4f} mssim={m:.4f}")
    return 0


# ---------------------------------------------------------------------- wiring

def _build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="eitdm",
        description="impedance + optical tomography toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="dataset operations",
                       formatter_class=fmt)
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    g = dsub.add_parser("gen", help="generate a dataset and split it",
                        formatter_class=fmt)
    g.add_argument("--counts", required=True,
                   help="samples per object count, e.g. 10,10,10,10")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--forward-h", type=float, default=DEFAULT_FORWARD_EDGE,
                   help="forward mesh edge length, mm")
    g.add_argument("--jacobian-h", type=float, default=DEFAULT_JACOBIAN_EDGE,
                   help="sensitivity mesh edge length, mm")
    g.add_argument("--noise-plan", default="clean,50,40,30",
                   help="SNR rotation in dB; 'clean' means no noise")
    g.add_argument("--split-seed", type=int, default=None,
                   help="split shuffle seed (defaults to --seed)")
    g.add_argument("--jobs", type=int, default=1, help="worker processes")
    g.set_defaults(func=_cmd_dataset_gen)

    f = sub.add_parser("forward", help="solve one phantom",
                       formatter_class=fmt)
    f.add_argument("--objects", type=int, default=1, help="inclusions, 1..4")
    f.add_argument("--seed", type=int, required=True, help="phantom seed")
    f.add_argument("--forward-h", type=float, default=DEFAULT_FORWARD_EDGE)
    f.add_argument("--kind", choices=("difference", "raw"),
                   default="difference",
                   help="normalized difference frame or raw voltages")
    f.add_argument("--snr", type=float, default=None,
                   help="add measurement noise at this SNR (dB)")
    f.add_argument("--noise-seed", type=int, default=None,
                   help="noise seed (defaults to --seed)")
    f.add_argument("--out", default=None,
                   help="write little-endian float32 instead of printing")
    f.set_defaults(func=_cmd_forward)

    r = sub.add_parser("recon", help="batch reconstruction",
                       formatter_class=fmt)
    r.add_argument("--data", required=True, help="dataset directory")
    r.add_argument("--method", choices=("tikhonov", "cg"), default="tikhonov",
                   help="plain Tikhonov or cross-gradient dual-modal")
    r.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="smoothness weight (default: trace-balanced)")
    r.add_argument("--gamma", type=float, default=None,
                   help="structural weight for cg (default: lambda)")
    r.add_argument("--mask", default="dataset",
                   help="'dataset' for per-sample masks or a 64x64 PGM path")
    r.add_argument("--split", default=None,
                   help="restrict to a split: train, val, or test")
    r.add_argument("--out", required=True, help="predictions file (f32le)")
    r.add_argument("--jobs", type=int, default=1,
                   help="worker processes for per-sample cg factorizations")
    r.set_defaults(func=_cmd_recon)

    gd = sub.add_parser("guidance", help="segment an optical frame",
                        formatter_class=fmt)
    gd.add_argument("--input", required=True, help="406x406 binary PPM")
    gd.add_argument("--out", required=True, help="64x64 mask PGM")
    gd.add_argument("--beta", type=float, default=0.5,
                    help="threshold on the normalized invariant image")
    gd.add_argument("--invert", choices=("auto", "on", "off"), default="auto",
                    help="mask polarity handling")
    gd.add_argument("--theta", type=int, default=None,
                    help="fixed projection angle; skips the entropy scan")
    gd.set_defaults(func=_cmd_guidance)

    m = sub.add_parser("metrics", help="score predictions", formatter_class=fmt)
    m.add_argument("--pred", required=True, help="predictions (f32le)")
    m.add_argument("--truth", required=True,
                   help="truth file (f32le) or dataset directory")
    m.add_argument("--split", default=None,
                   help="index file selecting truth rows, e.g. test.idx")
    m.add_argument("--data-range", type=float, default=1.0)
    m.add_argument("--out", default=None, help="CSV path (default: stdout)")
    m.set_defaults(func=_cmd_metrics)

    rd = sub.add_parser("render", help="render an array record",
                        formatter_class=fmt)
    rd.add_argument("--input", required=True,
                    help="f32le image file, or .u8 mask file")
    rd.add_argument("--index", type=int, default=0, help="record to render")
    rd.add_argument("--palette", choices=("gray", "signed"), default="gray",
                    help="gray PGM or blue-white-red PPM about zero")
    rd.add_argument("--clamp", default="-0.2,1",
                    help="display clamp 'lo,hi'")
    rd.add_argument("--out", required=True, help="PGM/PPM path")
    rd.set_defaults(func=_cmd_render)

    s = sub.add_parser("scaffold-demo", help="end-to-end bench-scene run",
                       formatter_class=fmt)
    s.add_argument("--variant", type=int, choices=(1, 2), required=True,
                   help="1: single disk, 2: two disks")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=0,
                   help="noise + optical synthesis seed")
    s.add_argument("--snr", type=float, default=50.0,
                   help="measurement SNR in dB")
    s.add_argument("--forward-h", type=float, default=DEFAULT_FORWARD_EDGE)
    s.add_argument("--jacobian-h", type=float, default=DEFAULT_JACOBIAN_EDGE)
    s.set_defaults(func=_cmd_scaffold_demo)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args, list(argv))
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
