"""Command line entry points: train a model, run inference."""

import argparse
import sys

from .config import ModelConfig, PhaseConfig, TrainConfig


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fusionnet",
        description="learned dual-modal image reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train on a dataset directory")
    t.add_argument("dataset")
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--single-modal", action="store_true")
    t.add_argument("--width-multiplier", type=float, default=1.0)
    t.add_argument("--phase1-epochs", type=int, default=None)
    t.add_argument("--phase2-epochs", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None,
                   help="override both phase batch sizes")

    i = sub.add_parser("infer", help="write predictions.f32le")
    i.add_argument("checkpoint")
    i.add_argument("dataset")
    i.add_argument("--out", required=True)
    i.add_argument("--split", default=None)
    i.add_argument("--batch-size", type=int, default=64)
    return parser


def _train_config(args) -> TrainConfig:
    tc = TrainConfig()
    p1, p2 = tc.phase1, tc.phase2
    if args.phase1_epochs is not None or args.batch_size is not None:
        p1 = PhaseConfig(p1.lr, p1.weight_decay,
                         args.phase1_epochs or p1.epochs,
                         args.batch_size or p1.batch_size, p1.patience)
    if args.phase2_epochs is not None or args.batch_size is not None:
        p2 = PhaseConfig(p2.lr, p2.weight_decay,
                         args.phase2_epochs or p2.epochs,
                         args.batch_size or p2.batch_size, p2.patience)
    return TrainConfig(phase1=p1, phase2=p2)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    from .data import ContainerError

    if args.command == "train":
        from .model import build_model
        from .train import TrainingError, train
        config = ModelConfig(single_modal=args.single_modal,
                             width_multiplier=args.width_multiplier)
        model = build_model(config, seed=args.seed)
        try:
            history = train(model, args.dataset, _train_config(args),
                            seed=args.seed, out_dir=args.out)
        except (TrainingError, ContainerError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"trained {len(history)} epochs, checkpoint in {args.out}")
        return 0

    if args.command == "infer":
        from .infer import infer
        try:
            n = infer(args.checkpoint, args.dataset, args.out,
                      split=args.split, batch_size=args.batch_size)
        except (ContainerError, FileNotFoundError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {n} predictions to {args.out}")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
