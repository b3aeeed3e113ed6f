"""Worker entry point: flags mirror the WorkerConfig fields; serves on
stdin/stdout unless ``--listen PORT`` selects TCP."""

from __future__ import annotations

import argparse

from .serve import Worker, WorkerConfig, serve_stdio, serve_tcp


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eatnas-worker",
                                     description="trainer worker for the evaluator protocol")
    parser.add_argument("--dataset", default="synthetic", choices=("synthetic", "cifar10"))
    parser.add_argument("--data-path", default=None)
    parser.add_argument("--train-size", type=int, default=5000,
                        help="images drawn for the desk-scale subset")
    parser.add_argument("--split", type=float, default=0.8,
                        help="train fraction of the subset; the rest is held out")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--lr", type=float, default=0.0256)
    parser.add_argument("--momentum", type=float, default=0.9)
    parser.add_argument("--weight-decay", type=float, default=3e-4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--listen", type=int, default=None, metavar="PORT")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    worker = Worker(WorkerConfig(
        dataset=args.dataset,
        data_path=args.data_path,
        train_size=args.train_size,
        split=args.split,
        device=args.device,
        batch_size=args.batch_size,
        lr=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        seed=args.seed,
    ))
    if args.listen is not None:
        serve_tcp(worker, args.listen)
    else:
        serve_stdio(worker)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
