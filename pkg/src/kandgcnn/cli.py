"""Command-line entry point: ``kandgcnn {train,eval,params,gradcheck,convert,synth}``.

Exit codes: 0 success, 1 usage/validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import secrets
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .basis import DISCRETE_CHEBYSHEV, FAMILIES, JACOBI, BasisSpec
from .checkpoint import load_checkpoint
from .data import SYNTH_CLASSES, convert_modelnet, load_split, synth_dataset, write_cache
from .errors import ConfigError, KanDgcnnError
from .kernels import BACKEND
from .model import KAN, MLP, Model, ModelConfig, count_params
from .train import LR_SCHEDULES, TrainConfig, evaluate, train_loop

log = logging.getLogger("kandgcnn")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_model_flags(p, default_classes=None):
    p.add_argument("--layer", choices=(KAN, MLP), default=KAN)
    # None marks "not given" so MLP runs can reject basis flags
    p.add_argument("--basis", choices=FAMILIES, default=None)
    p.add_argument("--degree", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--edge-hidden", type=int, default=128)
    p.add_argument("--embedding", type=int, default=1024)
    p.add_argument("--num-classes", type=int, default=default_classes)
    p.add_argument("--no-norm", action="store_true", help="disable KAN output normalization")


def _model_config(args, num_classes) -> ModelConfig:
    basis_flags = [f for f in ("basis", "degree", "alpha", "beta") if getattr(args, f) is not None]
    if args.layer == MLP:
        if basis_flags:
            raise UsageError(f"--{basis_flags[0]} only applies to --layer kan")
        if args.no_norm:
            raise UsageError("--no-norm only applies to --layer kan")
    family = args.basis or JACOBI
    if family == DISCRETE_CHEBYSHEV and (args.alpha is not None or args.beta is not None):
        raise UsageError("--alpha/--beta only apply to --basis jacobi")
    spec = BasisSpec(
        family=family,
        degree=3 if args.degree is None else args.degree,
        alpha=1.0 if args.alpha is None else args.alpha,
        beta=1.0 if args.beta is None else args.beta,
    )
    return ModelConfig(
        layer=args.layer,
        basis=spec,
        k=args.k,
        edge_hidden=args.edge_hidden,
        embedding=args.embedding,
        num_classes=num_classes,
        normalize=not args.no_norm,
    )


@contextlib.contextmanager
def _thread_limit(threads):
    if threads is None:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=threads):
        yield


def _load_data(path):
    """Train/test caches from a directory, or the default synthetic set for ``synth``."""
    data_dir = Path(path)
    if data_dir.is_dir():
        return load_split(data_dir, "train"), load_split(data_dir, "test")
    if str(path) == "synth":
        return synth_dataset(50, 1024, 0, "train"), synth_dataset(10, 1024, 0, "test")
    raise UsageError(f"data directory {path} does not exist")


def cmd_train(args) -> int:
    if args.from_manifest:
        manifest = json.loads(Path(args.from_manifest).read_text())
        config = ModelConfig.from_strings(manifest["model"])
        tcfg = TrainConfig(**manifest["train"])
        data_path = manifest["data"]
        threads = manifest.get("threads")
        out = Path(args.out) if args.out else Path(args.from_manifest).parent / "replay"
    else:
        if args.data is None:
            raise UsageError("--data is required")
        seed = args.seed
        if seed is None:
            seed = secrets.randbelow(2**31)
            print(f"seed={seed}")
        tcfg = TrainConfig(
            batch_size=args.batch, epochs=args.epochs, lr=args.lr, momentum=args.momentum,
            k=args.k, points=args.points, seed=seed, lr_schedule=args.lr_schedule,
            augment=not args.no_augment,
        )
        data_path = args.data
        threads = args.threads
        out = Path(args.out) if args.out else Path("runs") / f"run-{seed}"
        config = None
    train_data, test_data = _load_data(data_path)
    if config is None:
        num_classes = args.num_classes or int(max(train_data.labels.max(), test_data.labels.max())) + 1
        config = _model_config(args, num_classes)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "toolkit_version": __version__,
        "backend": BACKEND,
        "started": datetime.now(timezone.utc).isoformat(),
        "data": str(data_path),
        "threads": threads,
        "model": config.to_strings(),
        "train": asdict(tcfg),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    model = Model(config, rng=np.random.default_rng([int(tcfg.seed), 0]))
    log.info("training %s model with %d parameters (%s kernels)", config.layer,
             model.num_params(), BACKEND)

    def progress(rec):
        print(
            f"epoch {rec.epoch:4d}  loss {rec.train_loss:.4f}  train OA {rec.train_oa:.4f}  "
            f"test OA {rec.test_oa:.4f}  MCA {rec.test_mca:.4f}  {rec.wall_seconds:.1f}s",
            flush=True,
        )

    with _thread_limit(threads):
        train_loop(model, train_data, test_data, tcfg, out_dir=out,
                   log_path=out / "epochs.log", progress=progress)
    return EXIT_OK


def cmd_eval(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    data = load_split(args.data, args.split)
    points = args.points or int(meta.get("points", 0)) or None
    with _thread_limit(args.threads):
        loss, oa, mca = evaluate(model, data.stacked(points), data.labels, args.batch)
    print(f"loss={loss!r} oa={oa!r} mca={mca!r}")
    return EXIT_OK


def cmd_params(args) -> int:
    print(count_params(_model_config(args, args.num_classes)))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    results = run_suite(args.seed)
    offenders = []
    for r in results:
        ok = r.max_error < args.tolerance
        print(f"{'ok  ' if ok else 'FAIL'} {r.max_error:.3e}  {r.component}")
        if not ok:
            offenders.append(r.component)
    worst = max(r.max_error for r in results)
    print(f"max error {worst:.3e} over {len(results)} components (tolerance {args.tolerance:g})")
    if offenders:
        print("exceeded tolerance: " + ", ".join(offenders), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_convert(args) -> int:
    classes = convert_modelnet(args.modelnet, args.out, args.points, args.seed, args.workers)
    print(f"wrote {len(classes)} classes to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cache(out / "train.kdc",
                synth_dataset(args.per_class, args.points, args.seed, "train", args.classes))
    write_cache(out / "test.kdc",
                synth_dataset(args.test_per_class, args.points, args.seed, "test", args.classes))
    (out / "classes.txt").write_text(
        "".join(f"{i}\t{name}\n" for i, name in enumerate(SYNTH_CLASSES[:args.classes]))
    )
    print(f"wrote {args.classes * args.per_class} train and "
          f"{args.classes * args.test_per_class} test clouds to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kandgcnn", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model", allow_abbrev=False)
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--from-manifest", help="replay the run described by a manifest.json")
    _add_model_flags(p)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lr-schedule", choices=LR_SCHEDULES, default="constant")
    p.add_argument("--no-augment", action="store_true",
                   help="disable train-time random scaling and shifting")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint", allow_abbrev=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("params", help="print the trainable parameter count", allow_abbrev=False)
    _add_model_flags(p, default_classes=40)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("gradcheck", help="finite-difference check of all backward passes",
                       allow_abbrev=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("convert", help="ModelNet40 OFF tree -> train/test caches",
                       allow_abbrev=False)
    p.add_argument("--modelnet", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", help="write a synthetic shape dataset", allow_abbrev=False)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4, choices=range(1, len(SYNTH_CLASSES) + 1))
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--test-per-class", type=int, default=10)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"kandgcnn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KanDgcnnError, OSError) as exc:
        print(f"kandgcnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
