"""Command-line entry point.

Subcommands: gen-data, pretrain, adapt, eval, capture-embeddings, explain,
report. Exit codes: 0 success, 1 usage or config error, 2 data or
checkpoint error, 3 numeric failure (non-finite loss). Every subcommand
writes only beneath its --out directory.
"""

import os
import sys

# honor the thread cap before any BLAS-backed import happens
_THREADS = os.environ.get("EMOADAPT_THREADS")
if _THREADS:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse
import hashlib
import json
from datetime import datetime, timezone

from .checkpoint import CheckpointError, load_file, save_file
from .config import ConfigError, RunConfig, build_config
from .data import DataError, Dataset, generate_synthetic, load_dataset, split_dataset
from .evaluate import confusion_csv, evaluate, export_embedding_plot, metrics_json
from .intersection import (
    IntersectionReport,
    MODES,
    analyze_embeddings,
    capture_embeddings,
    embeddings_from_checkpoint,
    embeddings_to_checkpoint,
    layer_convergence,
)
from .model import LAYER_TAGS, AttentionCnn
from .pipeline import (
    NumericError,
    TrainSettings,
    adapt,
    log_csv,
    params_from_checkpoint,
    pretrain,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def _limit_blas_threads() -> None:
    if not _THREADS:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(int(_THREADS))
    except (ImportError, ValueError):
        pass  # env vars above already cover freshly loaded BLAS


def _add_common(sub, training=False):
    sub.add_argument("--config", metavar="PATH", help="key=value config file")
    sub.add_argument("--seed", type=int, metavar="N")
    sub.add_argument("--out", required=True, metavar="DIR", help="output directory")
    if training:
        sub.add_argument("--epochs", type=int, metavar="N")
        sub.add_argument("--batch-size", type=int, metavar="N")
        sub.add_argument("--lambda", dest="lam", type=float, metavar="F",
                         help="L2 weight")
        sub.add_argument("--w-disc", type=float, metavar="F",
                         help="discrepancy term weight")


def _run_config(args) -> RunConfig:
    overrides = {
        "train.seed": getattr(args, "seed", None),
        "train.epochs": getattr(args, "epochs", None),
        "train.batch_size": getattr(args, "batch_size", None),
        "loss.lambda": getattr(args, "lam", None),
        "loss.w_discrepancy": getattr(args, "w_disc", None),
    }
    return build_config(args.config, overrides)


def _settings(rc: RunConfig) -> TrainSettings:
    v = rc.values
    return TrainSettings(
        epochs=v["train.epochs"], batch_size=v["train.batch_size"],
        lr=v["train.lr"], beta1=v["train.beta1"], beta2=v["train.beta2"],
        eps=v["train.eps"], seed=v["train.seed"], loss=rc.loss_config(),
    )


def _load_split(manifest, split: str, size: int) -> Dataset:
    ds = load_dataset(manifest, size=size)
    if split == "all":
        return ds
    train, test = split_dataset(ds)
    return train if split == "train" else test


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_gen_data(args) -> int:
    manifest = generate_synthetic(args.out, args.domain, args.per_class, args.seed or 0)
    print(f"wrote {4 * args.per_class} {args.domain} images, manifest {manifest}")
    return 0


def cmd_pretrain(args) -> int:
    rc = _run_config(args)
    model = AttentionCnn(rc.model_config())
    ds = _load_split(args.data, args.split, rc["model.input_size"])
    ckpt, rows = pretrain(model, ds, _settings(rc), rc.digest())
    ckpt_path = _out_path(args, "source.ckpt")
    save_file(ckpt_path, ckpt)
    _write_text(_out_path(args, "pretrain_log.csv"), log_csv(rows))
    print(f"pretrained on {len(ds)} images for {rows[-1].epoch} epochs, "
          f"final train accuracy {rows[-1].accuracy:.4f}, saved {ckpt_path}")
    return 0


def cmd_adapt(args) -> int:
    rc = _run_config(args)
    model = AttentionCnn(rc.model_config())
    ds = _load_split(args.data, args.split, rc["model.input_size"])
    source = load_file(args.source_checkpoint)
    ckpt, rows = adapt(model, ds, source, _settings(rc), rc.digest())
    ckpt_path = _out_path(args, "adapted.ckpt")
    save_file(ckpt_path, ckpt)
    _write_text(_out_path(args, "adapt_log.csv"), log_csv(rows))
    print(f"adapted on {len(ds)} images for {rows[-1].epoch} epochs, "
          f"final train accuracy {rows[-1].accuracy:.4f}, saved {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    rc = _run_config(args)
    model = AttentionCnn(rc.model_config())
    ckpt = load_file(args.checkpoint, expected_digest=rc.digest())
    params = params_from_checkpoint(ckpt, model, requires_grad=False)
    ds = _load_split(args.data, args.split, rc["model.input_size"])
    result = evaluate(model, params, ds)
    _write_text(_out_path(args, "metrics.json"), metrics_json(result))
    _write_text(_out_path(args, "confusion.csv"), confusion_csv(result.confusion))
    print(f"accuracy {result.accuracy:.4f} on {len(ds)} images "
          f"({ckpt.phase} checkpoint, split {args.split})")
    return 0


def cmd_capture_embeddings(args) -> int:
    rc = _run_config(args)
    model = AttentionCnn(rc.model_config())
    ckpt = load_file(args.checkpoint, expected_digest=rc.digest())
    params = params_from_checkpoint(ckpt, model, requires_grad=False)
    ds = _load_split(args.data, args.split, rc["model.input_size"])
    layers = tuple(args.layers.split(",")) if args.layers else LAYER_TAGS
    unknown = [t for t in layers if t not in LAYER_TAGS]
    if unknown:
        raise UsageError(f"unknown layer tags {unknown}; valid: {','.join(LAYER_TAGS)}")
    dumps = capture_embeddings(model, params, ds.images, layers)
    out = embeddings_to_checkpoint(
        dumps, ds.labels, rc.digest(), ckpt.seed, ckpt.step, ckpt.class_names
    )
    path = _out_path(args, "embeddings.ckpt")
    save_file(path, out)
    for tag in layers:
        _write_text(
            _out_path(args, f"embedding_plot_{tag}.csv"),
            export_embedding_plot(dumps[tag], ds.labels),
        )
    print(f"captured {len(ds)} samples at layers {','.join(layers)} into {path}")
    return 0


def cmd_explain(args) -> int:
    rc = _run_config(args)
    if args.embeddings:
        dumps, labels = embeddings_from_checkpoint(load_file(args.embeddings))
        ordered = [tag for tag in LAYER_TAGS if tag in dumps]
        report = IntersectionReport(
            [analyze_embeddings(dumps[tag], labels, layer=tag) for tag in ordered]
        )
    elif args.checkpoint and args.data:
        model = AttentionCnn(rc.model_config())
        ckpt = load_file(args.checkpoint, expected_digest=rc.digest())
        params = params_from_checkpoint(ckpt, model, requires_grad=False)
        ds = _load_split(args.data, args.split, rc["model.input_size"])
        report = layer_convergence(model, params, ds.images, ds.labels)
    else:
        raise UsageError("explain needs --embeddings or both --checkpoint and --data")
    path = _out_path(args, "intersection_report.csv")
    _write_text(path, report.to_csv())
    for res in report.layers:
        print(f"{res.layer}: C = {res.score(args.mode):.6g} ({args.mode})")
    return 0


def cmd_report(args) -> int:
    if not os.path.isdir(args.out):
        raise DataError(f"run directory {args.out} does not exist")
    files = {}
    for root, _, names in os.walk(args.out):
        for name in sorted(names):
            full = os.path.join(root, name)
            rel = os.path.relpath(full, args.out)
            if rel == "run_manifest.json":
                continue
            with open(full, "rb") as fh:
                files[rel.replace(os.sep, "/")] = hashlib.sha256(fh.read()).hexdigest()
    manifest = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "files": dict(sorted(files.items())),
    }
    path = os.path.join(args.out, "run_manifest.json")
    _write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"manifest of {len(files)} files written to {path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="emoadapt", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-data", help="write a synthetic glyph dataset")
    _add_common(p)
    p.add_argument("--domain", choices=("source", "target"), required=True)
    p.add_argument("--per-class", type=int, default=50, metavar="N")
    p.set_defaults(func=cmd_gen_data)

    p = subs.add_parser("pretrain", help="phase 1: train on the source domain")
    _add_common(p, training=True)
    p.add_argument("--data", required=True, metavar="MANIFEST")
    p.add_argument("--split", choices=("train", "test", "all"), default="all")
    p.set_defaults(func=cmd_pretrain)

    p = subs.add_parser("adapt", help="phase 2: re-train on the target domain")
    _add_common(p, training=True)
    p.add_argument("--data", required=True, metavar="MANIFEST")
    p.add_argument("--source-checkpoint", required=True, metavar="PATH")
    p.add_argument("--split", choices=("train", "test", "all"), default="train")
    p.set_defaults(func=cmd_adapt)

    p = subs.add_parser("eval", help="accuracy and confusion matrix")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--data", required=True, metavar="MANIFEST")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("capture-embeddings", help="dump per-layer activations")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--data", required=True, metavar="MANIFEST")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--layers", metavar="LIST",
                   help=f"comma-separated subset of {','.join(LAYER_TAGS)}")
    p.set_defaults(func=cmd_capture_embeddings)

    p = subs.add_parser("explain", help="per-layer intersection report")
    _add_common(p)
    p.add_argument("--embeddings", metavar="PATH", help="embeddings.ckpt dump")
    p.add_argument("--checkpoint", metavar="PATH")
    p.add_argument("--data", metavar="MANIFEST")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--mode", choices=MODES, default="off-diagonal")
    p.set_defaults(func=cmd_explain)

    p = subs.add_parser("report", help="hash every artifact in a run directory")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _limit_blas_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"emoadapt: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"emoadapt: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"emoadapt: config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, CheckpointError) as exc:
        print(f"emoadapt: data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"emoadapt: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
