"""``relsynth`` command line: validate, train, generate, evaluate, pipeline.

Exit codes: 0 success, 1 domain error (invalid data, config or schema
mismatch), 2 I/O error. The single ``--seed`` is split into per-stage seeds
with :func:`relsynth.seeding.derive_seed`. Set ``RELSYNTH_LOG`` to a logging
level name (e.g. ``INFO``, ``DEBUG``) for progress output on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import IoError, RelsynthError, ValidationFailed
from .evaluate import EvalReport, ClassifierConfig, model_compatibility, privacy_score, train_test_split
from .ingest import (load_checkpoint, load_dataset, load_schema, save_checkpoint, write_loss_trace,
                     write_synthetic_dataset)
from .model import TrainConfig, synthesize, train_model
from .relational import schema_fingerprint
from .seeding import derive_seed

log = logging.getLogger("relsynth")

DEFAULT_SPLIT = 0.8
RUN_CONFIG_KEYS = set(TrainConfig.__dataclass_fields__) | {"target", "split_fraction"}


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _read_run_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise IoError(f"run config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise RelsynthError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise RelsynthError(f"{path}: run config must be a JSON object")
    unknown = set(doc) - RUN_CONFIG_KEYS
    if unknown:
        raise RelsynthError(f"{path}: unknown run config keys {sorted(unknown)}")
    return doc


def _train_config(args, doc: dict, seed: int) -> TrainConfig:
    fields = {k: v for k, v in doc.items() if k in TrainConfig.__dataclass_fields__}
    overrides = {"epochs": args.epochs, "k1": args.k1, "k2": args.k2,
                 "latent": args.latent, "beta": args.beta}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    fields["seed"] = seed
    return TrainConfig.from_dict(fields)


def _target(args, doc):
    target = args.target or doc.get("target")
    if not target:
        raise RelsynthError("a target attribute is required (--target or \"target\" in --config)")
    return target


def cmd_validate(args) -> int:
    try:
        dataset = load_dataset(load_schema(args.schema))
    except ValidationFailed as exc:
        for v in exc.report:
            print(v)
        return 1
    print(f"valid: {len(dataset.tables)} tables, "
          + ", ".join(f"{t.name} ({len(t)} rows)" for t in dataset.tables))
    return 0


def cmd_train(args) -> int:
    doc = _read_run_config(args.config)
    dataset = load_dataset(args.schema)
    config = _train_config(args, doc, derive_seed(args.seed, "train"))
    model, trace = train_model(dataset, config)
    save_checkpoint(model, args.checkpoint)
    trace_path = args.loss_trace or f"{args.checkpoint}.loss.csv"
    write_loss_trace(trace, trace_path)
    final = f"{trace[-1].total:.6f}" if trace else "n/a (0 epochs)"
    print(f"trained {len(trace)} epochs; final loss {final}; checkpoint {args.checkpoint}; trace {trace_path}")
    return 0


def cmd_generate(args) -> int:
    dataset = load_dataset(args.schema)
    model = load_checkpoint(args.checkpoint, dataset)
    synthetic = synthesize(model, dataset, derive_seed(args.seed, "generate"))
    write_synthetic_dataset(synthetic, args.out)
    print(f"wrote {len(synthetic.tables)} tables to {args.out}")
    return 0


def evaluate_dirs(schema_path, synthetic_dir, target, seed, fraction=DEFAULT_SPLIT) -> EvalReport:
    schema = load_schema(schema_path)
    real = load_dataset(schema)
    synthetic = load_dataset(schema.with_csv_dir(synthetic_dir))
    if schema_fingerprint(real) != schema_fingerprint(synthetic):
        raise RelsynthError("synthetic dataset does not match the real schema")
    seeds = {s: derive_seed(seed, s) for s in ("split", "classifier", "privacy")}
    mc = model_compatibility(real, synthetic, target, seeds["split"], fraction,
                             ClassifierConfig(seed=seeds["classifier"]))
    train, _ = train_test_split(real, fraction, seeds["split"])
    privacy = privacy_score(train, synthetic, seeds["privacy"])
    return EvalReport(seed, fraction, mc, privacy, seeds)


def _write_report(report: EvalReport, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc


def cmd_evaluate(args) -> int:
    doc = _read_run_config(args.config)
    fraction = doc.get("split_fraction", DEFAULT_SPLIT)
    report = evaluate_dirs(args.schema, args.synthetic, _target(args, doc), args.seed, fraction)
    _write_report(report, args.out)
    print(report.summary())
    return 0


def cmd_pipeline(args) -> int:
    doc = _read_run_config(args.config)
    target = _target(args, doc)
    fraction = doc.get("split_fraction", DEFAULT_SPLIT)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    real = load_dataset(args.schema)
    train, _ = train_test_split(real, fraction, derive_seed(args.seed, "split"))
    config = _train_config(args, doc, derive_seed(args.seed, "train"))
    model, trace = train_model(train, config)
    save_checkpoint(model, out / "model.ckpt")
    write_loss_trace(trace, out / "loss.csv")
    synthetic = synthesize(model, train, derive_seed(args.seed, "generate"))
    write_synthetic_dataset(synthetic, out / "synthetic")
    report = evaluate_dirs(args.schema, out / "synthetic", target, args.seed, fraction)
    _write_report(report, out / "report.json")
    print(report.summary())
    print(f"outputs in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relsynth", description="Synthetic relational data with a graph VAE.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--schema", required=True, help="schema config JSON")
        sp.add_argument("--config", help="run config JSON (training options, target, split_fraction)")
        if seed:
            sp.add_argument("--seed", type=int, required=True)

    def training(sp):
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--k1", type=int, help="message-passing layers before the encoder")
        sp.add_argument("--k2", type=int, help="message-passing layers after the decoder")
        sp.add_argument("--latent", type=_ints, help="latent dims per table, comma separated")
        sp.add_argument("--beta", type=_floats, help="KL weights per table, comma separated")

    sp = sub.add_parser("validate", help="load and validate a dataset")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("train", help="train a model and write a checkpoint")
    common(sp)
    training(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--loss-trace", help="loss trace CSV (default: <checkpoint>.loss.csv)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("generate", help="write a synthetic dataset from a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("evaluate", help="model compatibility and privacy of a synthetic dataset")
    common(sp)
    sp.add_argument("--synthetic", required=True, help="directory with one <table>.csv per table")
    sp.add_argument("--target")
    sp.add_argument("--out", required=True, help="report JSON path")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("pipeline", help="split, train, generate and evaluate in one go")
    common(sp)
    training(sp)
    sp.add_argument("--target")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    level = os.environ.get("RELSYNTH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RelsynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
