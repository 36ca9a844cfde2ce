"""Command-line entry point: ``fairaudit {synth,train,fairfix,audit,pipeline}``.

Every subcommand reads the same flat config (``--config FILE`` or the packaged
``demo``); ``--<key> VALUE`` flags and ``--set KEY=VALUE`` override it.

Exit codes: 0 success, 1 config error, 2 data/schema/model-file error,
3 any other runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from contextlib import contextmanager
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import KEYS, ConfigError, RunConfig, build_config, check_key, read_config
from .data import (
    EXCLUDED,
    SEMESTER,
    DataError,
    Dataset,
    GroupVector,
    SchemaError,
    assign_groups,
    load_csv,
    load_schema,
    save_schema,
    write_csv,
)
from .fairness import build_report, f_score
from .forest import (
    ModelFormatError,
    load_model,
    oob_proba,
    predict_proba_batch,
    save_model,
    train,
)
from .postprocess import ThresholdPolicy, apply_policy, equalize_opportunity, load_policy, save_policy
from .preprocess import run_pipeline
from .report import export_histograms, render_tables
from .synth import generate, synth_schema

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class StageError(Exception):
    def __init__(self, stage: str, message: str, code: int):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.code = code


@contextmanager
def stage(name: str):
    """Tag any failure inside the block with the stage name and an exit code."""
    try:
        yield
    except StageError:
        raise
    except ConfigError as exc:
        raise StageError(name, str(exc), EXIT_CONFIG) from exc
    except (SchemaError, DataError, ModelFormatError, FileNotFoundError, ValueError) as exc:
        raise StageError(name, str(exc), EXIT_DATA) from exc
    except Exception as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}", EXIT_RUNTIME) from exc


def _say(msg: str) -> None:
    print(msg, flush=True)


# -- paths ------------------------------------------------------------------------

def _require(cfg: RunConfig, *keys: str) -> None:
    missing = [k for k in keys if getattr(cfg, k) is None]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _require_files(**paths: str) -> None:
    for key, path in paths.items():
        if not os.path.isfile(path):
            raise ConfigError(f"{key} file not found: {path}")


def _eval_paths(cfg: RunConfig) -> tuple:
    return (cfg.eval_data or cfg.out_path("test.csv"),
            cfg.eval_schema or cfg.out_path("processed.schema"))


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path: str, obj) -> None:
    # repr-precision floats, sorted keys: byte-stable across runs
    _write_text(path, json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n")


# -- stages -----------------------------------------------------------------------

def _preprocess(cfg: RunConfig):
    with stage("load"):
        schema = load_schema(cfg.schema)
        raw = load_csv(cfg.data, schema)
    with stage("preprocess"):
        split = run_pipeline(raw, cfg.preprocess)
    return raw, split


def _train(cfg: RunConfig, data: Dataset):
    with stage("train"):
        model = train(data, cfg.train)
    return model


def _groups(cfg: RunConfig, data: Dataset) -> list:
    with stage("groups"):
        return [assign_groups(data, spec) for spec in cfg.groups]


def _tune(cfg: RunConfig, model, train_data: Dataset, test_data: Dataset, test_probs) -> dict:
    """Per-attribute fair policies tuned on the test scores or on out-of-bag scores."""
    with stage("fairfix"):
        if cfg.tune_on == "oob":
            probs = oob_proba(model, train_data)
            data = train_data
        else:
            probs, data = test_probs, test_data
        labels = data.labels()
        has = ~np.isnan(probs)
        probs = np.where(has, probs, 0.0)
        policies = {}
        for g in _groups(cfg, data):
            codes = np.where(has, g.codes, EXCLUDED).astype(np.int8)
            policies[g.attribute_name] = equalize_opportunity(
                probs, labels, GroupVector(g.attribute_name, g.labels, codes), cfg.grid_step)
    return policies


def _combine(policies: dict) -> ThresholdPolicy:
    overrides = {}
    for attr, pol in policies.items():
        for label, t in pol.overrides.items():
            if label in overrides and overrides[label] != t:
                raise ValueError(f"group label {label!r} appears in more than one attribute")
            overrides[label] = t
    return ThresholdPolicy(0.5, overrides)


def _overall(labels, preds) -> dict:
    return {"accuracy": float(np.mean(labels == preds)) if labels.size else None,
            "f1": f_score(labels, preds)}


def _finite(x: float):
    return None if x != x else x


def _policy_dict(p: ThresholdPolicy) -> dict:
    return {"default": p.default_threshold, "overrides": dict(sorted(p.overrides.items()))}


# -- subcommands ------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> int:
    _require(cfg, "data", "schema")
    with stage("synth"):
        data = generate(cfg.synth)
        for path in (cfg.data, cfg.schema):
            parent = os.path.dirname(path)
            if parent:
                os.makedirs(parent, exist_ok=True)
        write_csv(data, cfg.data)
        save_schema(synth_schema(cfg.synth), cfg.schema)
    per_sem = Counter(data.column(data.schema.single(SEMESTER)))
    _say(f"rows: {len(data)}")
    for sem in data.schema.semester_order:
        _say(f"  {sem}: {per_sem.get(sem, 0)}")
    _say(f"wrote {cfg.data} and {cfg.schema}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "data", "schema")
    _require_files(data=cfg.data, schema=cfg.schema)
    os.makedirs(cfg.out, exist_ok=True)
    _, split = _preprocess(cfg)
    model = _train(cfg, split.train)
    with stage("write"):
        save_model(model, cfg.model_path)
        write_csv(split.train, cfg.out_path("train.csv"))
        write_csv(split.test, cfg.out_path("test.csv"))
        save_schema(split.train.schema, cfg.out_path("processed.schema"))
    _say(f"train rows: {len(split.train)}  test rows: {len(split.test)}")
    _say(f"trees: {model.n_trees}  oob error: {model.oob_error:.4f}")
    _say(f"wrote {cfg.model_path}")
    return EXIT_OK


def cmd_fairfix(cfg: RunConfig) -> int:
    eval_data, eval_schema = _eval_paths(cfg)
    need = {"model": cfg.model_path, "eval_schema": eval_schema}
    if cfg.tune_on == "oob":
        need["train_data"] = cfg.out_path("train.csv")
    else:
        need["eval_data"] = eval_data
    _require_files(**need)
    with stage("load"):
        model = load_model(cfg.model_path)
        schema = load_schema(eval_schema)
        test = load_csv(eval_data, schema) if cfg.tune_on == "test" else None
        train_data = load_csv(cfg.out_path("train.csv"), schema) if cfg.tune_on == "oob" else None
    with stage("predict"):
        probs = predict_proba_batch(model, test) if test is not None else None
    policies = _tune(cfg, model, train_data, test, probs)
    with stage("write"):
        os.makedirs(cfg.out, exist_ok=True)
        save_policy(ThresholdPolicy(), cfg.out_path("policy_orig.txt"))
        save_policy(_combine(policies), cfg.out_path("policy_fair.txt"))
    for attr, pol in policies.items():
        _say(f"{attr}: " + "  ".join(f"{g}={t:g}" for g, t in pol.overrides.items()))
    _say(f"wrote {cfg.out_path('policy_fair.txt')}")
    return EXIT_OK


def _policy_tag(path: str) -> str:
    stem = os.path.splitext(os.path.basename(path))[0]
    return stem[len("policy_"):] if stem.startswith("policy_") and len(stem) > 7 else stem


def cmd_audit(cfg: RunConfig) -> int:
    _require(cfg, "policy")
    eval_data, eval_schema = _eval_paths(cfg)
    _require_files(model=cfg.model_path, policy=cfg.policy, eval_data=eval_data, eval_schema=eval_schema)
    with stage("load"):
        model = load_model(cfg.model_path)
        policy = load_policy(cfg.policy)
        data = load_csv(eval_data, load_schema(eval_schema))
    with stage("predict"):
        probs = predict_proba_batch(model, data)
    labels = data.labels()
    with stage("audit"):
        reports = []
        for g in _groups(cfg, data):
            reports.append(build_report(labels, apply_policy(probs, g, policy), g))
        text, tsv = render_tables([(r, None) for r in reports], tag=_policy_tag(cfg.policy))
        metrics = {
            "n_rows": len(data),
            "n_trees": model.n_trees,
            "oob_error": _finite(model.oob_error),
            "policy": _policy_dict(policy),
            "attributes": {r.attribute_name: r.to_dict() for r in reports},
        }
    with stage("write"):
        os.makedirs(cfg.out, exist_ok=True)
        _write_text(cfg.out_path("audit_table.txt"), text)
        _write_text(cfg.out_path("audit_table.tsv"), tsv)
        _write_json(cfg.out_path("audit_metrics.json"), metrics)
    _say(text.rstrip("\n"))
    return EXIT_OK


def cmd_pipeline(cfg: RunConfig) -> int:
    _require(cfg, "data", "schema")
    _require_files(data=cfg.data, schema=cfg.schema)
    os.makedirs(cfg.out, exist_ok=True)
    raw, split = _preprocess(cfg)
    model = _train(cfg, split.train)
    with stage("predict"):
        probs = predict_proba_batch(model, split.test)
    y_test = split.test.labels()
    orig_policy = ThresholdPolicy()
    fair_policies = _tune(cfg, model, split.train, split.test, probs)

    with stage("audit"):
        pairs, hists, attrs = [], {}, {}
        orig_preds = (probs >= orig_policy.default_threshold).astype(np.uint8)
        for g in _groups(cfg, split.test):
            fair = fair_policies[g.attribute_name]
            rep_o = build_report(y_test, apply_policy(probs, g, orig_policy), g)
            fair_preds = apply_policy(probs, g, fair)
            rep_f = build_report(y_test, fair_preds, g)
            pairs.append((rep_o, rep_f))
            hists[g.attribute_name] = export_histograms(probs, y_test, g, fair, cfg.n_bins)
            attrs[g.attribute_name] = {
                "orig": rep_o.to_dict(),
                "fair": rep_f.to_dict(),
                "policy_fair": _policy_dict(fair),
                "overall_fair": _overall(y_test, fair_preds),
            }
        text, tsv = render_tables(pairs)
        n_tr, n_te = len(split.train), len(split.test)
        metrics = {
            "seed": cfg.seed,
            "data": {
                "n_raw": len(raw), "n_train": n_tr, "n_test": n_te,
                "train_fraction": n_tr / (n_tr + n_te),
                "train_positive_share": float(split.train.labels().mean()),
                "test_positive_share": float(y_test.mean()) if n_te else None,
            },
            "model": {
                "n_trees": model.n_trees,
                "n_features": len(model.encoder.names),
                "mtry": cfg.train.resolved_mtry(len(model.encoder.names)),
                "oob_error": _finite(model.oob_error), "w_pos": model.w_pos, "w_neg": model.w_neg,
            },
            "overall_orig": _overall(y_test, orig_preds),
            "tuned_on": cfg.tune_on,
            "grid_step": cfg.grid_step,
            "attributes": attrs,
        }

    with stage("write"):
        save_model(model, cfg.model_path)
        write_csv(split.train, cfg.out_path("train.csv"))
        write_csv(split.test, cfg.out_path("test.csv"))
        save_schema(split.train.schema, cfg.out_path("processed.schema"))
        save_policy(orig_policy, cfg.out_path("policy_orig.txt"))
        save_policy(_combine(fair_policies), cfg.out_path("policy_fair.txt"))
        _write_text(cfg.out_path("table.txt"), text)
        _write_text(cfg.out_path("table.tsv"), tsv)
        for attr, h in hists.items():
            _write_text(cfg.out_path(f"hist_{attr}.csv"), h.to_csv())
            _write_text(cfg.out_path(f"hist_{attr}_thresholds.csv"), h.thresholds_csv())
        _write_json(cfg.out_path("metrics.json"), metrics)

    _say(f"train rows: {n_tr}  test rows: {n_te}  oob error: {model.oob_error:.4f}")
    o = metrics["overall_orig"]
    _say(f"test accuracy: {o['accuracy']:.4f}  f1: {o['f1']:.4f}")
    _say("")
    _say(text.rstrip("\n"))
    _say("")
    _say(f"artifacts in {cfg.out}")
    return EXIT_OK


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic raw dataset and its schema"),
    "train": (cmd_train, "preprocess the raw data and train the forest"),
    "fairfix": (cmd_fairfix, "tune per-group thresholds for equal recall"),
    "audit": (cmd_audit, "audit a saved model under a threshold policy"),
    "pipeline": (cmd_pipeline, "preprocess, train, audit, correct and re-audit"),
}


# -- argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _flag_dest(key: str) -> str:
    return "cfg__" + key.replace(".", "__")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairaudit", description="Fairness audit and threshold correction for a forest classifier.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="FILE", help="config file, or 'demo' for the packaged one")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any key, including group.* and synth.group.* (repeatable)")
        for key, (_, default, help_key) in KEYS.items():
            extra = "" if default is None else f" [default: {default if not isinstance(default, tuple) else ','.join(default)}]"
            p.add_argument(f"--{key}", dest=_flag_dest(key), metavar="VALUE", help=help_key + extra)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw = read_config(args.config) if args.config else {}
    for key in KEYS:
        value = getattr(args, _flag_dest(key))
        if value is not None:
            raw[key] = value
    for item in args.set:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        check_key(key, "--set")
        raw[key] = value.strip()
    return build_config(raw)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        with stage("config"):
            cfg = resolve_config(args)
        return func(cfg)
    except StageError as exc:
        print(f"fairaudit {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"fairaudit {args.command}: [config] {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
