"""Flat ``key = value`` run configuration with dotted sections.

Example::

    seed = 7
    data = demo_out/students.csv
    train.n_trees = 500
    group.first_gen.column = first_gen
    group.first_gen.map.yes = A

Keys are either fixed (see ``KEYS``) or one of the patterned families
``group.<name>.*``, ``synth.group.<token>`` and ``synth.gender.<token>``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .data import BUILTIN_GROUP_SPECS, GroupSpec
from .forest import TrainConfig
from .postprocess import grid_points
from .preprocess import PreprocessConfig
from .synth import DEFAULT_ETHNICITY, DEFAULT_GENDER, Subgroup, SynthSpec


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("auto", "none", "unlimited") else int(text)


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _names(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _tune_on(text: str) -> str:
    if text not in ("test", "oob"):
        raise ValueError("must be 'test' or 'oob'")
    return text


# key -> (parser, default, help)
KEYS = {
    "seed": (int, None, "master seed (required)"),
    "data": (str, None, "raw data CSV (synth writes it, train/pipeline read it)"),
    "schema": (str, None, "schema file for the raw data CSV"),
    "out": (str, "fairaudit_out", "output directory"),
    "model": (str, None, "model file (default <out>/model.forest)"),
    "policy": (str, None, "threshold policy file for audit"),
    "eval_data": (str, None, "processed CSV to audit (default <out>/test.csv)"),
    "eval_schema": (str, None, "schema of eval_data (default <out>/processed.schema)"),
    "groups": (_names, ("urm", "gender"), "protected attributes to audit"),
    "preprocess.placeholder": (float, -999.0, "value imputed into missing numeric cells"),
    "preprocess.rare_min": (int, 30, "tokens seen fewer times become 'Other'"),
    "train.n_trees": (int, 500, "trees in the forest"),
    "train.mtry": (_opt_int, None, "features tried per split (auto = floor(sqrt(p)))"),
    "train.min_node_size": (int, 1, "minimum rows per leaf"),
    "train.max_depth": (_opt_int, None, "depth limit (unlimited by default)"),
    "train.class_weighting": (_bool, True, "inverse label-proportion instance weights"),
    "fairfix.grid_step": (float, 0.01, "threshold grid resolution"),
    "fairfix.tune_on": (_tune_on, "test", "set used for the threshold search: test or oob"),
    "report.n_bins": (int, 50, "histogram bins over [0, 1]"),
    "synth.n_rows": (int, 5000, "records to generate"),
    "synth.n_numeric": (int, 24, "numeric feature columns"),
    "synth.n_categorical": (int, 6, "categorical feature columns"),
    "synth.separability": (float, 0.5, "class-mean distance per numeric feature, in noise units"),
    "synth.group_shift": (float, 0.5, "feature-mean reduction for shifted subgroups"),
    "synth.missing_rate": (float, 0.1, "missing rate of test-score and prior-course columns"),
    "synth.n_semesters": (int, 10, "semesters, alternating from Fall 2014"),
    "synth.semester_weights": (_floats, None, "relative semester sizes (default equal)"),
    "synth.n_courses": (int, 6, "target courses"),
    "synth.pass_fail_rate": (float, 0.03, "share of pass/fail graded records"),
    "synth.dirty_rate": (float, 0.02, "share of duplicate/retake/invalid-grade records"),
}

PATTERN_PREFIXES = ("group.", "synth.group.", "synth.gender.")

PACKAGED = {"demo": "demo.cfg"}


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        if not sep:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        check_key(key, f"{origin}:{lineno}")
        raw[key] = value
    return raw


def check_key(key: str, where: str = "") -> None:
    if key in KEYS:
        return
    for prefix in PATTERN_PREFIXES:
        if key.startswith(prefix) and len(key) > len(prefix):
            return
    raise ConfigError(f"{where + ': ' if where else ''}unknown config key {key!r}")


def read_config(path_or_name: str) -> dict:
    if path_or_name in PACKAGED:
        text = resources.files("fairaudit").joinpath("configs", PACKAGED[path_or_name]).read_text("utf-8")
        return parse_config_text(text, f"<packaged {path_or_name}>")
    if not os.path.isfile(path_or_name):
        raise ConfigError(f"config file not found: {path_or_name}")
    with open(path_or_name, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), path_or_name)


def _parse_subgroups(raw: dict, prefix: str, fallback: tuple) -> tuple:
    items = [(k[len(prefix):], v) for k, v in raw.items() if k.startswith(prefix)]
    if not items:
        return fallback
    subs = []
    for token, value in items:
        parts = _floats(value)
        if not 2 <= len(parts) <= 3:
            raise ConfigError(f"{prefix}{token}: expected 'share, rate[, shift]'")
        subs.append(Subgroup(token, parts[0], parts[1], parts[2] if len(parts) == 3 else 0.0))
    return tuple(subs)


def _parse_group_specs(raw: dict, names: tuple) -> tuple:
    specs = []
    for name in names:
        pre = f"group.{name}."
        own = {k[len(pre):]: v for k, v in raw.items() if k.startswith(pre)}
        if not own:
            if name not in BUILTIN_GROUP_SPECS:
                raise ConfigError(f"group {name!r} is neither built in nor defined by group.{name}.* keys")
            specs.append(BUILTIN_GROUP_SPECS[name])
            continue
        mapping = {k[4:]: v for k, v in own.items() if k.startswith("map.")}
        missing = [k for k in ("column", "a", "b") if k not in own]
        if missing or not mapping:
            raise ConfigError(f"group {name!r} needs column, a, b and map.<token> entries")
        extra = set(own) - {"column", "a", "b", "attribute"} - {f"map.{t}" for t in mapping}
        if extra:
            raise ConfigError(f"group {name!r}: unknown keys {sorted(extra)}")
        try:
            specs.append(GroupSpec(own.get("attribute", name), own["column"], own["a"], own["b"], mapping))
        except ValueError as exc:
            raise ConfigError(f"group {name!r}: {exc}") from None
    return tuple(specs)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    data: Optional[str]
    schema: Optional[str]
    out: str
    model: Optional[str]
    policy: Optional[str]
    eval_data: Optional[str]
    eval_schema: Optional[str]
    groups: tuple
    preprocess: PreprocessConfig
    train: TrainConfig
    grid_step: float
    tune_on: str
    n_bins: int
    synth: SynthSpec
    values: dict = field(default_factory=dict, compare=False)

    def out_path(self, name: str) -> str:
        return os.path.join(self.out, name)

    @property
    def model_path(self) -> str:
        return self.model or self.out_path("model.forest")


def build_config(raw: dict) -> RunConfig:
    """Validate raw string values and assemble a :class:`RunConfig`."""
    for key in raw:
        check_key(key)
    vals = {}
    for key, (parse, default, _) in KEYS.items():
        if key in raw:
            try:
                vals[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r} ({exc})") from None
        else:
            vals[key] = default
    if vals["seed"] is None:
        raise ConfigError("seed is required (no wall-clock seeding)")
    try:
        pre = PreprocessConfig(vals["preprocess.placeholder"], vals["preprocess.rare_min"])
        tr = TrainConfig(
            n_trees=vals["train.n_trees"], mtry=vals["train.mtry"], min_node_size=vals["train.min_node_size"],
            max_depth=vals["train.max_depth"], seed=vals["seed"], class_weighting=vals["train.class_weighting"],
        )
        sy = SynthSpec(
            seed=vals["seed"], n_rows=vals["synth.n_rows"],
            groups=_parse_subgroups(raw, "synth.group.", DEFAULT_ETHNICITY),
            genders=_parse_subgroups(raw, "synth.gender.", DEFAULT_GENDER),
            n_numeric_features=vals["synth.n_numeric"], n_categorical_features=vals["synth.n_categorical"],
            separability=vals["synth.separability"], group_shift=vals["synth.group_shift"],
            missing_rate=vals["synth.missing_rate"], n_semesters=vals["synth.n_semesters"],
            semester_weights=vals["synth.semester_weights"], n_courses=vals["synth.n_courses"],
            pass_fail_rate=vals["synth.pass_fail_rate"], dirty_rate=vals["synth.dirty_rate"],
        )
        grid_points(vals["fairfix.grid_step"])
        if vals["report.n_bins"] < 1:
            raise ValueError("report.n_bins must be >= 1")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return RunConfig(
        seed=vals["seed"], data=vals["data"], schema=vals["schema"], out=vals["out"], model=vals["model"],
        policy=vals["policy"], eval_data=vals["eval_data"], eval_schema=vals["eval_schema"],
        groups=_parse_group_specs(raw, vals["groups"]), preprocess=pre, train=tr,
        grid_step=vals["fairfix.grid_step"], tune_on=vals["fairfix.tune_on"], n_bins=vals["report.n_bins"],
        synth=sy, values=dict(raw),
    )
