"""Run configuration: flat ``key = value`` text with dotted section prefixes.

Example::

    seed = 42
    gen.n_customers = 50000
    stage2.tau = 0.5
    paths.out_dir = run

Relative paths resolve against the directory of the config file. Module
seeds default to the top-level ``seed``; a seed override replaces all of them.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .abtest import ConversionParams
from .datagen import ConfigError, GenConfig, gen_config_from_strings
from .rfm import DEFAULT_RULES, load_rules
from .stage1 import ARGMAX_NOT_INACTIVE, InactiveProbBelow, Stage1TrainConfig, parse_filter_policy
from .stage2 import LinearRamp, SplcConfig, parse_tau_schedule

PATH_DEFAULTS = {
    "customers": "customers.csv",
    "transactions": "transactions.csv",
    "stage1_model": "stage1.model",
    "stage2_model": "stage2.model",
    "correction_report": "label_correction.csv",
    "score_store": "score_store.csv",
    "scores": "scores.csv",
    "targets": "targets.txt",
    "comparison": "comparison.csv",
    "rfm": "rfm.csv",
    "gain_curve": "gain_curve.csv",
    "ab_report": "ab_report.csv",
}

_STAGE1_KEYS = {"learning_rate", "epochs", "batch_size", "seed", "weight_mode", "l2", "filter"}
_STAGE2_KEYS = {"tau", "warmup_epochs", "epochs", "learning_rate", "batch_size", "seed",
                "tau_schedule", "sticky", "l2"}
_AB_KEYS = {"seed", "arm_fraction", "arm_size.never", "arm_size.churned",
            *(f.name for f in dataclasses.fields(ConversionParams))}
_TOP_KEYS = {"seed", "run_id"}


@dataclass
class RunConfig:
    seed: int = 0
    run_id: Optional[str] = None
    gen: GenConfig = field(default_factory=GenConfig)
    stage1: Stage1TrainConfig = field(default_factory=Stage1TrainConfig)
    filter_policy: object = ARGMAX_NOT_INACTIVE
    stage2: SplcConfig = field(default_factory=SplcConfig)
    rfm_rules: tuple = DEFAULT_RULES
    rfm_rules_path: Optional[Path] = None
    rfm_as_of_day: Optional[int] = None
    eval_cut: float = 0.5
    ab_seed: int = 0
    ab_arm_fraction: float = 0.1
    ab_arm_sizes: dict = field(default_factory=dict)
    ab_params: ConversionParams = field(default_factory=ConversionParams)
    export_k: Optional[int] = None
    export_cut: Optional[float] = None
    out_dir: Path = Path("run")
    paths: dict = field(default_factory=dict)

    def path(self, name: str) -> Path:
        return self.paths[name]

    def resolved_items(self) -> list[tuple[str, str]]:
        """Every setting with defaults materialised, as (key, value) strings."""
        items = [("seed", str(self.seed)), ("run_id", self.run_id or "")]
        for f in dataclasses.fields(self.gen):
            v = getattr(self.gen, f.name)
            items.append((f"gen.{f.name}", ",".join(map(repr, v)) if isinstance(v, tuple) else repr(v)))
        for f in dataclasses.fields(self.stage1):
            v = getattr(self.stage1, f.name)
            items.append((f"stage1.{f.name}", v if isinstance(v, str) else
                          ",".join(map(repr, v)) if isinstance(v, (tuple, list)) else repr(v)))
        pol = self.filter_policy
        items.append(("stage1.filter", f"inactive_below:{pol.threshold!r}"
                      if isinstance(pol, InactiveProbBelow) else str(pol)))
        for f in dataclasses.fields(self.stage2):
            v = getattr(self.stage2, f.name)
            if isinstance(v, LinearRamp):
                v = f"ramp:{v.start!r}:{v.ramp_epochs}"
            items.append((f"stage2.{f.name}", v if isinstance(v, str) else repr(v)))
        items.append(("rfm.rules", str(self.rfm_rules_path or "")))
        items.append(("rfm.as_of_day", "" if self.rfm_as_of_day is None else str(self.rfm_as_of_day)))
        items.append(("evaluate.cut", repr(self.eval_cut)))
        items.append(("ab.seed", str(self.ab_seed)))
        items.append(("ab.arm_fraction", repr(self.ab_arm_fraction)))
        for s, k in sorted(self.ab_arm_sizes.items()):
            items.append((f"ab.arm_size.{s}", str(k)))
        for f in dataclasses.fields(self.ab_params):
            items.append((f"ab.{f.name}", repr(getattr(self.ab_params, f.name))))
        items.append(("export.k", "" if self.export_k is None else str(self.export_k)))
        items.append(("export.cut", "" if self.export_cut is None else repr(self.export_cut)))
        items.append(("paths.out_dir", str(self.out_dir)))
        for k in sorted(self.paths):
            items.append((f"paths.{k}", str(self.paths[k])))
        return items

    def render(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.resolved_items())


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _int(values, key, default):
    try:
        return int(values[key]) if key in values else default
    except ValueError:
        raise ConfigError(f"bad integer for {key}: {values[key]!r}") from None


def _float(values, key, default):
    try:
        return float(values[key]) if key in values else default
    except ValueError:
        raise ConfigError(f"bad number for {key}: {values[key]!r}") from None


def _bool(values, key, default):
    if key not in values:
        return default
    v = values[key].lower()
    if v in ("1", "true", "yes"):
        return True
    if v in ("0", "false", "no"):
        return False
    raise ConfigError(f"bad boolean for {key}: {values[key]!r}")


def build_config(values: dict[str, str], base_dir: Path = Path("."),
                 seed_override: Optional[int] = None) -> RunConfig:
    sections = {"gen": {}, "stage1": {}, "stage2": {}, "rfm": {}, "evaluate": {},
                "ab": {}, "export": {}, "paths": {}}
    top = {}
    for key, value in values.items():
        head, _, rest = key.partition(".")
        if not rest:
            if key not in _TOP_KEYS:
                raise ConfigError(f"unknown key {key!r}")
            top[key] = value
        elif head in sections:
            sections[head][rest] = value
        else:
            raise ConfigError(f"unknown section in key {key!r}")

    seed = _int(top, "seed", 0)
    if seed_override is not None:
        seed = seed_override

    def module_seed(sec):
        if seed_override is not None:
            return seed_override
        return _int(sec, "seed", seed)

    gen_vals = dict(sections["gen"])
    gen_vals["seed"] = str(module_seed(sections["gen"]))
    gen = gen_config_from_strings(gen_vals)

    s1 = sections["stage1"]
    _check_keys("stage1", s1, _STAGE1_KEYS)
    wm = s1.get("weight_mode", "inverse_frequency")
    if wm not in ("uniform", "inverse_frequency"):
        try:
            wm = tuple(float(x) for x in wm.split(","))
        except ValueError:
            raise ConfigError(f"bad stage1.weight_mode {wm!r}") from None
    stage1 = Stage1TrainConfig(
        learning_rate=_float(s1, "learning_rate", 0.1), epochs=_int(s1, "epochs", 30),
        batch_size=_int(s1, "batch_size", 256), seed=module_seed(s1), weight_mode=wm,
        l2=_float(s1, "l2", 0.0))
    try:
        stage1.validate()
        policy = parse_filter_policy(s1.get("filter", ARGMAX_NOT_INACTIVE))
    except ValueError as exc:
        raise ConfigError(f"stage1: {exc}") from None

    s2 = sections["stage2"]
    _check_keys("stage2", s2, _STAGE2_KEYS)
    try:
        stage2 = SplcConfig(
            tau=_float(s2, "tau", 0.5), warmup_epochs=_int(s2, "warmup_epochs", 5),
            epochs=_int(s2, "epochs", 60), learning_rate=_float(s2, "learning_rate", 0.1),
            batch_size=_int(s2, "batch_size", 256), seed=module_seed(s2),
            tau_schedule=parse_tau_schedule(s2.get("tau_schedule", "constant")),
            sticky=_bool(s2, "sticky", False), l2=_float(s2, "l2", 0.0))
        stage2.validate()
    except ValueError as exc:
        raise ConfigError(f"stage2: {exc}") from None

    rf = sections["rfm"]
    _check_keys("rfm", rf, {"rules", "as_of_day"})
    rules_path = (base_dir / rf["rules"]) if rf.get("rules") else None
    rules = DEFAULT_RULES
    if rules_path is not None:
        try:
            rules = load_rules(rules_path)
        except OSError:
            raise ConfigError(f"cannot read RFM rules file {rules_path}") from None
        except ValueError as exc:
            raise ConfigError(f"{rules_path}: {exc}") from None

    ev = sections["evaluate"]
    _check_keys("evaluate", ev, {"cut"})

    ab = sections["ab"]
    _check_keys("ab", ab, _AB_KEYS)
    params = ConversionParams(**{
        f.name: _float(ab, f.name, f.default) for f in dataclasses.fields(ConversionParams)})
    arm_sizes = {k.split(".", 1)[1]: _int(ab, k, 0) for k in ab if k.startswith("arm_size.")}

    ex = sections["export"]
    _check_keys("export", ex, {"k", "cut"})

    pv = sections["paths"]
    _check_keys("paths", pv, {"out_dir", *PATH_DEFAULTS})
    out_dir = base_dir / pv.get("out_dir", "run")
    paths = {k: (base_dir / pv[k]) if k in pv else out_dir / v for k, v in PATH_DEFAULTS.items()}

    cfg = RunConfig(
        seed=seed, run_id=top.get("run_id") or None, gen=gen, stage1=stage1,
        filter_policy=policy, stage2=stage2, rfm_rules=rules, rfm_rules_path=rules_path,
        rfm_as_of_day=_int(rf, "as_of_day", None), eval_cut=_float(ev, "cut", 0.5),
        ab_seed=module_seed(ab), ab_arm_fraction=_float(ab, "arm_fraction", 0.1),
        ab_arm_sizes=arm_sizes, ab_params=params,
        export_k=_int(ex, "k", None), export_cut=_float(ex, "cut", None),
        out_dir=out_dir, paths=paths)
    if not 0 < cfg.ab_arm_fraction <= 0.5:
        raise ConfigError("ab.arm_fraction must lie in (0, 0.5]")
    return cfg


def _check_keys(section, values, allowed):
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {section} keys: {', '.join(unknown)}")


def load_config(path, seed_override: Optional[int] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError:
        raise ConfigError(f"cannot read config file {path}") from None
    return build_config(parse_config_text(text, str(path)), path.parent, seed_override)
