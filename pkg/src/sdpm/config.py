"""Run configuration: a sectioned ``key = value`` file plus command-line overrides.

Example::

    seed = 7                      # top-level keys belong to [run]

    [data]
    path = metrics.csv
    features = loc, cyclomatic_complexity, dit, cbo
    label = defect

    [ade]
    pop_size = 8
    max_generations = 10

    [space]
    learning_rate = log 0.02 0.3
    n_layers = linear 1 3 int

    [model]
    epochs = 60

Sections: ``run``, ``data``, ``anra``, ``ade``, ``space``, ``model``,
``sweep``. Every other key is rejected by name. A ``[space]`` section
replaces the default search space as a whole. The run seed also seeds ANRA
and ADE, so those sections have no ``seed`` key.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .ade import AdeConfig, Dim, SearchSpace
from .anra import AnraConfig
from .dataset import DEFAULT_SCHEMA, FeatureSchema
from .errors import ConfigError
from .evaluation import DEFAULT_SPACE, DEFAULT_TPS, SweepConfig
from .model.qvaet import HyperParams

__all__ = ["RunConfig", "parse_config", "parse_overrides", "REPORT_FORMATS", "RESOLVED_NAME"]

REPORT_FORMATS = ("csv", "md", "json")
RESOLVED_NAME = "resolved_config.cfg"

_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


@dataclass(frozen=True)
class RunConfig:
    data_path: str | None = None
    schema: FeatureSchema = DEFAULT_SCHEMA
    anra: AnraConfig = AnraConfig()
    ade: AdeConfig = AdeConfig(pop_size=8, max_generations=10)
    space: SearchSpace = DEFAULT_SPACE
    hyper: HyperParams = HyperParams()
    tps: tuple = DEFAULT_TPS
    seed: int = 0
    output_dir: str = "out"
    report_format: str = "csv"
    models: tuple = ("ADE-QVAET", "LogReg")
    fitness_metric: str = "f1"
    baseline_lr: float = 0.5
    baseline_epochs: int = 300

    def __post_init__(self):
        if self.report_format not in REPORT_FORMATS:
            raise ConfigError(f"report_format must be one of {REPORT_FORMATS}, got {self.report_format!r}")
        if not self.output_dir:
            raise ConfigError("output_dir must be nonempty")
        if self.data_path is not None and not str(self.data_path):
            raise ConfigError("data path must be nonempty")
        if not self.tps:
            raise ConfigError("at least one training percentage is required")
        for tp in self.tps:
            if not isinstance(tp, int) or not 1 <= tp <= 99:
                raise ConfigError(f"training percentages must be integers in [1, 99], got {tp!r}")
        # seeds of the nested configs follow the run seed
        object.__setattr__(self, "anra", dataclasses.replace(self.anra, seed=self.seed))
        object.__setattr__(self, "ade", dataclasses.replace(self.ade, seed=self.seed))
        try:
            self.sweep_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sweep_config(self) -> SweepConfig:
        return SweepConfig(self.anra, self.ade, self.space, self.hyper, tuple(self.models), self.fitness_metric,
                           self.baseline_lr, self.baseline_epochs)

    def to_text(self) -> str:
        """Fully resolved config in the same format :func:`parse_config` reads."""
        out = ["# resolved configuration", "[run]", f"seed = {self.seed}", f"output_dir = {self.output_dir}",
               f"report_format = {self.report_format}", f"tps = {', '.join(str(t) for t in self.tps)}", "",
               "[data]"]
        if self.data_path is not None:
            out.append(f"path = {self.data_path}")
        out += [f"features = {', '.join(self.schema.feature_names)}", f"label = {self.schema.label_name}", ""]
        for section, obj in (("anra", self.anra), ("ade", self.ade), ("model", self.hyper)):
            out.append(f"[{section}]")
            for f in dataclasses.fields(obj):
                if f.name != "seed":
                    out.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
            out.append("")
        out.append("[space]")
        for d in self.space.dims:
            tail = " int" if d.kind == "integer" else ""
            out.append(f"{d.name} = {d.scale} {d.lower!r} {d.upper!r}{tail}")
        out += ["", "[sweep]", f"models = {', '.join(self.models)}", f"fitness_metric = {self.fitness_metric}",
                f"baseline_lr = {self.baseline_lr!r}", f"baseline_epochs = {self.baseline_epochs}", ""]
        return "\n".join(out)

    def write_resolved(self, directory=None) -> Path:
        directory = Path(directory or self.output_dir)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / RESOLVED_NAME
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(value: str, like, where: str):
    text = value.strip()
    try:
        if isinstance(like, bool):
            return _BOOL[text.lower()]
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
    except (KeyError, ValueError):
        kind = "boolean" if isinstance(like, bool) else type(like).__name__
        raise ConfigError(f"{where}: expected {kind}, got {text!r}") from None
    return text


def _names(text):
    return tuple(part.strip() for part in text.replace(",", " ").split() if part.strip())


def _dataclass_section(cls, base, items, section):
    known = {f.name for f in dataclasses.fields(cls)} - {"seed"}
    changes = {}
    for key, value in items.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        changes[key] = _convert(value, getattr(base, key), f"[{section}] {key}")
    try:
        return dataclasses.replace(base, **changes)
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _parse_dim(name, text):
    parts = text.split()
    where = f"[space] {name}"
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("int", "integer")):
        raise ConfigError(f"{where}: expected '<log|linear> <lower> <upper> [int]', got {text!r}")
    try:
        lower, upper = float(parts[1]), float(parts[2])
    except ValueError:
        raise ConfigError(f"{where}: bounds must be numbers, got {text!r}") from None
    try:
        return Dim(name, lower, upper, parts[0], "integer" if len(parts) == 4 else "continuous")
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


_RUN_KEYS = {"seed", "output_dir", "report_format", "tps"}
_DATA_KEYS = {"path", "features", "label"}
_SWEEP_KEYS = {"models", "fitness_metric", "baseline_lr", "baseline_epochs"}
_SECTIONS = ("run", "data", "anra", "ade", "space", "model", "sweep")


def _read_sections(text: str, source: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       comment_prefixes=("#", ";"), delimiters=("=",), strict=True)
    parser.optionxform = str  # keys are case-sensitive
    try:
        # keys before any header belong to [run]
        parser.read_string("[__top__]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    sections = {}
    for name in parser.sections():
        target = "run" if name == "__top__" else name
        if target not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{name}]")
        sections.setdefault(target, {}).update(parser.items(name))
    return sections


def parse_overrides(pairs) -> dict:
    """``section.key=value`` strings -> {section: {key: value}}; a bare key means [run]."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form section.key=value")
        lhs, value = pair.split("=", 1)
        section, _, key = lhs.strip().rpartition(".")
        section = section or "run"
        if section not in _SECTIONS:
            raise ConfigError(f"override {pair!r}: unknown section {section!r}")
        out.setdefault(section, {})[key.strip()] = value.strip()
    return out


def parse_config(path=None, overrides=None) -> RunConfig:
    """Load ``path`` (optional), apply ``overrides`` (section -> key -> text), fill defaults.

    Relative data paths are resolved against the config file's directory.
    """
    sections = {}
    base_dir = None
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        sections = _read_sections(path.read_text(encoding="utf-8"), str(path))
        base_dir = path.parent
    for section, items in (overrides or {}).items():
        sections.setdefault(section, {}).update(items)

    defaults = RunConfig()
    run = sections.get("run", {})
    for key in run:
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r} in [run]")
    kw = {}
    if "seed" in run:
        kw["seed"] = _convert(run["seed"], 0, "[run] seed")
    if "output_dir" in run:
        kw["output_dir"] = run["output_dir"].strip()
    if "report_format" in run:
        kw["report_format"] = run["report_format"].strip()
    if "tps" in run:
        kw["tps"] = tuple(_convert(t, 0, "[run] tps") for t in _names(run["tps"]))

    data = sections.get("data", {})
    for key in data:
        if key not in _DATA_KEYS:
            raise ConfigError(f"unknown key {key!r} in [data]")
    if "path" in data:
        p = Path(data["path"].strip())
        if base_dir is not None and not p.is_absolute() and "path" not in (overrides or {}).get("data", {}):
            p = base_dir / p
        kw["data_path"] = str(p)
    if "features" in data or "label" in data:
        try:
            kw["schema"] = FeatureSchema(
                _names(data["features"]) if "features" in data else defaults.schema.feature_names,
                data.get("label", defaults.schema.label_name).strip(),
            )
        except ValueError as exc:
            raise ConfigError(f"[data]: {exc}") from None

    if "anra" in sections:
        kw["anra"] = _dataclass_section(AnraConfig, defaults.anra, sections["anra"], "anra")
    if "ade" in sections:
        kw["ade"] = _dataclass_section(AdeConfig, defaults.ade, sections["ade"], "ade")
    if "model" in sections:
        kw["hyper"] = _dataclass_section(HyperParams, defaults.hyper, sections["model"], "model")
    if "space" in sections:
        items = sections["space"]
        fields_ = set(HyperParams.field_names())
        for name in items:
            if name not in fields_:
                raise ConfigError(f"unknown key {name!r} in [space]: not a model hyperparameter")
        if not items:
            raise ConfigError("[space] is empty")
        kw["space"] = SearchSpace(tuple(_parse_dim(n, v) for n, v in items.items()))

    sweep = sections.get("sweep", {})
    for key, value in sweep.items():
        if key not in _SWEEP_KEYS:
            raise ConfigError(f"unknown key {key!r} in [sweep]")
        if key == "models":
            kw["models"] = _names(value)
        elif key == "fitness_metric":
            kw["fitness_metric"] = value.strip()
        else:
            kw[key] = _convert(value, getattr(defaults, key), f"[sweep] {key}")

    return RunConfig(**kw)
