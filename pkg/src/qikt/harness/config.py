"""Scenario configuration: a flat INI-like document.

Grammar (one item per line, ``#`` or ``;`` starts a comment)::

    scenario = free_gaussian          # top-level key
    benchmark.kind = free_gaussian    # dotted key at top level
    [grid]                            # section header
    n = 512                           # same as grid.n

Every key may appear once, whichever spelling is used. Unknown keys are
errors. Values are parsed by the schema below and defaults are applied.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, replace

from ..errors import ConfigError, ParseError, ValidationError
from ..madelung import AnalyticBenchmark

BENCHMARK_KINDS = AnalyticBenchmark.KINDS
_ROOT = "__root__"

CLOSURES = ("maxwellian", "empirical")
FIELD_SOURCES = ("analytic", "solver")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    kind: str
    sigma0: float = 1.0
    omega: float = 1.0
    x_c: float = 1.0
    v0: float = 0.0
    grid_n: int = 512
    grid_extent: float = 20.0
    grid_dim: int = 1
    hbar: float = 1.0
    m: float = 1.0
    T_o: float = 0.75
    n_particles: int = 100_000
    seed: int = 0
    n_seeds: int = 10
    t_particle: float = 2.0
    checkpoints: tuple = (0.5, 1.0, 2.0)
    dt_field: float = 1e-3
    dt_particle: float = 1e-2
    dt_ode: float = 1e-3
    t_end: float = 4.0
    closure: str = "maxwellian"
    frozen_T0: bool = False
    field_source: str = "analytic"
    output_dir: str = "out"

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))

    def with_output(self, path) -> "ScenarioConfig":
        return replace(self, output_dir=str(path))

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("output_dir")
        d["checkpoints"] = list(d["checkpoints"])
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class _Key:
    attr: str
    kind: str  # str, float, int, bool, choice, floats
    rule: str = ""  # positive, nonneg, pow2, dim
    choices: tuple = field(default=())


SCHEMA = {
    "scenario": _Key("scenario", "str"),
    "benchmark.kind": _Key("kind", "choice", choices=BENCHMARK_KINDS),
    "benchmark.sigma0": _Key("sigma0", "float", "positive"),
    "benchmark.omega": _Key("omega", "float", "positive"),
    "benchmark.x_c": _Key("x_c", "float"),
    "benchmark.v0": _Key("v0", "float"),
    "grid.n": _Key("grid_n", "int", "pow2"),
    "grid.extent": _Key("grid_extent", "float", "positive"),
    "grid.dim": _Key("grid_dim", "int", "dim"),
    "consts.hbar": _Key("hbar", "float", "positive"),
    "consts.m": _Key("m", "float", "positive"),
    "temps.T_o": _Key("T_o", "float", "positive"),
    "particles.n": _Key("n_particles", "int", "positive"),
    "particles.seed": _Key("seed", "int", "nonneg"),
    "particles.n_seeds": _Key("n_seeds", "int", "positive"),
    "particles.t_end": _Key("t_particle", "float", "positive"),
    "particles.checkpoints": _Key("checkpoints", "floats", "positive"),
    "time.dt_field": _Key("dt_field", "float", "positive"),
    "time.dt_particle": _Key("dt_particle", "float", "positive"),
    "time.dt_ode": _Key("dt_ode", "float", "positive"),
    "time.t_end": _Key("t_end", "float", "positive"),
    "closure": _Key("closure", "choice", choices=CLOSURES),
    "diagnostics.frozen_T0": _Key("frozen_T0", "bool"),
    "fields.source": _Key("field_source", "choice", choices=FIELD_SOURCES),
    "output.dir": _Key("output_dir", "str"),
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}
_SECTION = re.compile(r"^\s*\[([^\]]+)\]\s*$")


def _short_name(key: str) -> str:
    return key.rsplit(".", 1)[-1]


def _coerce(key: str, spec: _Key, raw: str):
    name = _short_name(key)
    try:
        if spec.kind == "str":
            if not raw:
                raise ValueError
            val = raw
        elif spec.kind == "float":
            val = float(raw)
            if val != val or val in (float("inf"), float("-inf")):
                raise ValueError
        elif spec.kind == "int":
            val = int(raw)
        elif spec.kind == "floats":
            val = tuple(float(p) for p in raw.replace(",", " ").split())
            if not val:
                raise ValueError
        elif spec.kind == "bool":
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError
            val = low in _TRUE
        else:
            if raw not in spec.choices:
                raise ValidationError(f"{name} must be one of {', '.join(spec.choices)}; got {raw!r}", key)
            val = raw
    except ValueError:
        raise ValidationError(f"{name} must be a {spec.kind} value; got {raw!r}", key) from None
    vals = val if isinstance(val, tuple) else (val,)
    if spec.rule == "positive" and not all(v > 0 for v in vals):
        raise ValidationError(f"{name} must be > 0", key)
    if spec.rule == "nonneg" and val < 0:
        raise ValidationError(f"{name} must be >= 0", key)
    if spec.rule == "pow2" and (val < 16 or val & (val - 1)):
        raise ValidationError(f"{name} must be a power of two >= 16", key)
    if spec.rule == "dim" and val not in (1, 2, 3):
        raise ValidationError(f"{name} must be 1, 2 or 3", key)
    return val


def _decode(text) -> str:
    if isinstance(text, str):
        return text
    try:
        return text.decode("utf-8")
    except UnicodeDecodeError as exc:
        head = text[: exc.start]
        line = head.count(b"\n") + 1
        col = exc.start - (head.rfind(b"\n") + 1) + 1
        raise ParseError("config is not valid UTF-8", line, col) from None


def _locate(lines: list, key: str) -> list:
    """(line, column) of every spelling of a dotted key, 1-based."""
    section, hits = "", []
    sec, _, opt = key.rpartition(".")
    for no, line in enumerate(lines, 1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            continue
        name = line.split("=", 1)[0].strip()
        if "=" not in line or not name:
            continue
        full = f"{section}.{name}" if section else name
        if full == key or (section == sec and name == opt and sec):
            hits.append((no, line.index(name) + 1))
    return hits


def parse_config(text) -> ScenarioConfig:
    """Parse and validate a scenario document; defaults fill missing keys."""
    text = _decode(text)
    lines = text.splitlines()
    cp = configparser.ConfigParser(
        delimiters=("=",),
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#", ";"),
        strict=True,
        interpolation=None,
        empty_lines_in_values=False,
        default_section="__defaults_unused__",
    )
    cp.optionxform = str
    try:
        # no continuation lines: indentation carries no meaning in this grammar
        cp.read_string(f"[{_ROOT}]\n" + "\n".join(ln.lstrip() for ln in lines))
    except configparser.DuplicateOptionError as exc:
        line = exc.lineno - 1
        col = lines[line - 1].index(exc.option) + 1 if exc.option in lines[line - 1] else 1
        raise ParseError(f"duplicate key {exc.option!r}", line, col) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno - 1, 1) from None
    except configparser.ParsingError as exc:
        line, bad = exc.errors[0]
        line -= 1
        raw = lines[line - 1] if 0 < line <= len(lines) else ""
        col = len(raw) - len(raw.lstrip()) + 1
        raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line, col) from None

    values = {}
    for section in cp.sections():
        for opt, raw in cp.items(section):
            key = opt if section == _ROOT else f"{section}.{opt}"
            if key in values:
                (line, col), *_ = _locate(lines, key)[1:] or [(1, 1)]
                raise ParseError(f"duplicate key {key!r}", line, col)
            values[key] = raw.strip()

    unknown = sorted(set(values) - set(SCHEMA))
    if unknown:
        raise ValidationError(f"unknown key {unknown[0]!r}", unknown[0])
    if "scenario" not in values:
        raise ValidationError("scenario is required", "scenario")
    if "benchmark.kind" not in values:
        if values["scenario"] not in BENCHMARK_KINDS:
            raise ValidationError("benchmark.kind is required unless scenario names a benchmark", "benchmark.kind")
        values["benchmark.kind"] = values["scenario"]

    kwargs = {SCHEMA[k].attr: _coerce(k, SCHEMA[k], v) for k, v in values.items()}
    cfg = ScenarioConfig(**kwargs)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: ScenarioConfig) -> None:
    if cfg.t_particle > cfg.t_end:
        raise ValidationError("particles.t_end must not exceed time.t_end", "particles.t_end")
    if any(t > cfg.t_particle for t in cfg.checkpoints):
        raise ValidationError("checkpoints must lie in (0, particles.t_end]", "particles.checkpoints")
    if cfg.n_particles < 1000:
        raise ValidationError("n must be >= 1000", "particles.n")
    if cfg.field_source == "solver" and cfg.grid_dim != 1:
        raise ValidationError("source = solver needs grid.dim = 1", "fields.source")
    for key, dt in (("time.dt_particle", cfg.dt_particle), ("time.dt_ode", cfg.dt_ode)):
        steps = cfg.t_particle / dt if key == "time.dt_particle" else cfg.t_end / dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValidationError(f"{_short_name(key)} must divide the integration span", key)


def load_config(path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        return parse_config(fh.read())


def dump_config(cfg: ScenarioConfig) -> str:
    """Canonical text form; ``parse_config(dump_config(c)) == c``."""
    out = []
    for key, spec in SCHEMA.items():
        val = getattr(cfg, spec.attr)
        if isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, tuple):
            val = ", ".join(repr(v) for v in val)
        elif isinstance(val, float):
            val = repr(val)
        out.append(f"{key} = {val}")
    return "\n".join(out) + "\n"


__all__ = ["ScenarioConfig", "parse_config", "load_config", "dump_config", "ConfigError", "SCHEMA"]
