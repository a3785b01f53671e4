"""
INI experiment configuration with a strict schema.

Unknown sections or keys, missing required keys and malformed values all
raise :class:`ConfigError` naming the offending entry.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .model import Box, ModelParams, SplitPoint
from .rng import MASK64, RngSeed


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    return tuple(int(t) for t in text.split(",")) if text else ()


def _fmt_ints(v) -> str:
    return ",".join(str(int(c)) for c in v)


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    return tuple(float(t) for t in text.split(",")) if text else ()


def _fmt_floats(v) -> str:
    return ",".join(repr(float(c)) for c in v)


def _sites(text: str) -> Optional[tuple[tuple[int, ...], ...]]:
    text = text.strip()
    if text == "all":
        return None
    return tuple(_ints(t) for t in text.split(";") if t.strip())


def _fmt_sites(v) -> str:
    return "all" if v is None else "; ".join(_fmt_ints(s) for s in v)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _u64(text: str) -> int:
    v = int(text.strip(), 0)
    if not 0 <= v <= MASK64:
        raise ValueError("must be an unsigned 64-bit integer")
    return v


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], Any]
    fmt: Callable[[Any], str]
    required: bool = False
    default: Any = None


_INT = (int, str)
_FLOAT = (float, repr)

SCHEMA: dict[str, dict[str, _Key]] = {
    "model": {
        "k": _Key(*_INT, required=True),
        "d": _Key(*_INT, required=True),
        "epsilon": _Key(*_FLOAT, required=True),
        "beta": _Key(*_FLOAT, required=True),
    },
    "box": {
        "lo0": _Key(_ints, _fmt_ints, required=True),
        "hi0": _Key(_ints, _fmt_ints, required=True),
        "lo1": _Key(_ints, _fmt_ints, required=True),
        "hi1": _Key(_ints, _fmt_ints, required=True),
    },
    "run": {
        "seed": _Key(_u64, str, required=True),
        "stream": _Key(_u64, str, default=0),
        "n_samples": _Key(*_INT, required=True),
    },
    "simulate": {
        "origin": _Key(_ints, _fmt_ints, default=None),
        "points": _Key(_sites, _fmt_sites, default=None),
        "tilt_m": _Key(*_FLOAT, default=0.0),
        "sup_L": _Key(_floats, _fmt_floats, default=()),
        "chi": _Key(_bool, str, default=True),
    },
    "oracle": {
        "instances": _Key(*_INT, default=200),
        "model_instances": _Key(*_INT, default=50),
        "mc_instances": _Key(*_INT, default=20),
        "mc_samples": _Key(*_INT, default=100_000),
        "max_sites": _Key(*_INT, default=8),
        "max_edges": _Key(*_INT, default=14),
        "cap": _Key(*_INT, default=24),
        "fixture_p": _Key(*_FLOAT, default=0.3),
        "fixture_q": _Key(*_FLOAT, default=0.6),
    },
    "certify": {
        "lambda": _Key(*_FLOAT, default=0.5),
        "delta": _Key(*_FLOAT, default=None),
        "alpha": _Key(*_FLOAT, default=None),
        "L_grid": _Key(_floats, _fmt_floats, default=None),
        "points": _Key(_sites, _fmt_sites, default=None),
    },
    "fit": {
        "table": _Key(str, str, default=None),
        "points": _Key(_sites, _fmt_sites, default=None),
        "q_fixed": _Key(*_FLOAT, default=None),
    },
}


@dataclass
class ExperimentConfig:
    params: ModelParams
    box: Box
    seed: RngSeed
    n_samples: int
    sections: dict = field(default_factory=dict)

    def option(self, section: str, key: str):
        spec = SCHEMA[section][key]
        return self.sections.get(section, {}).get(key, spec.default)

    def site(self, coords) -> SplitPoint:
        if len(coords) != self.params.k + self.params.d:
            raise ConfigError(f"site {coords} does not have k + d = "
                              f"{self.params.k + self.params.d} coordinates")
        return SplitPoint.from_coords(coords, self.params.k)

    def sites(self, section: str, key: str = "points"):
        raw = self.option(section, key)
        return None if raw is None else [self.site(c) for c in raw]

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        values = {
            "model": self.params.as_record(),
            "box": self.box.as_record(),
            "run": {"seed": self.seed.seed, "stream": self.seed.stream,
                    "n_samples": self.n_samples},
        }
        for sec, kv in self.sections.items():
            values.setdefault(sec, {}).update(kv)
        for sec, kv in values.items():
            cp[sec] = {key: SCHEMA[sec][key].fmt(v) for key, v in kv.items() if v is not None}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_config(text: str, seed_override: Optional[int] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    parsed: dict[str, dict] = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        parsed[sec] = {}
        for key, raw in cp[sec].items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key '{key}' in [{sec}]")
            try:
                parsed[sec][key] = SCHEMA[sec][key].parse(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{sec}] {key}: {exc}") from exc
    for sec in ("model", "box", "run"):
        for key, spec in SCHEMA[sec].items():
            if spec.required and key not in parsed.get(sec, {}):
                raise ConfigError(f"missing required key '{key}' in [{sec}]")
    try:
        params = ModelParams(**parsed["model"])
        box = Box(**parsed["box"])
        box.check(params)
    except ValueError as exc:
        raise ConfigError(f"invalid model or box: {exc}") from exc
    run = parsed["run"]
    seed = RngSeed(run["seed"] if seed_override is None else seed_override, run.get("stream", 0))
    if run["n_samples"] < 1:
        raise ConfigError("[run] n_samples must be positive")
    extra = {s: kv for s, kv in parsed.items() if s not in ("model", "box", "run")}
    cfg = ExperimentConfig(params, box, seed, run["n_samples"], extra)
    for sec in extra:
        for key in ("points", "origin"):
            raw = extra[sec].get(key)
            if raw is None:
                continue
            for c in ([raw] if key == "origin" else raw):
                if not box.contains(cfg.site(c)):
                    raise ConfigError(f"[{sec}] {key}: site {c} is outside the box")
    for key in ("fixture_p", "fixture_q"):
        v = cfg.option("oracle", key)
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"[oracle] {key}={v} is not a probability")
    return cfg


def load_config(path, seed_override: Optional[int] = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), seed_override)
