"""INI-style configuration with a typed schema and command-line overrides.

A config file has sections ``target``, ``data``, ``noise``, ``class``,
``train``, ``experiment``, ``bounds``, ``rademacher`` and ``eval``.  Only the
keys listed in ``SCHEMA`` are accepted.  Overrides use ``section.key=value``
or a bare ``key=value``, which is resolved against the sections the current
command reads, in order.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; carries the key path and source line when known."""

    def __init__(self, message: str, key: str = None, line: int = None, source: str = None):
        self.key, self.line, self.source = key, line, source
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        label = f"{key}: " if key else ""
        super().__init__(f"{where}{label}{message}")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _int_list(text: str) -> tuple:
    return tuple(_int(t) for t in text.replace(",", " ").split())


def _float_list(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _str_list(text: str) -> tuple:
    return tuple(t for t in text.replace(",", " ").split())


def _choice(*options):
    def parse(text: str) -> str:
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _path(text: str) -> str:
    return text.strip()


SCHEMA = {
    "target": {"kind": _choice("cosine"), "k": _int, "amplitude": float, "frequency": float,
               "phase": float},
    "data": {"distribution": _choice("uniform-box", "standard-gaussian"), "d": _int, "M": float,
             "n": _int},
    "noise": {"kind": _choice("gaussian", "laplace", "none"), "scale": float, "tau": float},
    "class": {"regime": _choice("output_l1", "joint_l1", "input_l0"),
              "v_policy": _choice("fixed", "min_admissible"), "V": float,
              "eta_policy": _choice("fixed", "thm5"), "eta": float,
              "r_policy": _choice("fixed", "thm2", "multiple_of_n"), "r": float},
    "train": {"loss": _choice("L1", "L2"), "max_iters": _int,
              "schedule": _choice("inv-sqrt", "constant"), "step_size": float,
              "init_scale": float, "init_fan_in": _bool, "restarts": _int, "tolerance": float,
              "patience": _int},
    "experiment": {"ns": _int_list, "ds": _int_list, "regimes": _str_list, "replicates": _int,
                   "eval_samples": _int, "risk_method": _choice("exact", "sampled"),
                   "r_multiples": _float_list, "loose_factor": float, "record_timing": _bool},
    "bounds": {"C": float, "V": float, "eta": float, "tau": float, "r": _int, "d": _int,
               "k": _int, "n": _int, "delta": float},
    "rademacher": {"ns": _int_list, "d": _int, "V": float,
                   "regime": _choice("output_l1", "joint_l1", "input_l0"), "eta": float,
                   "k": _int, "trials": _int, "restarts": _int, "iters": _int,
                   "step_size": float, "init_scale": float},
    "eval": {"params": _path, "m": _int},
}

_NONNEG = ("must be nonnegative", lambda v: v >= 0)
_POS = ("must be positive", lambda v: v > 0)
_ALL_POS = ("entries must be positive", lambda v: len(v) > 0 and min(v) > 0)

# Single-value invariants checked at parse time so errors point at the key.
CONSTRAINTS = {
    ("target", "k"): _POS, ("target", "amplitude"): ("must be finite", lambda v: abs(v) < 1e300),
    ("data", "d"): _POS, ("data", "M"): _POS, ("data", "n"): _POS,
    ("noise", "scale"): _NONNEG, ("noise", "tau"): _NONNEG,
    ("class", "V"): _NONNEG, ("class", "eta"): _POS, ("class", "r"): _NONNEG,
    ("train", "max_iters"): _POS, ("train", "step_size"): _POS, ("train", "init_scale"): _NONNEG,
    ("train", "restarts"): _POS, ("train", "tolerance"): _NONNEG, ("train", "patience"): _POS,
    ("experiment", "ns"): _ALL_POS, ("experiment", "ds"): _ALL_POS,
    ("experiment", "replicates"): _POS, ("experiment", "eval_samples"): _POS,
    ("experiment", "r_multiples"): _ALL_POS, ("experiment", "loose_factor"): _POS,
    ("bounds", "C"): _NONNEG, ("bounds", "V"): _NONNEG, ("bounds", "eta"): _POS,
    ("bounds", "tau"): _NONNEG, ("bounds", "r"): _POS, ("bounds", "d"): _POS,
    ("bounds", "k"): _POS, ("bounds", "n"): ("must be >= 2", lambda v: v >= 2),
    ("bounds", "delta"): _NONNEG,
    ("rademacher", "ns"): ("entries must be >= 2", lambda v: len(v) > 0 and min(v) >= 2),
    ("rademacher", "d"): _POS, ("rademacher", "V"): _NONNEG, ("rademacher", "eta"): _POS,
    ("rademacher", "k"): _POS, ("rademacher", "trials"): _POS,
    ("rademacher", "restarts"): _POS, ("rademacher", "iters"): _NONNEG,
    ("rademacher", "step_size"): _POS, ("rademacher", "init_scale"): _NONNEG,
    ("eval", "m"): _POS,
}

# Sections each command reads, in the order bare override keys are resolved.
COMMAND_SECTIONS = {
    "train": ("data", "class", "train", "noise", "target"),
    "eval-risk": ("eval", "data", "noise", "target"),
    "bounds": ("bounds",),
    "delta-eta": ("bounds",),
    "rademacher": ("rademacher",),
    "rate-study": ("experiment", "class", "train", "data", "noise", "target"),
    "sparsity-study": ("experiment", "class", "train", "data", "noise", "target"),
    "overfit-study": ("experiment", "class", "train", "data", "noise", "target"),
}


@dataclass
class Entry:
    value: object
    source: str
    line: int = None


@dataclass
class Config:
    """Typed values keyed by ``(section, key)``, with where each came from."""

    entries: dict = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        entry = self.entries.get((section, key))
        return default if entry is None else entry.value

    def has(self, section: str, key: str) -> bool:
        return (section, key) in self.entries

    def section(self, section: str) -> dict:
        return {k: e.value for (s, k), e in self.entries.items() if s == section}

    def where(self, section: str, key: str) -> dict:
        entry = self.entries.get((section, key))
        if entry is None:
            return {"key": f"{section}.{key}"}
        return {"key": f"{section}.{key}", "line": entry.line, "source": entry.source}


def _convert(section: str, key: str, text: str, source: str, line: int):
    parser = SCHEMA[section][key]
    try:
        value = parser(text)
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}", f"{section}.{key}", line, source) from None
    if isinstance(value, float) and value != value:
        raise ConfigError("must not be NaN", f"{section}.{key}", line, source)
    check = CONSTRAINTS.get((section, key))
    if check is not None and not check[1](value):
        raise ConfigError(f"{check[0]}, got {text.strip()!r}", f"{section}.{key}", line, source)
    return value


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _key_lines(text: str) -> dict:
    lines, section = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), lineno)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            lines.setdefault((section, m.group(1)), lineno)
    return lines


def parse_text(text: str, source: str = "<config>") -> Config:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], None, line, source) from None
    lines = _key_lines(text)
    config = Config()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError("unknown section", section, lines.get((section, None)), source)
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", f"{section}.{key}", line, source)
            config.entries[(section, key)] = Entry(_convert(section, key, raw, source, line),
                                                   source, line)
    return config


def load(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc.strerror}", source=str(path)) from None
    return parse_text(text, str(path))


def apply_overrides(config: Config, overrides, command: str) -> Config:
    """Apply ``key=value`` strings after the file has been parsed."""
    order = COMMAND_SECTIONS[command]
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value", source="--set")
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SCHEMA or name not in SCHEMA[section]:
                raise ConfigError("unknown key", key, source="--set")
        else:
            matches = [s for s in order if key in SCHEMA[s]]
            if not matches:
                raise ConfigError(f"unknown key for command {command!r}", key, source="--set")
            section, name = matches[0], key
        config.entries[(section, name)] = Entry(
            _convert(section, name, raw, "--set", None), "--set")
    return config
