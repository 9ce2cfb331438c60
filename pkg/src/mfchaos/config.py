"""Run configuration: flat INI-style sections of ``key = value`` pairs.

Keys before the first section header are top-level; ``section.key = value``
is accepted there as well. Lists are comma-separated.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from .errors import ParseError, ValidationError

SUBCOMMANDS = ("check-stability", "solve-fp", "simulate-particles", "converge-n",
               "converge-eps", "uniqueness", "stability-sweep", "smoothing")
_TOP = "__top__"


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _in(*choices):
    def check(v):
        return v in choices
    check.label = "one of " + ", ".join(choices)
    return check


_positive.label = "must be > 0"
_nonneg.label = "must be >= 0"

# section -> key -> (type, default, check)
SCHEMA = {
    _TOP: {
        "experiment": (str, "check-stability", _in(*SUBCOMMANDS)),
        "m_inf": (float, 1.0, _nonneg),
        "seeds": ("int_list", [0], None),
        "out_dir": (str, "out", None),
        "threads": (int, 0, _nonneg),
    },
    "driver": {
        "kind": (str, "linear", _in("linear", "perturbed", "constant")),
        "a": (float, 1.0, _positive),
        "b": (float, 3.0, _positive),
        "amplitude": (float, 0.0, None),
        "frequency": (float, 1.0, None),
        "sigma": (float, 1.0, _positive),
        "root_tolerance": (float, 1e-12, _positive),
    },
    "kernel": {
        "shape": (str, "bump", _in("bump", "quartic")),
        "epsilon": (float, 0.2, _positive),
    },
    "grid": {
        "x_min": (float, -16.0, None),
        "x_max": (float, 16.0, None),
        "nx": (int, 641, None),
    },
    "fp": {
        "t_end": (float, 0.5, _positive),
        "cfl": (float, 0.4, _positive),
        "scheme": (str, "euler", _in("euler", "heun")),
        "n_snapshots": (int, 11, _positive),
    },
    "initial": {
        "kind": (str, "gaussian", _in("gaussian", "bump", "plateau")),
        "mean": (float, 0.0, None),
        "sd": (float, 1.0, _positive),
        "peak": (float, 0.0, _nonneg),
        "center": (float, 0.0, None),
        "width": (float, 1.0, _positive),
    },
    "particles": {
        "n": (int, 1000, _positive),
        "dt": (float, 0.01, _positive),
        "density_eval": (str, "auto", _in("auto", "direct", "grid")),
        "n_list": ("int_list", [200, 800, 3200], None),
    },
    "eps": {
        "eps_list": ("float_list", [0.4, 0.2, 0.1], None),
        "grid_rule": (str, "common", _in("common", "scaled")),
        "headroom": (float, 1.1, _positive),
    },
    "sweep": {
        "b_list": ("float_list", [1.0, 1.9, 2.1, 3.0, 4.0], None),
        "headroom": (float, 1.1, _positive),
    },
    "uniqueness": {
        "horizon": (float, 0.05, _positive),
        "size": (float, 1e-3, _positive),
        "wavenumber": (float, 1.0, None),
        "center": (float, 0.0, None),
        "n_snapshots": (int, 21, None),
        "headroom": (float, 1.1, _positive),
    },
    "smoothing": {
        "spike_width": (float, 0.05, _positive),
        "t_lo": (float, 0.05, _positive),
        "n_snapshots": (int, 41, _positive),
        "tolerance": (float, 0.05, _positive),
        "control_sigma": (float, 1.0, _nonneg),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``sections`` maps section -> key -> typed value."""

    sections: dict

    def __getitem__(self, path):
        section, _, key = path.rpartition(".")
        return self.sections[section or _TOP][key]

    @property
    def experiment(self):
        return self.sections[_TOP]["experiment"]

    def section(self, name):
        return dict(self.sections[name])

    def with_values(self, **paths):
        """Copy with ``section__key=value`` overrides, revalidated."""
        raw = {s: dict(kv) for s, kv in self.sections.items()}
        for path, value in paths.items():
            section, _, key = path.rpartition("__")
            raw[section or _TOP][key] = value
        return _validate(raw)

    def as_dict(self):
        """Nested dict for report echoes (top-level keys at the root)."""
        out = dict(self.sections[_TOP])
        for name, kv in self.sections.items():
            if name != _TOP:
                out[name] = dict(kv)
        return out


def _convert(kind, text, path):
    text = text.strip()
    try:
        if kind is str:
            return text
        if kind is int:
            return int(text)
        if kind is float:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "int_list":
            return [int(p) for p in text.split(",") if p.strip()]
        if kind == "float_list":
            return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ValidationError(path, f"expected {_type_name(kind)}, got {text!r}") from None
    raise TypeError(kind)


def _type_name(kind):
    return {str: "a string", int: "an integer", float: "a finite number",
            "int_list": "a comma-separated list of integers",
            "float_list": "a comma-separated list of numbers"}[kind]


def _path(section, key):
    return key if section == _TOP else f"{section}.{key}"


def _precheck(text):
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.strip()
        if not body or body[0] in "#;" or (body[0] == "[" and body.endswith("]")):
            continue
        if "=" not in body or body.startswith("="):
            column = len(line) - len(line.lstrip()) + 1
            raise ParseError(f"expected 'key = value', got {body!r}", lineno, column)


def _read(text):
    _precheck(text)
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",),
                                       default_section="__defaults_unused__")
    parser.optionxform = str
    # a synthetic header line holds top-level keys; line numbers shift by one
    try:
        flat = "\n".join(line.strip() for line in text.splitlines())
        parser.read_string(f"[{_TOP}]\n" + flat)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("missing section header", exc.lineno - 1) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", (exc.lineno or 1) - 1) from None
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r}", (exc.lineno or 1) - 1) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] - 1
        line = text.splitlines()[lineno - 1]
        column = len(line) - len(line.lstrip()) + 1
        raise ParseError(f"expected 'key = value', got {line.strip()!r}", lineno, column) from None
    raw = {}
    for name in parser.sections():
        for key, value in parser.items(name):
            section = name
            if name == _TOP and "." in key:
                section, key = key.split(".", 1)
            if key in raw.setdefault(section, {}):
                raise ValidationError(_path(section, key), "given twice")
            raw[section][key] = value
    return raw


def _validate(raw):
    sections = {}
    for name, kv in raw.items():
        if name not in SCHEMA:
            raise ValidationError(name, "unknown section")
        for key in kv:
            if key not in SCHEMA[name]:
                raise ValidationError(_path(name, key), "unknown key")
    for name, schema in SCHEMA.items():
        given = raw.get(name, {})
        out = {}
        for key, (kind, default, check) in schema.items():
            path = _path(name, key)
            if key in given:
                value = given[key]
                value = _convert(kind, value, path) if isinstance(value, str) and kind is not str \
                    else value
            else:
                value = list(default) if isinstance(default, list) else default
            if kind is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if check is not None and not check(value):
                raise ValidationError(path, check.label)
            out[key] = value
        sections[name] = out
    _cross_check(sections)
    return RunConfig(sections)


def _cross_check(s):
    g = s["grid"]
    if not g["x_min"] < g["x_max"]:
        raise ValidationError("grid.x_max", "must be > grid.x_min")
    if g["nx"] < 16:
        raise ValidationError("grid.nx", "must be >= 16")
    d = s["driver"]
    if d["kind"] == "perturbed" and not d["a"] - abs(d["amplitude"] * d["frequency"]) > 0:
        raise ValidationError("driver.amplitude", "needs a - |amplitude*frequency| > 0")
    for path, values in (("seeds", s[_TOP]["seeds"]),):
        if not values or any(v < 0 for v in values):
            raise ValidationError(path, "needs nonnegative integers")
        if len(set(values)) != len(values):
            raise ValidationError(path, "must be distinct")
    nl = s["particles"]["n_list"]
    if not nl or nl[0] < 1 or any(b <= a for a, b in zip(nl, nl[1:])):
        raise ValidationError("particles.n_list", "must be strictly increasing positive integers")
    el = s["eps"]["eps_list"]
    if not el or any(e <= 0 for e in el) or any(b > a for a, b in zip(el, el[1:])):
        raise ValidationError("eps.eps_list", "must be positive and nonincreasing")
    if not s["sweep"]["b_list"] or any(b <= 0 for b in s["sweep"]["b_list"]):
        raise ValidationError("sweep.b_list", "must hold positive values")
    if s["uniqueness"]["n_snapshots"] < 8:
        raise ValidationError("uniqueness.n_snapshots", "must be >= 8")
    if s["fp"]["scheme"] == "euler" and s["fp"]["cfl"] > 0.45:
        raise ValidationError("fp.cfl", "must be <= 0.45 for explicit Euler")
    if s["fp"]["cfl"] >= 1:
        raise ValidationError("fp.cfl", "must be < 1")


def parse_config_text(text):
    return _validate(_read(text))


def parse_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def _format(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ", ".join(_format(x) for x in v)
    return str(v)


def format_config(config):
    """Effective config as text; parsing it back gives an equal RunConfig."""
    lines = [f"{k} = {_format(v)}" for k, v in config.sections[_TOP].items()]
    for name, kv in config.sections.items():
        if name == _TOP:
            continue
        lines.append("")
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_format(v)}" for k, v in kv.items())
    return "\n".join(lines) + "\n"
