"""Run configuration: an INI file of ``key = value`` lines under section headers.

Grammar
-------
::

    config   := (comment | blank | section)*
    section  := "[" name "]" NEWLINE (entry | comment | blank)*
    entry    := key "=" value NEWLINE
    comment  := ("#" | ";") text NEWLINE

Values are scalars (``1e-8``, ``inf``, ``true``, ``VectorP2``) or
whitespace-separated lists (``divisions = 2 2``).  Every key has a default;
unknown sections or keys are errors.  See ``SCHEMA`` for the full list.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError

COMMANDS = ("solve", "mms", "sweep-k", "certify-laws", "infsup")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str):
    return tuple(float(v) for v in text.split())


def _ints(text: str):
    return tuple(int(v) for v in text.split())


def _str(text: str) -> str:
    return text.strip()


# section -> key -> (parser, default text)
SCHEMA = {
    "run": {
        "command": (_str, "solve"),
        "output": (_str, "vexflow-out"),
        "seed": (int, "0"),
    },
    "domain": {
        "dim": (int, "2"),
        "box": (_floats, "0 1 0 1"),
        "divisions": (_ints, "2 2"),
        "fluid_level": (int, "2"),
        "conc_level": (int, "2"),
    },
    "elements": {
        "velocity": (_str, "VectorP2"),
        "pressure": (_str, "P0"),
    },
    "stress": {
        "r_minus": (float, "1.6"),
        "r_plus": (float, "2.4"),
        "gamma": (float, "8.0"),
        "c_mid": (float, "0.5"),
        "nu0": (float, "1.0"),
        "kappa1": (float, "1.0"),
        "kappa2": (float, "1.0"),
    },
    "flux": {
        "k0": (float, "1.0"),
        "k1": (float, "0.5"),
    },
    "solver": {
        "t": (float, "8.0"),
        "k_reg": (float, "1e4"),
        "outer_tol": (float, "1e-8"),
        "outer_maxit": (int, "100"),
        "inner_tol": (float, "1e-9"),
        "inner_maxit": (int, "200"),
        "damping": (float, "1.0"),
        "convection_on": (_bool, "true"),
        "degree": (int, "5"),
        "inner_method": (_str, "picard"),
    },
    "data": {
        "forcing": (_str, "zero"),
        "forcing_amplitude": (float, "1.0"),
        "c_d": (_str, "constant"),
        "c_d_value": (float, "1.0"),
        "c_d_low": (float, "0.0"),
    },
    "mms": {
        "preset": (_str, "stokes2d"),
        "levels": (_ints, "1 2 3 4"),
        "conc_offset": (int, "0"),
        "interpolate_only": (_bool, "false"),
    },
    "sweep": {
        "ks": (_floats, "1e1 1e2 1e3 1e4"),
    },
    "certify": {
        "samples": (int, "10000"),
        "c_min": (float, "-2.0"),
        "c_max": (float, "2.0"),
    },
    "infsup": {
        "levels": (_ints, "1 2 3"),
        "mode": (_str, "full"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed, validated configuration; ``values[section][key]``."""

    values: dict
    raw: dict

    def __getitem__(self, path: str):
        section, key = path.split(".", 1)
        return self.values[section][key]

    @property
    def command(self) -> str:
        return self.values["run"]["command"]

    def to_ini(self) -> str:
        """Effective configuration; parsing it reproduces this object."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {self.raw[section][key]}")
            lines.append("")
        return "\n".join(lines)


def _validate(v: dict) -> None:
    def fail(path, msg):
        raise ConfigurationError(f"{path}: {msg}")

    if v["run"]["command"] not in COMMANDS:
        fail("run.command", f"expected one of {COMMANDS}")
    dim = v["domain"]["dim"]
    if dim not in (2, 3):
        fail("domain.dim", "must be 2 or 3")
    if len(v["domain"]["box"]) != 2 * dim:
        fail("domain.box", f"expected {2 * dim} numbers (lo hi per axis)")
    box = v["domain"]["box"]
    if any(box[2 * i + 1] <= box[2 * i] for i in range(dim)):
        fail("domain.box", "each axis needs lo < hi")
    if len(v["domain"]["divisions"]) != dim or min(v["domain"]["divisions"]) < 1:
        fail("domain.divisions", f"expected {dim} positive integers")
    for key in ("fluid_level", "conc_level"):
        if v["domain"][key] < 0:
            fail(f"domain.{key}", "must be >= 0")
    s = v["stress"]
    if not 1.0 < s["r_minus"] <= s["r_plus"]:
        fail("stress.r_minus", "need 1 < r_minus <= r_plus")
    for key in ("nu0", "kappa2"):
        if s[key] <= 0:
            fail(f"stress.{key}", "must be positive")
    if s["gamma"] < 0:
        fail("stress.gamma", "must be non-negative")
    if s["kappa1"] < 1e-4:
        fail("stress.kappa1", "must be >= 1e-4")
    if v["flux"]["k0"] <= 0:
        fail("flux.k0", "must be positive")
    if v["flux"]["k1"] < 0:
        fail("flux.k1", "must be non-negative")
    sv = v["solver"]
    for key in ("outer_tol", "inner_tol", "k_reg"):
        if not sv[key] > 0:
            fail(f"solver.{key}", "must be positive")
    if math.isfinite(sv["k_reg"]) and sv["t"] <= 6:
        fail("solver.t", "must exceed 6 when k_reg is finite")
    if not 0 < sv["damping"] <= 1:
        fail("solver.damping", "must lie in (0, 1]")
    if sv["inner_method"] not in ("picard", "newton"):
        fail("solver.inner_method", "expected picard or newton")
    if not 1 <= sv["degree"] <= 8:
        fail("solver.degree", "must lie in [1, 8]")
    if min(v["mms"]["levels"], default=-1) < 0:
        fail("mms.levels", "need at least one level >= 0")
    if len(v["sweep"]["ks"]) == 0 or min(v["sweep"]["ks"]) <= 0:
        fail("sweep.ks", "need positive values")
    if v["certify"]["samples"] < 1:
        fail("certify.samples", "must be >= 1")
    if v["infsup"]["mode"] not in ("full", "reduced"):
        fail("infsup.mode", "expected full or reduced")


def parse_config(text: str = "", overrides: dict | None = None, source: str = "<config>") -> RunConfig:
    """Parse INI text, apply ``{"section.key": "value"}`` overrides, validate.

    Raises
    ------
    ConfigurationError
        With the line number for syntax errors and ``section.key`` for
        unknown keys or invalid values.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    raw = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigurationError(f"{source}: unknown section [{section}]")
        for key, value in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"{source}: unknown key {section}.{key}")
            raw[section][key] = value.strip()
    for path, value in (overrides or {}).items():
        section, _, key = path.partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigurationError(f"override: unknown key {path}")
        raw[section][key] = str(value).strip()
    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (conv, _) in keys.items():
            try:
                values[section][key] = conv(raw[section][key])
            except ValueError as exc:
                raise ConfigurationError(f"{section}.{key}: cannot parse {raw[section][key]!r} ({exc})") from None
    _validate(values)
    return RunConfig(values, raw)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    return parse_config(text, overrides, source=str(path))
