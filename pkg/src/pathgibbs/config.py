"""Run configuration: sectioned ``key = value`` files with a fixed schema.

Any key can be overridden from the environment as
``PATHGIBBS_<SECTION>__<KEY>`` with dots in the key written as underscores,
e.g. ``PATHGIBBS_POTENTIAL__LJ_A=2``.
"""
from __future__ import annotations

import configparser
import io
import os

import numpy as np

from .constants import ModelConstants
from .langevin import LangevinSpec
from .potentials import ConfigError, PathPairPotential, ScalarPotential, SelfPotential
from .reference import ReferenceMeasure

__all__ = ["SCHEMA", "RunConfig", "ENV_PREFIX", "parse_box", "format_box"]

ENV_PREFIX = "PATHGIBBS_"


def parse_box(text: str) -> tuple:
    """``"0,4;0,4"`` -> ((0.0, 4.0), (0.0, 4.0))."""
    out = []
    for part in text.split(";"):
        lo, hi = (float(v) for v in part.split(","))
        out.append((lo, hi))
    return tuple(out)


def format_box(box) -> str:
    return ";".join(f"{lo!r},{hi!r}" for lo, hi in box)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_TYPES = {"int": int, "float": float, "str": str, "bool": _bool, "box": parse_box}

SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "model": {
        "dimension": ("int", 1),
        "delta": ("float", 0.5),
        "n_steps": ("int", 64),
    },
    "confinement": {
        "kind": ("str", "power"),
        "p": ("float", 4.0),
    },
    "potential": {
        "R": ("float", 1.0),
        "tail": ("str", "none"),
        "lj.a": ("float", 1.0),
        "lj.b": ("float", 1.0),
        "shifted": ("bool", False),
        "a0": ("float", 1.0),
    },
    "self_potential": {
        "kind": ("str", "zero"),
        "coef": ("float", 0.0),
        "exponent": ("float", 1.0),
        "A_Psi": ("float", 0.0),
    },
    "constants": {
        "beta": ("float", 1.0),
        "B_Phi": ("float", 0.0),
        "Bbar_Phi": ("float", 0.0),
        "C": ("float", 1.0),
        "C_source": ("str", "user-supplied"),
    },
    "sampler": {
        "box": ("box", ((0.0, 4.0),)),
        "z": ("float", 0.1),
        "p_birth": ("float", 0.35),
        "p_death": ("float", 0.35),
        "p_translate": ("float", 0.2),
        "p_mark": ("float", 0.1),
        "n_sweeps": ("int", 10000),
        "burn_in": ("int", 1000),
        "thinning": ("int", 10),
        "moves_per_sweep": ("int", 10),
        "gnz_budget": ("int", 16),
    },
    "marks": {
        "mode": ("str", "bank"),
        "bank_size": ("int", 4096),
    },
    "ks": {
        "z": ("float", 0.05),
        "depth": ("int", 4),
        "budget": ("int", 1000),
        "k_max": ("int", 3),
    },
    "run": {
        "seed": ("int", 0),
        "out": ("str", "out"),
        "workers": ("int", 1),
        "n_paths": ("int", 16),
        "n_anchor": ("int", 64),
        "n_mc": ("int", 4096),
    },
}


def _format(kind: str, value) -> str:
    if kind == "box":
        return format_box(value)
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def _env_name(section: str, key: str) -> str:
    return f"{ENV_PREFIX}{section.upper()}__{key.upper().replace('.', '_')}"


class RunConfig:
    """Resolved configuration values, keyed by section and key."""

    def __init__(self, values: dict | None = None):
        self.values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
        for s, kv in (values or {}).items():
            for k, v in kv.items():
                self.set(s, k, v)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def __getitem__(self, item):
        section, key = item
        return self.get(section, key)

    def set(self, section: str, key: str, value):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        kind = SCHEMA[section][key][0]
        if isinstance(value, str) and kind != "str":
            value = _TYPES[kind](value)
        elif kind == "float":
            value = float(value)
        elif kind == "int":
            value = int(value)
        elif kind == "box":
            value = tuple((float(lo), float(hi)) for lo, hi in value)
        self.values[section][key] = value

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    @classmethod
    def parse(cls, text: str, env: dict | None = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_string(text)
        cfg = cls()
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp.items(section):
                cfg.set(section, key, raw)
        cfg.apply_env(os.environ if env is None else env)
        return cfg

    @classmethod
    def from_file(cls, path, env: dict | None = None) -> "RunConfig":
        with open(path) as fh:
            return cls.parse(fh.read(), env)

    def apply_env(self, env) -> None:
        known = {_env_name(s, k): (s, k) for s, keys in SCHEMA.items() for k in keys}
        for name, raw in env.items():
            if not name.startswith(ENV_PREFIX):
                continue
            if name not in known:
                raise ConfigError(f"unknown config override {name}")
            self.set(*known[name], raw)

    def serialize(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for s, keys in SCHEMA.items():
            cp[s] = {k: _format(kind, self.values[s][k]) for k, (kind, _) in keys.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    # builders for the model objects

    def langevin_spec(self) -> LangevinSpec:
        return LangevinSpec(d=self["model", "dimension"], potential=self["confinement", "kind"],
                            p=self["confinement", "p"], n_steps=self["model", "n_steps"],
                            delta=self["model", "delta"])

    def scalar_potential(self) -> ScalarPotential:
        return ScalarPotential(R=self["potential", "R"], tail=self["potential", "tail"],
                               lj_a=self["potential", "lj.a"], lj_b=self["potential", "lj.b"],
                               shifted=self["potential", "shifted"], a0=self["potential", "a0"])

    def pair_potential(self) -> PathPairPotential:
        return PathPairPotential(self.scalar_potential())

    def self_potential(self) -> SelfPotential:
        return SelfPotential(self["self_potential", "kind"], self["self_potential", "coef"],
                             self["self_potential", "exponent"], self["self_potential", "A_Psi"])

    def model_constants(self) -> ModelConstants:
        return ModelConstants(beta=self["constants", "beta"], B_Phi=self["constants", "B_Phi"],
                              Bbar_Phi=self["constants", "Bbar_Phi"], C_beta=self["constants", "C"],
                              C_source=self["constants", "C_source"], d=self["model", "dimension"],
                              delta=self["model", "delta"])

    def reference(self, box=True) -> ReferenceMeasure:
        b = np.array(self["sampler", "box"]) if box else None
        if b is not None and b.shape[0] != self["model", "dimension"]:
            raise ConfigError("sampler box dimension differs from model dimension")
        return ReferenceMeasure(self.langevin_spec(), self.self_potential(), box=b,
                                mark_mode=self["marks", "mode"], bank_size=self["marks", "bank_size"],
                                seed=self["run", "seed"])
