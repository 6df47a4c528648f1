"""Scenario configuration: built-in presets, JSON loading and validation.

Config files carry explicit units in every key name (``_mhz`` means f/2pi
in MHz, ``_deg`` degrees, ``_mt`` millitesla, ...). They are converted to SI
and radians when the derived objects are built. The raw unit-bearing dict is
what gets compared and serialized, so a save/load round trip is exact.

A file may name a ``preset`` and override any subset of its keys. Presets
are looked up first in the directories listed in ``RYDOA_PRESET_PATH``
(``<name>.json``), then among the built-ins.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import constants as K
from .errors import ConfigError, RydoaError
from .estimation import ReceiverNoise
from .fields import BiasField, LinkBudget, PlaneWave, dbi_to_linear, dbm_to_watt
from .reconstruction import BiasScanPlan
from .spectroscopy import LadderConfig

PRESET_ENV = "RYDOA_PRESET_PATH"

_LADDER_KEYS = {
    "omega_p_mhz": "nonneg", "omega_c_mhz": "nonneg",
    "gamma2_mhz": "pos", "gamma3_mhz": "pos", "gamma4_mhz": "pos", "gamma_rf_khz": "pos",
    "omega0_ghz": "pos", "g_lower": "real", "g_upper": "real",
    "delta_p_mhz": "real", "delta_c_mhz": "real", "delta_rf_mhz": "real",
    "delta_tilde_mhz": "real", "tilde_sign": "sign",
}

SCHEMA = {
    "ladder_e1": dict(_LADDER_KEYS, reduced_dipole_ea0="pos"),
    "ladder_m1": dict(_LADDER_KEYS, reduced_dipole_mub="pos"),
    "scene": {"e0_v_per_m": "pos", "theta_rf_deg": "real", "theta_b_deg": "real_or_null",
              "frequency_ghz": "pos"},
    "bias": {"b_mt": "nonneg", "theta_bias_deg": "real"},
    "plan": {"orientations": "vectors", "sign_factors": "signs_or_null"},
    "sigma_total_sq": "pos",
    "nu": "count",
    "receiver": {"n_atoms": "pos", "t2_ns": "pos", "cell_length_cm": "pos",
                 "temperature_k": "pos"},
    "link": {"tx_power_dbm": "real", "tx_gain_dbi": "real", "distance_m": "pos",
             "impedance_ohm": "pos"},
    "noise_presets": "noise_table",
    "mc_noise_std": "pos_or_null",
}

_FIG3_E1 = {
    "omega_p_mhz": 6.0, "omega_c_mhz": 0.67, "gamma2_mhz": 5.2, "gamma3_mhz": 3.9,
    "gamma4_mhz": 0.17, "gamma_rf_khz": 10.0, "omega0_ghz": 6.9,
    "g_lower": 2.0, "g_upper": 0.67, "reduced_dipole_ea0": 1443.46,
    "delta_p_mhz": 0.0, "delta_c_mhz": 0.0, "delta_rf_mhz": 0.0, "delta_tilde_mhz": 0.0,
    "tilde_sign": 1,
}

_FIG3_M1 = dict(_FIG3_E1, omega_c_mhz=0.8, g_lower=0.67, g_upper=1.33)
del _FIG3_M1["reduced_dipole_ea0"]
_FIG3_M1["reduced_dipole_mub"] = 1.0

_COMMON = {
    "plan": {"orientations": [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]], "sign_factors": None},
    "sigma_total_sq": 1.0e4,
    "nu": 10000,
    # 4.89e16 m^-3 in a 1 cm^3 interaction volume
    "receiver": {"n_atoms": 4.89e10, "t2_ns": 100.0, "cell_length_cm": 1.0,
                 "temperature_k": 290.0},
    "link": {"tx_power_dbm": 0.0, "tx_gain_dbi": 2.15, "distance_m": 100.0,
             "impedance_ohm": 377.0},
    "noise_presets": {
        "lo_free": {"sigma_total_sq": 1.0e4, "floor_gain": 0.02},
        "lo_dressed": {"sigma_total_sq": 1.0e4, "floor_gain": 0.2},
    },
    "mc_noise_std": None,
}

BUILTIN_PRESETS = {
    "fig3": dict(copy.deepcopy(_COMMON), **{
        "ladder_e1": dict(_FIG3_E1),
        "ladder_m1": dict(_FIG3_M1),
        "scene": {"e0_v_per_m": 1.0, "theta_rf_deg": 30.0, "theta_b_deg": None,
                  "frequency_ghz": 6.9},
        "bias": {"b_mt": 2.0, "theta_bias_deg": 0.0},
    }),
    "fig5": dict(copy.deepcopy(_COMMON), **{
        "ladder_e1": dict(_FIG3_E1, omega_p_mhz=0.04),
        "ladder_m1": dict(_FIG3_M1, omega_p_mhz=0.04),
        "scene": {"e0_v_per_m": 1.0, "theta_rf_deg": 45.0, "theta_b_deg": None,
                  "frequency_ghz": 6.9},
        "bias": {"b_mt": 2.0, "theta_bias_deg": 30.0},
    }),
}


# ------------------------------------------------------------ validation


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_value(key: str, kind: str, v):
    bad = None
    if kind == "real" and not _is_num(v):
        bad = "must be a finite number"
    elif kind == "pos" and not (_is_num(v) and v > 0):
        bad = "must be a finite number > 0"
    elif kind == "nonneg" and not (_is_num(v) and v >= 0):
        bad = "must be a finite number >= 0"
    elif kind == "sign" and v not in (1, -1):
        bad = "must be +1 or -1"
    elif kind == "count" and not (isinstance(v, int) and not isinstance(v, bool) and v >= 1):
        bad = "must be an integer >= 1"
    elif kind == "real_or_null" and v is not None and not _is_num(v):
        bad = "must be a finite number or null"
    elif kind == "pos_or_null" and v is not None and not (_is_num(v) and v > 0):
        bad = "must be a number > 0 or null"
    elif kind == "vectors":
        if not (isinstance(v, list) and len(v) >= 2
                and all(isinstance(r, list) and len(r) == 3 and all(map(_is_num, r)) for r in v)):
            bad = "must be a list of at least two 3-vectors"
    elif kind == "signs_or_null":
        if v is not None and not (isinstance(v, list) and all(
                isinstance(r, list) and len(r) == 3 and all(s in (1, -1) for s in r) for r in v)):
            bad = "must be null or a list of (+-1, +-1, +-1) triples"
    elif kind == "noise_table":
        ok = isinstance(v, dict) and len(v) > 0
        if ok:
            for name, t in v.items():
                if not (isinstance(t, dict) and set(t) == {"sigma_total_sq", "floor_gain"}
                        and _is_num(t["sigma_total_sq"]) and t["sigma_total_sq"] > 0
                        and _is_num(t["floor_gain"]) and t["floor_gain"] > 0):
                    ok = False
        if not ok:
            bad = "must map names to {sigma_total_sq > 0, floor_gain > 0}"
    if bad:
        raise ConfigError(f"{key}: {bad} (got {v!r})")


def validate_raw(raw) -> None:
    """Check a raw unit-bearing dict against the schema; every problem is named."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    missing, unknown = [], []

    def walk(node, schema, prefix):
        for k in node:
            if k not in schema:
                unknown.append(prefix + k)
        for k, kind in schema.items():
            if k not in node:
                missing.append(prefix + k)
            elif isinstance(kind, dict):
                if not isinstance(node[k], dict):
                    raise ConfigError(f"{prefix + k}: must be an object")
                walk(node[k], kind, prefix + k + ".")

    walk(raw, SCHEMA, "")
    if unknown:
        raise ConfigError("unknown key(s): " + ", ".join(sorted(unknown)))
    if missing:
        raise ConfigError("missing key(s): " + ", ".join(sorted(missing)))

    def check(node, schema, prefix):
        for k, kind in schema.items():
            if isinstance(kind, dict):
                check(node[k], kind, prefix + k + ".")
            else:
                _check_value(prefix + k, kind, node[k])

    check(raw, SCHEMA, "")


# --------------------------------------------------------------- presets


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "noise_presets":
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset_dirs() -> list[Path]:
    env = os.environ.get(PRESET_ENV, "")
    return [Path(p) for p in env.split(os.pathsep) if p]


def preset_raw(name: str, _seen: tuple = ()) -> dict:
    """Fully resolved raw dict of a named preset."""
    if name in _seen:
        raise ConfigError(f"preset cycle: {' -> '.join(_seen + (name,))}")
    for d in preset_dirs():
        p = d / f"{name}.json"
        if p.is_file():
            return _resolve(_read_json(p), _seen + (name,))
    if name in BUILTIN_PRESETS:
        return copy.deepcopy(BUILTIN_PRESETS[name])
    raise ConfigError(f"unknown preset {name!r} (built-in: {', '.join(sorted(BUILTIN_PRESETS))})")


def _resolve(raw: dict, seen: tuple = ()) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    name = raw.pop("preset", None)
    if name is None:
        return raw
    if not isinstance(name, str):
        raise ConfigError("preset: must be a string")
    return _deep_merge(preset_raw(name, seen), raw)


def _read_json(path) -> dict:
    text = Path(path).read_text()
    if not text.strip():
        return {}
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class Receiver:
    n_atoms: float
    t2: float  # s
    cell_length: float  # m
    temperature: float  # K


def _ladder(d: dict, kind: str) -> LadderConfig:
    mhz = 2 * math.pi * 1e6
    if kind == "E1":
        dip = d["reduced_dipole_ea0"] * K.E_CHARGE * K.BOHR_RADIUS
    else:
        dip = d["reduced_dipole_mub"] * K.MU_B
    return LadderConfig(
        omega_p=d["omega_p_mhz"] * mhz, omega_c=d["omega_c_mhz"] * mhz,
        gamma2=d["gamma2_mhz"] * mhz, gamma3=d["gamma3_mhz"] * mhz,
        gamma4=d["gamma4_mhz"] * mhz, gamma_rf=d["gamma_rf_khz"] * 2 * math.pi * 1e3,
        omega0=d["omega0_ghz"] * 2 * math.pi * 1e9, reduced_dipole=dip,
        g_lower=d["g_lower"], g_upper=d["g_upper"], transition_kind=kind,
        delta_p=d["delta_p_mhz"] * mhz, delta_c=d["delta_c_mhz"] * mhz,
        delta_rf=d["delta_rf_mhz"] * mhz, delta_tilde=d["delta_tilde_mhz"] * mhz,
        tilde_sign=d["tilde_sign"],
    )


@dataclass(frozen=True)
class ScenarioConfig:
    raw: dict
    ladder_e1: LadderConfig = field(init=False, compare=False)
    ladder_m1: LadderConfig = field(init=False, compare=False)
    scene: PlaneWave = field(init=False, compare=False)
    bias: BiasField = field(init=False, compare=False)
    plan: BiasScanPlan = field(init=False, compare=False)
    sigma_total_sq: float = field(init=False, compare=False)
    nu: int = field(init=False, compare=False)
    receiver: Receiver = field(init=False, compare=False)
    link: LinkBudget = field(init=False, compare=False)
    noise_presets: dict = field(init=False, compare=False)
    mc_noise_std: float | None = field(init=False, compare=False)

    def __post_init__(self):
        raw = copy.deepcopy(self.raw)
        validate_raw(raw)
        object.__setattr__(self, "raw", raw)
        sc, bi = raw["scene"], raw["bias"]
        tb = sc["theta_b_deg"]
        try:
            values = {
                "ladder_e1": _ladder(raw["ladder_e1"], "E1"),
                "ladder_m1": _ladder(raw["ladder_m1"], "M1"),
                "scene": PlaneWave(sc["e0_v_per_m"], math.radians(sc["theta_rf_deg"]),
                                   sc["frequency_ghz"] * 2 * math.pi * 1e9,
                                   None if tb is None else math.radians(tb)),
                "bias": BiasField(bi["b_mt"] * 1e-3, math.radians(bi["theta_bias_deg"])),
                "plan": BiasScanPlan(tuple(map(tuple, raw["plan"]["orientations"])),
                                     None if raw["plan"]["sign_factors"] is None
                                     else tuple(map(tuple, raw["plan"]["sign_factors"]))),
                "receiver": Receiver(raw["receiver"]["n_atoms"], raw["receiver"]["t2_ns"] * 1e-9,
                                     raw["receiver"]["cell_length_cm"] * 1e-2,
                                     raw["receiver"]["temperature_k"]),
                "link": LinkBudget(dbm_to_watt(raw["link"]["tx_power_dbm"]),
                                   dbi_to_linear(raw["link"]["tx_gain_dbi"]),
                                   raw["link"]["distance_m"],
                                   K.C_LIGHT / (sc["frequency_ghz"] * 1e9),
                                   raw["link"]["impedance_ohm"]),
                "noise_presets": {n: ReceiverNoise(n, t["sigma_total_sq"], t["floor_gain"])
                                  for n, t in sorted(raw["noise_presets"].items())},
            }
        except RydoaError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from None
        for k, v in values.items():
            object.__setattr__(self, k, v)
        object.__setattr__(self, "sigma_total_sq", float(raw["sigma_total_sq"]))
        object.__setattr__(self, "nu", int(raw["nu"]))
        object.__setattr__(self, "mc_noise_std", raw["mc_noise_std"])

    @property
    def cfgs(self) -> dict:
        return {"E1": self.ladder_e1, "M1": self.ladder_m1}

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        """New config with dotted-path overrides, e.g. {"scene.theta_rf_deg": 60}."""
        raw = copy.deepcopy(self.raw)
        for path, value in overrides.items():
            node = raw
            parts = path.split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"{path}: no such config section {p!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"{path}: unknown key")
            node[parts[-1]] = value
        return ScenarioConfig(raw)

    def to_json(self) -> str:
        return serialize(self)


def load_scenario(path) -> ScenarioConfig:
    return ScenarioConfig(_resolve(_read_json(path)))


def load_preset(name: str) -> ScenarioConfig:
    return ScenarioConfig(preset_raw(name))


def from_dict(raw: dict) -> ScenarioConfig:
    return ScenarioConfig(_resolve(raw))


def serialize(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.raw, sort_keys=True, indent=2)


def parse_override(text: str) -> tuple[str, object]:
    """``key.path=value`` with a JSON value (bare words are taken as strings)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    k, v = text.split("=", 1)
    try:
        val = json.loads(v)
    except json.JSONDecodeError:
        val = v
    return k.strip(), val
