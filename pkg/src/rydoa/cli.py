"""Command-line front end.

    rydoa spectrum   --preset fig3 --transition e1 --out spec.csv
    rydoa qcrb-sweep --preset fig5 --sweep theta_rf:0:180:181 --out qcrb.csv
    rydoa compare    --preset fig5 --sweep snr:0.01:1e6:81:log --out cmp.csv
    rydoa doa        --preset fig5 --theta-rf 30 --theta-b -60 --out doa.json

Exit codes: 0 success, 2 configuration or usage error, 3 computation error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ScenarioConfig, from_dict, load_preset, load_scenario, parse_override
from .errors import (ConfigError, DegenerateGeometry, DerivativeUnstable, InsufficientInformation,
                     RydoaError)
from .estimation import ArrayModel, crb_ula, crb_vsa, qcrb, rydberg_fisher_vs_snr
from .fields import b_decomposition, e_decomposition

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3

SWEEP_VARIABLES = ("theta_rf", "theta_bias", "e0", "b_bias", "snr", "n_elements",
                   "distance", "n_atoms")

# sweep variable -> config key; sweep values are already in the key's unit
_CONFIG_TARGET = {
    "theta_rf": "scene.theta_rf_deg",
    "theta_bias": "bias.theta_bias_deg",
    "e0": "scene.e0_v_per_m",
    "b_bias": "bias.b_mt",
    "n_atoms": "receiver.n_atoms",
    "distance": "link.distance_m",
}
_UNITS = {"theta_rf": "deg", "theta_bias": "deg", "e0": "v_per_m", "b_bias": "mt",
          "snr": "linear", "n_elements": "count", "distance": "m", "n_atoms": "count"}


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    start: float
    stop: float
    steps: int
    spacing: str = "linear"
    secondary: "SweepSpec | None" = None

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep variable {self.variable!r} not in {', '.join(SWEEP_VARIABLES)}")
        if not isinstance(self.steps, int) or self.steps < 2:
            raise ConfigError(f"sweep {self.variable}: steps must be an integer >= 2")
        if self.spacing not in ("linear", "log"):
            raise ConfigError(f"sweep {self.variable}: spacing must be linear or log")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError(f"sweep {self.variable}: endpoints must be finite")
        if self.start == self.stop:
            raise ConfigError(f"sweep {self.variable}: equal endpoints give a single point")
        if self.spacing == "log" and not (self.start > 0 and self.stop > 0):
            raise ConfigError(f"sweep {self.variable}: log spacing needs positive endpoints")
        if self.secondary is not None and self.secondary.variable == self.variable:
            raise ConfigError("the two sweep axes must differ")

    def values(self) -> np.ndarray:
        if self.spacing == "log":
            v = np.logspace(math.log10(self.start), math.log10(self.stop), self.steps)
        else:
            v = np.linspace(self.start, self.stop, self.steps)
        if self.variable == "n_elements":
            v = np.unique(np.round(v).astype(int))
        return v

    def grid(self) -> list[tuple]:
        """Points in row-major order (primary outer, secondary inner)."""
        a = self.values()
        if self.secondary is None:
            return [(x,) for x in a]
        b = self.secondary.values()
        return [(x, y) for x in a for y in b]

    @classmethod
    def parse(cls, text: str, secondary: "SweepSpec | None" = None) -> "SweepSpec":
        parts = text.split(":")
        if len(parts) not in (4, 5):
            raise ConfigError(f"sweep {text!r}: expected variable:start:stop:steps[:log]")
        try:
            start, stop = float(parts[1]), float(parts[2])
            steps = int(parts[3])
        except ValueError:
            raise ConfigError(f"sweep {text!r}: bad number") from None
        spacing = parts[4] if len(parts) == 5 else "linear"
        return cls(parts[0], start, stop, steps, spacing, secondary)


# ----------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _header(args, command: str) -> list[str]:
    return [
        f"# rydoa {__version__}",
        f"# command: {command}",
        f"# preset: {args.preset or ''}",
        f"# config: {args.config or ''}",
        f"# overrides: {json.dumps(_overrides(args), sort_keys=True)}",
        f"# seed: {args.seed}",
    ]


def _write(path, lines: list[str]):
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        o = float(o)
        return o if math.isfinite(o) else ("inf" if o > 0 else "-inf" if o < 0 else "nan")
    if isinstance(o, np.integer):
        return int(o)
    return o


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


# ----------------------------------------------------------------- config


def _overrides(args) -> dict:
    over = dict(args.set or [])
    if getattr(args, "theta_rf", None) is not None:
        over["scene.theta_rf_deg"] = args.theta_rf
    if getattr(args, "theta_b", None) is not None:
        over["scene.theta_b_deg"] = args.theta_b
    if getattr(args, "b_bias", None) is not None:
        over["bias.b_mt"] = args.b_bias
    if getattr(args, "theta_bias", None) is not None:
        over["bias.theta_bias_deg"] = args.theta_bias
    return over


def _config(args) -> ScenarioConfig:
    if args.config:
        cfg = load_scenario(args.config)
    else:
        cfg = load_preset(args.preset or "fig5")
    over = _overrides(args)
    return cfg.with_overrides(over) if over else cfg


def _apply_point(raw: dict, names: tuple, point: tuple) -> ScenarioConfig:
    cfg = from_dict(raw)
    over = {}
    for name, v in zip(names, point):
        if name in _CONFIG_TARGET:
            over[_CONFIG_TARGET[name]] = float(v)
    cfg = cfg.with_overrides(over) if over else cfg
    if "distance" in names:
        # the incident amplitude follows from the link budget
        cfg = cfg.with_overrides({"scene.e0_v_per_m": cfg.link.e_amplitude})
    return cfg


# -------------------------------------------------------------- spectrum


def cmd_spectrum(args) -> int:
    from .spectroscopy import peak_sidecar, spectrum_csv_rows, sweep_spectrum

    cfg = _config(args)
    kind = args.transition.upper()
    ladder = cfg.cfgs[kind]
    decomp = (e_decomposition if kind == "E1" else b_decomposition)(cfg.scene, cfg.bias)
    grid = None
    if args.grid_points:
        span = 2 * math.pi * 1e6 * args.grid_span_mhz
        grid = np.linspace(-span, span, args.grid_points)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spec = sweep_spectrum(ladder, decomp, cfg.bias, grid)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    lines = _header(args, "spectrum") + [f"# transition: {kind}"]
    lines += [",".join(r) for r in spectrum_csv_rows(spec)]
    _write(args.out, lines)
    if args.out not in (None, "-"):
        with open(args.out + ".peaks.json", "w") as fh:
            fh.write(dump_json({"peaks": peak_sidecar(spec), "warnings": spec.warnings}))
    return EXIT_OK


# ------------------------------------------------------------ qcrb-sweep


_QCRB_COLUMNS = ["qcrb_theta_rf_rad2", "qcrb_theta_rf_deg", "qcrb_theta_b_rad2",
                 "qcrb_theta_b_deg", "diverged_theta_rf", "diverged_theta_b",
                 "theta_doa_var_rad2", "theta_doa_deg", "a_norm_sq_theta_rf",
                 "a_norm_sq_theta_b", "consistency_theta_rf", "consistency_theta_b",
                 "qfim_single_theta_rf", "qfim_single_theta_b", "e0_v_per_m", "status"]


def _qcrb_point(job):
    raw, names, point, params, step = job
    cfg = _apply_point(raw, names, point)
    try:
        fr = qcrb(cfg.scene, cfg.bias, cfg.cfgs, nu=cfg.nu, n_atoms=cfg.receiver.n_atoms,
                  step=step, which=params)
    except (DerivativeUnstable, RydoaError) as e:
        inf = math.inf
        return [inf, inf, inf, inf, True, True, inf, inf, 0.0, 0.0, inf, inf, 0.0, 0.0,
                cfg.scene.e_amplitude, f"error:{type(e).__name__}"]
    c = np.diag(fr.qcrb)
    out = []
    for i, name in enumerate(("theta_rf", "theta_b")):
        if name in params:
            out += [c[i], fr.resolution_deg[i]]
        else:
            out += [math.nan, math.nan]
    dv = [fr.diverged[i] if n in params else False for i, n in enumerate(("theta_rf", "theta_b"))]
    doa = fr.theta_doa_var if set(params) == {"theta_rf", "theta_b"} else math.nan
    doa_deg = math.degrees(math.sqrt(doa)) if math.isfinite(doa) else doa
    return out + [dv[0], dv[1], doa, doa_deg, fr.a_norm_sq[0], fr.a_norm_sq[1],
                  fr.consistency[0], fr.consistency[1], fr.single_atom_qfim[0],
                  fr.single_atom_qfim[1], cfg.scene.e_amplitude, "ok"]


def run_qcrb_sweep(cfg: ScenarioConfig, sweep: SweepSpec, params=("theta_rf", "theta_b"),
                   jobs: int = 1, step: float = 1e-4):
    for s in (sweep, sweep.secondary):
        if s is not None and s.variable in ("snr", "n_elements"):
            raise ConfigError(f"{s.variable} is a compare-sweep variable, not a qcrb-sweep one")
    names = (sweep.variable,) + ((sweep.secondary.variable,) if sweep.secondary else ())
    pts = sweep.grid()
    jobs_list = [(cfg.raw, names, p, tuple(params), step) for p in pts]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(_qcrb_point, jobs_list, chunksize=max(1, len(pts) // (4 * jobs))))
    else:
        rows = [_qcrb_point(j) for j in jobs_list]
    cols = [f"{n}_{_UNITS[n]}" for n in names] + _QCRB_COLUMNS
    return cols, [list(p) + r for p, r in zip(pts, rows)]


def cmd_qcrb_sweep(args) -> int:
    cfg = _config(args)
    sweep = _sweep_from_args(args)
    params = tuple(args.params.split(","))
    for p in params:
        if p not in ("theta_rf", "theta_b"):
            raise ConfigError(f"--params: unknown parameter {p!r}")
    cols, rows = run_qcrb_sweep(cfg, sweep, params, args.jobs)
    lines = _header(args, "qcrb-sweep") + [",".join(cols)]
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    _write(args.out, lines)
    return EXIT_OK


def _sweep_from_args(args) -> SweepSpec:
    sec = SweepSpec.parse(args.sweep2) if args.sweep2 else None
    return SweepSpec.parse(args.sweep, sec)


# --------------------------------------------------------------- compare


def thermal_snr(cfg: ScenarioConfig) -> float:
    """SNR of the link: received power over k_B T in a 1/T2 bandwidth.

    The received power uses the atomic effective aperture. Both the array
    and the atomic curves are evaluated at this SNR in distance sweeps.
    """
    from .constants import K_B
    from .fields import effective_aperture, received_power

    a_eff = effective_aperture(cfg.receiver.n_atoms, cfg.ladder_e1.reduced_dipole,
                               cfg.scene.frequency, cfg.receiver.t2)
    noise = K_B * cfg.receiver.temperature / cfg.receiver.t2
    return received_power(cfg.link, a_eff) / noise


def _single_fisher(cfg: ScenarioConfig) -> float:
    # raw information, not gated by the divergence sentinel: weak fields give
    # small but genuine single-atom information that N_atoms * nu lifts
    fr = qcrb(cfg.scene, cfg.bias, cfg.cfgs, nu=1, n_atoms=1.0, which=("theta_rf",))
    return max(fr.single_atom_qfim[0], 0.0)


def run_compare(cfg: ScenarioConfig, sweep: SweepSpec, n_elements: int = 16,
                theta: float = 0.0):
    """Bounds on the arrival angle versus SNR, array size, atom number or distance.

    The Rydberg curves use the theta_RF information of the scene as the
    projection-noise floor (scaled by the atom number and repetitions).
    """
    if sweep.secondary is not None:
        raise ConfigError("compare sweeps are one-dimensional")
    if sweep.variable not in ("snr", "n_elements", "n_atoms", "distance"):
        raise ConfigError("compare sweeps take snr, n_elements, n_atoms or distance")
    f_single = _single_fisher(cfg)
    presets = list(cfg.noise_presets.values())
    cols = [f"{sweep.variable}_{_UNITS[sweep.variable]}", "snr", "n_elements",
            "crb_ula_rad2", "crb_vsa_rad2"]
    for p in presets:
        cols += [f"crb_rydberg_{p.name}_rad2", f"floor_rydberg_{p.name}_rad2"]
    rows = []
    for (v,) in sweep.grid():
        snr, n, n_atoms = 1.0, n_elements, cfg.receiver.n_atoms
        f1 = f_single
        if sweep.variable == "snr":
            snr = float(v)
        elif sweep.variable == "n_elements":
            n = int(v)
        elif sweep.variable == "n_atoms":
            n_atoms = float(v)
        else:
            pc = _apply_point(cfg.raw, ("distance",), (v,))
            snr = thermal_snr(pc)
            f1 = _single_fisher(pc)
        model = ArrayModel(n)
        row = [v, snr, n, crb_ula(model, snr, theta), crb_vsa(model, snr, theta)]
        fq = cfg.nu * n_atoms * f1
        for p in presets:
            f = float(rydberg_fisher_vs_snr(snr, fq, p))
            floor = p.floor_gain * fq
            row += [1.0 / f if f > 0 else math.inf, 1.0 / floor if floor > 0 else math.inf]
        rows.append(row)
    return cols, rows


def cmd_compare(args) -> int:
    cfg = _config(args)
    cols, rows = run_compare(cfg, _sweep_from_args(args), args.n_elements)
    lines = _header(args, "compare") + [",".join(cols)]
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    _write(args.out, lines)
    return EXIT_OK


# ------------------------------------------------------------------- doa


def _doa_estimate(args, cfg, plan):
    from .reconstruction import Measurements, full_cycle, read_spectrum_csv, reconstruct

    if args.e1_csv:
        if len(args.m1_csv or []) != len(plan.orientations):
            raise ConfigError(f"need one --m1-csv per plan orientation ({len(plan.orientations)})")
        meas = Measurements(read_spectrum_csv(args.e1_csv),
                            [read_spectrum_csv(p) for p in args.m1_csv])
        return reconstruct(meas, cfg.cfgs, cfg.bias, plan, None, args.method)
    rng = np.random.default_rng(args.seed)
    return full_cycle(cfg.scene, cfg.bias, cfg.cfgs, plan, known_phases=True,
                      method=args.method, noise_std=args.noise_std, rng=rng)


def _emit(args, text: str) -> None:
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


def _stats(x) -> dict:
    return {"mean": float(np.mean(x)) if len(x) else math.nan,
            "std": float(np.std(x, ddof=1)) if len(x) > 1 else math.nan}


def cmd_doa(args) -> int:
    from .reconstruction import monte_carlo

    cfg = _config(args)
    plan = cfg.plan
    try:
        est = _doa_estimate(args, cfg, plan)
    except (InsufficientInformation, DegenerateGeometry) as e:
        # forbidden geometries are reported as data, not only on stderr
        _emit(args, dump_json({"error": {"type": type(e).__name__, "message": str(e)},
                               "version": __version__, "seed": args.seed}))
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_COMPUTE
    out = {"estimate": est.to_dict(),
           "truth": {"theta_rf_deg": math.degrees(cfg.scene.theta_rf),
                     "theta_b_deg": math.degrees(cfg.scene.theta_b)},
           "version": __version__, "seed": args.seed}
    if args.mc_trials:
        std = args.noise_std or projection_noise_std(cfg)
        mc = monte_carlo(cfg.scene, cfg.bias, cfg.cfgs, plan, std, args.mc_trials,
                         args.seed, args.jobs, args.method)
        fr = qcrb(cfg.scene, cfg.bias, cfg.cfgs, nu=cfg.nu, n_atoms=cfg.receiver.n_atoms)
        out["monte_carlo"] = {
            "trials": args.mc_trials, "failures": mc.failures, "noise_std": std,
            "theta_rf_error_rad": _stats(mc.theta_rf),
            "theta_b_error_rad": _stats(mc.theta_b),
            "theta_doa_error_rad": _stats(mc.theta_doa),
            "var_theta_rf_rad2": mc.variance("theta_rf"),
            "var_theta_b_rad2": mc.variance("theta_b"),
            "var_theta_doa_rad2": mc.variance("theta_doa"),
            "qcrb_theta_rf_rad2": fr.qcrb[0, 0], "qcrb_theta_b_rad2": fr.qcrb[1, 1],
            "qcrb_theta_doa_rad2": fr.theta_doa_var,
        }
    _emit(args, dump_json(out))
    return EXIT_OK


def projection_noise_std(cfg: ScenarioConfig, n_samples: int | None = None) -> float:
    """Per-sample response noise when nu * N_atoms shots are shared by the
    samples of one acquisition cycle."""
    from .reconstruction import measurement_grid

    if n_samples is None:
        n_samples = len(measurement_grid(cfg.ladder_e1, cfg.bias))
        n_samples += sum(len(measurement_grid(cfg.ladder_m1, cfg.bias.along(o)))
                         for o in cfg.plan.orientations)
    return math.sqrt(n_samples / (cfg.nu * cfg.receiver.n_atoms))


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--preset", help="built-in or RYDOA_PRESET_PATH preset (default fig5)")
    src.add_argument("--config", help="JSON scenario file")
    common.add_argument("--set", action="append", type=_override, metavar="KEY=VALUE",
                        help="override a config key, e.g. scene.theta_rf_deg=60")
    common.add_argument("--out", default="-", help="output file (default stdout)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes (default: logical cores)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--theta-rf", type=float, help="deg")
    common.add_argument("--theta-b", type=float, help="deg")
    common.add_argument("--b-bias", type=float, help="mT")
    common.add_argument("--theta-bias", type=float, help="deg")

    p = argparse.ArgumentParser(prog="rydoa", description="Rydberg-cell direction finding")
    p.add_argument("--version", action="version", version=f"rydoa {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", parents=[common], help="Zeeman-resolved EIT spectrum")
    s.add_argument("--transition", choices=("e1", "m1"), default="e1")
    s.add_argument("--grid-points", type=int, default=0, help="uniform grid (default: adaptive)")
    s.add_argument("--grid-span-mhz", type=float, default=30.0)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("qcrb-sweep", parents=[common], help="QCRB over a 1-D or 2-D grid")
    s.add_argument("--sweep", required=True, help="variable:start:stop:steps[:log]")
    s.add_argument("--sweep2", help="secondary axis, same syntax")
    s.add_argument("--params", default="theta_rf,theta_b")
    s.set_defaults(func=cmd_qcrb_sweep)

    s = sub.add_parser("compare", parents=[common], help="Rydberg bound vs ULA and VSA")
    s.add_argument("--sweep", default="snr:0.01:1e6:81:log")
    s.add_argument("--sweep2", help=argparse.SUPPRESS)
    s.add_argument("--n-elements", type=int, default=16)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("doa", parents=[common], help="end-to-end reconstruction")
    s.add_argument("--method", choices=("areas", "heights", "fit"), default="fit")
    s.add_argument("--noise-std", type=float, default=0.0)
    s.add_argument("--mc-trials", type=int, default=0)
    s.add_argument("--e1-csv")
    s.add_argument("--m1-csv", action="append")
    s.set_defaults(func=cmd_doa)
    return p


def _override(text: str):
    try:
        return parse_override(text)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RydoaError, ValueError, ArithmeticError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
