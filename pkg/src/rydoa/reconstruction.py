"""Two-stage direction finding: theta_RF from an E1 spectrum, B_RF from M1
spectra taken at a small set of bias orientations, then k = E x B.

Line strengths are read off by integrating the baseline-corrected response
over a window around every predicted Zeeman line. The line positions are
known from the bias field and the Lande factors, so this needs no peak
search and survives noise. Areas are normalized by a reference line of known
Rabi frequency computed on the same samples, which removes the slowly
varying EIT background and the window truncation.

Relative phases of the field components cannot be read from the areas. The
E branch (sign pattern of E_y, E_z) and the B sign factors have to be
supplied; ``full_cycle`` takes them from the scene when asked to.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from scipy.optimize import least_squares

from . import kernels
from .constants import HBAR
from .errors import (DegenerateGeometry, DegeneratePlan, InconsistentMeasurements,
                     InsufficientInformation, InvalidInput)
from .angular import basis_for_axis
from .fields import (BiasField, PlaneWave, SphericalDecomposition, b_decomposition,
                     e_decomposition, in_plane_vector)
from .spectroscopy import (LadderConfig, TransitionPath, enumerate_paths, response,
                           rho21_analytic)

WINDOW_FACTOR = 1000.0  # window half-width cap in units of gamma_rf
GAP_FRACTION = 0.45  # and in units of the distance to the nearest other line
RESIDUAL_WARN = 1e-3
SQ_ZERO = 1e-14
_ORTHO_TOL = 1e-9
_RESONANCE_TOL = 1e-6  # rad/s, lines closer than this are one group
METHODS = ("areas", "heights", "fit")


def _wrap(a: float) -> float:
    """Angle in (-pi, pi]."""
    w = math.remainder(a, 2 * math.pi)
    return math.pi if w == -math.pi else w


# ---------------------------------------------------------------- plan


@dataclass(frozen=True)
class BiasScanPlan:
    orientations: tuple = ((0.0, 0.0, 1.0), (0.0, 1.0, 0.0))
    sign_factors: tuple | None = None  # per orientation: (b_-1, b_0, b_+1)

    def __post_init__(self):
        ors = []
        for o in self.orientations:
            v = np.asarray(o, float)
            n = float(np.linalg.norm(v))
            if v.shape != (3,) or not n > 0:
                raise InvalidInput(f"bad bias orientation {o!r}")
            ors.append(tuple(float(c) for c in v / n))
        object.__setattr__(self, "orientations", tuple(ors))
        sf = self.sign_factors
        if sf is None:
            sf = tuple((1, 1, 1) for _ in ors)
        sf = tuple(tuple(int(s) for s in t) for t in sf)
        if len(sf) != len(ors) or any(len(t) != 3 or any(s not in (-1, 1) for s in t) for t in sf):
            raise InvalidInput("sign_factors needs one (+-1, +-1, +-1) triple per orientation")
        object.__setattr__(self, "sign_factors", sf)
        if len(ors) < 2:
            raise DegeneratePlan("a bias scan plan needs at least two orientations")
        if len(ors) > 3:
            raise DegeneratePlan("at most three mutually orthogonal orientations exist")
        for i in range(len(ors)):
            for j in range(i):
                if abs(float(np.dot(ors[i], ors[j]))) > _ORTHO_TOL:
                    raise DegeneratePlan("bias orientations must be mutually orthogonal")
        r = np.linalg.matrix_rank(self.basis_matrix())
        if r < 3:
            raise DegeneratePlan(f"plan matrix has rank {r} < 3")

    @property
    def frame(self) -> np.ndarray:
        """Rows: the orientations, completed to a right-handed orthonormal frame."""
        f = [np.array(o) for o in self.orientations]
        if len(f) == 2:
            f.append(np.cross(f[0], f[1]))
        return np.array(f)

    def basis_matrix(self) -> np.ndarray:
        """Maps squared frame components of B to (|B_0|^2, 2|B_-1|^2, 2|B_+1|^2)
        per orientation, stacked."""
        rows = []
        for i in range(len(self.orientations)):
            e = np.zeros(3)
            e[i] = 1.0
            rows += [e, 1.0 - e, 1.0 - e]
        return np.array(rows)

    def with_signs_from(self, b_vec) -> "BiasScanPlan":
        """Sign factors matching a known field (the 'known relative phases')."""
        s = [1 if c >= 0 else -1 for c in self.frame @ np.asarray(b_vec, float)]
        sf = [(1, s[i], 1) for i in range(len(self.orientations))]
        if len(self.orientations) == 2:
            sf[0] = (1, s[0], s[2])
        return replace(self, sign_factors=tuple(sf))

    def to_dict(self) -> dict:
        return {"orientations": [list(o) for o in self.orientations],
                "sign_factors": [list(s) for s in self.sign_factors]}


# ------------------------------------------------------- line strengths


@dataclass(frozen=True)
class LineGroup:
    resonance: float
    q: int
    weight: float  # sum over member paths of (|3j| * reduced element / hbar)^2
    half_width: float


def line_groups(cfg: LadderConfig, bias: BiasField, window_factor: float = WINDOW_FACTOR):
    """Predicted lines of a ladder under ``bias`` with integration windows.

    Coincident paths are merged; a merged group mixing different q cannot be
    attributed and raises InsufficientInformation.
    """
    unit = SphericalDecomposition(1.0, {-1: 1.0, 0: 1.0, 1: 1.0}, cfg.transition_kind)
    paths = enumerate_paths(cfg, unit, bias, include_zero=True)
    paths.sort(key=lambda p: p.resonance)
    groups: list[list[TransitionPath]] = []
    for p in paths:
        if groups and abs(p.resonance - groups[-1][0].resonance) < _RESONANCE_TOL:
            groups[-1].append(p)
        else:
            groups.append([p])
    out = []
    res = [g[0].resonance for g in groups]
    for i, g in enumerate(groups):
        qs = {p.q for p in g}
        if len(qs) > 1:
            raise InsufficientInformation(
                f"lines of different q coincide at {res[i]:.6g} rad/s; "
                "the bias field does not separate the Zeeman components")
        gaps = [abs(r - res[i]) for j, r in enumerate(res) if j != i]
        hw = window_factor * cfg.gamma_rf
        if gaps:
            hw = min(hw, GAP_FRACTION * min(gaps))
        w = sum((float(p.three_j) * cfg.reduced_dipole / HBAR) ** 2 for p in g)
        out.append(LineGroup(res[i], g[0].q, w, hw))
    return out


def _window_integral(x, y, lo, hi, height=False):
    m = (x >= lo) & (x <= hi)
    xs, ys = x[m], y[m]
    if len(xs) < 8:
        raise InsufficientInformation(
            f"only {len(xs)} samples inside the window [{lo:.6g}, {hi:.6g}] rad/s")
    k = max(2, len(xs) // 20)
    c = np.polyfit(np.r_[xs[:k], xs[-k:]], np.r_[ys[:k], ys[-k:]], 1)
    yy = ys - np.polyval(c, xs)
    if height:
        return float(yy[np.argmax(np.abs(yy))])
    return float(np.trapezoid(yy, xs))


@dataclass
class Calibration:
    """Per-line reference strength: signal per unit Omega^2 on given samples."""
    groups: list
    background: list
    per_rabi_sq: list
    height: bool = False
    model: tuple | None = None  # (cfg, bias) when strengths are refined by a fit


def calibrate(cfg: LadderConfig, bias: BiasField, grid, method: str = "areas",
              window_factor: float = WINDOW_FACTOR) -> Calibration:
    if method not in METHODS:
        raise InvalidInput(f"unknown line-strength method {method!r}")
    x = np.asarray(grid, float)
    groups = line_groups(cfg, bias, window_factor)
    height = method == "heights"
    bg_resp = response(cfg, [], x)
    ref_sq = 1e-4 * cfg.gamma_rf * cfg.gamma31
    bgs, per = [], []
    for g in groups:
        lo, hi = g.resonance - g.half_width, g.resonance + g.half_width
        bg = _window_integral(x, bg_resp, lo, hi, height)
        ref = TransitionPath(g.q, None, None, 1.0, math.sqrt(ref_sq), -g.resonance)
        r = _window_integral(x, response(cfg, [ref], x), lo, hi, height)
        bgs.append(bg)
        per.append((r - bg) / ref_sq)
    return Calibration(groups, bgs, per, height, (cfg, bias) if method == "fit" else None)


def component_strengths(grid, resp, cal: Calibration) -> dict:
    """Estimated |c_q|^2 * amplitude^2 per q, where c_q is the spherical
    component of the driving field. Absent lines count as zero."""
    x = np.asarray(grid, float)
    y = np.asarray(resp, float)
    height = cal.height
    num = {-1: 0.0, 0: 0.0, 1: 0.0}
    den = {-1: 0.0, 0: 0.0, 1: 0.0}
    raw = {-1: 0.0, 0: 0.0, 1: 0.0}
    for g, bg, per in zip(cal.groups, cal.background, cal.per_rabi_sq):
        lo, hi = g.resonance - g.half_width, g.resonance + g.half_width
        if x[0] > lo or x[-1] < hi:
            raise InsufficientInformation(
                f"spectrum does not cover the line at {g.resonance / (2 * math.pi):.6g} Hz")
        a = _window_integral(x, y, lo, hi, height) - bg
        # least squares over groups of the same q: a_g = per_g * w_g * s_q
        c = per * g.weight
        num[g.q] += a * c
        den[g.q] += c * c
        raw[g.q] += a
    s = {q: (num[q] / den[q] if den[q] > 0 else 0.0) for q in num}
    out = {"strength": s, "area": raw}
    if cal.model is not None:
        fit = fit_strengths(x, y, *cal.model, seed=s)
        out["seed"] = s
        out["strength"] = fit["strength"]
        out["fit_residual"] = fit["residual"]
    return out


def fit_strengths(grid, resp, cfg: LadderConfig, bias: BiasField, seed: dict | None = None
                  ) -> dict:
    """|c_q|^2 * amplitude^2 by least squares of the line model against the spectrum.

    Unlike window areas this stays exact when the RF Rabi frequency is
    comparable to the Zeeman splitting. Several starting points are tried
    (the area estimate when given, plus pi/sigma heavy mixtures) and the
    lowest cost wins.
    """
    x = np.asarray(grid, float)
    y = np.asarray(resp, float)
    kappa = cfg.reduced_dipole / HBAR
    unit = SphericalDecomposition(1.0, {-1: 1.0, 0: 1.0, 1: 1.0}, cfg.transition_kind)
    paths = enumerate_paths(cfg, unit, bias, include_zero=True)
    qidx = np.array([p.q + 1 for p in paths])
    w3j = np.array([abs(float(p.three_j)) for p in paths])
    det = np.array([p.detuning for p in paths])

    def parts(r):
        sig = kernels.self_energy_scan(x, r[qidx] * w3j, det, cfg.gamma_rf)
        D = cfg.delta_c + 1j * cfg.gamma31 - sig
        den = cfg.delta_p + 1j * cfg.gamma21 - (cfg.omega_c / 2) ** 2 / D
        return -(cfg.omega_p / 2) / den, den, D

    base = parts(np.zeros(3))[0].imag
    scale = max(float(np.max(np.abs(y - base))), 1e-300)

    def res(r):
        return (parts(r)[0].imag - y) / scale

    def jac(r):
        # d rho/d Sigma times d Sigma/d r_q, with Sigma = sum r_q^2 w^2 / (det + x + i gamma)
        _, den, D = parts(r)
        drho = -(cfg.omega_p / 2) * (cfg.omega_c / 2) ** 2 / (den ** 2 * D ** 2)
        inv = 1.0 / (det[None, :] + x[:, None] + 1j * cfg.gamma_rf)
        J = np.zeros((len(x), 3))
        for q in range(3):
            m = qidx == q
            if m.any():
                ds = (2 * r[q] * w3j[m] ** 2 * inv[:, m]).sum(axis=1)
                J[:, q] = (drho * ds).imag / scale
        return J

    starts = []
    if seed is not None:
        starts.append(np.sqrt(np.clip([seed[-1], seed[0], seed[1]], 0.0, None)) * kappa)
    tot = max(float(np.linalg.norm(starts[0])) if starts else 0.0, cfg.gamma_rf)
    for share in (0.1, 0.5, 0.9):
        sg = math.sqrt((1 - share) / 2)
        starts.append(tot * np.array([sg, math.sqrt(share), sg]))
    best = None
    for r0 in starts:
        r0 = np.maximum(r0, 1e-6 * tot)
        sol = least_squares(res, r0, jac=jac, bounds=(0.0, np.inf), x_scale=np.full(3, tot),
                            xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=400)
        if best is None or sol.cost < best.cost:
            best = sol
    r = best.x / kappa
    return {"strength": {q: float(r[q + 1] ** 2) for q in (-1, 0, 1)},
            "residual": float(math.sqrt(2 * best.cost / len(y)))}


# ----------------------------------------------------------- theta_RF


@dataclass
class ThetaEstimate:
    principal: float  # rad, in [0, pi/2]
    selected: float  # rad
    candidates: tuple
    strengths: dict
    method: str
    evidence: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.selected


def _branches(t: float) -> tuple:
    return tuple(_wrap(c) for c in (t, -t, math.pi - t, math.pi + t))


def theta_from_strengths(s_pi: float, s_sigma: float, theta_bias: float = 0.0,
                         rel_tol: float = 1e-6) -> float:
    """Principal polarization angle from |alpha_0|^2 and |alpha_-1|^2 + |alpha_+1|^2.

    With a tilted bias these give the angle between E and the bias axis;
    for E in the y-z plane cos(that angle) = cos(theta) cos(theta_bias).
    """
    s_pi, s_sigma = max(s_pi, 0.0), max(s_sigma, 0.0)
    tot = s_pi + s_sigma
    if tot <= 0:
        raise InsufficientInformation("no pi or sigma lines: no E1 signal at all")
    if s_sigma <= rel_tol * tot:
        raise InsufficientInformation(
            "no sigma lines: theta_RF = 0 or 180 deg is a forbidden angle (QCRB diverges)")
    if s_pi <= rel_tol * tot:
        raise InsufficientInformation(
            "no pi lines: theta_RF = 90 deg is a forbidden angle (QCRB diverges)")
    phi = math.atan2(math.sqrt(s_sigma), math.sqrt(s_pi))
    cb = math.cos(theta_bias)
    if abs(cb) < 1e-12:
        raise InsufficientInformation("bias along x: pi weight does not depend on theta_RF")
    return math.acos(min(1.0, abs(math.cos(phi) / cb)))


def estimate_theta_rf(grid, resp, cfg: LadderConfig, bias: BiasField, method: str = "areas",
                      phase_signs: tuple | None = None, cal: Calibration | None = None
                      ) -> ThetaEstimate:
    """theta_RF from the ratio of total pi to total sigma strength.

    The area method cannot tell theta from -theta, 180 - theta or 180 + theta.
    ``phase_signs`` = (sign E_y, sign E_z) picks a branch; without it the
    principal value is returned and the ambiguity is left in ``candidates``.
    """
    if cfg.transition_kind != "E1":
        raise InvalidInput("theta_RF comes from the E1 ladder")
    if cal is None:
        cal = calibrate(cfg, bias, grid, method)
    st = component_strengths(grid, resp, cal)
    s = st["strength"]
    t = theta_from_strengths(s[0], s[-1] + s[1], bias.theta_bias)
    cands = _branches(t)
    ap, am = st["area"][1], st["area"][-1]
    asym = (ap - am) / (ap + am) if ap + am != 0 else 0.0
    ev = {"sigma_asymmetry": asym,
          "note": "linear polarization gives equal sigma+/sigma- strengths, "
                  "so the branch is not fixed by the spectrum"}
    sel = t
    if phase_signs is not None:
        sy, sz = phase_signs
        for c in cands:
            if (math.sin(c) >= 0) == (sy >= 0) and (math.cos(c) >= 0) == (sz >= 0):
                sel = c
                break
        ev["branch"] = "known relative phases"
    else:
        ev["branch"] = "principal value, unresolved"
    return ThetaEstimate(t, sel, cands, dict(s), method, ev)


# --------------------------------------------------------------- B_RF


@dataclass
class BSolution:
    vector: np.ndarray
    residual: float
    squared_components: np.ndarray


def solve_b_rf(plan: BiasScanPlan, measured) -> BSolution:
    """B_RF from |B_q| measured at each plan orientation.

    ``measured[i] = (|B_-1|, |B_0|, |B_+1|)`` in the spherical basis of
    orientation i. Squared components along the plan frame solve a linear
    least-squares system; signs come from ``plan.sign_factors``.
    """
    m = np.asarray(measured, float)
    if m.shape != (len(plan.orientations), 3):
        raise InvalidInput(f"expected {len(plan.orientations)} amplitude triples, got shape {m.shape}")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise InvalidInput("measured amplitudes must be finite and >= 0")
    A = plan.basis_matrix()
    y = np.concatenate([[r[1] ** 2, 2 * r[0] ** 2, 2 * r[2] ** 2] for r in m])
    if np.linalg.matrix_rank(A) < 3:
        raise DegeneratePlan("plan matrix is rank deficient")
    sq, *_ = np.linalg.lstsq(A, y, rcond=None)
    scale = float(np.linalg.norm(y))
    resid = float(np.linalg.norm(A @ sq - y)) / scale if scale > 0 else 0.0
    if resid > RESIDUAL_WARN:
        warnings.warn(f"B_RF least-squares residual {resid:.3g} exceeds {RESIDUAL_WARN}; "
                      "measurements are inconsistent or a sign assignment is wrong",
                      InconsistentMeasurements, stacklevel=2)
    sq = np.clip(sq, 0.0, None)
    # round-off in a vanishing squared component would otherwise come back as sqrt(eps)
    sq[sq < SQ_ZERO * sq.sum()] = 0.0
    sf = plan.sign_factors
    signs = [sf[0][1], sf[1][1], sf[2][1] if len(sf) == 3 else sf[0][2]]
    comps = np.array(signs, float) * np.sqrt(sq)
    return BSolution(plan.frame.T @ comps, resid, sq)


def forward_amplitudes(plan: BiasScanPlan, b_vec) -> np.ndarray:
    """|B_q| of a field in the spherical basis of each plan orientation."""
    b = np.asarray(b_vec, float)
    out = []
    for o in plan.orientations:
        c = basis_for_axis(np.array(o)).components(b)
        out.append([abs(c[-1]), abs(c[0]), abs(c[1])])
    return np.array(out)


# ---------------------------------------------------------------- DoA


@dataclass
class DoaEstimate:
    theta_rf_hat: float
    theta_b_hat: float
    b_rf_vector: np.ndarray
    k_hat: np.ndarray
    theta_doa: float
    e_vector: np.ndarray | None = None
    theta_rf_candidates: tuple = ()
    audit: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "theta_rf_deg": math.degrees(self.theta_rf_hat),
            "theta_b_deg": math.degrees(self.theta_b_hat),
            "theta_doa_deg": math.degrees(self.theta_doa),
            "b_rf_vector": [float(v) for v in self.b_rf_vector],
            "k_hat": [float(v) for v in self.k_hat],
            "theta_rf_candidates_deg": [math.degrees(c) for c in self.theta_rf_candidates],
        }
        if self.e_vector is not None:
            d["e_vector"] = [float(v) for v in self.e_vector]
        for k, v in self.audit.items():
            if isinstance(v, (int, float, str, bool)) or v is None:
                d[k] = v
        return d


def compose_doa(e_vec, b_vec, rel_tol: float = 1e-12) -> DoaEstimate:
    e = np.asarray(e_vec, float)
    b = np.asarray(b_vec, float)
    k = np.cross(e, b)
    nk = float(np.linalg.norm(k))
    if not nk > rel_tol * float(np.linalg.norm(e)) * float(np.linalg.norm(b)):
        raise DegenerateGeometry("E and B_RF are parallel (or zero); no propagation direction")
    k = k / nk
    return DoaEstimate(math.atan2(e[1], e[2]), math.atan2(b[1], b[2]), b, k,
                       math.atan2(k[1], k[0]), e_vector=e)


@dataclass
class Measurements:
    """Synthetic (or imported) spectra of one acquisition cycle."""
    e1: tuple  # (grid, response)
    m1: list  # one (grid, response) per plan orientation


def measurement_grid(cfg: LadderConfig, bias: BiasField, n_window: int = 801,
                     n_coarse: int = 2001) -> np.ndarray:
    """Scan grid with a dense patch over every integration window."""
    groups = line_groups(cfg, bias)
    edge = max(abs(g.resonance) + 1.05 * g.half_width for g in groups)
    parts = [np.linspace(-edge, edge, n_coarse)]
    for g in groups:
        parts.append(np.linspace(g.resonance - 1.01 * g.half_width,
                                 g.resonance + 1.01 * g.half_width, n_window))
    return np.unique(np.concatenate(parts))


def synthesize(scene: PlaneWave, bias: BiasField, cfgs: dict, plan: BiasScanPlan) -> Measurements:
    e1 = cfgs["E1"]
    m1 = cfgs["M1"]
    paths = enumerate_paths(e1, e_decomposition(scene, bias), bias)
    grid = measurement_grid(e1, bias)
    e1_data = (grid, response(e1, paths, grid))
    m1_data = []
    for o in plan.orientations:
        b = bias.along(o)
        paths = enumerate_paths(m1, b_decomposition(scene, b), b)
        g = measurement_grid(m1, b)
        m1_data.append((g, response(m1, paths, g)))
    return Measurements(e1_data, m1_data)


@dataclass
class _Calibrations:
    e1: Calibration
    m1: list


def _calibrations(meas: Measurements, cfgs: dict, bias: BiasField, plan: BiasScanPlan,
                  method: str) -> _Calibrations:
    e1 = calibrate(cfgs["E1"], bias, meas.e1[0], method)
    m1 = [calibrate(cfgs["M1"], bias.along(o), g, method)
          for o, (g, _) in zip(plan.orientations, meas.m1)]
    return _Calibrations(e1, m1)


def reconstruct(meas: Measurements, cfgs: dict, bias: BiasField, plan: BiasScanPlan,
                e_phase_signs: tuple | None = None, method: str = "fit",
                cal: _Calibrations | None = None) -> DoaEstimate:
    if cal is None:
        cal = _calibrations(meas, cfgs, bias, plan, method)
    th = estimate_theta_rf(*meas.e1, cfgs["E1"], bias, method, e_phase_signs, cal.e1)
    amps = []
    for (g, r), c in zip(meas.m1, cal.m1):
        s = component_strengths(g, r, c)["strength"]
        amps.append([math.sqrt(max(s[q], 0.0)) for q in (-1, 0, 1)])
    sol = solve_b_rf(plan, amps)
    e = in_plane_vector(th.selected)
    est = compose_doa(e, sol.vector)
    est.theta_rf_hat = th.selected
    est.theta_rf_candidates = th.candidates
    est.audit = {"b_residual": sol.residual, "branch": th.evidence["branch"],
                 "sigma_asymmetry": th.evidence["sigma_asymmetry"], "method": method,
                 "theta_rf_principal_deg": math.degrees(th.principal)}
    return est


def full_cycle(scene: PlaneWave, bias: BiasField, cfgs: dict, plan: BiasScanPlan | None = None,
               known_phases: bool = True, method: str = "fit", noise_std: float = 0.0,
               rng=None) -> DoaEstimate:
    """E1 spectrum, then M1 spectra at each plan orientation, then k = E x B.

    With ``known_phases`` the E branch and the B sign factors are taken
    from the scene; otherwise the plan's sign factors and the principal
    theta_RF branch are used as they are.
    """
    plan = plan or BiasScanPlan()
    if known_phases:
        plan = plan.with_signs_from(scene.b_vector)
    meas = synthesize(scene, bias, cfgs, plan)
    if noise_std > 0:
        rng = np.random.default_rng(rng)
        meas = add_noise(meas, noise_std, rng)
    signs = _e_signs(scene) if known_phases else None
    est = reconstruct(meas, cfgs, bias, plan, signs, method)
    est.audit["measurements"] = meas
    return est


def _e_signs(scene: PlaneWave) -> tuple:
    e = scene.e_hat
    return (1 if e[1] >= 0 else -1, 1 if e[2] >= 0 else -1)


def add_noise(meas: Measurements, std: float, rng) -> Measurements:
    e1 = (meas.e1[0], meas.e1[1] + rng.normal(0.0, std, len(meas.e1[1])))
    m1 = [(g, r + rng.normal(0.0, std, len(r))) for g, r in meas.m1]
    return Measurements(e1, m1)


# ------------------------------------------------------------ Monte Carlo


@dataclass
class MonteCarloResult:
    theta_rf: np.ndarray  # deviations from truth, rad
    theta_b: np.ndarray
    theta_doa: np.ndarray
    failures: int
    seed: int

    def variance(self, name: str) -> float:
        v = getattr(self, name)
        return float(np.var(v, ddof=1)) if len(v) > 1 else math.nan


def _mc_chunk(args):
    meas, cfgs, bias, plan, signs, method, std, seed, n, truth = args
    rng = np.random.default_rng(seed)
    cal = _calibrations(meas, cfgs, bias, plan, method)
    out, fails = [], 0
    for _ in range(n):
        noisy = add_noise(meas, std, rng)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", InconsistentMeasurements)
                est = reconstruct(noisy, cfgs, bias, plan, signs, method, cal)
        except (InsufficientInformation, DegenerateGeometry):
            fails += 1
            continue
        out.append([_wrap(est.theta_rf_hat - truth[0]), _wrap(est.theta_b_hat - truth[1]),
                    _wrap(est.theta_doa - truth[2])])
    return out, fails


def monte_carlo(scene: PlaneWave, bias: BiasField, cfgs: dict, plan: BiasScanPlan | None = None,
                noise_std: float = 1e-6, trials: int = 500, seed: int = 0, jobs: int = 1,
                method: str = "fit") -> MonteCarloResult:
    """Repeat the reconstruction under Gaussian response noise.

    Trials are split into fixed chunks with their own child seeds, so the
    result does not depend on ``jobs``.
    """
    plan = (plan or BiasScanPlan()).with_signs_from(scene.b_vector)
    meas = synthesize(scene, bias, cfgs, plan)
    truth = (scene.theta_rf, scene.theta_b,
             math.atan2(*np.cross(scene.e_hat, scene.b_hat)[[1, 0]]))
    chunk = 50
    sizes = [min(chunk, trials - i) for i in range(0, trials, chunk)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(meas, cfgs, bias, plan, _e_signs(scene), method, noise_std, s, n, truth)
            for s, n in zip(seeds, sizes)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_mc_chunk, args))
    else:
        parts = [_mc_chunk(a) for a in args]
    rows = [r for p in parts for r in p[0]]
    fails = sum(p[1] for p in parts)
    arr = np.array(rows).reshape(-1, 3)
    return MonteCarloResult(arr[:, 0], arr[:, 1], arr[:, 2], fails, seed)


# ------------------------------------------------------------- CSV import


def read_spectrum_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(scan grid in rad/s, response) from a spectrum CSV (``#`` lines skipped)."""
    xs, ys = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header is None or header[:2] != ["delta_c_hz", "im_rho21"]:
            raise InvalidInput(f"{path}: expected header delta_c_hz,im_rho21, got {header}")
        for r in rows:
            if not r:
                continue
            xs.append(2 * math.pi * float(r[0]))
            ys.append(float(r[1]))
    x = np.array(xs)
    if len(x) < 2 or np.any(np.diff(x) <= 0):
        raise InvalidInput(f"{path}: scan column must be strictly increasing")
    return x, np.array(ys)
