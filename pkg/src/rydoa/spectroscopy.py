"""Zeeman-resolved ladder: transition paths, self-energy, EIT response, steady state.

Level ordering of the full model: ground, intermediate, lower Rydberg
sublevels (ascending m), upper Rydberg sublevels (ascending m).

The spectrum scan variable shifts every RF path detuning by the same
amount while the optical fields stay on their configured detunings, so a
path q comes into resonance at scan = -Delta^(q). This is equivalent to
scanning the RF frequency across the Zeeman-split lines.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import find_peaks

from . import kernels
from .angular import HalfInt, projections, wigner_3j
from .constants import MHZ
from .errors import DegenerateSteadyState, InvalidInput
from .fields import BiasField, SphericalDecomposition, zeeman_shift

COMPONENT_TOL = 1e-12
J_LEVELS = {"E1": (HalfInt(1), HalfInt(1)), "M1": (HalfInt(1), HalfInt(3))}


@dataclass(frozen=True)
class LadderConfig:
    omega_p: float
    omega_c: float
    gamma2: float
    gamma3: float
    gamma4: float
    gamma_rf: float
    omega0: float
    reduced_dipole: float
    g_lower: float
    g_upper: float
    transition_kind: str = "E1"
    delta_p: float = 0.0
    delta_c: float = 0.0
    delta_rf: float = 0.0
    delta_tilde: float = 0.0
    tilde_sign: int = 1
    gamma21: float | None = None
    gamma31: float | None = None

    def __post_init__(self):
        if self.transition_kind not in J_LEVELS:
            raise InvalidInput(f"unknown transition kind {self.transition_kind!r}")
        for name in ("gamma2", "gamma3", "gamma4", "gamma_rf"):
            if not getattr(self, name) > 0:
                raise InvalidInput(f"{name} must be strictly positive")
        if self.omega_p < 0 or self.omega_c < 0:
            raise InvalidInput("Rabi frequencies must be nonnegative")
        if self.tilde_sign not in (1, -1):
            raise InvalidInput("tilde_sign must be +1 or -1")
        if self.gamma21 is None:
            object.__setattr__(self, "gamma21", self.gamma2 / 2)
        if self.gamma31 is None:
            object.__setattr__(self, "gamma31", self.gamma3 / 2)

    @property
    def j_lower(self) -> HalfInt:
        return J_LEVELS[self.transition_kind][0]

    @property
    def j_upper(self) -> HalfInt:
        return J_LEVELS[self.transition_kind][1]

    @property
    def rf_offset(self) -> float:
        """omega_RF - omega_0."""
        return self.delta_rf + self.tilde_sign * self.delta_tilde

    def with_(self, **kw) -> "LadderConfig":
        # derived coherence rates follow the lifetimes unless given explicitly
        if "gamma2" in kw and "gamma21" not in kw:
            kw["gamma21"] = None
        if "gamma3" in kw and "gamma31" not in kw:
            kw["gamma31"] = None
        return replace(self, **kw)


@dataclass(frozen=True)
class TransitionPath:
    q: int
    m_lower: HalfInt
    m_upper: HalfInt
    three_j: float
    rabi: float
    detuning: float

    @property
    def label(self) -> str:
        pol = {0: "pi", 1: "sigma+", -1: "sigma-"}[self.q]
        return f"{pol}({self.m_lower!r}->{self.m_upper!r})"

    @property
    def resonance(self) -> float:
        """Scan value at which this path is resonant."""
        return -self.detuning


def enumerate_paths(cfg: LadderConfig, decomp: SphericalDecomposition, bias: BiasField,
                    include_zero: bool = False) -> list[TransitionPath]:
    """Allowed Zeeman paths with their Rabi frequencies and detunings.

    Paths with a vanishing 3-j symbol are always dropped; paths whose field
    component vanishes (below 1e-12 of the unit decomposition) are dropped
    unless ``include_zero``.
    """
    if decomp.kind != cfg.transition_kind:
        raise InvalidInput(f"{decomp.kind} decomposition for a {cfg.transition_kind} ladder")
    from .constants import HBAR

    ju, jl = cfg.j_upper, cfg.j_lower
    out = []
    for ml in projections(jl):
        for mu in projections(ju):
            q2 = mu.twice - ml.twice
            if abs(q2) > 2:
                continue
            q = q2 // 2
            w = wigner_3j(ju, 1, jl, -mu, q, ml)
            if w == 0.0:
                continue
            coeff = decomp[q]
            if abs(coeff) < COMPONENT_TOL:
                coeff = 0.0  # cos(pi/2) and friends
            rabi = decomp.amplitude / HBAR * abs(coeff * w * cfg.reduced_dipole)
            if rabi == 0.0 and not include_zero:
                continue
            dz = zeeman_shift(bias, cfg.g_upper, mu, cfg.g_lower, ml)
            out.append(TransitionPath(q, ml, mu, w, rabi, cfg.rf_offset - dz))
    return out


def self_energy(paths, gamma_rf: float, scan=0.0):
    """Sum of Omega^2 / (Delta^(q) + scan + i gamma_rf) over the paths.

    Returns a complex scalar for scalar ``scan`` and an array otherwise.
    """
    if not gamma_rf > 0:
        raise InvalidInput("gamma_rf must be positive")
    rabi = np.array([p.rabi for p in paths], float)
    det = np.array([p.detuning for p in paths], float)
    s = np.atleast_1d(np.asarray(scan, float))
    sig = kernels.self_energy_scan(s, rabi, det, gamma_rf)
    return complex(sig[0]) if np.ndim(scan) == 0 else sig


def rho21_analytic(cfg: LadderConfig, sigma, delta_c=None):
    """Probe coherence of the weak-probe ladder with the RF self-energy folded in.

    The sign is chosen so that Im(rho21) is the absorption and is positive
    for a passive medium.
    """
    dc = cfg.delta_c if delta_c is None else delta_c
    inner = (cfg.omega_c / 2) ** 2 / (dc + 1j * cfg.gamma31 - sigma)
    return -(cfg.omega_p / 2) / (cfg.delta_p + 1j * cfg.gamma21 - inner)


# ---------------------------------------------------------------- spectra


@dataclass(frozen=True)
class Peak:
    center: float
    area: float
    height: float
    width: float
    path: TransitionPath | None
    resolved: bool = True


@dataclass
class EitSpectrum:
    detuning_grid: np.ndarray
    response: np.ndarray
    peaks: list
    paths: list
    warnings: list = field(default_factory=list)

    def area_by_q(self) -> dict[int, float]:
        tot = {-1: 0.0, 0: 0.0, 1: 0.0}
        for p in self.peaks:
            if p.path is not None:
                tot[p.path.q] += p.area
        return tot


def _linewidth(path: TransitionPath, cfg: LadderConfig) -> float:
    # saturated lines broaden to about Omega^2 / gamma31
    return max(cfg.gamma_rf, path.rabi ** 2 / cfg.gamma31)


def default_grid(cfg: LadderConfig, paths, span: float = 2 * math.pi * 30e6,
                 n: int = 2001, refine: int = 601) -> tuple[np.ndarray, list]:
    """Uniform grid over +-span, widened to cover every resonance, plus fine
    patches around each predicted line."""
    notes = []
    res = [p.resonance for p in paths]
    if res:
        need = max(abs(r) + 10 * _linewidth(p, cfg) for r, p in zip(res, paths))
        if need > span:
            notes.append(f"grid span widened from {span / MHZ:.3g} to {need / MHZ:.3g} MHz "
                         "to cover all Zeeman-shifted resonances")
            span = need
    parts = [np.linspace(-span, span, n)]
    for r, p in zip(res, paths):
        w = _linewidth(p, cfg)
        parts.append(r + np.linspace(-20 * w, 20 * w, refine))
    grid = np.unique(np.concatenate(parts))
    return grid, notes


def response(cfg: LadderConfig, paths, grid) -> np.ndarray:
    sig = self_energy(paths, cfg.gamma_rf, np.asarray(grid, float)) if paths else 0.0
    return np.asarray(rho21_analytic(cfg, sig).imag, float) * np.ones(len(grid))


AREA_WINDOW = 10.0  # half-window for peak areas, in measured FWHM


def _peak_stats(grid, resp, lo, i, hi):
    x = grid[lo:hi + 1]
    y = resp[lo:hi + 1]
    base = y[0] + (y[-1] - y[0]) * (x - x[0]) / (x[-1] - x[0])
    yy = y - base
    h = float(resp[i] - base[i - lo])
    above = x[yy >= h / 2]
    width = float(above[-1] - above[0]) if len(above) > 1 else 0.0
    return h, width, float(np.trapezoid(yy, x))


def locate_peaks(grid, resp, paths, cfg: LadderConfig | None = None,
                 rel_prominence: float = 1e-6) -> tuple[list, list]:
    """Local maxima with areas between neighbouring minima, baseline removed."""
    notes = []
    span = float(resp.max() - resp.min())
    if span <= 0:
        return [], ["flat response, no peaks"]
    idx, _ = find_peaks(resp, prominence=rel_prominence * span)
    minima, _ = find_peaks(-resp)
    bounds = np.concatenate([[0], minima, [len(resp) - 1]])
    peaks = []
    for i in idx:
        lo = bounds[bounds < i].max()
        hi = bounds[bounds > i].min()
        h, width, area = _peak_stats(grid, resp, lo, i, hi)
        if width > 0:
            # narrow lines on a broad background: redo it over a local window
            lo2 = max(lo, int(np.searchsorted(grid, grid[i] - AREA_WINDOW * width)))
            hi2 = min(hi, int(np.searchsorted(grid, grid[i] + AREA_WINDOW * width)))
            if lo2 < i < hi2:
                h, width, area = _peak_stats(grid, resp, lo2, i, hi2)
        near = min(paths, key=lambda p: abs(p.resonance - grid[i])) if paths else None
        peaks.append(Peak(float(grid[i]), area, h, width, near))
    # paths sharing a peak, or peaks sharing a path, are unresolved
    counts = {}
    for p in peaks:
        if p.path is not None:
            counts[id(p.path)] = counts.get(id(p.path), 0) + 1
    out = []
    for p in peaks:
        shared = p.path is not None and counts[id(p.path)] > 1
        crowd = p.path is not None and sum(
            1 for o in paths
            if o is not p.path and abs(o.resonance - p.path.resonance) < max(p.width, 1e-30) / 2
        ) > 0
        if shared or crowd:
            out.append(replace(p, resolved=False))
            notes.append(f"peak at {p.center / MHZ:.4g} MHz is not resolved from its neighbours")
        else:
            out.append(p)
    return out, notes


def sweep_spectrum(cfg: LadderConfig, decomp: SphericalDecomposition, bias: BiasField,
                   grid=None) -> EitSpectrum:
    paths = enumerate_paths(cfg, decomp, bias)
    notes = []
    if grid is None:
        grid, notes = default_grid(cfg, paths)
    else:
        grid = np.asarray(grid, float)
        if np.any(np.diff(grid) <= 0):
            raise InvalidInput("detuning grid must be strictly increasing")
        outside = [p for p in paths if not grid[0] <= p.resonance <= grid[-1]]
        if outside:
            notes.append(f"{len(outside)} resonance(s) fall outside the detuning grid")
    resp = response(cfg, paths, grid)
    peaks, pnotes = locate_peaks(grid, resp, paths, cfg)
    notes += pnotes
    for n in notes:
        warnings.warn(n, stacklevel=2)
    return EitSpectrum(grid, resp, peaks, paths, notes)


# ------------------------------------------------------------ full model


@dataclass(frozen=True)
class LevelScheme:
    dim: int
    lower: list  # HalfInt per lower Rydberg sublevel
    upper: list

    def lower_index(self, m: HalfInt) -> int:
        return 2 + self.lower.index(m)

    def upper_index(self, m: HalfInt) -> int:
        return 2 + len(self.lower) + self.upper.index(m)


def level_scheme(cfg: LadderConfig) -> LevelScheme:
    lo = projections(cfg.j_lower)
    up = projections(cfg.j_upper)
    return LevelScheme(2 + len(lo) + len(up), lo, up)


def build_model(cfg: LadderConfig, decomp: SphericalDecomposition, bias: BiasField,
                scan: float = 0.0):
    """RWA Hamiltonian and collapse operators (hbar = 1, rad/s)."""
    ls = level_scheme(cfg)
    d = ls.dim
    H = np.zeros((d, d), complex)
    zl = bias.larmor * bias.zeeman_projection
    H[1, 1] = -cfg.delta_p
    for m in ls.lower:
        i = ls.lower_index(m)
        H[i, i] = -(cfg.delta_p + cfg.delta_c) + cfg.g_lower * m.value * zl
    for m in ls.upper:
        i = ls.upper_index(m)
        H[i, i] = -(cfg.delta_p + cfg.delta_c + cfg.rf_offset + scan) + cfg.g_upper * m.value * zl
    H[0, 1] = H[1, 0] = -cfg.omega_p / 2
    oc = cfg.omega_c / (2 * math.sqrt(len(ls.lower)))
    for m in ls.lower:
        i = ls.lower_index(m)
        H[1, i] = H[i, 1] = -oc
    for p in enumerate_paths(cfg, decomp, bias, include_zero=True):
        i, j = ls.lower_index(p.m_lower), ls.upper_index(p.m_upper)
        H[i, j] = H[j, i] = -p.rabi

    c_ops = []

    def jump(a, b, rate):
        C = np.zeros((d, d), complex)
        C[a, b] = math.sqrt(rate)
        c_ops.append(C)

    jump(0, 1, cfg.gamma2)
    for m in ls.lower:
        jump(1, ls.lower_index(m), cfg.gamma3)
    for mu in ls.upper:
        w = {}
        for ml in ls.lower:
            q2 = mu.twice - ml.twice
            if abs(q2) <= 2:
                w[ml] = wigner_3j(cfg.j_upper, 1, cfg.j_lower, -mu, q2 // 2, ml) ** 2
        tot = sum(w.values())
        for ml, v in w.items():
            if v > 0:
                jump(ls.lower_index(ml), ls.upper_index(mu), cfg.gamma4 * v / tot)
    # pure dephasing of the upper manifold at gamma_rf on its coherences
    P = np.zeros((d, d), complex)
    for mu in ls.upper:
        P[ls.upper_index(mu), ls.upper_index(mu)] = 1.0
    c_ops.append(math.sqrt(2 * cfg.gamma_rf) * P)
    return H, c_ops


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray
    residual: float = 0.0

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def rho21(self) -> complex:
        return complex(self.entries[1, 0])


def solve_steady_state(L: np.ndarray, d: int, check_unique: bool = False,
                       rtol: float = 1e-10) -> DensityMatrix:
    """Null vector of L with unit trace, least squares first then SVD."""
    n = d * d
    tr = np.zeros(n, complex)
    tr[:: d + 1] = 1.0
    scale = float(np.linalg.norm(L))
    A = np.vstack([L, scale * tr[None, :]])
    b = np.zeros(n + 1, complex)
    b[-1] = scale
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    res = float(np.linalg.norm(L @ x)) / scale
    if check_unique or not res < rtol:
        _, s, vh = np.linalg.svd(L)
        kernel = int(np.sum(s < 1e-12 * s[0]))
        if kernel > 1:
            raise DegenerateSteadyState(f"Liouvillian kernel has dimension {kernel}",
                                        kernel_dim=kernel, singular_values=s[-4:])
        if not res < rtol:
            x = vh[-1].conj()
            x = x / (tr @ x)
            res = float(np.linalg.norm(L @ x)) / scale
    rho = x.reshape(d, d, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    res = float(np.linalg.norm(L @ rho.reshape(-1, order="F"))) / scale
    return DensityMatrix(rho, res)


def steady_state(cfg: LadderConfig, decomp: SphericalDecomposition, bias: BiasField,
                 scan: float = 0.0, check_unique: bool = False) -> DensityMatrix:
    H, c_ops = build_model(cfg, decomp, bias, scan)
    L = kernels.liouvillian(H, c_ops)
    return solve_steady_state(L, H.shape[0], check_unique=check_unique)


def full_response(cfg: LadderConfig, decomp: SphericalDecomposition, bias: BiasField,
                  grid) -> np.ndarray:
    """Im of the probe coherence from the full steady state at each scan value."""
    return np.array([steady_state(cfg, decomp, bias, s).rho21.imag for s in grid])


# ------------------------------------------------------------------ export


def spectrum_csv_rows(spec: EitSpectrum):
    yield ("delta_c_hz", "im_rho21")
    for x, y in zip(spec.detuning_grid, spec.response):
        yield (repr(float(x / (2 * math.pi))), repr(float(y)))


def peak_sidecar(spec: EitSpectrum) -> list[dict]:
    out = []
    for p in spec.peaks:
        out.append({
            "center_hz": p.center / (2 * math.pi),
            "area": p.area,
            "q": None if p.path is None else p.path.q,
            "m_lower": None if p.path is None else repr(p.path.m_lower),
            "m_upper": None if p.path is None else repr(p.path.m_upper),
            "resolved": p.resolved,
        })
    return out
