"""Quantum and classical precision bounds for the angle pair and the DoA."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DerivativeUnstable, InvalidInput
from .fields import BiasField, PlaneWave, b_decomposition, e_decomposition
from .spectroscopy import LadderConfig, steady_state

DIVERGENCE = 1e-12
PINV_CUTOFF = 1e-10
KERNEL_TOL = 1e-10
DERIV_ATOL = 1e-6


# ------------------------------------------------------------ QFIM


def _check_drho(drho, tol=1e-8):
    drho = np.asarray(drho, complex)
    scale = max(1.0, float(np.linalg.norm(drho)))
    if np.linalg.norm(drho - drho.conj().T) > tol * scale:
        raise InvalidInput("derivative of rho must be Hermitian")
    return drho


def qfim_exact(rho, drho, return_info: bool = False):
    """2 vec(A)^H [rho* (x) I + I (x) rho]^+ vec(A), evaluated in the eigenbasis of rho.

    The sandwich operator has eigenvalues lambda_i + lambda_j; pairs below
    1e-10 of the largest are treated as kernel and dropped. The dropped
    weight is returned in the info dict and flagged when it is not tiny.
    """
    rho = np.asarray(getattr(rho, "entries", rho), complex)
    A = _check_drho(drho)
    lam, U = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    Ap = U.conj().T @ A @ U
    s = lam[:, None] + lam[None, :]
    keep = s > PINV_CUTOFF * 2 * lam.max()
    w = np.abs(Ap) ** 2
    F = 2.0 * float(np.sum(w[keep] / s[keep]))
    dropped = float(np.sum(w[~keep]))
    total = float(np.sum(w))
    info = {"kernel_weight": dropped,
            "kernel_flag": total > 0 and dropped > KERNEL_TOL * total}
    return (F, info) if return_info else F


def qfim_kron(rho, drho) -> float:
    """Same quantity built literally from the Kronecker sandwich and a pseudo-inverse."""
    rho = np.asarray(getattr(rho, "entries", rho), complex)
    A = _check_drho(drho)
    d = rho.shape[0]
    I = np.eye(d)
    S = np.kron(rho.conj(), I) + np.kron(I, rho)
    lam, V = np.linalg.eigh(0.5 * (S + S.conj().T))
    keep = lam > PINV_CUTOFF * lam.max()
    v = A.reshape(-1, order="F")
    c = V.conj().T @ v
    return 2.0 * float(np.sum(np.abs(c[keep]) ** 2 / lam[keep]))


def qfim_snr_approx(a_norm_sq, sigma_total_sq: float) -> np.ndarray:
    """4 sigma^2 diag(SNR) with SNR_i = ||A_i||_F^2 / sigma^2."""
    if not sigma_total_sq > 0:
        raise InvalidInput("sigma_total_sq must be positive")
    a = np.atleast_1d(np.asarray(a_norm_sq, float))
    snr = a / sigma_total_sq
    return np.diag(4.0 * sigma_total_sq * snr)


# ---------------------------------------------------- derivatives


@dataclass(frozen=True)
class Derivative:
    value: np.ndarray
    consistency: float  # relative gap between the h and h/2 Richardson estimates


def richardson(f, x: float, h: float = 1e-4, tol: float = 1e-2) -> Derivative:
    """Central difference with one Richardson level, plus a self-consistency figure.

    Two extrapolated estimates (from h, h/2 and h/2, h/4) are compared;
    their gap relative to the derivative size (floored at 1e-8) is the
    consistency figure. Gaps above ``tol`` raise DerivativeUnstable.
    """
    if not 1e-6 < h < 1e-2:
        raise InvalidInput("step must lie in (1e-6, 1e-2)")
    fp = {k: np.asarray(f(x + k * h / 4)) for k in (-4, -2, -1, 1, 2, 4)}
    d1 = (fp[4] - fp[-4]) / (2 * h)
    d2 = (fp[2] - fp[-2]) / h
    d4 = (fp[1] - fp[-1]) * 2 / h
    r1 = (4 * d2 - d1) / 3
    r2 = (4 * d4 - d2) / 3
    scale = max(float(np.linalg.norm(r2)), DERIV_ATOL)
    gap = float(np.linalg.norm(r1 - r2)) / scale
    if gap > tol:
        raise DerivativeUnstable(f"Richardson estimates disagree (gap {gap:.3g})", r1, r2)
    return Derivative(r2, gap)


def _state_fn(scene: PlaneWave, bias: BiasField, cfg: LadderConfig, which: str):
    if which == "theta_rf":
        def f(t):
            w = PlaneWave(scene.e_amplitude, t, scene.frequency, scene.theta_b, scene.b_amplitude)
            return steady_state(cfg, e_decomposition(w, bias), bias).entries
        return f, scene.theta_rf
    if which == "theta_b":
        def f(t):
            w = PlaneWave(scene.e_amplitude, scene.theta_rf, scene.frequency, t, scene.b_amplitude)
            return steady_state(cfg, b_decomposition(w, bias), bias).entries
        return f, scene.theta_b
    if which == "theta_bias":
        def f(t):
            b = BiasField(bias.magnitude, t)
            return steady_state(cfg, e_decomposition(scene, b), b).entries
        return f, bias.theta_bias
    raise InvalidInput(f"unknown parameter {which!r}")


def drho_numeric(scene: PlaneWave, bias: BiasField, cfg: LadderConfig, which: str,
                 step: float = 1e-4, with_consistency: bool = False):
    """d rho / d theta of the steady state, Hermitian and traceless."""
    f, x0 = _state_fn(scene, bias, cfg, which)
    d = richardson(f, x0, step)
    A = 0.5 * (d.value + d.value.conj().T)
    A = A - np.trace(A).real / A.shape[0] * np.eye(A.shape[0])
    return (A, d.consistency) if with_consistency else A


# ------------------------------------------------------------ QCRB


@dataclass
class FisherResult:
    qfim: np.ndarray
    qcrb: np.ndarray
    nu: int
    diverged: tuple
    theta_doa_var: float
    resolution_deg: tuple
    a_norm_sq: tuple = (0.0, 0.0)
    consistency: tuple = (0.0, 0.0)
    single_atom_qfim: tuple = (0.0, 0.0)
    extra: dict = field(default_factory=dict)


def _fisher_from_diag(f1, nu, n_atoms, scene, a_sq=(0.0, 0.0), cons=(0.0, 0.0)):
    F = np.diag([n_atoms * f1[0], n_atoms * f1[1]])
    div = tuple(bool(v < DIVERGENCE) for v in f1)
    crb = np.zeros((2, 2))
    for i in range(2):
        crb[i, i] = math.inf if div[i] else 1.0 / (nu * F[i, i])
    res = tuple(math.degrees(math.sqrt(crb[i, i])) if math.isfinite(crb[i, i]) else math.inf
                for i in range(2))
    fr = FisherResult(F, crb, nu, div, math.inf, res, a_sq, cons, tuple(f1))
    fr.theta_doa_var = doa_variance(fr, scene.theta_rf, scene.theta_b)
    return fr


def qcrb(scene: PlaneWave, bias: BiasField, cfgs: dict, nu: int = 1, n_atoms: float = 1.0,
         step: float = 1e-4, which: tuple = ("theta_rf", "theta_b")) -> FisherResult:
    """Direct-sum QFIM over (theta_RF from E1, theta_B from M1) and its bound.

    The single-atom QFIM is scaled by ``n_atoms`` (independent atoms) and
    the bound divided by the repetition count ``nu``. Entries whose
    single-atom information falls below 1e-12 are reported as diverged (inf).
    """
    if nu < 1:
        raise InvalidInput("nu must be at least 1")
    f1, a_sq, cons = [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]
    for i, (name, kind) in enumerate((("theta_rf", "E1"), ("theta_b", "M1"))):
        if name not in which:
            continue
        cfg = cfgs[kind]
        f, x0 = _state_fn(scene, bias, cfg, name)
        rho = f(x0)
        A, c = drho_numeric(scene, bias, cfg, name, step, with_consistency=True)
        f1[i] = qfim_exact(rho, A)
        a_sq[i] = float(np.linalg.norm(A) ** 2)
        cons[i] = c
    return _fisher_from_diag(f1, nu, n_atoms, scene, tuple(a_sq), tuple(cons))


# ------------------------------------------------------------- DoA


def _rotate(v, axis, angle):
    axis = axis / np.linalg.norm(axis)
    return (v * math.cos(angle) + np.cross(axis, v) * math.sin(angle)
            + axis * (axis @ v) * (1 - math.cos(angle)))


def doa_angle(e_vec, b_vec) -> float:
    k = np.cross(e_vec, b_vec)
    return math.atan2(k[1], k[0])


def doa_jacobian(theta_rf: float, theta_b: float, h: float = 1e-6) -> np.ndarray:
    """d theta_DoA / d(theta_RF, theta_B) by central differences.

    An error in theta_RF turns E about B; an error in theta_B turns B about
    E. Both keep E orthogonal to B, so each moves the propagation direction.
    """
    from .fields import in_plane_vector

    E = in_plane_vector(theta_rf)
    B = in_plane_vector(theta_b)

    def unwrap(a, ref):
        return (a - ref + math.pi) % (2 * math.pi) - math.pi

    ref = doa_angle(E, B)
    j1 = (unwrap(doa_angle(_rotate(E, B, h), B), ref)
          - unwrap(doa_angle(_rotate(E, B, -h), B), ref)) / (2 * h)
    j2 = (unwrap(doa_angle(E, _rotate(B, E, h)), ref)
          - unwrap(doa_angle(E, _rotate(B, E, -h)), ref)) / (2 * h)
    return np.array([j1, j2])


def doa_variance(fisher: FisherResult, theta_rf: float, theta_b: float,
                 jacobian=None) -> float:
    """J F^-1 J^T with F the per-repetition Fisher matrix (diverged -> inf)."""
    J = doa_jacobian(theta_rf, theta_b) if jacobian is None else np.asarray(jacobian, float)
    var = 0.0
    for i in range(2):
        if J[i] == 0.0:
            continue
        c = fisher.qcrb[i, i]
        if not math.isfinite(c):
            return math.inf
        var += J[i] ** 2 * c
    return var


# ---------------------------------------------------- array baselines


@dataclass(frozen=True)
class ArrayModel:
    n_elements: int
    wavelength: float = 1.0
    spacing: float | None = None
    kind: str = "ULA"

    def __post_init__(self):
        if self.n_elements < 2:
            raise InvalidInput("arrays need at least two elements")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2)
        if not self.spacing > 0:
            raise InvalidInput("spacing must be positive")

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength


def sum_n_sq(n: int) -> int:
    return n * (n - 1) * (2 * n - 1) // 6


def crb_ula(model: ArrayModel, snr: float, theta: float) -> float:
    if not snr > 0:
        raise InvalidInput("SNR must be positive")
    c2 = math.cos(theta) ** 2
    if c2 < 1e-24:
        return math.inf
    kd = model.wavenumber * model.spacing
    return 1.0 / (2 * snr * kd ** 2 * c2 * sum_n_sq(model.n_elements))


def vsa_steering(model: ArrayModel, theta: float):
    """Tri-axial electric triplets on a line along y; wave in the x-y plane.

    The polarization is horizontal (in the propagation plane), so the
    triplet sees E rotate with the arrival angle. Returns a(theta) and
    da/dtheta, each of length 3N.
    """
    n = np.arange(model.n_elements)
    kd = model.wavenumber * model.spacing
    s = np.exp(1j * kd * n * math.sin(theta))
    ds = 1j * kd * n * math.cos(theta) * s
    p = np.array([-math.sin(theta), math.cos(theta), 0.0])
    dp = np.array([-math.cos(theta), -math.sin(theta), 0.0])
    return np.kron(s, p), np.kron(ds, p) + np.kron(s, dp)


def crb_vsa(model: ArrayModel, snr: float, theta: float, steering=None,
            steering_deriv=None) -> float:
    """[2 SNR Re{da^H Xi da}]^-1 with Xi the projector orthogonal to a."""
    if not snr > 0:
        raise InvalidInput("SNR must be positive")
    if steering is None:
        a, da = vsa_steering(model, theta)
    else:
        a = np.asarray(steering, complex)
        da = np.asarray(steering_deriv, complex)
    na = float(np.vdot(a, a).real)
    if na <= 0:
        raise InvalidInput("steering vector must be nonzero")
    Xi = np.eye(len(a)) - np.outer(a, a.conj()) / na
    val = float(np.real(da.conj() @ Xi @ da))
    if val <= 1e-14 * float(np.vdot(da, da).real + 1e-300):
        return math.inf
    return 1.0 / (2 * snr * val)


# --------------------------------------------- SNR-limited receiver model


@dataclass(frozen=True)
class ReceiverNoise:
    """SNR-to-information conversion of the atomic readout.

    ``sigma_total_sq`` scales the SNR-limited information 4 sigma^2 SNR;
    ``floor_gain`` multiplies the quantum information that caps it.
    """
    name: str
    sigma_total_sq: float
    floor_gain: float = 1.0


def rydberg_fisher_vs_snr(snr, quantum_fisher: float, noise: ReceiverNoise):
    """Information at a given SNR, capped by the projection-noise limit.

    The two contributions add as independent error sources:
    1/F = 1/(4 sigma^2 SNR) + 1/(g F_q).
    """
    snr = np.asarray(snr, float)
    f_snr = 4.0 * noise.sigma_total_sq * snr
    f_q = noise.floor_gain * quantum_fisher
    if f_q <= 0:
        return np.zeros_like(snr)
    return 1.0 / (1.0 / f_snr + 1.0 / f_q)
