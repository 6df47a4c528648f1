import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydoa.config import load_preset
from rydoa.errors import DerivativeUnstable, InvalidInput
from rydoa.estimation import (ArrayModel, FisherResult, ReceiverNoise, _fisher_from_diag,
                              crb_ula, crb_vsa, doa_jacobian, doa_variance, drho_numeric,
                              qcrb, qfim_exact, qfim_kron, qfim_snr_approx, richardson,
                              rydberg_fisher_vs_snr, vsa_steering)
from rydoa.fields import BiasField, PlaneWave

SX = np.array([[0, 1], [1, 0]], complex)


def _random_state(rng, d, rank=None):
    rank = d if rank is None else rank
    X = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


def _random_traceless(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    A = A + A.conj().T
    return A - np.trace(A) / d * np.eye(d)


@pytest.fixture(scope="module")
def fig5():
    return load_preset("fig5")


def _wave(cfg, deg, e0=None):
    s = cfg.scene
    return PlaneWave(s.e_amplitude if e0 is None else e0, math.radians(deg), s.frequency)


# ------------------------------------------------------------------ QFIM


def test_qfim_zero_derivative():
    rho = _random_state(np.random.default_rng(0), 4)
    assert qfim_exact(rho, np.zeros((4, 4))) == 0.0


@pytest.mark.parametrize("d", [2, 4, 6])
def test_qfim_maximally_mixed(d):
    A = _random_traceless(np.random.default_rng(d), d)
    assert qfim_exact(np.eye(d) / d, A) == pytest.approx(d * np.linalg.norm(A) ** 2, rel=1e-12)


def test_qfim_pure_qubit():
    # |psi(t)> = cos(t/2)|0> + sin(t/2)|1>, QFI = 1
    psi = np.array([1, 0], complex)
    dpsi = np.array([0, 0.5], complex)
    rho = np.outer(psi, psi.conj())
    drho = np.outer(dpsi, psi.conj()) + np.outer(psi, dpsi.conj())
    pure = 4 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(psi, dpsi)) ** 2)
    assert np.allclose(drho, SX / 2)
    F, info = qfim_exact(rho, drho, return_info=True)
    assert F == pytest.approx(pure, rel=1e-12) and pure == pytest.approx(1.0)
    assert not info["kernel_flag"]


def test_qfim_kernel_flagged():
    rho = np.diag([1.0, 0.0, 0.0]).astype(complex)
    A = np.diag([0.0, 1.0, -1.0]).astype(complex)  # lives entirely on the kernel
    F, info = qfim_exact(rho, A, return_info=True)
    assert F == 0.0 and info["kernel_flag"]


def test_qfim_rejects_non_hermitian():
    with pytest.raises(InvalidInput):
        qfim_exact(np.eye(2) / 2, np.array([[0, 1], [0, 0]]))


@settings(max_examples=40)
@given(st.integers(2, 6), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_qfim_dual_route(d, rank, seed):
    rng = np.random.default_rng(seed)
    rho = _random_state(rng, d, min(rank, d))
    A = _random_traceless(rng, d)
    a, b = qfim_exact(rho, A), qfim_kron(rho, A)
    assert a >= 0
    assert a == pytest.approx(b, rel=1e-7, abs=1e-12)


def test_neumann_limit_near_maximally_mixed():
    # rho = I/d + eps: qfim -> d ||A||^2 with an O(eps) deviation
    rng = np.random.default_rng(7)
    d = 6
    A = _random_traceless(rng, d)
    P = _random_traceless(rng, d)
    P /= np.linalg.norm(P)
    dev = []
    for eps in (1e-2, 1e-3, 1e-4):
        F = qfim_exact(np.eye(d) / d + eps * P, A)
        dev.append(abs(F - d * np.linalg.norm(A) ** 2) / F)
    assert dev[0] < 0.1
    assert dev[1] == pytest.approx(dev[0] / 10, rel=0.2)
    assert dev[2] == pytest.approx(dev[1] / 10, rel=0.2)


def test_snr_approx_linear():
    assert np.all(qfim_snr_approx([0.0, 0.0], 2.0) == 0)
    F1 = qfim_snr_approx([1.0, 3.0], 5.0)
    assert np.allclose(F1, np.diag([4.0, 12.0]))
    with pytest.raises(InvalidInput):
        qfim_snr_approx([1.0], 0.0)
    # doubling the SNR halves the approximate bound
    a = 1 / qfim_snr_approx([2.0], 1.0)[0, 0]
    assert a == pytest.approx(0.5 / qfim_snr_approx([1.0], 1.0)[0, 0])


# ------------------------------------------------------------ derivatives


def test_richardson_polynomial():
    d = richardson(lambda x: x ** 3, 0.7, 1e-3)
    assert float(d.value) == pytest.approx(3 * 0.49, rel=1e-10)
    with pytest.raises(InvalidInput):
        richardson(np.sin, 0.0, 1e-2)


def test_richardson_unstable():
    with pytest.raises(DerivativeUnstable) as ei:
        richardson(lambda x: np.sign(x - 1e-5) * 1.0, 0.0, 1e-3)
    assert ei.value.coarse is not None and ei.value.fine is not None


def test_drho_properties(fig5):
    A = drho_numeric(_wave(fig5, 45), fig5.bias, fig5.ladder_e1, "theta_rf")
    assert np.allclose(A, A.conj().T)
    assert abs(np.trace(A)) < 1e-8


def test_drho_step_consistency(fig5):
    w = _wave(fig5, 45)
    A1 = drho_numeric(w, fig5.bias, fig5.ladder_e1, "theta_rf", 1e-4)
    A2 = drho_numeric(w, fig5.bias, fig5.ladder_e1, "theta_rf", 5e-5)
    assert np.linalg.norm(A1 - A2) / np.linalg.norm(A1) < 1e-4


def test_drho_theta_bias_without_field(fig5):
    A = drho_numeric(_wave(fig5, 45), BiasField(0.0, 0.3), fig5.ladder_e1, "theta_bias")
    assert np.abs(A).max() < 1e-8


def test_sensitivity_drop_towards_90(fig5):
    # expected >= 10x; the Zeeman-expanded model gives about 3x (see decisions ledger)
    b0 = BiasField(fig5.bias.magnitude, 0.0)
    a45 = np.linalg.norm(drho_numeric(_wave(fig5, 45), b0, fig5.ladder_e1, "theta_rf")) ** 2
    a89 = np.linalg.norm(drho_numeric(_wave(fig5, 89), b0, fig5.ladder_e1, "theta_rf")) ** 2
    assert a45 >= 10 * a89


def test_drho_unknown_parameter(fig5):
    with pytest.raises(InvalidInput):
        drho_numeric(_wave(fig5, 45), fig5.bias, fig5.ladder_e1, "phase")


# ------------------------------------------------------------------ QCRB


@pytest.mark.parametrize("deg", [0, 90, 180])
def test_qcrb_diverges_at_forbidden_angles(fig5, deg):
    r = qcrb(_wave(fig5, deg), fig5.bias, fig5.cfgs, nu=100, which=("theta_rf",))
    assert r.diverged[0] and r.qcrb[0, 0] == math.inf and r.resolution_deg[0] == math.inf


def test_qcrb_mirror_symmetry(fig5):
    for deg in (20, 45, 70):
        a = qcrb(_wave(fig5, deg), fig5.bias, fig5.cfgs, which=("theta_rf",)).qcrb[0, 0]
        b = qcrb(_wave(fig5, 180 - deg), fig5.bias, fig5.cfgs, which=("theta_rf",)).qcrb[0, 0]
        assert a == pytest.approx(b, rel=0.05)


def test_qcrb_structure_and_nu(fig5):
    w = _wave(fig5, 45)
    r1 = qcrb(w, fig5.bias, fig5.cfgs, nu=1)
    r7 = qcrb(w, fig5.bias, fig5.cfgs, nu=7)
    assert r1.qfim[0, 1] == 0.0 and r1.qfim[1, 0] == 0.0
    assert np.all(np.diag(r1.qfim) >= 0)
    assert r7.qcrb[0, 0] == pytest.approx(r1.qcrb[0, 0] / 7, rel=1e-14)
    for i in range(2):
        assert r1.diverged[i] == (r1.single_atom_qfim[i] < 1e-12)
    with pytest.raises(InvalidInput):
        qcrb(w, fig5.bias, fig5.cfgs, nu=0)


def test_qcrb_scales_with_atoms(fig5):
    w = _wave(fig5, 45)
    a = qcrb(w, fig5.bias, fig5.cfgs, n_atoms=1.0, which=("theta_rf",))
    b = qcrb(w, fig5.bias, fig5.cfgs, n_atoms=1e4, which=("theta_rf",))
    assert b.qcrb[0, 0] == pytest.approx(a.qcrb[0, 0] / 1e4, rel=1e-12)


# ------------------------------------------------------------------- DoA


def _fisher(c1, c2):
    return _fisher_from_diag((1 / c1, 1 / c2), 1, 1.0, PlaneWave(1.0, 0.3))


def test_doa_variance_single_channel():
    fr = _fisher(0.25, 9.0)
    assert doa_variance(fr, 0.3, 0.3 - math.pi / 2, jacobian=(1.0, 0.0)) == pytest.approx(0.25)


def test_doa_variance_symmetric_geometry():
    t, tb = math.radians(45), math.radians(-45)
    J = doa_jacobian(t, tb)
    assert np.allclose(np.abs(J), [1 / math.sqrt(2)] * 2)
    assert doa_variance(_fisher(0.04, 0.04), t, tb) == pytest.approx(0.04, rel=1e-8)


def test_doa_variance_diverged():
    fr = _fisher(0.04, 0.04)
    fr.qcrb[1, 1] = math.inf
    assert doa_variance(fr, 0.5, 0.5 - math.pi / 2) == math.inf


@given(st.floats(0.05, math.pi - 0.05))
def test_doa_jacobian_finite_and_unit(theta):
    # for orthogonal in-plane E and B the two rotations share one unit of turn
    J = doa_jacobian(theta, theta - math.pi / 2)
    assert np.all(np.isfinite(J))
    assert np.linalg.norm(J) == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------- arrays


def test_ula_closed_form():
    assert crb_ula(ArrayModel(2), 1.0, 0.0) == pytest.approx(1 / (2 * math.pi ** 2), rel=1e-12)
    m = ArrayModel(8)
    assert crb_ula(m, 2.0, 0.2) == pytest.approx(crb_ula(m, 1.0, 0.2) / 2)
    assert crb_ula(m, 1.0, math.pi / 2) == math.inf
    with pytest.raises(InvalidInput):
        ArrayModel(1)
    with pytest.raises(InvalidInput):
        crb_ula(m, 0.0, 0.0)


@given(st.integers(2, 40), st.floats(0.01, 100), st.floats(0.0, 1.4))
def test_ula_monotone(n, snr, theta):
    m = ArrayModel(n)
    base = crb_ula(m, snr, theta)
    assert crb_ula(ArrayModel(n + 1), snr, theta) < base
    assert crb_ula(m, 1.1 * snr, theta) < base
    assert crb_ula(m, snr, theta * 0.9) <= base


def test_vsa_perpendicular_and_parallel():
    a = np.array([1, 0, 0, 0], complex)
    da = np.array([0, 2, 1j, 0], complex)
    assert crb_vsa(ArrayModel(2), 3.0, 0.0, a, da) == pytest.approx(1 / (2 * 3.0 * 5.0))
    assert crb_vsa(ArrayModel(2), 3.0, 0.0, a, 2j * a) == math.inf
    with pytest.raises(InvalidInput):
        crb_vsa(ArrayModel(2), 1.0, 0.0, np.zeros(3), np.ones(3))


def test_vsa_steering_derivative():
    m = ArrayModel(5)
    a, da = vsa_steering(m, 0.3)
    h = 1e-6
    num = (vsa_steering(m, 0.3 + h)[0] - vsa_steering(m, 0.3 - h)[0]) / (2 * h)
    assert np.allclose(da, num, atol=1e-8)


# ------------------------------------------------------------ SNR model


def test_rydberg_fisher_floor():
    noise = ReceiverNoise("x", 1e4, 0.5)
    snr = np.logspace(-3, 6, 10)
    F = rydberg_fisher_vs_snr(snr, 100.0, noise)
    assert np.all(np.diff(F) > 0)
    assert F[-1] == pytest.approx(50.0, rel=1e-3)
    assert F[0] == pytest.approx(1 / (1 / 40.0 + 1 / 50.0), rel=1e-12)
    assert np.all(rydberg_fisher_vs_snr(snr, 0.0, noise) == 0)
