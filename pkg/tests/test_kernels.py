import json
import os
import subprocess
import sys

import numpy as np
import pytest

from rydoa import kernels
from rydoa.config import load_preset
from rydoa.fields import e_decomposition
from rydoa.spectroscopy import build_model, enumerate_paths


@pytest.fixture(scope="module")
def model():
    cfg = load_preset("fig5")
    dec = e_decomposition(cfg.scene, cfg.bias)
    H, c_ops = build_model(cfg.ladder_e1, dec, cfg.bias)
    return cfg, H, c_ops, enumerate_paths(cfg.ladder_e1, dec, cfg.bias)


def test_liouvillian_matches_reference(model):
    _, H, c_ops, _ = model
    L = kernels.liouvillian(H, c_ops)
    ref = kernels.reference_liouvillian(H, c_ops)
    assert np.allclose(L, ref, rtol=1e-12, atol=1e-9 * np.abs(ref).max())


def test_liouvillian_without_dissipators():
    rng = np.random.default_rng(3)
    H = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    H = H + H.conj().T
    assert np.allclose(kernels.liouvillian(H, []), kernels.reference_liouvillian(H, []))


def test_liouvillian_preserves_trace(model):
    _, H, c_ops, _ = model
    L = kernels.liouvillian(H, c_ops)
    d = H.shape[0]
    tr = np.eye(d).reshape(-1, order="F")
    assert np.abs(tr @ L).max() < 1e-9 * np.abs(L).max()


def test_self_energy_matches_reference(model):
    cfg, _, _, paths = model
    rabi = np.array([p.rabi for p in paths])
    det = np.array([p.detuning for p in paths])
    scan = np.linspace(-2e8, 2e8, 5001)
    got = kernels.self_energy_scan(scan, rabi, det, cfg.ladder_e1.gamma_rf)
    ref = kernels.reference_self_energy(scan, rabi, det, cfg.ladder_e1.gamma_rf)
    assert np.allclose(got, ref, rtol=1e-13, atol=0)


def _child(backend):
    code = ("import json, numpy as np\nfrom rydoa import kernels\n"
            "L = kernels.liouvillian(np.diag([0., 1., 2.]), [np.eye(3)[[1, 0, 2]]])\n"
            "s = kernels.self_energy_scan(np.array([0.0, 1.0]), np.array([1.0]), np.array([0.5]), 0.1)\n"
            "print(json.dumps({'b': kernels.BACKEND, 'L': L.real.tolist(), 's': [s.real.tolist(), s.imag.tolist()]}))")
    env = dict(os.environ, RYDOA_BACKEND=backend)
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)


def test_backends_agree_across_processes():
    a, b = _child("numpy"), _child("numba")
    assert a.returncode == 0 and b.returncode == 0, a.stderr + b.stderr
    ja, jb = json.loads(a.stdout), json.loads(b.stdout)
    assert ja["b"] == "numpy"
    assert np.allclose(ja["L"], jb["L"]) and np.allclose(ja["s"], jb["s"])


def test_bad_backend_rejected():
    r = _child("fortran")
    assert r.returncode != 0 and "RYDOA_BACKEND" in r.stderr
