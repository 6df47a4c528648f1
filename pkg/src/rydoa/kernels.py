"""Hot loops with a numba path and a pure-numpy fallback.

RYDOA_BACKEND=numpy forces the fallback; the default is numba when it
imports. Both paths compute the same quantities and are cross-checked in
the test suite.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get("RYDOA_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"RYDOA_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
BACKEND = "numba" if (_requested == "numba" and numba is not None) else "numpy"


def _liouvillian_numpy(H, c_ops):
    d = H.shape[0]
    eye = np.eye(d)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for C in c_ops:
        CdC = C.conj().T @ C
        L += np.kron(C.conj(), C) - 0.5 * np.kron(eye, CdC) - 0.5 * np.kron(CdC.T, eye)
    return L


def _self_energy_numpy(scan, rabi, detuning, gamma_rf):
    den = detuning[None, :] + scan[:, None] + 1j * gamma_rf
    return (rabi[None, :] ** 2 / den).sum(axis=1)


if BACKEND == "numba":

    @numba.njit(cache=True)
    def _liouvillian_jit(H, c_stack):
        # column-stacked vec: index of rho[i, j] is i + d*j
        d = H.shape[0]
        n = d * d
        L = np.zeros((n, n), dtype=np.complex128)
        for i in range(d):
            for j in range(d):
                row = i + d * j
                for k in range(d):
                    # -i (H rho - rho H)
                    L[row, k + d * j] += -1j * H[i, k]
                    L[row, i + d * k] += 1j * H[k, j]
        for c in range(c_stack.shape[0]):
            C = c_stack[c]
            CdC = C.conj().T @ C
            for i in range(d):
                for j in range(d):
                    row = i + d * j
                    for k in range(d):
                        for l in range(d):
                            # C rho C^dagger
                            L[row, k + d * l] += C[i, k] * np.conj(C[j, l])
                        L[row, k + d * j] += -0.5 * CdC[i, k]
                        L[row, i + d * k] += -0.5 * CdC[k, j]
        return L

    @numba.njit(cache=True)
    def _self_energy_jit(scan, rabi, detuning, gamma_rf):
        out = np.zeros(scan.shape[0], dtype=np.complex128)
        for a in range(scan.shape[0]):
            s = 0j
            for p in range(rabi.shape[0]):
                s += rabi[p] * rabi[p] / (detuning[p] + scan[a] + 1j * gamma_rf)
            out[a] = s
        return out


def liouvillian(H, c_ops):
    """Lindblad superoperator acting on column-stacked vec(rho)."""
    H = np.ascontiguousarray(H, dtype=np.complex128)
    if BACKEND == "numba":
        d = H.shape[0]
        if len(c_ops):
            stack = np.ascontiguousarray(np.array(c_ops, dtype=np.complex128))
        else:
            stack = np.zeros((0, d, d), dtype=np.complex128)
        return _liouvillian_jit(H, stack)
    return _liouvillian_numpy(H, c_ops)


def self_energy_scan(scan, rabi, detuning, gamma_rf):
    """Sum over paths of Omega^2 / (Delta + scan + i gamma) for each scan value."""
    scan = np.ascontiguousarray(scan, dtype=np.float64)
    rabi = np.ascontiguousarray(rabi, dtype=np.float64)
    detuning = np.ascontiguousarray(detuning, dtype=np.float64)
    if BACKEND == "numba":
        return _self_energy_jit(scan, rabi, detuning, float(gamma_rf))
    return _self_energy_numpy(scan, rabi, detuning, gamma_rf)


reference_liouvillian = _liouvillian_numpy
reference_self_energy = _self_energy_numpy
