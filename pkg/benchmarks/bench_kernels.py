"""Numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Runs each backend in its own interpreter (the backend is fixed at import
through RYDOA_BACKEND) and prints the best-of-N time per call.
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, math, time
import numpy as np
from rydoa import kernels
from rydoa.config import load_preset
from rydoa.fields import e_decomposition
from rydoa.spectroscopy import build_model, enumerate_paths

cfg = load_preset("fig5")
H, c_ops = build_model(cfg.ladder_e1, e_decomposition(cfg.scene, cfg.bias), cfg.bias)
paths = enumerate_paths(cfg.ladder_e1, e_decomposition(cfg.scene, cfg.bias), cfg.bias)
rabi = np.array([p.rabi for p in paths])
det = np.array([p.detuning for p in paths])
scan = np.linspace(-2e8, 2e8, 200_000)
repeat = {repeat}

def best(f):
    f()  # warm-up, includes compilation
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        f()
        ts.append(time.perf_counter() - t)
    return min(ts)

print(json.dumps({{
    "backend": kernels.BACKEND,
    "liouvillian_s": best(lambda: kernels.liouvillian(H, c_ops)),
    "self_energy_s": best(lambda: kernels.self_energy_scan(scan, rabi, det, cfg.ladder_e1.gamma_rf)),
    "dim": int(H.shape[0]),
}}))
"""


def run(backend: str, repeat: int) -> dict:
    env = dict(os.environ, RYDOA_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", CHILD.format(repeat=repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    res = {b: run(b, args.repeat) for b in ("numpy", "numba")}
    print(f"Liouvillian dim {res['numpy']['dim']}^2, self-energy over 200000 scan points")
    print(f"{'kernel':<14}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for k in ("liouvillian_s", "self_energy_s"):
        a, b = res["numpy"][k], res["numba"][k]
        print(f"{k[:-2]:<14}{a * 1e3:12.3f}{b * 1e3:12.3f}{a / b:10.1f}x")
    if res["numba"]["backend"] != "numba":
        print("note: numba not importable, both columns ran the numpy fallback")


if __name__ == "__main__":
    main()
