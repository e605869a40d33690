"""Benchmark the compiled kernels against the pure-numpy fallback.

Run without arguments: the script re-executes itself twice, once with
numba enabled and once with ODCFMSV_DISABLE_NUMBA=1, and prints a
side-by-side table.  Pass --inner to time the currently selected
backend only (used by the outer invocation).
"""

import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, *args, repeat=5, **kwargs):
    fn(*args, **kwargs)  # warm-up also triggers compilation
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmarks() -> dict:
    from odcfmsv import backend, kernels
    from odcfmsv.gibbs import GibbsChain, McmcConfig
    from odcfmsv.model import FactorDataset

    rng = np.random.default_rng(0)
    results = {"numba": backend.NUMBA_ENABLED}

    T, q = 1000, 2
    y = rng.standard_normal(T) - 1.0
    mean_s = rng.normal(-1.0, 0.5, T)
    var_s = rng.uniform(0.5, 2.0, T)
    z = rng.standard_normal(T)
    results["ffbs T=1000"] = _time(
        kernels.ffbs_core, y, mean_s, var_s, -0.5, 0.9, 0.04, z
    )
    results["smoother T=1000"] = _time(
        kernels.smoother_mean, y, mean_s, var_s, -0.5, 0.9, 0.04
    )

    P_full = np.empty((T + 1, q, q))
    P_full[0] = np.eye(q)
    for t in range(1, T + 1):
        M = rng.standard_normal((q, q))
        P_full[t] = M @ M.T + q * np.eye(q)
    A = np.eye(q) + 0.1
    A_inv = np.linalg.inv(A)
    obs = np.ascontiguousarray(rng.standard_normal((T, q)))
    d, k = 0.6, q + 7.0
    caches = kernels.build_corr_caches(P_full)

    def sweep():
        chi2 = rng.chisquare(df=k, size=(T, q))
        norms = rng.standard_normal((T, q, q))
        logu = np.log(rng.uniform(size=T))
        kernels.corr_path_sweep(
            P_full, *caches, obs, A, A_inv, d, k, chi2, norms, logu, 0
        )

    results["path sweep T=1000"] = _time(sweep)
    results["trans sums T=1000"] = _time(
        kernels.wishart_trans_sums, *caches, A_inv, d
    )

    F = rng.standard_normal((400, q))
    B = rng.standard_normal((10, q))
    Y = F @ B.T + 0.4 * rng.standard_normal((400, 10))
    data = FactorDataset(Y, F)

    def chain_sweeps():
        chain = GibbsChain(data, McmcConfig(burn_in=49, kept=1, seed=3))
        chain.run(50)

    results["50 sweeps T=400 p=10"] = _time(chain_sweeps, repeat=3)
    return results


def main() -> int:
    if "--inner" in sys.argv:
        print(json.dumps(run_benchmarks()))
        return 0

    here = os.path.abspath(__file__)
    rows = {}
    for label, disable in (("numba", False), ("fallback", True)):
        env = dict(os.environ)
        if disable:
            env["ODCFMSV_DISABLE_NUMBA"] = "1"
        else:
            env.pop("ODCFMSV_DISABLE_NUMBA", None)
        out = subprocess.run(
            [sys.executable, here, "--inner"],
            capture_output=True, text=True, env=env,
        )
        if out.returncode != 0:
            print(out.stderr, file=sys.stderr)
            return 1
        rows[label] = json.loads(out.stdout)

    assert rows["numba"].pop("numba") is True
    assert rows["fallback"].pop("numba") is False
    width = max(len(k) for k in rows["numba"])
    print(f"{'benchmark':<{width}}  {'numba':>10}  {'fallback':>10}  speedup")
    for key in rows["numba"]:
        a, b = rows["numba"][key], rows["fallback"][key]
        print(f"{key:<{width}}  {a * 1e3:>8.2f}ms  {b * 1e3:>8.2f}ms  {b / a:>6.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
