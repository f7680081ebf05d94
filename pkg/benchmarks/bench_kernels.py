"""Time the hot kernels with numba against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N] [--end-to-end]

Kernel timings call both implementations in one process. ``--end-to-end``
additionally builds the disc preconditioner twice in subprocesses, once with
``FCMSCHWARZ_DISABLE_NUMBA=1``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np
import scipy.sparse as sp

from fcmschwarz import kernels

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _spd(n, seed=0):
    M = np.random.default_rng(seed).normal(size=(n, n))
    return M @ M.T + n * np.eye(n)


def _time(fn, repeat):
    fn()  # warm up (and compile)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases():
    for n in (27, 81, 192):
        a = _spd(n)
        yield (
            f"jacobi_eigh n={n}",
            lambda a=a: kernels._jacobi_eigh_numpy(a.copy()),
            lambda a=a: kernels._jacobi_eigh_fast(a.copy()),
        )
    A = sp.random(20000, 20000, density=5e-4, format="csr", random_state=1) + sp.identity(20000, format="csr")
    x = np.random.default_rng(2).normal(size=A.shape[0])
    yield (
        "csr_matvec n=20000",
        lambda: kernels._csr_matvec_numpy(A.indptr, A.indices, A.data, x),
        lambda: kernels._csr_matvec_numba(A.indptr, A.indices, A.data, x),
    )
    S = sp.csr_matrix(np.ones((400, 400)))
    S.sort_indices()
    rows = np.sort(np.random.default_rng(3).choice(400, 81, replace=False)).astype(np.int64)
    blk = np.ones((81, 81))
    yield (
        "scatter_block 81 into 400",
        lambda: kernels._scatter_numpy(S.indptr, S.indices, S.data, rows, blk),
        lambda: kernels._scatter_numba(S.indptr, S.indices, S.data, rows, blk),
    )


END_TO_END = """
import time
from fcmschwarz.config import load_config
from fcmschwarz.studies import make_preconditioner, prepare
cfg = load_config({cfg!r})
sc = prepare(cfg)
t = time.perf_counter()
make_preconditioner(cfg, sc)
print(time.perf_counter() - t)
"""


def end_to_end(cfg):
    out = {}
    for label, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, FCMSCHWARZ_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END.format(cfg=cfg)], env=env,
                             capture_output=True, text=True, check=True)
        out[label] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba unavailable or disabled; nothing to compare")
        return 1
    print(f"{'kernel':28s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
    for name, slow, fast in kernel_cases():
        ts, tf = _time(slow, args.repeat), _time(fast, args.repeat)
        print(f"{name:28s} {1e3 * ts:12.3f} {1e3 * tf:12.3f} {ts / tf:8.1f}")
    if args.end_to_end:
        t = end_to_end(os.path.join(ROOT, "configs", "disc_elasticity.cfg"))
        print(f"{'build S, disc (end to end)':28s} {1e3 * t['numpy']:12.1f} {1e3 * t['numba']:12.1f} "
              f"{t['numpy'] / t['numba']:8.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
