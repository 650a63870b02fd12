"""Compare the compiled kernels with the NumPy fallback.

Times each kernel on both backends at a few sizes, then one training step of
the default model under each backend (in a subprocess, since the backend is
fixed at import).

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hire._kernels import compiled_backend, python_backend

STEP_SNIPPET = """
import time
from hire import KERNEL_BACKEND
from hire.data import make_split
from hire.model import HireModel, ModelConfig
from hire.synthetic import synthetic_graph
from hire.trainer import OptimizerConfig, Trainer, graph_sampler
g = synthetic_graph(200, 200, seed=0)
split = make_split(g, "uc", seed=0)
tr = Trainer(HireModel(ModelConfig(g.user_cards, g.item_cards)), OptimizerConfig(total_steps=100),
             graph_sampler(split.train_graph(g), 32, 32, 0.1, "neighborhood"))
tr.fit(1, stop_on_convergence=False)
t = time.perf_counter()
tr.fit({steps}, stop_on_convergence=False)
print(KERNEL_BACKEND, (time.perf_counter() - t) / {steps})
"""


def kernel_cases(rng):
    for rows, cols in [(256, 9), (8192, 9), (8192, 32), (32768, 32)]:
        x = rng.standard_normal((rows, cols)).astype(np.float32)
        y = np.empty_like(x)
        dy = rng.standard_normal((rows, cols)).astype(np.float32)
        yield f"softmax_rows {rows}x{cols}", lambda k, x=x, y=y: k.softmax_rows(x, y)
        yield f"softmax_backward {rows}x{cols}", lambda k, x=x, y=y, dy=dy: k.softmax_rows_backward(x, dy, y)
    for rows, vocab, dim in [(1024, 40, 16), (16384, 40, 16)]:
        index = rng.integers(0, vocab, rows).astype(np.int64)
        src = rng.standard_normal((rows, dim)).astype(np.float32)
        out = np.zeros((vocab, dim), np.float32)
        yield f"scatter_add {rows}->{vocab}x{dim}", lambda k, o=out, i=index, s=src: k.scatter_add_rows(o, i, s)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--steps", type=int, default=3, help="training steps per backend")
    args = ap.parse_args()
    if compiled_backend is None:
        sys.exit("compiled kernels are not built (pip install -e . --no-build-isolation)")

    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, call in kernel_cases(rng):
        py = min(timeit.repeat(lambda: call(python_backend), number=1, repeat=args.repeat)) * 1e3
        cy = min(timeit.repeat(lambda: call(compiled_backend), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {py:10.3f} {cy:10.3f} {py / cy:7.1f}x")

    print("\ntraining step, batch 4 of 32x32 contexts, default model")
    for backend in ("python", "cython"):
        env = dict(os.environ, HIRE_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(steps=args.steps)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:8s} {float(out[1]):.3f} s/step")


if __name__ == "__main__":
    main()
