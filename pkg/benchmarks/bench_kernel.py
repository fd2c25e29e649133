"""Compare the compiled and pure-Python search kernels.

Both backends run the same compiled models under the same node cap; the
node counts must agree, only the wall time differs.

    python benchmarks/bench_kernel.py [--cap 20000] [--instances 3]
"""
from __future__ import annotations

import argparse
import random
import time

from streamfolio.instances import GeneratorConfig, derive_seed, draw_instance
from streamfolio.kernel import SolveBudget, available_backends, solve
from streamfolio.models import RANKED_HEURISTICS, compile_model
from streamfolio.streamliners import StreamlinerSet


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cap", type=int, default=20000)
    ap.add_argument("--instances", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernel not built; only the Python backend is available")
    cfg = GeneratorConfig(seed=args.seed)
    insts = []
    for d in range(args.instances):
        s = derive_seed(args.seed, "bench", d)
        insts.append(draw_instance(random.Random(s), cfg, s))

    budget = SolveBudget(args.cap)
    totals = {b: [0, 0.0] for b in backends}
    print(f"{'recipe':28s}" + "".join(f"{b + ' n/s':>14s}" for b in backends) + f"{'ratio':>9s}")
    for recipe in RANKED_HEURISTICS:
        row = {}
        for b in backends:
            nodes, secs = 0, 0.0
            counts = []
            for inst in insts:
                flat = compile_model(inst, StreamlinerSet(()), recipe).csp.freeze()
                t0 = time.perf_counter()
                out = solve(flat, budget, backend=b)
                secs += time.perf_counter() - t0
                nodes += out.cost
                counts.append((out.status, out.cost))
            row[b] = (nodes, secs, counts)
            totals[b][0] += nodes
            totals[b][1] += secs
        if len(backends) > 1:
            assert row["cython"][2] == row["python"][2], f"backends disagree on {recipe.name}"
        rates = {b: row[b][0] / max(row[b][1], 1e-9) for b in backends}
        ratio = rates["cython"] / rates["python"] if len(backends) > 1 else float("nan")
        print(f"{recipe.name:28s}" + "".join(f"{rates[b]:14.0f}" for b in backends) + f"{ratio:9.1f}")
    rates = {b: totals[b][0] / max(totals[b][1], 1e-9) for b in backends}
    ratio = rates["cython"] / rates["python"] if len(backends) > 1 else float("nan")
    print(f"{'all':28s}" + "".join(f"{rates[b]:14.0f}" for b in backends) + f"{ratio:9.1f}")


if __name__ == "__main__":
    main()
