"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are loaded side by side through ``kernels.backends()``; each
case is checked for bitwise-equal output before it is timed.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from beliefplan import kernels
from beliefplan.generator import GeneratorSpec, generate_model
from beliefplan.rng import NodeStream
from beliefplan.simplifier import ClassPartition


def _model(n: int):
    m = generate_model(GeneratorSpec(num_vars=n, num_actions=3, num_observations=3, eta_min=0.3, num_classes=2,
                                     seed=n))
    return m, ClassPartition.of_model(m)


def cases():
    for n in (3, 6, 9):
        m, part = _model(n)
        phi = np.random.default_rng(n).dirichlet(np.ones(m.num_states))
        T, O, R = m.transition_matrices, m.observation_model, m.rewards
        ci, cs = part.class_index, part.class_sizes
        yield f"predict n={n}", lambda k, T=T, phi=phi: k.predict(phi, T[0])
        yield f"project n={n}", lambda k, phi=phi, ci=ci, cs=cs: k.project(phi, ci, cs)
        yield f"expand n={n}", lambda k, phi=phi, T=T, O=O, ci=ci, cs=cs: k.expand(phi, T, O, ci, cs)
        depth, samples = (3, 8) if n < 9 else (2, 4)
        yield (f"sparse_search n={n} H={depth} C={samples}",
               lambda k, phi=phi, T=T, O=O, R=R, ci=ci, cs=cs, d=depth, c=samples, g=m.discount:
               k.sparse_search(k.project(phi, ci, cs), d, 42, T, O, R, ci, cs, g, c, NodeStream()))


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    impls = kernels.backends()
    if "compiled" not in impls:
        print("compiled extension not built; only the python backend is available")
    names = sorted(impls)
    print(f"{'case':<34}" + "".join(f"{n + ' (ms)':>16}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, fn in cases():
        outs = [fn(impls[n]) for n in names]
        if len(outs) > 1 and not _same(outs[0], outs[1]):
            print(f"{label}: backends disagree")
            return 1
        times = []
        for n in names:
            number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(impls[n]), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: fn(impls[n]), number=number, repeat=args.repeat)) / number
            times.append(best * 1e3)
        row = f"{label:<34}" + "".join(f"{t:>16.4f}" for t in times)
        if len(times) > 1:
            row += f"{times[names.index('python')] / times[names.index('compiled')]:>10.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
