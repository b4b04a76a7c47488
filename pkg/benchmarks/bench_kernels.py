"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``; add ``--repeat N`` for
more timing rounds. The compiled numbers are skipped when the extension
has not been built.
"""

import argparse
import importlib
import timeit

import numpy as np

from mical import _fallback
from mical.mi import CriticNet


def _chain_case(n_blocks, rng):
    g = rng.uniform(0.01, 1.0, (n_blocks, 2))
    log_g = np.ascontiguousarray(np.log(g / g.sum(axis=1, keepdims=True)))
    log_trans = np.ascontiguousarray(np.log([[0.821, 0.179], [0.1046, 0.8954]]))
    log_init = np.log([0.5, 0.5])
    return {
        "chain_forward": lambda k: k.chain_forward(log_g, log_trans, log_init),
        "chain_backward": lambda k: k.chain_backward(log_g, log_trans),
    }


def _critic_case(n, steps, batch, hidden, rng):
    x = rng.standard_normal(n)
    y = 0.5 * x + rng.standard_normal(n)
    idx = rng.integers(0, n, (steps, batch))
    pidx = rng.permuted(idx, axis=1)
    critic = CriticNet.init(hidden, rng)

    def train(k):
        params = [p.copy() for p in critic.params]
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        k.critic_train(x, y, idx, pidx, params, m, v, 0, 1e-3, 0.9, 0.999, 1e-8)

    return {
        "critic_forward": lambda k: k.critic_forward(x, y, *critic.params),
        "critic_train": train,
    }


def _best(fn, kernels, repeat):
    timer = timeit.Timer(lambda: fn(kernels))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--blocks", type=int, default=3600, help="chain length (one hour of blocks)")
    parser.add_argument("--steps", type=int, default=200, help="critic training steps")
    args = parser.parse_args(argv)

    try:
        compiled = importlib.import_module("mical._kernels")
    except ImportError:
        compiled = None

    rng = np.random.default_rng(0)
    cases = {**_chain_case(args.blocks, rng), **_critic_case(8192, args.steps, 256, 64, rng)}
    print(f"{'kernel':<16}{'fallback ms':>14}{'compiled ms':>14}{'speedup':>10}")
    for name, fn in cases.items():
        slow = _best(fn, _fallback, args.repeat)
        if compiled is None:
            print(f"{name:<16}{slow * 1e3:>14.3f}{'n/a':>14}{'n/a':>10}")
            continue
        fast = _best(fn, compiled, args.repeat)
        print(f"{name:<16}{slow * 1e3:>14.3f}{fast * 1e3:>14.3f}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
