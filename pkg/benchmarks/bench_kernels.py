#!/usr/bin/env python3
"""Compare the numba-jitted kernels against the pure-numpy fallback.

Times the elementwise kernels in isolation and a full agent update (the
training hot path).  Each backend runs in its own subprocess so that
jit state and thread pools cannot contaminate the other measurement.

Usage:
    python benchmarks/bench_kernels.py [--batch 256] [--hidden 128]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from messrl import kernels
from messrl.config import TD3Hyper
from messrl.td3 import TD3Agent, Transition


def time_fn(fn, repeat=2000, warmup=50):
    for _ in range(warmup):
        fn()
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_kernels(batch, width):
    rng = np.random.default_rng(0)
    z = rng.normal(size=(batch, width))
    b = rng.normal(size=width)
    act = rng.normal(size=(batch, width))
    n_params = width * width
    p = rng.normal(size=n_params)
    g = rng.normal(size=n_params)
    m = np.zeros(n_params)
    v = np.zeros(n_params)
    cases = {
        "add_bias_relu": lambda: kernels.add_bias_relu(z.copy(), b),
        "add_bias_tanh": lambda: kernels.add_bias_tanh(z.copy(), b),
        "relu_grad": lambda: kernels.relu_grad(z.copy(), act),
        "tanh_grad": lambda: kernels.tanh_grad(z.copy(), act),
        "adam_update": lambda: kernels.adam_update(
            p.copy(), g, m.copy(), v.copy(), 1e-3, 0.9, 0.999, 1e-8,
            0.1, 0.001),
        "polyak": lambda: kernels.polyak(p.copy(), g, 0.005),
    }
    return {name: time_fn(fn) for name, fn in cases.items()}


def bench_update(batch, hidden):
    hyper = TD3Hyper(hidden=(hidden, hidden), batch_size=batch,
                     buffer_capacity=10_000, warmup_episodes=0)
    agent = TD3Agent(22, 18, hyper, seed=0)
    rng = np.random.default_rng(1)
    for _ in range(2 * batch):
        agent.buffer.push(Transition(rng.normal(size=22),
                                     rng.uniform(-1, 1, 18),
                                     float(rng.normal()),
                                     rng.normal(size=22), False))
    return time_fn(agent.update, repeat=300, warmup=20)


def measure(batch, hidden):
    # the full-update number comes first: the kernel microbenchmarks
    # disturb the process enough (cache, allocator) to skew it
    update = bench_update(batch, hidden)
    return {"backend": kernels.backend(),
            "kernels": bench_kernels(batch, hidden),
            "update": update}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=256)
    parser.add_argument("--hidden", type=int, default=128)
    parser.add_argument("--emit-json", action="store_true",
                        help="measure the active backend, print JSON")
    args = parser.parse_args()

    if args.emit_json:
        print(json.dumps(measure(args.batch, args.hidden)))
        return

    results = {}
    for name in kernels.available_backends():
        env = dict(os.environ)
        if name == "numpy":
            env["MESSRL_NO_NUMBA"] = "1"
        else:
            env.pop("MESSRL_NO_NUMBA", None)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--batch", str(args.batch), "--hidden", str(args.hidden),
             "--emit-json"],
            env=env, capture_output=True, text=True, check=True)
        data = json.loads(out.stdout.splitlines()[-1])
        assert data["backend"] == name, data["backend"]
        results[name] = data

    backends = sorted(results)
    both = "numba" in results and "numpy" in results
    print(f"batch={args.batch}, hidden={args.hidden}x{args.hidden}")
    header = f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends)
    if both:
        header += f"{'numba gain':>12}"
    print(header)
    for key in results[backends[0]]["kernels"]:
        line = f"{key:<16}"
        for b in backends:
            line += f"{results[b]['kernels'][key] * 1e6:>10.1f}us"
        if both:
            line += (f"{results['numpy']['kernels'][key] / results['numba']['kernels'][key]:>11.2f}x")
        print(line)
    line = f"{'full update':<16}"
    for b in backends:
        line += f"{results[b]['update'] * 1e3:>10.2f}ms"
    if both:
        line += f"{results['numpy']['update'] / results['numba']['update']:>11.2f}x"
    print(line)


if __name__ == "__main__":
    main()
