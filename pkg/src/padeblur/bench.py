"""Benchmarks: attention complexity sweep and compiled-vs-numpy kernels."""

from __future__ import annotations

import csv
import time
import tracemalloc

import numpy as np

from .attention import (AttentionParams, NaiveAttentionParams, attention_flops,
                        linear_attention, naive_self_attention)
from .autograd import Tensor, no_grad
from .kernels import get_impl


def _median_ms(fn, runs: int = 3) -> float:
    times = []
    fn()  # warm-up
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def _peak_bytes(fn) -> int:
    tracemalloc.start()
    fn()
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return peak


def bench_attention(sides=(16, 32, 64), channels: int = 16, maps: int = 16,
                    d_a: int = 16, d_c: int = 16, runs: int = 3,
                    seed: int = 0) -> list[dict]:
    """Naive vs linear attention: analytic FLOPs, wall-clock, peak bytes.

    One row per HW = side^2; measured columns are medians over `runs`.
    """
    rng = np.random.default_rng(seed)
    lin = AttentionParams(channels, maps, rng)
    naive = NaiveAttentionParams(channels, d_a, d_c, rng)
    rows = []
    for side in sides:
        hw = side * side
        x = Tensor(rng.standard_normal((channels, hw)).astype(np.float32))
        z = Tensor(x.data.T.copy())  # naive path uses (HW, C) layout
        flops = attention_flops(side, side, 1, channels, maps, d_a, d_c)
        with no_grad():
            row = {
                "hw": hw,
                "naive_flops": flops["naive"],
                "linear_flops": flops["linear"],
                "naive_ms": _median_ms(lambda: naive_self_attention(z, naive), runs),
                "linear_ms": _median_ms(
                    lambda: linear_attention(x, x, lin, masked=False), runs),
                "naive_bytes": _peak_bytes(lambda: naive_self_attention(z, naive)),
                "linear_bytes": _peak_bytes(
                    lambda: linear_attention(x, x, lin, masked=False)),
            }
        rows.append(row)
    return rows


ATTENTION_COLUMNS = ("hw", "naive_flops", "linear_flops", "naive_ms",
                     "linear_ms", "naive_bytes", "linear_bytes")


def write_csv(path, rows: list[dict], columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def bench_kernels(runs: int = 5, seed: int = 0) -> list[dict]:
    """Compiled extension vs numpy fallback on the bilinear tap kernels."""
    rng = np.random.default_rng(seed)
    impls = {"numpy": get_impl("numpy")}
    try:
        impls["cython"] = get_impl("cython")
    except ImportError:
        pass
    rows = []
    for C, H, W, T, L in ((16, 64, 64, 25, 1024), (16, 64, 64, 25, 256),
                          (3, 128, 128, 25, 4096)):
        x = rng.standard_normal((C, H, W)).astype(np.float32)
        py = rng.uniform(-1, H, (T, L)).astype(np.float32)
        px = rng.uniform(-1, W, (T, L)).astype(np.float32)
        g = rng.standard_normal((C, T, L)).astype(np.float32)
        for fn_name, call in (
            ("gather", lambda im: im.bilinear_gather(x, py, px)),
            ("backward", lambda im: im.bilinear_backward(x, py, px, g)),
        ):
            row = {"kernel": fn_name, "C": C, "H": H, "W": W, "taps": T, "L": L}
            for name, impl in impls.items():
                row[f"{name}_ms"] = _median_ms(lambda: call(impl), runs)
            if "cython" in impls:
                row["speedup"] = round(row["numpy_ms"] / row["cython_ms"], 2)
            rows.append(row)
    return rows


KERNEL_COLUMNS = ("kernel", "C", "H", "W", "taps", "L", "numpy_ms",
                  "cython_ms", "speedup")
