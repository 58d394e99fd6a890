"""Deterministic parallel execution of trajectory ensembles.

Trajectories are embarrassingly parallel: the work is split into fixed-size
index chunks, each chunk builds its own substreams from (seed, index), and
results are reduced in chunk order.  The outcome is therefore independent of
the worker count, and trajectory i is bitwise reproducible no matter how the
ensemble is scheduled.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diffusion import complex_standard_error
from .noise import substream

__all__ = [
    "EnsembleResult",
    "BenchmarkPoint",
    "EnsembleError",
    "run_ensemble",
    "relative_rms_error",
    "benchmark_sweep",
]

_CHUNK = 2048


class EnsembleError(RuntimeError):
    """One or more trajectory chunks failed; carries (index range, error) pairs."""

    def __init__(self, failures):
        self.failures = failures
        parts = "; ".join(
            f"trajectories [{lo}, {hi}): {type(err).__name__}: {err}"
            for (lo, hi), err in failures
        )
        super().__init__(f"ensemble execution failed for {parts}")


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Ensemble mean series with statistical errors and run accounting.

    ``std_error[k]`` follows the complex 2-vector convention:
    sqrt((var Re + var Im) / n) of the per-trajectory values at node k.
    """

    grid: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    n: int
    method: str
    wall_time_seconds: float
    draws_total: int
    extras: dict = field(default_factory=dict)
    samples: np.ndarray | None = None


@dataclass(frozen=True)
class BenchmarkPoint:
    """One (method, ensemble size) benchmark measurement."""

    method: str
    n: int
    rms_relative_error: float
    est_std: float
    wall_time_seconds: float
    draws_total: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        for name in ("rms_relative_error", "est_std", "wall_time_seconds"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def run_ensemble(
    task,
    n: int,
    seed: int,
    workers: int = 1,
    grid=None,
    method: str = "",
    keep_samples: bool = False,
    chunk_size: int = _CHUNK,
) -> EnsembleResult:
    """Run ``task`` over ``n`` trajectories and reduce to mean and error.

    ``task(streams)`` receives the substreams for one contiguous index chunk
    and must return a complex array of shape (len(streams), n_nodes), drawing
    all its randomness from the given streams.  Chunk boundaries are fixed by
    ``chunk_size`` alone, so the result does not depend on ``workers``.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2 for a standard error, got {n}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    start = time.perf_counter()
    ranges = [(lo, min(lo + chunk_size, n)) for lo in range(0, n, chunk_size)]
    all_streams: list = [None] * len(ranges)

    def run_chunk(idx: int) -> np.ndarray:
        lo, hi = ranges[idx]
        streams = [substream(seed, i) for i in range(lo, hi)]
        all_streams[idx] = streams
        out = np.asarray(task(streams))
        if out.ndim != 2 or out.shape[0] != hi - lo:
            raise ValueError(
                f"task returned shape {out.shape}, expected ({hi - lo}, n_nodes)"
            )
        return out

    failures = []
    results: list = [None] * len(ranges)
    if workers == 1:
        for idx in range(len(ranges)):
            try:
                results[idx] = run_chunk(idx)
            except Exception as err:  # noqa: BLE001 - aggregated and re-raised
                failures.append((ranges[idx], err))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_chunk, idx): idx for idx in range(len(ranges))}
            for fut, idx in futures.items():
                try:
                    results[idx] = fut.result()
                except Exception as err:  # noqa: BLE001
                    failures.append((ranges[idx], err))
    if failures:
        raise EnsembleError(sorted(failures, key=lambda item: item[0]))

    samples = np.concatenate(results, axis=0)
    mean = samples.mean(axis=0)
    std_error = np.array(
        [complex_standard_error(samples[:, k]) for k in range(samples.shape[1])]
    )
    draws = sum(s.draws for streams in all_streams for s in streams)
    wall = time.perf_counter() - start
    out_grid = np.arange(samples.shape[1], dtype=float) if grid is None else np.asarray(grid, dtype=float)
    if out_grid.size != samples.shape[1]:
        raise ValueError(
            f"grid length {out_grid.size} does not match task output width {samples.shape[1]}"
        )
    return EnsembleResult(
        grid=out_grid,
        mean=mean,
        std_error=std_error,
        n=n,
        method=method,
        wall_time_seconds=wall,
        draws_total=draws,
        samples=samples if keep_samples else None,
    )


def relative_rms_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    """sqrt(sum |est - ref|^2 / sum |ref|^2) over a common grid."""
    est = np.asarray(estimate)
    ref = np.asarray(reference)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    denom = float(np.sum(np.abs(ref) ** 2))
    if denom == 0.0:
        raise ValueError("reference series is identically zero")
    return float(np.sqrt(np.sum(np.abs(est - ref) ** 2) / denom))


def benchmark_sweep(
    runner,
    reference: np.ndarray,
    n_list,
    methods,
    seed: int,
) -> list[BenchmarkPoint]:
    """Accuracy/cost sweep over ensemble sizes for each method.

    ``runner(method, n, seed)`` must return an :class:`EnsembleResult` on the
    same grid as ``reference``.  Each (method, n) point gets its own derived
    seed so the points are statistically independent.  ``est_std`` is the
    aggregated statistical error sqrt(sum se^2) normalized like the rms
    error, so the two columns are directly comparable.
    """
    ref = np.asarray(reference)
    denom = np.sqrt(float(np.sum(np.abs(ref) ** 2)))
    if denom == 0.0:
        raise ValueError("reference series is identically zero")
    points = []
    salt = 0
    for method in methods:
        for n in n_list:
            res = runner(method, int(n), seed + 7919 * salt)
            salt += 1
            points.append(
                BenchmarkPoint(
                    method=method,
                    n=res.n,
                    rms_relative_error=relative_rms_error(res.mean, ref),
                    est_std=float(np.sqrt(np.sum(res.std_error**2))) / denom,
                    wall_time_seconds=res.wall_time_seconds,
                    draws_total=res.draws_total,
                )
            )
    return points
