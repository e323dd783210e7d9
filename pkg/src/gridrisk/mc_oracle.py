"""Crude Monte Carlo ground truth for the normalized flow law ``f = V X + nu``.

Samples are generated in fixed-size chunks. Chunk ``k`` of stream ``t`` draws
from ``PCG64(SeedSequence(seed, spawn_key=(t, k)))``, so the output depends
only on ``(seed, stream, n, chunk_size)`` and never on the number of worker
threads. Per-chunk statistics are merged in chunk order.
"""

from __future__ import annotations

import hashlib
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

DEFAULT_SEED = 20170415
DEFAULT_CHUNK = 1 << 16


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int
    seed: int
    kind: str
    stream: int = 0
    config_hash: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConcentrationReport:
    s_values: list[float]
    empirical_tail: list[McEstimate]
    bound: list[float]
    r_hat: McEstimate

    @property
    def violations(self) -> list[float]:
        """The ``s`` values where the tail minus 3 standard errors exceeds the bound."""
        return [
            s
            for s, e, b in zip(self.s_values, self.empirical_tail, self.bound)
            if e.mean - 3.0 * e.std_error > b
        ]

    def to_dict(self) -> dict:
        return {
            "s_values": list(self.s_values),
            "empirical_tail": [e.to_dict() for e in self.empirical_tail],
            "bound": list(self.bound),
            "r_hat": self.r_hat.to_dict(),
        }


def config_hash(factors) -> str:
    h = hashlib.sha256()
    for arr in (factors.nu, factors.v_mat):
        a = np.ascontiguousarray(arr, dtype="<f8")
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def _chunk_plan(n: int, chunk_size: int) -> list[tuple[int, int]]:
    if n < 1:
        raise ValueError(f"number of samples must be >= 1, got {n}")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    return [(k, min(chunk_size, n - k * chunk_size)) for k in range(math.ceil(n / chunk_size))]


def _chunk_noise(factors, seed: int, stream: int, k: int, size: int) -> np.ndarray:
    """``size x m`` block of ``V X`` for chunk ``k``."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, k))))
    x = rng.standard_normal((size, factors.v_mat.shape[1]))
    return x @ factors.v_mat.T


def _map_chunks(fn: Callable, plan, workers: int) -> list:
    if workers <= 1 or len(plan) == 1:
        return [fn(c) for c in plan]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, plan))


def sample_flows(
    factors, n: int, seed: int = DEFAULT_SEED, *, stream: int = 0,
    chunk_size: int = DEFAULT_CHUNK, workers: int = 1,
) -> np.ndarray:
    """``n x m`` matrix of normalized-flow samples ``nu + V x``."""
    plan = _chunk_plan(n, chunk_size)
    blocks = _map_chunks(lambda c: _chunk_noise(factors, seed, stream, *c) + factors.nu, plan, workers)
    return np.concatenate(blocks, axis=0)


def _max_abs_samples(factors, n, seed, stream, chunk_size, workers) -> list[np.ndarray]:
    plan = _chunk_plan(n, chunk_size)
    nu = factors.nu
    return _map_chunks(
        lambda c: np.max(np.abs(_chunk_noise(factors, seed, stream, *c) + nu), axis=1), plan, workers
    )


def _merge_moments(chunks: list[np.ndarray]) -> tuple[int, float, float]:
    """Chan et al. pairwise merge of (count, mean, M2), in chunk order."""
    count, mean, m2 = 0, 0.0, 0.0
    for x in chunks:
        nb = x.size
        shift = x[0]
        d = x - shift
        mb = shift + float(np.mean(d))
        m2b = float(np.sum((x - mb) ** 2))
        if count == 0:
            count, mean, m2 = nb, mb, m2b
            continue
        delta = mb - mean
        tot = count + nb
        mean = mean + delta * nb / tot if delta != 0.0 else mean
        m2 = m2 + m2b + delta * delta * count * nb / tot
        count = tot
    return count, mean, m2


def _proportion(hits: int, n: int, seed: int, kind: str, stream: int, chash: str) -> McEstimate:
    p = hits / n
    return McEstimate(p, math.sqrt(p * (1.0 - p) / n), n, seed, kind, stream, chash)


def estimate_failure_prob(
    factors, n: int, seed: int = DEFAULT_SEED, *, stream: int = 0,
    chunk_size: int = DEFAULT_CHUNK, workers: int = 1,
) -> McEstimate:
    """Fraction of samples with ``max_i |f_i| >= 1``."""
    chunks = _max_abs_samples(factors, n, seed, stream, chunk_size, workers)
    hits = sum(int(np.count_nonzero(c >= 1.0)) for c in chunks)
    return _proportion(hits, n, seed, "failure_prob", stream, config_hash(factors))


def estimate_risk(
    factors, n: int, seed: int = DEFAULT_SEED, *, stream: int = 0,
    chunk_size: int = DEFAULT_CHUNK, workers: int = 1,
) -> McEstimate:
    """Sample mean of ``max_i |f_i|`` with standard error ``std / sqrt(n)``."""
    chunks = _max_abs_samples(factors, n, seed, stream, chunk_size, workers)
    count, mean, m2 = _merge_moments(chunks)
    se = math.sqrt(m2 / (count - 1) / count) if count > 1 else 0.0
    return McEstimate(mean, se, count, seed, "risk_level", stream, config_hash(factors))


def concentration_check(
    factors, s_values, n: int, seed: int = DEFAULT_SEED, *, stream: int = 0,
    chunk_size: int = DEFAULT_CHUNK, workers: int = 1,
) -> ConcentrationReport:
    """Empirical ``P(max|f| - r_hat >= s)`` next to ``exp(-s^2 / (2 max sigma^2))``.

    ``r_hat`` is the plug-in mean of ``max|f|`` from the same sample.
    """
    s_values = [float(s) for s in s_values]
    if any(s < 0 for s in s_values):
        raise ValueError("s values must be nonnegative")
    if any(b <= a for a, b in zip(s_values, s_values[1:])):
        raise ValueError("s values must be strictly increasing")
    chash = config_hash(factors)
    chunks = _max_abs_samples(factors, n, seed, stream, chunk_size, workers)
    count, mean, m2 = _merge_moments(chunks)
    r_hat = McEstimate(
        mean, math.sqrt(m2 / (count - 1) / count) if count > 1 else 0.0, count, seed,
        "risk_level", stream, chash,
    )
    max_var = float(np.max(factors.sigma)) ** 2
    tails, bounds = [], []
    for s in s_values:
        hits = sum(int(np.count_nonzero(c - mean >= s)) for c in chunks)
        tails.append(_proportion(hits, n, seed, "tail_prob", stream, chash))
        bounds.append(math.exp(-s * s / (2.0 * max_var)) if max_var > 0 else float(s == 0.0))
    return ConcentrationReport(s_values, tails, bounds, r_hat)


@dataclass
class MonteCarloRiskEstimator:
    """Callable ``mu -> McEstimate`` of ``r(mu)``.

    All queries on one stream reuse the same noise draws, which keeps the
    estimate convex in ``mu`` along a ray. Distinct streams (one per sweep ray)
    draw independent noise. Noise blocks are cached per stream.
    """

    factors: object
    n: int = 100_000
    seed: int = DEFAULT_SEED
    chunk_size: int = DEFAULT_CHUNK
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def noise(self, stream: int) -> list[np.ndarray]:
        with self._lock:
            blocks = self._cache.get(stream)
        if blocks is None:
            plan = _chunk_plan(self.n, self.chunk_size)
            blocks = [_chunk_noise(self.factors, self.seed, stream, *c) for c in plan]
            with self._lock:
                blocks = self._cache.setdefault(stream, blocks)
        return blocks

    def __call__(self, mu, stream: int = 0) -> McEstimate:
        nu = self.factors.w_mat @ np.asarray(mu, dtype=float)
        chunks = [np.max(np.abs(b + nu), axis=1) for b in self.noise(stream)]
        count, mean, m2 = _merge_moments(chunks)
        se = math.sqrt(m2 / (count - 1) / count) if count > 1 else 0.0
        return McEstimate(mean, se, count, self.seed, "risk_level", stream)

