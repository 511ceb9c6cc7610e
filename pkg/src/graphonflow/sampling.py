"""Random weighted graphs sampled from step kernels and Monte-Carlo estimators.

Every estimator splits its draws into chunks; chunk ``c`` uses the generator
seeded with ``[seed, c]`` so results do not depend on the worker count.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .functionals import DerivativeKernel
from .kernel import SimpleGraph, StepKernel
from .parallel import pmap

CHUNK = 20_000


@dataclass(frozen=True, eq=False)
class SampledGraph:
    """``weights[i, j] = W(block(U_i), block(U_j))`` for all ``i, j``.

    The diagonal is filled from the kernel as well; drop it when a loopless
    graph is wanted.
    """

    weights: np.ndarray
    latents: np.ndarray
    blocks: np.ndarray

    @property
    def k(self) -> int:
        return len(self.latents)


def latent_blocks(u: np.ndarray, n_blocks: int) -> np.ndarray:
    """Block ``i`` covers ``[i/K, (i+1)/K)``."""
    return np.minimum((u * n_blocks).astype(np.int64), n_blocks - 1)


def sample_graph(w: StepKernel, k: int, seed: int = 0) -> SampledGraph:
    if k < 1:
        raise ConfigError("sample size k must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random(k)
    b = latent_blocks(u, w.k)
    return SampledGraph(w.values[np.ix_(b, b)].copy(), u, b)


def _chunks(n: int, size: int = CHUNK) -> list[tuple[int, int]]:
    return [(c, min(size, n - c * size)) for c in range((n + size - 1) // size)]


def _mean_stderr(parts: list[np.ndarray]) -> tuple[float, float]:
    x = np.concatenate(parts)
    n = len(x)
    shift = x[0]
    dev = x - shift
    mean = shift + math.fsum(dev) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def mc_hom_density(h: SimpleGraph, w: StepKernel, n_samples: int, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of the edge-weight product of ``h``."""
    if n_samples < 100:
        raise ConfigError("mc_hom_density needs at least 100 samples")
    if h.m == 0:
        return 1.0, 0.0
    a = w.values

    def chunk(job):
        c, size = job
        rng = np.random.default_rng([seed, c])
        b = latent_blocks(rng.random((size, h.n_vertices)), w.k)
        prod = np.ones(size)
        for i, j in h.edges:
            prod *= a[b[:, i], b[:, j]]
        return prod

    return _mean_stderr(pmap(chunk, _chunks(n_samples)))


# velocity field ---------------------------------------------------------------
@dataclass
class VelocityEstimate:
    """Conditional-mean velocities keyed by the observed off-diagonal pattern.

    A pattern is the tuple of ``X[i, j]`` for ``i < j`` in row-major order.
    Each entry is a ``k x k`` symmetric array with zero diagonal.
    """

    k: int
    entries: dict = field(default_factory=dict)
    sample_counts: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)

    def get(self, pattern):
        """Velocity for ``pattern`` or None when it was never observed."""
        return self.entries.get(tuple(pattern))


def _pairs(k: int):
    return np.triu_indices(k, 1)


def _to_matrix(k: int, upper: np.ndarray) -> np.ndarray:
    out = np.zeros((k, k))
    iu = _pairs(k)
    out[iu] = upper
    out[(iu[1], iu[0])] = upper
    return out


def _group(patterns: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (representative patterns, group index per row)."""
    uniq, inv = np.unique(patterns, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    if tol <= 0:
        return uniq, inv
    reps: list[np.ndarray] = []
    remap = np.empty(len(uniq), dtype=np.int64)
    for i, p in enumerate(uniq):
        for r, q in enumerate(reps):
            if np.max(np.abs(p - q)) <= tol:
                remap[i] = r
                break
        else:
            remap[i] = len(reps)
            reps.append(p)
    return np.array(reps), remap[inv]


def estimate_velocity(w: StepKernel, phi_masked, k: int, n_samples: int,
                      tol: float = 0.0, seed: int = 0) -> VelocityEstimate:
    """Average ``-phi_masked`` at sampled latent blocks grouped by the pattern of ``W``.

    ``phi_masked`` is the derivative already multiplied by the boundary mask.
    Patterns that match entrywise within ``tol`` share a group.
    """
    if k < 2:
        raise ConfigError("velocity estimation needs k >= 2")
    if n_samples < 1:
        raise ConfigError("n_samples must be positive")
    phi = phi_masked.values if isinstance(phi_masked, DerivativeKernel) else np.asarray(phi_masked)
    if phi.shape != w.values.shape:
        raise ConfigError("derivative and kernel sizes differ")
    iu = _pairs(k)

    def chunk(job):
        c, size = job
        rng = np.random.default_rng([seed, c])
        b = latent_blocks(rng.random((size, k)), w.k)
        bi, bj = b[:, iu[0]], b[:, iu[1]]
        return w.values[bi, bj], -phi[bi, bj]

    parts = pmap(chunk, _chunks(n_samples))
    pats = np.concatenate([p for p, _ in parts])
    vels = np.concatenate([v for _, v in parts])
    reps, group = _group(pats, tol)
    est = VelocityEstimate(k)
    counts = np.bincount(group, minlength=len(reps))
    for g, rep in enumerate(reps):
        sel = vels[group == g]
        n = counts[g]
        mean = sel.mean(axis=0)
        se = sel.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(mean.shape, np.inf)
        key = tuple(float(x) for x in rep)
        est.entries[key] = _to_matrix(k, mean)
        est.sample_counts[key] = int(n)
        est.stderr[key] = _to_matrix(k, se)
    return est


def exact_velocity(w: StepKernel, phi_masked, k: int) -> dict:
    """Oracle: enumerate all block tuples (each has probability ``K^-k``).

    Returns ``pattern -> (velocity matrix, probability)``.
    """
    phi = phi_masked.values if isinstance(phi_masked, DerivativeKernel) else np.asarray(phi_masked)
    if w.k ** k > 2_000_000:
        raise ConfigError("too many block tuples for exhaustive enumeration")
    iu = _pairs(k)
    sums: dict = {}
    for tup in itertools.product(range(w.k), repeat=k):
        b = np.array(tup)
        key = tuple(float(x) for x in w.values[b[iu[0]], b[iu[1]]])
        v = -phi[b[iu[0]], b[iu[1]]]
        acc = sums.setdefault(key, [np.zeros(len(iu[0])), 0])
        acc[0] += v
        acc[1] += 1
    total = w.k ** k
    return {key: (_to_matrix(k, s / n), n / total) for key, (s, n) in sums.items()}
