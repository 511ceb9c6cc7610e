"""Step kernels, simple graphs and block permutations.

A :class:`StepKernel` with ``k`` blocks stands for the block graphon that is
constant on ``Q_i x Q_j`` where ``Q_i = ((i-1)/k, i/k]``.  All L2 quantities
on kernels are graphon quantities, i.e. ``||W||_2 = ||values||_F / k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, SizeLimitError

MAX_KERNEL_SIZE = 2048


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StepKernel:
    """Symmetric ``k x k`` matrix of edge weights confined to ``box``."""

    values: np.ndarray
    box: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1] or vals.shape[0] == 0:
            raise ConfigError(f"kernel values must be a non-empty square matrix, got shape {vals.shape}")
        lo, hi = float(self.box[0]), float(self.box[1])
        if not (-1.0 <= lo < hi <= 1.0):
            raise ConfigError(f"box must satisfy -1 <= lo < hi <= 1, got ({lo}, {hi})")
        if not np.all(np.isfinite(vals)):
            raise ConfigError("kernel values must be finite")
        if not np.array_equal(vals, vals.T):
            i, j = np.argwhere(vals != vals.T)[0]
            raise ConfigError(f"kernel is not symmetric at ({i}, {j}): {float(vals[i, j])!r} != {float(vals[j, i])!r}")
        if vals.min() < lo or vals.max() > hi:
            i, j = np.unravel_index(np.argmax((vals < lo) | (vals > hi)), vals.shape)
            raise ConfigError(f"entry ({i}, {j}) = {float(vals[i, j])!r} lies outside box [{lo}, {hi}]")
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "box", (lo, hi))

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def lo(self) -> float:
        return self.box[0]

    @property
    def hi(self) -> float:
        return self.box[1]

    def with_values(self, values: np.ndarray) -> "StepKernel":
        """Same box, new entries."""
        return StepKernel(values, self.box)

    def with_box(self, box: tuple[float, float]) -> "StepKernel":
        return StepKernel(self.values, box)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.values) / self.k)

    def __repr__(self) -> str:
        return f"StepKernel(k={self.k}, box={self.box})"

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c: float, k: int, box=(-1.0, 1.0)) -> "StepKernel":
        return cls(np.full((k, k), float(c)), box)

    @classmethod
    def from_symmetric(cls, a: np.ndarray, box=(-1.0, 1.0)) -> "StepKernel":
        """Symmetrize ``a`` as ``(a + a.T) / 2`` and wrap it."""
        a = np.asarray(a, dtype=np.float64)
        return cls(0.5 * (a + a.T), box)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], k: int,
                      box=(-1.0, 1.0), quad_points: int = 4) -> "StepKernel":
        """Block averages of ``fn`` over ``Q_i x Q_j`` by tensor Gauss-Legendre.

        Exact for polynomials of degree < ``2 * quad_points`` in each variable.
        """
        nodes, weights = np.polynomial.legendre.leggauss(quad_points)
        nodes = (nodes + 1.0) / 2.0
        weights = weights / 2.0
        left = np.arange(k) / k
        x = (left[:, None] + nodes[None, :] / k).ravel()
        w = np.tile(weights, k)
        vals = np.asarray(fn(x[:, None], x[None, :]), dtype=np.float64)
        vals = vals * w[:, None] * w[None, :]
        vals = vals.reshape(k, quad_points, k, quad_points).sum(axis=(1, 3))
        vals = 0.5 * (vals + vals.T)
        return cls(np.clip(vals, box[0], box[1]), box)


def random_kernel(k: int, rng: np.random.Generator, low: float = 0.0, high: float = 1.0,
                  box: tuple[float, float] | None = None) -> StepKernel:
    """Symmetric kernel with i.i.d. Uniform[low, high] upper triangle."""
    a = rng.uniform(low, high, size=(k, k))
    a = np.triu(a) + np.triu(a, 1).T
    if box is None:
        box = (0.0, 1.0) if 0.0 <= low and high <= 1.0 else (-1.0, 1.0)
    return StepKernel(a, box)


# permutations -----------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection of ``range(n)``; block ``i`` is sent to position ``perm[i]``."""

    perm: np.ndarray

    def __post_init__(self):
        p = np.array(self.perm, dtype=np.int64, copy=True).ravel()
        n = p.size
        if n == 0 or not np.array_equal(np.sort(p), np.arange(n)):
            raise ConfigError(f"not a permutation of range({n}): {p.tolist()}")
        object.__setattr__(self, "perm", _readonly(p))

    @property
    def n(self) -> int:
        return self.perm.size

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Permutation":
        return cls(rng.permutation(n))

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.n)
        return Permutation(inv)

    def compose(self, other: "Permutation") -> "Permutation":
        """``self o other``: apply ``other`` first."""
        if other.n != self.n:
            raise ConfigError("cannot compose permutations of different sizes")
        return Permutation(self.perm[other.perm])

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.perm, other.perm)

    def __hash__(self):
        return hash(self.perm.tobytes())

    def tolist(self) -> list[int]:
        return self.perm.tolist()


def permute_matrix(a: np.ndarray, p: Permutation) -> np.ndarray:
    """Simultaneous row/column relabeling: ``out[p[i], p[j]] = a[i, j]``."""
    if a.shape[0] != p.n:
        raise ConfigError(f"permutation size {p.n} does not match matrix size {a.shape[0]}")
    inv = p.inverse().perm
    return a[np.ix_(inv, inv)]


def permute(w: StepKernel, p: Permutation) -> StepKernel:
    return StepKernel(permute_matrix(w.values, p), w.box)


def blow_up(w: StepKernel, r: int, max_size: int = MAX_KERNEL_SIZE) -> StepKernel:
    """Replace every entry by an ``r x r`` block; same graphon."""
    if r < 1:
        raise ConfigError(f"blow-up factor must be >= 1, got {r}")
    if w.k * r > max_size:
        raise SizeLimitError(f"blow-up to size {w.k * r} exceeds the cap {max_size}")
    if r == 1:
        return w
    vals = np.repeat(np.repeat(w.values, r, axis=0), r, axis=1)
    return StepKernel(vals, w.box)


def _overlap_matrix(k: int, m: int) -> np.ndarray:
    """``P[a, i] = m * |Q_{m,a} & Q_{k,i}|``; rows sum to one."""
    edges_k = np.arange(k + 1) / k
    edges_m = np.arange(m + 1) / m
    lo = np.maximum(edges_m[:-1, None], edges_k[None, :-1])
    hi = np.minimum(edges_m[1:, None], edges_k[None, 1:])
    return np.clip(hi - lo, 0.0, None) * m


def resample(w: StepKernel, m: int) -> StepKernel:
    """Block-average ``w`` onto ``m`` equal blocks (exact conditional expectation
    when ``m`` divides ``k``; overlap-weighted otherwise)."""
    if m < 1:
        raise ConfigError("target size must be positive")
    if m == w.k:
        return w
    if w.k % m == 0:
        r = w.k // m
        vals = w.values.reshape(m, r, m, r).mean(axis=(1, 3))
        vals = 0.5 * (vals + vals.T)
    else:
        p = _overlap_matrix(w.k, m)
        vals = p @ w.values @ p.T
        vals = 0.5 * (vals + vals.T)
    return StepKernel(np.clip(vals, w.lo, w.hi), w.box)


def common_size(k1: int, k2: int, max_size: int = MAX_KERNEL_SIZE) -> int:
    n = k1 * k2 // math.gcd(k1, k2)
    if n > max_size:
        raise SizeLimitError(f"common blow-up size lcm({k1}, {k2}) = {n} exceeds cap {max_size}")
    return n


def to_common_size(u: StepKernel, v: StepKernel, max_size: int = MAX_KERNEL_SIZE,
                   fallback: int | None = None) -> tuple[StepKernel, StepKernel, bool]:
    """Blow both kernels up to ``lcm(k_u, k_v)``.

    When the lcm exceeds ``max_size`` and ``fallback`` is given, both kernels are
    block-averaged to ``fallback`` blocks instead and the third return value
    (``exact``) is False.
    """
    try:
        n = common_size(u.k, v.k, max_size)
    except SizeLimitError:
        if fallback is None:
            raise
        return resample(u, fallback), resample(v, fallback), False
    return blow_up(u, n // u.k, max_size), blow_up(v, n // v.k, max_size), True


# graphs -------------------------------------------------------------------
@dataclass(frozen=True)
class SimpleGraph:
    """Undirected loopless graph on vertices ``0 .. n_vertices-1``.

    Files use 1-based labels; see :mod:`graphonflow.io`.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.n_vertices < 1:
            raise ConfigError("a graph needs at least one vertex")
        norm = []
        seen = set()
        for e in self.edges:
            i, j = (int(x) for x in e)
            if i == j:
                raise ConfigError(f"loop at vertex {i} is not allowed")
            if not (0 <= i < self.n_vertices and 0 <= j < self.n_vertices):
                raise ConfigError(f"edge ({i}, {j}) has a vertex outside 0..{self.n_vertices - 1}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ConfigError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def m(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n_vertices, dtype=int)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def has_edge(self, e: Sequence[int]) -> bool:
        i, j = e
        return (min(i, j), max(i, j)) in self.edges

    def is_connected(self) -> bool:
        adj = {v: set() for v in range(self.n_vertices)}
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        stack, seen = [0], {0}
        while stack:
            v = stack.pop()
            for u in adj[v] - seen:
                seen.add(u)
                stack.append(u)
        return len(seen) == self.n_vertices

    # named graphs
    @classmethod
    def edge(cls) -> "SimpleGraph":
        return cls(2, ((0, 1),))

    @classmethod
    def path(cls, n: int) -> "SimpleGraph":
        """Path on ``n`` vertices."""
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))

    @classmethod
    def cycle(cls, n: int) -> "SimpleGraph":
        if n < 3:
            raise ConfigError("a cycle needs at least 3 vertices")
        return cls(n, tuple((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def triangle(cls) -> "SimpleGraph":
        return cls.cycle(3)

    @classmethod
    def star(cls, n: int) -> "SimpleGraph":
        """Star on ``n`` vertices: centre 0 joined to ``n - 1`` leaves."""
        return cls(n, tuple((0, i) for i in range(1, n)))

    @classmethod
    def complete(cls, n: int) -> "SimpleGraph":
        return cls(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def empty(cls, n: int) -> "SimpleGraph":
        return cls(n, ())


def edge_deleted(h: SimpleGraph, e: Iterable[int]) -> SimpleGraph:
    """``H_e``: same vertices, edge ``e`` removed."""
    i, j = e
    key = (min(i, j), max(i, j))
    if key not in h.edges:
        raise ConfigError(f"edge {key} is not in the graph")
    return SimpleGraph(h.n_vertices, tuple(x for x in h.edges if x != key))


def disjoint_union(g: SimpleGraph, h: SimpleGraph) -> SimpleGraph:
    off = g.n_vertices
    return SimpleGraph(g.n_vertices + h.n_vertices,
                       g.edges + tuple((i + off, j + off) for i, j in h.edges))
