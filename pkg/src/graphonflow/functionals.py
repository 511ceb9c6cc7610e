"""Invariant functionals on step kernels and their derivative kernels.

Derivative convention: ``phi`` is the kernel whose block inner product gives
the first-order change, ``d/ds F(W + sD) = sum(phi * D) / k^2`` for symmetric
``D``.  Equivalently ``phi = k^2 * grad`` of ``F`` as a function of the
symmetric matrix entries, with each off-diagonal pair counted once per entry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ComplexityError, ConfigError, DomainError
from .kernel import SimpleGraph, StepKernel

MOTIF_CAP = 6
BOUNDARY_TOL = 1e-12


# term kinds ---------------------------------------------------------------
@dataclass(frozen=True)
class Entropy:
    """``E(W) = int h(W)`` with ``h(p) = p log p + (1 - p) log(1 - p)``."""


@dataclass(frozen=True)
class Hom:
    graph: SimpleGraph


@dataclass(frozen=True)
class Interaction:
    """``log t(H1) + log t(H2) - 2 log t(H)``.

    ``h1`` and ``h2`` are subgraphs written on the vertex labels of ``h``.
    Their vertex sets default to the endpoints of their edges; pass
    ``vertices1``/``vertices2`` to add isolated vertices.
    """

    h1: SimpleGraph
    h2: SimpleGraph
    h: SimpleGraph
    vertices1: tuple[int, ...] | None = None
    vertices2: tuple[int, ...] | None = None
    lam: float | None = None  # optional user-supplied semiconvexity bound

    def vertex_sets(self) -> tuple[set[int], set[int]]:
        out = []
        for g, vs in ((self.h1, self.vertices1), (self.h2, self.vertices2)):
            s = {v for e in g.edges for v in e}
            if vs is not None:
                s |= set(vs)
            out.append(s)
        return out[0], out[1]

    def __post_init__(self):
        n = self.h.n_vertices
        for g in (self.h1, self.h2):
            if g.n_vertices != n:
                raise ConfigError("interaction subgraphs must use the vertex labels of H")
            if not set(g.edges) <= set(self.h.edges):
                raise ConfigError("interaction subgraph has an edge that is not in H")
        v1, v2 = self.vertex_sets()
        if not set(self.h.edges) <= set(self.h1.edges) | set(self.h2.edges):
            raise ConfigError("every edge of H must lie in H1 or H2")
        if (v1 | v2) != set(range(n)):
            raise ConfigError("every vertex of H must lie in H1 or H2")

    @property
    def vertex_disjoint(self) -> bool:
        v1, v2 = self.vertex_sets()
        return not (v1 & v2)


Kind = Union[Entropy, Hom, Interaction]


@dataclass(frozen=True)
class Term:
    coef: float
    kind: Kind

    def __post_init__(self):
        if not math.isfinite(self.coef):
            raise ConfigError("term coefficients must be finite")


@dataclass(frozen=True)
class FunctionalSpec:
    """Linear combination of terms plus the admissible box for kernel values."""

    terms: tuple[Term, ...] = ()
    box: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        lo, hi = float(self.box[0]), float(self.box[1])
        if not -1.0 <= lo < hi <= 1.0:
            raise ConfigError(f"box must satisfy -1 <= lo < hi <= 1, got ({lo}, {hi})")
        if self.needs_open_unit_box and not (0.0 < lo and hi < 1.0):
            raise ConfigError("entropy and interaction terms need a box (eps, 1 - eps) with eps > 0")
        object.__setattr__(self, "box", (lo, hi))

    @property
    def needs_open_unit_box(self) -> bool:
        return any(isinstance(t.kind, (Entropy, Interaction)) for t in self.terms)

    @classmethod
    def entropy(cls, coef: float = 1.0, box=(1e-9, 1 - 1e-9)) -> "FunctionalSpec":
        return cls((Term(coef, Entropy()),), box)

    @classmethod
    def hom(cls, h: SimpleGraph, coef: float = 1.0, box=(-1.0, 1.0)) -> "FunctionalSpec":
        return cls((Term(coef, Hom(h)),), box)

    def __add__(self, other: "FunctionalSpec") -> "FunctionalSpec":
        box = (max(self.box[0], other.box[0]), min(self.box[1], other.box[1]))
        return FunctionalSpec(self.terms + other.terms, box)


@dataclass(frozen=True, eq=False)
class DerivativeKernel:
    values: np.ndarray
    paired_with: StepKernel | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ConfigError("derivative values must be square")
        if not np.all(np.isfinite(v)):
            raise DomainError("derivative has non-finite entries")
        if not np.array_equal(v, v.T):
            raise ConfigError("derivative kernel must be symmetric")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class BoundaryMask:
    active: np.ndarray

    @property
    def k(self) -> int:
        return self.active.shape[0]


def _sym(g: np.ndarray) -> np.ndarray:
    return 0.5 * (g + g.T)


def _values(w) -> np.ndarray:
    return w.values if isinstance(w, StepKernel) else np.asarray(w, dtype=np.float64)


# entropy ------------------------------------------------------------------
def _check_open_unit(a: np.ndarray):
    bad = ~((a > 0.0) & (a < 1.0))
    if bad.any():
        i, j = (int(x) for x in np.argwhere(bad)[0])
        raise DomainError(f"entropy needs values in (0, 1); entry ({i}, {j}) = {float(a[i, j])!r}",
                          (i, j), float(a[i, j]))


def entropy_value(w) -> float:
    a = _values(w)
    _check_open_unit(a)
    h = a * np.log(a) + (1.0 - a) * np.log1p(-a)
    return math.fsum(h.ravel()) / a.size


def entropy_derivative(w) -> DerivativeKernel:
    a = _values(w)
    _check_open_unit(a)
    return DerivativeKernel(_sym(np.log(a) - np.log1p(-a)), w if isinstance(w, StepKernel) else None)


# homomorphism densities ---------------------------------------------------
def _shape(h: SimpleGraph) -> str | None:
    n, m = h.n_vertices, h.m
    if m == 0 or not h.is_connected():
        return None
    deg = h.degrees()
    if m == n and n >= 3 and np.all(deg == 2):
        return "cycle"
    if m == n - 1:
        if deg.max() <= 2:
            return "path"
        if deg.max() == n - 1:
            return "star"
    return None


def _check_motif(h: SimpleGraph) -> str | None:
    shape = _shape(h)
    if shape is None and h.n_vertices > MOTIF_CAP:
        raise ComplexityError(f"motif with {h.n_vertices} vertices exceeds the cap {MOTIF_CAP} "
                              "and is not a path, cycle or star")
    return shape


def _rooted_paths(a: np.ndarray, n: int) -> list[np.ndarray]:
    """``L[j]`` = density of a path with ``j`` vertices rooted at an endpoint."""
    k = a.shape[0]
    out = [None, np.ones(k)]
    for _ in range(2, n + 1):
        out.append(a @ out[-1] / k)
    return out


def _einsum_density(a: np.ndarray, n: int, edges: Sequence[tuple[int, int]],
                    out: tuple[int, ...] = ()) -> np.ndarray:
    k = a.shape[0]
    ops: list = []
    for i, j in edges:
        ops += [a, [i, j]]
    for v in range(n):
        ops += [np.ones(k), [v]]
    res = np.einsum(*ops, list(out), optimize=True)
    return res / float(k) ** (n - len(out))


def hom_density(h: SimpleGraph, w) -> float:
    """``t(H, W)``: average of the edge-weight product over all block maps."""
    a = _values(w)
    k = a.shape[0]
    if h.m == 0:
        return 1.0
    shape = _check_motif(h)
    n = h.n_vertices
    if shape == "cycle":
        return float(np.trace(np.linalg.matrix_power(a / k, n)))
    if shape == "path":
        return float(_rooted_paths(a, n)[n].mean())
    if shape == "star":
        return float(np.mean((a.sum(axis=1) / k) ** (n - 1)))
    return float(_einsum_density(a, n, h.edges))


def hom_derivative(h: SimpleGraph, w) -> DerivativeKernel:
    """Sum over edges ``e`` of the density of ``H - e`` with ``e``'s ends pinned."""
    a = _values(w)
    k = a.shape[0]
    paired = w if isinstance(w, StepKernel) else None
    if h.m == 0:
        return DerivativeKernel(np.zeros_like(a), paired)
    shape = _check_motif(h)
    n = h.n_vertices
    if shape == "cycle":
        phi = n * np.linalg.matrix_power(a, n - 1) / float(k) ** (n - 2)
    elif shape == "path":
        L = _rooted_paths(a, n)
        phi = sum(np.outer(L[j], L[n - j]) for j in range(1, n))
    elif shape == "star":
        d = (a.sum(axis=1) / k) ** (n - 2)
        phi = 0.5 * (n - 1) * (d[:, None] + d[None, :])
    else:
        phi = np.zeros_like(a)
        for e in h.edges:
            rest = [f for f in h.edges if f != e]
            phi = phi + _einsum_density(a, n, rest, e)
    return DerivativeKernel(_sym(phi), paired)


# interaction energy -------------------------------------------------------
def _positive_density(h: SimpleGraph, a: np.ndarray) -> float:
    t = hom_density(h, a)
    if not t > 0:
        raise DomainError(f"interaction energy needs positive densities, t = {t!r}", None, t)
    return t


def interaction_value(inter: Interaction, w) -> float:
    a = _values(w)
    t1 = _positive_density(inter.h1, a)
    t2 = _positive_density(inter.h2, a)
    th = _positive_density(inter.h, a)
    return math.log(t1) + math.log(t2) - 2.0 * math.log(th)


def interaction_derivative(inter: Interaction, w) -> DerivativeKernel:
    a = _values(w)
    parts = []
    for g, c in ((inter.h1, 1.0), (inter.h2, 1.0), (inter.h, -2.0)):
        t = _positive_density(g, a)
        parts.append(c / t * hom_derivative(g, a).values)
    return DerivativeKernel(_sym(parts[0] + parts[1] + parts[2]),
                            w if isinstance(w, StepKernel) else None)


# combinations -------------------------------------------------------------
def _check_box(spec: FunctionalSpec, a: np.ndarray):
    lo, hi = spec.box
    bad = (a < lo) | (a > hi)
    if bad.any():
        i, j = (int(x) for x in np.argwhere(bad)[0])
        raise DomainError(f"entry ({i}, {j}) = {float(a[i, j])!r} lies outside the functional box [{lo}, {hi}]",
                          (i, j), float(a[i, j]))


def term_value(term: Term, a: np.ndarray) -> float:
    kind = term.kind
    if isinstance(kind, Entropy):
        return entropy_value(a)
    if isinstance(kind, Hom):
        return hom_density(kind.graph, a)
    return interaction_value(kind, a)


def term_derivative(term: Term, a: np.ndarray) -> np.ndarray:
    kind = term.kind
    if isinstance(kind, Entropy):
        return entropy_derivative(a).values
    if isinstance(kind, Hom):
        return hom_derivative(kind.graph, a).values
    return interaction_derivative(kind, a).values


def evaluate(spec: FunctionalSpec, w) -> float:
    a = _values(w)
    _check_box(spec, a)
    return math.fsum(t.coef * term_value(t, a) for t in spec.terms)


def derivative(spec: FunctionalSpec, w) -> DerivativeKernel:
    a = _values(w)
    _check_box(spec, a)
    phi = np.zeros_like(a)
    for t in spec.terms:
        phi = phi + t.coef * term_derivative(t, a)
    return DerivativeKernel(_sym(phi), w if isinstance(w, StepKernel) else None)


# boundary handling ----------------------------------------------------------
def boundary_mask(w, phi, box=None, tol: float = BOUNDARY_TOL) -> BoundaryMask:
    """Entries where a descent step ``-phi`` can move without leaving the box."""
    a = _values(w)
    p = phi.values if isinstance(phi, DerivativeKernel) else np.asarray(phi)
    if box is None:
        box = w.box if isinstance(w, StepKernel) else (-1.0, 1.0)
    lo, hi = box
    at_hi = a >= hi - tol
    at_lo = a <= lo + tol
    active = (~at_hi & ~at_lo) | (at_hi & (p > 0)) | (at_lo & (p < 0))
    return BoundaryMask(active)


def local_slope(spec: FunctionalSpec, w) -> float:
    phi = derivative(spec, w)
    mask = boundary_mask(w, phi, spec.box)
    return float(np.linalg.norm(np.where(mask.active, phi.values, 0.0))) / phi.k


# semiconvexity --------------------------------------------------------------
@dataclass(frozen=True)
class Semiconvexity:
    """Lower bound ``value`` on the semiconvexity modulus.

    ``value`` uses the sharper edge-count bound for density terms, ``coarse``
    the bound ``-k_H^2 (k_H - 1)^2 / 2``.  Both are None when some term has no
    known constant; those terms are listed in ``unknown``.
    """

    value: float | None
    coarse: float | None
    unknown: tuple[str, ...] = field(default=())

    @property
    def convex(self) -> bool:
        return self.value is not None and self.value >= 0


def semiconvexity(spec: FunctionalSpec) -> Semiconvexity:
    sharp = coarse = 0.0
    unknown = []
    lo, hi = spec.box
    for i, t in enumerate(spec.terms):
        kind, c = t.kind, t.coef
        if isinstance(kind, Entropy):
            if c >= 0:
                lam = 4.0 * c
            else:
                # h'' = 1 / (p (1 - p)) is largest at the box edge farthest from 1/2
                p = lo if abs(lo - 0.5) >= abs(hi - 0.5) else hi
                lam = c / (p * (1.0 - p))
            sharp += lam
            coarse += lam
        elif isinstance(kind, Hom):
            kh, m = kind.graph.n_vertices, kind.graph.m
            sharp -= abs(c) * m * kh * (kh - 1)
            coarse -= abs(c) * kh ** 2 * (kh - 1) ** 2 / 2.0
        else:
            if kind.lam is None or c < 0:
                unknown.append(f"term {i}: interaction")
            else:
                sharp += c * kind.lam
                coarse += c * kind.lam
    if unknown:
        return Semiconvexity(None, None, tuple(unknown))
    return Semiconvexity(sharp, coarse)


def semiconvexity_constant(spec: FunctionalSpec) -> float | None:
    return semiconvexity(spec).value
