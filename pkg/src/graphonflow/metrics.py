"""Cut norm, cut distance and invariant L2 distance between step kernels.

At block resolution the supremum over measurable rectangles becomes a max over
pairs of block subsets, and the infimum over relabelings becomes a min over
simultaneous block permutations of the common blow-up.

Permutation convention: an :class:`Alignment` with permutation ``p`` compares
``U`` against ``permute(V, p)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SizeLimitError
from .kernel import MAX_KERNEL_SIZE, Permutation, StepKernel, permute_matrix, to_common_size
from .parallel import pmap

EXACT_CUT_CAP = 20
BRUTE_FORCE_CAP = 8
_CHUNK = 1 << 13


@dataclass(frozen=True)
class Alignment:
    perm: Permutation
    achieved_value: float
    is_exact: bool = False

    def __post_init__(self):
        if not self.achieved_value >= 0:
            raise ConfigError(f"achieved value must be >= 0, got {self.achieved_value}")


@dataclass(frozen=True)
class MetricEstimate:
    """Certified bracket ``lower_bound <= d <= upper_bound``.

    ``size`` is the common block resolution used for the comparison and
    ``exact_size`` is False when the inputs had to be resampled onto it.
    """

    lower_bound: float
    upper_bound: float
    alignment: Alignment
    size: int = 0
    exact_size: bool = True
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0 <= self.lower_bound <= self.upper_bound):
            raise ConfigError(f"invalid bracket [{self.lower_bound}, {self.upper_bound}]")


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for the permutation searches.

    ``anneal_steps`` proposals per restart with temperature multiplied by
    ``cooling`` after each one; ``cut_budget`` caps the number of cut-norm
    evaluations spent on swap moves in the cut-distance search.
    """

    restarts: int = 20
    seed: int = 0
    cooling: float = 0.995
    anneal_steps: int = 1500
    exact_cap: int = EXACT_CUT_CAP
    cut_restarts: int = 8
    cut_budget: int = 4000
    max_size: int = MAX_KERNEL_SIZE
    fallback_size: int | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if not 0 < self.cooling < 1:
            raise ConfigError("cooling factor must lie in (0, 1)")


def _matrix(w) -> np.ndarray:
    return w.values if isinstance(w, StepKernel) else np.asarray(w, dtype=np.float64)


# cut norm -----------------------------------------------------------------
def _subset_value(a: np.ndarray, s: np.ndarray) -> float:
    """Best rectangle value for fixed row set ``s``, summed with ``math.fsum``.

    fsum is correctly rounded, so the result depends only on the rectangle and
    not on the search path that produced ``s``.
    """
    rows = a[s]
    if rows.shape[0] == 0:
        return 0.0
    col = np.array([math.fsum(rows[:, j]) for j in range(a.shape[1])])
    pos = math.fsum(rows[:, col > 0].ravel())
    neg = -math.fsum(rows[:, col < 0].ravel())
    return max(pos, neg, 0.0) / (a.shape[0] * a.shape[1])


def _fast_values(a: np.ndarray, bits: np.ndarray) -> np.ndarray:
    c = bits @ a
    return np.maximum(np.where(c > 0, c, 0.0).sum(axis=1), -np.where(c < 0, c, 0.0).sum(axis=1))


def _exact_cut(a: np.ndarray) -> tuple[float, np.ndarray]:
    k = a.shape[0]
    shifts = np.arange(k, dtype=np.int64)
    tol = 1e-9 * (np.abs(a).sum() + 1.0)
    best = -np.inf
    cands: list[np.ndarray] = []
    for start in range(0, 1 << k, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, 1 << k), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(np.float64)
        v = _fast_values(a, bits)
        top = v.max()
        if top > best:
            best = top
            cands = [(m, v_) for m, v_ in cands if v_.max() >= best - tol]
        keep = v >= best - tol
        if keep.any():
            cands.append((masks[keep], v[keep]))
    masks = np.concatenate([m for m, _ in cands])
    vals = np.concatenate([v for _, v in cands])
    sel = vals >= best - tol
    masks, vals = masks[sel], vals[sel]
    order = np.lexsort((masks, -vals))[:4096]
    best_val, best_mask = -1.0, None
    for m in np.sort(masks[order]):
        s = ((m >> shifts) & 1).astype(bool)
        val = _subset_value(a, s)
        if val > best_val:
            best_val, best_mask = val, s
    return best_val, best_mask


def cut_norm_exact(w, cap: int = EXACT_CUT_CAP) -> float:
    """Exact block cut norm by enumerating all row subsets (``k <= cap``)."""
    a = _matrix(w)
    if a.shape[0] > cap:
        raise SizeLimitError(f"exact cut norm refuses k={a.shape[0]} > cap {cap}; use the heuristic")
    return _exact_cut(a)[0]


def cut_norm_pairs_bruteforce(w) -> float:
    """Oracle: max over all subset pairs (S, T) of |sum| / k^2.  k <= 10."""
    a = _matrix(w)
    k = a.shape[0]
    if k > 10:
        raise SizeLimitError("pair brute force is limited to k <= 10")
    bits = np.array(list(itertools.product((0.0, 1.0), repeat=k)))
    return float(np.abs(bits @ a @ bits.T).max()) / (k * k)


def _local_cut(a: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Alternating maximization followed by single-flip moves."""
    s = s.copy()
    while True:
        for _ in range(100):
            c = s.astype(np.float64) @ a
            sign = 1.0 if np.where(c > 0, c, 0).sum() >= -np.where(c < 0, c, 0).sum() else -1.0
            t = sign * c > 0
            r = sign * a[:, t].sum(axis=1)
            new = r > 0
            old_val = sign * c[t].sum()
            new_val = r[new].sum()
            if new_val <= old_val + 1e-13 * (1 + abs(old_val)) or np.array_equal(new, s):
                break
            s = new
        c = s.astype(np.float64) @ a
        cur = max(np.where(c > 0, c, 0).sum(), -np.where(c < 0, c, 0).sum())
        flip = np.where(s, -1.0, 1.0)
        trial = c[None, :] + flip[:, None] * a
        vals = np.maximum(np.where(trial > 0, trial, 0).sum(axis=1),
                          -np.where(trial < 0, trial, 0).sum(axis=1))
        i = int(np.argmax(vals))
        if vals[i] <= cur + 1e-12 * (1 + abs(cur)):
            return s
        s[i] = not s[i]


def _cut_search(a: np.ndarray, restarts: int, seed: int) -> tuple[float, np.ndarray]:
    k = a.shape[0]
    rows = a.sum(axis=1)
    starts = [np.ones(k, bool), rows > 0, rows < 0]
    if k > 1:
        evals, evecs = np.linalg.eigh(a)
        for idx in np.argsort(-np.abs(evals), kind="stable")[:2]:
            starts += [evecs[:, idx] > 0, evecs[:, idx] < 0]
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        starts.append(rng.random(k) < 0.5)
    best_val, best_s = -1.0, None
    for s0 in starts:
        s = _local_cut(a, s0)
        val = _subset_value(a, s)
        if val > best_val:
            best_val, best_s = val, s
    return best_val, best_s


def cut_norm_heuristic(w, restarts: int = 20, seed: int = 0,
                       cap: int = EXACT_CUT_CAP) -> MetricEstimate:
    """Local search for the cut norm.

    ``lower_bound`` is the best rectangle found.  The upper bound is the exact
    value when ``k <= cap`` and ``sum|values| / k^2`` otherwise.
    """
    if restarts < 1:
        raise ConfigError("restarts must be >= 1")
    a = _matrix(w)
    k = a.shape[0]
    lower, _ = _cut_search(a, restarts, seed)
    if k <= cap:
        upper = cut_norm_exact(a, cap)
        exact = upper == lower
    else:
        upper = math.fsum(np.abs(a).ravel()) / (k * k)
        exact = False
    upper = max(upper, lower)
    return MetricEstimate(lower, upper, Alignment(Permutation.identity(k), lower, exact), k, True)


def _cut_value(a: np.ndarray, cfg: SearchConfig, exact_below: int = 10) -> float:
    if a.shape[0] <= exact_below:
        return _exact_cut(a)[0]
    return _cut_search(a, cfg.cut_restarts, cfg.seed)[0]


# permutation helpers ------------------------------------------------------
def _common(u, v, cfg: SearchConfig):
    if not (isinstance(u, StepKernel) and isinstance(v, StepKernel)):
        raise ConfigError("metrics expect StepKernel inputs")
    uu, vv, exact = to_common_size(u, v, cfg.max_size, cfg.fallback_size)
    return uu.values, vv.values, uu.k, exact


def _align(q: np.ndarray) -> Permutation:
    """``b[q][:, q] == permute_matrix(b, _align(q))``."""
    return Permutation(np.argsort(q))


def _l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b)) / a.shape[0]


def _degree_order(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    q = np.empty(a.shape[0], dtype=np.int64)
    q[np.argsort(a.sum(axis=1), kind="stable")] = np.argsort(b.sum(axis=1), kind="stable")
    return q


def _all_perms(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


# invariant L2 distance -----------------------------------------------------
def delta2_bruteforce(u: StepKernel, v: StepKernel, max_size: int = MAX_KERNEL_SIZE) -> Alignment:
    """Exact minimum over all ``n!`` permutations of the common blow-up, ``n <= 8``."""
    a, b, n, _ = _common(u, v, SearchConfig(max_size=max_size))
    if n > BRUTE_FORCE_CAP:
        raise SizeLimitError(f"brute force needs n <= {BRUTE_FORCE_CAP}, got {n}")
    perms = _all_perms(n)
    best, best_q = np.inf, None
    for start in range(0, len(perms), 5040):
        qs = perms[start:start + 5040]
        d = ((a[None] - b[qs[:, :, None], qs[:, None, :]]) ** 2).sum(axis=(1, 2))
        i = int(np.argmin(d))
        if d[i] < best:
            best, best_q = d[i], qs[i]
    return Alignment(_align(best_q), _l2(a, b[np.ix_(best_q, best_q)]), True)


def _swap_gain(a, bq, r, s) -> float:
    """Change of ``sum(a * bq)`` when blocks ``r`` and ``s`` of ``bq`` trade places."""
    da = a[r] - a[s]
    db = bq[s] - bq[r]
    tot = da @ db - da[r] * db[r] - da[s] * db[s]
    return 2.0 * tot + (a[r, r] - a[s, s]) * (bq[s, s] - bq[r, r])


def swap_gain_matrix(a: np.ndarray, bq: np.ndarray) -> np.ndarray:
    """All pairwise swap gains at once (entry ``[r, s]``)."""
    m = a @ bq
    d = np.diag(m)
    full = m + m.T - d[:, None] - d[None, :]
    ad, bd = np.diag(a), np.diag(bq)
    t_r = (ad[:, None] - a) * (bq - bd[:, None])
    t_s = (a - ad[None, :]) * (bd[None, :] - bq)
    g = 2.0 * (full - t_r - t_s) + (ad[:, None] - ad[None, :]) * (bd[None, :] - bd[:, None])
    np.fill_diagonal(g, 0.0)
    return g


def _swap(q, bq, r, s):
    q[[r, s]] = q[[s, r]]
    bq[[r, s], :] = bq[[s, r], :]
    bq[:, [r, s]] = bq[:, [s, r]]


def _two_opt(a, b, q):
    q = q.copy()
    bq = b[np.ix_(q, q)]
    n = len(q)
    iu = np.triu_indices(n, 1)
    scale = 1e-12 * (np.abs(a).sum() * np.abs(b).max() + 1e-300)
    while n > 1:
        g = swap_gain_matrix(a, bq)[iu]
        i = int(np.argmax(g))
        if g[i] <= scale:
            break
        _swap(q, bq, iu[0][i], iu[1][i])
    return q


def _anneal(a, b, q, rng, cfg: SearchConfig):
    n = len(q)
    if n < 2:
        return q
    q = q.copy()
    bq = b[np.ix_(q, q)]
    pairs = rng.integers(0, n, size=(cfg.anneal_steps + 64, 2))
    probe = [abs(_swap_gain(a, bq, r, s)) for r, s in pairs[:64] if r != s]
    temp = float(np.mean(probe)) if probe else 0.0
    if temp <= 0:
        return q
    best_val, best_q, cur = 0.0, q.copy(), 0.0
    for step, (r, s) in enumerate(pairs[64:]):
        if r != s:
            g = _swap_gain(a, bq, r, s)
            if g >= 0 or rng.random() < math.exp(g / temp):
                _swap(q, bq, r, s)
                cur += g
                if cur > best_val:
                    best_val, best_q = cur, q.copy()
        temp *= cfg.cooling
    return best_q


def _qap_search(a, b, cfg: SearchConfig) -> np.ndarray:
    n = a.shape[0]
    q0 = _two_opt(a, b, _degree_order(a, b))

    def restart(r):
        rng = np.random.default_rng([cfg.seed, r])
        start = q0 if r == 0 else rng.permutation(n)
        return _two_opt(a, b, _anneal(a, b, start, rng, cfg))

    cands = [q0] + pmap(restart, range(cfg.restarts), cfg.workers)
    vals = [_l2(a, b[np.ix_(q, q)]) for q in cands]
    return cands[int(np.argmin(vals))]


def delta2_heuristic(u: StepKernel, v: StepKernel, cfg: SearchConfig | None = None) -> MetricEstimate:
    """Degree-sorted start, annealed swap search and a 2-opt polish.

    The lower bound ``| ||U||_2 - ||V||_2 |`` holds for every relabeling.
    """
    cfg = cfg or SearchConfig()
    a, b, n, exact = _common(u, v, cfg)
    q = _qap_search(a, b, cfg)
    upper = _l2(a, b[np.ix_(q, q)])
    lower = min(abs(np.linalg.norm(a) - np.linalg.norm(b)) / n, upper)
    return MetricEstimate(lower, upper, Alignment(_align(q), upper, False), n, exact)


# cut distance -------------------------------------------------------------
def delta_cut_bruteforce(u: StepKernel, v: StepKernel, max_size: int = MAX_KERNEL_SIZE) -> Alignment:
    """Exact cut distance over all block permutations, ``n <= 7``."""
    a, b, n, _ = _common(u, v, SearchConfig(max_size=max_size))
    if n > 7:
        raise SizeLimitError(f"cut-distance brute force needs n <= 7, got {n}")
    perms = _all_perms(n)
    masks = np.arange(1, 1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(np.float64)
    diff = a[None] - b[perms[:, :, None], perms[:, None, :]]
    c = np.einsum("si,pij->psj", bits, diff)
    vals = np.maximum(np.where(c > 0, c, 0).sum(axis=2), -np.where(c < 0, c, 0).sum(axis=2)).max(axis=1)
    tol = 1e-9 * (np.abs(diff).sum(axis=(1, 2)).max() + 1.0)
    best, best_q = np.inf, None
    for i in np.flatnonzero(vals <= vals.min() + tol):
        q = perms[i]
        val = _exact_cut(a - b[np.ix_(q, q)])[0]
        if val < best:
            best, best_q = val, q
    return Alignment(_align(best_q), best, True)


def _spectral_orders(a, b, count: int = 2) -> list[np.ndarray]:
    out = []
    ea, va = np.linalg.eigh(a)
    eb, vb = np.linalg.eigh(b)
    ia = np.argsort(-np.abs(ea), kind="stable")[:count]
    ib = np.argsort(-np.abs(eb), kind="stable")[:count]
    for i, j in zip(ia, ib):
        oa = np.argsort(va[:, i], kind="stable")
        for sgn in (1.0, -1.0):
            q = np.empty(len(oa), dtype=np.int64)
            q[oa] = np.argsort(sgn * vb[:, j], kind="stable")
            out.append(q)
    return out


def delta_cut_heuristic(u: StepKernel, v: StepKernel, cfg: SearchConfig | None = None,
                        l2_alignment: Alignment | None = None) -> MetricEstimate:
    """Cut distance upper estimate from a candidate pool plus swap search.

    Candidates: identity, the L2 alignment, degree sort, spectral sorts and
    random permutations (small sizes only).  The best few are improved by
    first-improvement swaps with the cut norm of the difference as objective.
    ``upper_bound`` is certified (exact cut norm) only when ``n <= cfg.exact_cap``.
    """
    cfg = cfg or SearchConfig()
    a, b, n, exact = _common(u, v, cfg)
    if l2_alignment is None:
        q2 = _qap_search(a, b, cfg)
    else:
        q2 = l2_alignment.perm.inverse().perm.copy()
    cands = [np.arange(n), q2, _degree_order(a, b)]
    if n > 1:
        cands += _spectral_orders(a, b)
    if n <= 12:
        cands += [np.random.default_rng([cfg.seed, 1000 + r]).permutation(n) for r in range(cfg.restarts)]

    def objective(q):
        return _cut_value(a - b[np.ix_(q, q)], cfg)

    vals = [objective(q) for q in cands]
    budget = cfg.cut_budget
    order = np.argsort(vals, kind="stable")
    keep = len(order) if n <= 12 else min(3, len(order))
    pairs = [(r, s) for r in range(n) for s in range(r + 1, n)]
    rng = np.random.default_rng([cfg.seed, 2000])
    for idx in order[:keep]:
        q, cur = cands[idx].copy(), vals[idx]
        improved = True
        while improved and budget > 0:
            improved = False
            sweep = pairs if len(pairs) <= budget else [pairs[i] for i in rng.choice(len(pairs), budget, replace=False)]
            for r, s in sweep:
                if budget <= 0:
                    break
                q[[r, s]] = q[[s, r]]
                val = objective(q)
                budget -= 1
                if val < cur - 1e-13:
                    cur, improved = val, True
                else:
                    q[[r, s]] = q[[s, r]]
        cands.append(q)
        vals.append(cur)
    best = int(np.argmin(vals))
    q = cands[best]
    d = a - b[np.ix_(q, q)]
    certified = n <= cfg.exact_cap
    upper = _exact_cut(d)[0] if certified else vals[best]
    lower = min(abs(math.fsum(a.ravel()) - math.fsum(b.ravel())) / (n * n), upper)
    return MetricEstimate(lower, upper, Alignment(_align(q), upper, False), n, exact,
                          {"certified_cut_norm": certified})


# geodesics ----------------------------------------------------------------
def geodesic(u: StepKernel, v: StepKernel, a: Alignment, t: float) -> StepKernel:
    """Point ``(1 - t) U + t permute(V, perm)`` on the straight line between aligned kernels."""
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"t must lie in [0, 1], got {t}")
    if u.k != v.k or a.perm.n != u.k:
        raise ConfigError("geodesic needs kernels and alignment at a common size")
    vp = permute_matrix(v.values, a.perm)
    box = (min(u.lo, v.lo), max(u.hi, v.hi))
    if t == 0.0:
        return StepKernel(u.values, box)
    if t == 1.0:
        return StepKernel(vp, box)
    return StepKernel((1.0 - t) * u.values + t * vp, box)
