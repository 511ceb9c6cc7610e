"""Gradient-flow integrators on step kernels.

Time is graphon time: one forward step moves ``W -> W - tau * phi`` where
``phi`` is the derivative kernel (``k^2`` times the matrix gradient), so runs at
different resolutions share a time axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, GraphonError
from .functionals import (FunctionalSpec, boundary_mask, derivative, evaluate,
                          local_slope, semiconvexity_constant)
from .kernel import StepKernel, resample
from .metrics import SearchConfig, delta_cut_heuristic
from .parallel import pmap

FORWARD = "forward"
IMPLICIT = "implicit"


@dataclass(frozen=True)
class InnerConfig:
    """Projected Barzilai-Borwein solver used by the implicit step."""

    max_iter: int = 10_000
    tol: float = 1e-10
    armijo: float = 1e-4
    max_backtracks: int = 60


@dataclass(frozen=True)
class FlowConfig:
    scheme: str = FORWARD
    tau: float = 1e-3
    n_steps: int = 1
    record_every: int = 1
    inner: InnerConfig = field(default_factory=InnerConfig)
    seed: int = 0
    keep_kernels: bool = True

    def __post_init__(self):
        if self.scheme not in (FORWARD, IMPLICIT):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigError("tau must be positive")
        if self.n_steps < 1 or self.record_every < 1:
            raise ConfigError("n_steps and record_every must be >= 1")

    def check_well_posed(self, spec: FunctionalSpec):
        if self.scheme != IMPLICIT:
            return
        lam = semiconvexity_constant(spec)
        if lam is not None and lam < 0 and not self.tau < -1.0 / lam:
            raise ConfigError(f"implicit step needs tau < -1/lambda = {-1.0 / lam:g}, got {self.tau:g}")


@dataclass
class FlowTrajectory:
    times: list = field(default_factory=list)
    kernels: list = field(default_factory=list)
    f_values: list = field(default_factory=list)
    slopes: list = field(default_factory=list)
    step_residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = True
    error: GraphonError | None = None

    def __len__(self):
        return len(self.times)

    def record(self, step, t, w, f, slope, res, keep=True):
        self.steps.append(step)
        self.times.append(t)
        self.kernels.append(w if keep else None)
        self.f_values.append(f)
        self.slopes.append(slope)
        self.step_residuals.append(res)


class ImplicitResult(NamedTuple):
    kernel: StepKernel
    residual: float
    converged: bool
    iterations: int


def _check_in_box(spec: FunctionalSpec, w: StepKernel):
    lo, hi = spec.box
    if w.values.min() < lo or w.values.max() > hi:
        raise ConfigError(f"initial kernel leaves the functional box [{lo}, {hi}]")


def _forward(spec: FunctionalSpec, a: np.ndarray, tau: float) -> tuple[np.ndarray, float]:
    lo, hi = spec.box
    phi = derivative(spec, a)
    mask = boundary_mask(a, phi, spec.box)
    raw = a - tau * np.where(mask.active, phi.values, 0.0)
    out = np.clip(raw, lo, hi)
    return out, float(np.abs(raw - out).max())


def forward_step(spec: FunctionalSpec, w: StepKernel, tau: float) -> StepKernel:
    """One explicit Euler step with boundary mask and clipping to the box."""
    if tau <= 0:
        raise ConfigError("tau must be positive")
    return StepKernel(_forward(spec, w.values, tau)[0], spec.box)


def _prox(spec: FunctionalSpec, a: np.ndarray, tau: float, inner: InnerConfig):
    lo, hi = spec.box
    k = a.shape[0]
    scale = 1.0 / (k * k)

    def phi_of(x):
        return derivative(spec, x).values

    def energy(x):
        return evaluate(spec, x) + scale * float(np.sum((x - a) ** 2)) / (2.0 * tau)

    def residual(x, g):
        return float(np.linalg.norm(x - np.clip(x - g, lo, hi))) / k

    x = a.copy()
    g = phi_of(x)
    phi_x = energy(x)
    res = residual(x, g)
    alpha = tau
    it = 0
    while res > inner.tol and it < inner.max_iter:
        it += 1
        for _ in range(inner.max_backtracks):
            xn = np.clip(x - alpha * g, lo, hi)
            d = xn - x
            try:
                en = energy(xn)
            except GraphonError:
                alpha *= 0.5
                continue
            if en <= phi_x + inner.armijo * scale * float(np.sum(g * d)):
                break
            alpha *= 0.5
        else:
            break
        gn = phi_of(xn) + (xn - a) / tau
        s, y = xn - x, gn - g
        sy = float(np.sum(s * y))
        alpha = float(np.sum(s * s)) / sy if sy > 0 else tau
        alpha = min(max(alpha, 1e-6 * tau), 1e6 * tau)
        x, g, phi_x = xn, gn, en
        res = residual(x, g)
        if not np.any(d):
            break
    x = 0.5 * (x + x.T)
    return x, res, res <= inner.tol, it


def implicit_step(spec: FunctionalSpec, w: StepKernel, tau: float,
                  inner: InnerConfig | None = None) -> ImplicitResult:
    """Resolvent step: argmin over the box of ``f(X) + ||X - W||_2^2 / (2 tau)``.

    Solved by projected gradient with Barzilai-Borwein steps and Armijo
    backtracking started at ``X = W``.  The coupling is fixed to the identity.
    ``residual`` is the L2 norm of the projected gradient at the returned point.
    """
    if tau <= 0:
        raise ConfigError("tau must be positive")
    inner = inner or InnerConfig()
    # first-order condition: g = phi + (X - W) / tau, projected onto the box
    x, res, ok, it = _prox(spec, w.values, tau, inner)
    return ImplicitResult(StepKernel(x, spec.box), res, ok, it)


def run_flow(spec: FunctionalSpec, w0: StepKernel, cfg: FlowConfig,
             extra_steps: Sequence[int] = ()) -> FlowTrajectory:
    """Iterate the chosen scheme ``cfg.n_steps`` times.

    Snapshots are taken at step 0, every ``record_every`` steps, at each step
    in ``extra_steps`` and at the last step.  A library error stops the run;
    the partial trajectory is returned with ``error`` set.
    """
    _check_in_box(spec, w0)
    cfg.check_well_posed(spec)
    traj = FlowTrajectory()
    a = np.array(w0.values)
    w = StepKernel(a, spec.box)
    traj.record(0, 0.0, w, evaluate(spec, w), local_slope(spec, w), 0.0, True)
    worst = 0.0
    extra = set(extra_steps)
    for n in range(1, cfg.n_steps + 1):
        try:
            if cfg.scheme == FORWARD:
                a, res = _forward(spec, a, cfg.tau)
            else:
                a, res, ok, _ = _prox(spec, a, cfg.tau, cfg.inner)
                traj.converged &= ok
            worst = max(worst, res)
            if n % cfg.record_every == 0 or n == cfg.n_steps or n in extra:
                w = StepKernel(a, spec.box)
                keep = cfg.keep_kernels or n == cfg.n_steps or n in extra
                traj.record(n, n * cfg.tau, w, evaluate(spec, w), local_slope(spec, w), worst, keep)
                worst = 0.0
        except GraphonError as exc:
            traj.error = exc
            break
    return traj


def l2_distance(u: StepKernel, v: StepKernel) -> float:
    """Identity-coupled graphon L2 distance."""
    if u.k != v.k:
        raise ConfigError(f"size mismatch {u.k} vs {v.k}")
    return float(np.linalg.norm(u.values - v.values)) / u.k


def evi_residual(spec: FunctionalSpec, traj: FlowTrajectory, v: StepKernel, lam: float) -> list[float]:
    """Forward-difference residuals of the evolution variational inequality.

    ``r_i = (d_{i+1}^2 - d_i^2) / (2 dt) + lam/2 d_i^2 + f(W_i) - f(V)`` with
    identity-coupled distances; valid flows give ``r_i <= 0`` up to O(dt).
    """
    kernels = traj.kernels
    if any(w is None for w in kernels):
        raise ConfigError("trajectory was recorded without kernel snapshots")
    fv = evaluate(spec, v)
    d2 = [l2_distance(w, v) ** 2 for w in kernels]
    out = []
    for i in range(len(kernels) - 1):
        dt = traj.times[i + 1] - traj.times[i]
        out.append((d2[i + 1] - d2[i]) / (2.0 * dt) + 0.5 * lam * d2[i] + traj.f_values[i] - fv)
    return out


def _snapshots_at(spec, w0, cfg: FlowConfig, t_checks) -> dict[float, StepKernel]:
    steps = {t: int(round(t / cfg.tau)) for t in t_checks}
    last = max(steps.values())
    out = {}
    a = np.array(w0.values)
    if 0 in steps.values():
        out.update({t: StepKernel(a, spec.box) for t, s in steps.items() if s == 0})
    for n in range(1, last + 1):
        if cfg.scheme == FORWARD:
            a, _ = _forward(spec, a, cfg.tau)
        else:
            a = _prox(spec, a, cfg.tau, cfg.inner)[0]
        for t, s in steps.items():
            if s == n:
                out[t] = StepKernel(a, spec.box)
    return out


def convergence_study(spec: FunctionalSpec, w_ref: StepKernel, ks: Sequence[int],
                      t_checks: Sequence[float], cfg: FlowConfig,
                      search: SearchConfig | None = None) -> list[tuple[int, float, float]]:
    """Cut distance between coarse flows and the flow at the reference resolution.

    Each coarse run starts from ``w_ref`` block-averaged to ``k`` blocks.
    Returns rows ``(k, t, upper bound of the cut distance)``.
    """
    search = search or SearchConfig(restarts=1, cut_restarts=2, cut_budget=50)
    _check_in_box(spec, w_ref)
    cfg.check_well_posed(spec)
    ref = _snapshots_at(spec, w_ref, cfg, t_checks)

    def run(k):
        snaps = _snapshots_at(spec, resample(w_ref, k), cfg, t_checks)
        return [(k, t, delta_cut_heuristic(snaps[t], ref[t], search).upper_bound) for t in t_checks]

    rows = []
    for part in pmap(run, list(ks)):
        rows.extend(part)
    return rows
