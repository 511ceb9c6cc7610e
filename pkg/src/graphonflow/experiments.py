"""Experiment recipes behind the ``mantel``, ``entropy-rate`` and
``convergence`` subcommands.  Each returns an :class:`ExperimentReport`."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .flow import FlowConfig, convergence_study, l2_distance, run_flow
from .functionals import Entropy, FunctionalSpec, Hom, Term, hom_density, semiconvexity_constant
from .io import write_kernel_csv, write_pgm, write_trajectory_csv
from .kernel import SimpleGraph, StepKernel, random_kernel
from .metrics import SearchConfig, delta_cut_heuristic

MANTEL_PANELS = (1000, 1500, 2500, 5000, 10000)


@dataclass
class ExperimentReport:
    command: str
    config: dict
    metrics: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def check(self, name: str, value, op: str, threshold: float, note: str | None = None) -> bool | None:
        """Record a verdict; ``value=None`` means not applicable."""
        if value is None:
            passed = None
        elif op == "<=":
            passed = bool(value <= threshold)
        elif op == ">=":
            passed = bool(value >= threshold)
        else:
            raise ValueError(f"unknown comparison {op!r}")
        entry = {"name": name, "value": value, "op": op, "threshold": threshold, "passed": passed}
        if note:
            entry["note"] = note
        self.verdicts.append(entry)
        return passed

    @property
    def passed(self) -> bool:
        return all(v["passed"] is not False for v in self.verdicts)

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "metrics": self.metrics,
                "verdicts": self.verdicts, "timings": self.timings, "tables": self.tables,
                "passed": self.passed}

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def report_schema() -> dict:
    text = resources.files("graphonflow").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def mantel_spec(alpha: float = 0.1) -> FunctionalSpec:
    return FunctionalSpec((Term(1.0, Hom(SimpleGraph.triangle())), Term(-alpha, Hom(SimpleGraph.edge()))),
                          (0.0, 1.0))


def bipartite_kernel(k: int) -> StepKernel:
    """Value 1 between the two halves of the blocks, 0 within them."""
    if k % 2:
        raise ValueError("bipartite target needs an even number of blocks")
    a = np.zeros((k, k))
    a[: k // 2, k // 2:] = 1.0
    a[k // 2:, : k // 2] = 1.0
    return StepKernel(a, (0.0, 1.0))


def mantel(seeds: Sequence[int] = (0, 1, 2, 3, 4), k: int = 128, tau: float = 1e-3,
           steps: int = 10_000, record_every: int = 100, panels: Sequence[int] = MANTEL_PANELS,
           alpha: float = 0.1, out_dir=None, search: SearchConfig | None = None,
           t_max: float = 0.01, dcut_max: float = 0.05) -> ExperimentReport:
    """Minimize ``T_triangle - alpha * T_edge`` by forward Euler from i.i.d. uniform kernels."""
    spec = mantel_spec(alpha)
    rep = ExperimentReport("mantel", {"seeds": list(seeds), "k": k, "tau": tau, "steps": steps,
                                      "record_every": record_every, "panels": list(panels),
                                      "alpha": alpha, "box": [0.0, 1.0], "init": "iid-uniform-symmetrized"})
    target = bipartite_kernel(k)
    per_seed = {}
    good = 0
    for seed in seeds:
        t0 = time.perf_counter()
        w0 = random_kernel(k, np.random.default_rng(seed))
        traj = run_flow(spec, w0, FlowConfig(tau=tau, n_steps=steps, record_every=record_every,
                                             keep_kernels=False, seed=seed), extra_steps=panels)
        t1 = time.perf_counter()
        if traj.error is not None:
            raise traj.error
        final = traj.kernels[-1]
        cfg = search or SearchConfig(restarts=2, cut_budget=200, seed=seed)
        est = delta_cut_heuristic(final, target, cfg)
        t2 = time.perf_counter()
        tri = hom_density(SimpleGraph.triangle(), final)
        edge = hom_density(SimpleGraph.edge(), final)
        per_seed[str(seed)] = {"T_triangle": tri, "T_edge": edge, "f_final": traj.f_values[-1],
                               "delta_cut_upper": est.upper_bound, "delta_cut_lower": est.lower_bound}
        ok_t = rep.check(f"seed {seed}: final T_triangle", tri, "<=", t_max)
        ok_d = rep.check(f"seed {seed}: delta_cut to bipartite", est.upper_bound, "<=", dcut_max)
        good += bool(ok_t and ok_d)
        rep.timings[f"seed_{seed}_flow_s"] = t1 - t0
        rep.timings[f"seed_{seed}_metric_s"] = t2 - t1
        if out_dir is not None:
            d = Path(out_dir) / f"seed_{seed}"
            d.mkdir(parents=True, exist_ok=True)
            write_trajectory_csv(d / "trajectory.csv", traj)
            write_pgm(d / "panel_00000.pgm", w0.values, 0.0, 1.0)
            for n, w in zip(traj.steps, traj.kernels):
                if n in panels:
                    write_pgm(d / f"panel_{n:05d}.pgm", w.values, 0.0, 1.0)
            write_kernel_csv(d / "final_kernel.csv", final)
    need = math.ceil(0.8 * len(seeds))
    rep.metrics = {"per_seed": per_seed, "seeds_passing": good, "seeds_required": need}
    rep.check("seeds meeting both thresholds", good, ">=", need)
    if out_dir is not None:
        rep.write(out_dir)
    return rep


def _fit_rate(times: np.ndarray, dist: np.ndarray, window: tuple[float, float]) -> float | None:
    sel = (times >= window[0]) & (times <= window[1]) & (dist > 0)
    if sel.sum() < 2:
        return None
    slope = np.polyfit(times[sel], np.log(dist[sel]), 1)[0]
    return float(-slope)


def entropy_rate(k: int = 32, w0: float = 0.3, tau: float = 1e-4, steps: int = 20_000,
                 record_every: int = 100, window: tuple[float, float] = (0.0, 2.0),
                 eps: float = 1e-9, slack: float = 0.05, rate_min: float = 3.95,
                 rate_max: float = 4.3, out_dir=None) -> ExperimentReport:
    """Entropy flow from a constant kernel; exponential rate of ``d2(W_t, 1/2)``."""
    spec = FunctionalSpec((Term(1.0, Entropy()),), (eps, 1.0 - eps))
    lam = semiconvexity_constant(spec)
    rep = ExperimentReport("entropy-rate", {"k": k, "w0": w0, "tau": tau, "steps": steps,
                                            "record_every": record_every, "window": list(window),
                                            "box": [eps, 1.0 - eps], "lambda": lam})
    t0 = time.perf_counter()
    traj = run_flow(spec, StepKernel.constant(w0, k, spec.box),
                    FlowConfig(tau=tau, n_steps=steps, record_every=record_every))
    if traj.error is not None:
        raise traj.error
    rep.timings["flow_s"] = time.perf_counter() - t0
    half = StepKernel.constant(0.5, k, spec.box)
    times = np.array(traj.times)
    dist = np.array([l2_distance(w, half) for w in traj.kernels])
    rate = _fit_rate(times, dist, window)
    if dist[0] > 0:
        ratio = float(np.max(dist / (np.exp(-lam * times) * dist[0])))
    else:
        ratio = None
    rep.metrics = {"fitted_rate": rate, "max_bound_ratio": ratio, "d2_initial": float(dist[0]),
                   "d2_final": float(dist[-1])}
    na = "distance is identically zero" if rate is None else None
    rep.check("fitted decay rate", rate, ">=", rate_min, na)
    rep.check("fitted decay rate", rate, "<=", rate_max, na)
    rep.check("d2(W_t, 1/2) / (exp(-lambda t) d2(W_0, 1/2))", ratio, "<=", 1.0 + slack, na)
    rep.tables["distance"] = [[float(t), float(d)] for t, d in zip(times, dist)]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(Path(out_dir) / "trajectory.csv", traj)
        rep.write(out_dir)
    return rep


def _ref_kernel(k: int) -> StepKernel:
    return StepKernel.from_function(lambda x, y: 0.25 + 0.5 * x * y, k, (0.0, 1.0))


def convergence(ks: Sequence[int] = (8, 16, 32, 64), ref_size: int = 128,
                t_checks: Sequence[float] = (0.1, 0.5, 1.0), tau: float = 1e-3,
                eps: float = 1e-9, max_inversions: int = 1, out_dir=None,
                search: SearchConfig | None = None) -> ExperimentReport:
    """Entropy flows from block averages of ``0.25 + 0.5 x y`` against the finest run."""
    spec = FunctionalSpec((Term(1.0, Entropy()),), (eps, 1.0 - eps))
    rep = ExperimentReport("convergence", {"ks": list(ks), "ref_size": ref_size,
                                           "t_checks": list(t_checks), "tau": tau,
                                           "reference": "0.25 + 0.5*x*y"})
    w_ref = _ref_kernel(ref_size)
    steps = int(round(max(t_checks) / tau))
    t0 = time.perf_counter()
    rows = convergence_study(spec, w_ref, ks, t_checks, FlowConfig(tau=tau, n_steps=max(steps, 1)), search)
    rep.timings["study_s"] = time.perf_counter() - t0
    table = {(k, t): d for k, t, d in rows}
    inversions = 0
    for t in t_checks:
        for a, b in zip(ks, ks[1:]):
            if table[(b, t)] > table[(a, t)]:
                inversions += 1
    rep.tables["distances"] = [[k, t, d] for k, t, d in rows]
    rep.metrics = {"inversions": inversions}
    rep.check("inversions of monotone decrease in k", inversions, "<=", max_inversions)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["k,t,delta_cut_upper"] + [f"{k},{t!r},{d!r}" for k, t, d in rows]
        (out / "convergence.csv").write_text("\n".join(lines) + "\n")
        rep.write(out)
    return rep
