"""Command-line front end: ``graphonflow <subcommand> ...``.

Every subcommand accepts ``--config file.json`` holding the same parameters
as the flags (dashes replaced by underscores).  Flags override file values.
Exit codes: 0 success, 2 configuration error, 3 domain error, 4 solver did
not converge.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import experiments
from .errors import ConfigError, DomainError, GraphonError, NonConvergenceError
from .flow import FORWARD, IMPLICIT, FlowConfig, run_flow
from .functionals import derivative, evaluate, hom_density, local_slope, semiconvexity
from .io import (format_float, read_functional_spec, read_graph, read_kernel_csv, write_kernel_csv,
                 write_pgm, write_trajectory_csv)
from .metrics import (SearchConfig, delta2_bruteforce, delta2_heuristic,
                      delta_cut_bruteforce, delta_cut_heuristic)
from .sampling import mc_hom_density, sample_graph

log = logging.getLogger("graphonflow")

REQUIRED = object()

# per-command defaults
DEFAULTS = {
    "mantel": {"seeds": [0, 1, 2, 3, 4], "k": 128, "tau": 1e-3, "steps": 10_000,
               "record_every": 100, "alpha": 0.1, "out": "mantel_out"},
    "entropy-rate": {"k": 32, "w0": 0.3, "tau": 1e-4, "steps": 20_000, "record_every": 100,
                     "out": "entropy_rate_out"},
    "convergence": {"ks": [8, 16, 32, 64], "ref_size": 128, "t_checks": [0.1, 0.5, 1.0],
                    "tau": 1e-3, "out": "convergence_out"},
    "flow": {"spec": REQUIRED, "init": REQUIRED, "scheme": FORWARD, "tau": 1e-3, "steps": 100,
             "record_every": 10, "out": "flow_out"},
    "metric": {"kind": "cut", "mode": "heuristic", "a": REQUIRED, "b": REQUIRED, "seed": 0, "restarts": 20,
               "out": None},
    "functional": {"spec": REQUIRED, "kernel": REQUIRED, "what": "value", "out": None},
    "sample": {"kernel": REQUIRED, "k": 10, "n": 1, "seed": 0, "out": "samples.csv"},
    "mc-density": {"graph": REQUIRED, "kernel": REQUIRED, "n": 100_000, "seed": 0},
}
PATH_KEYS = {"spec", "init", "a", "b", "kernel", "graph", "out"}


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional JSON config file and explicit flags."""
    defaults = DEFAULTS[args.command]
    file_vals: dict = {}
    base = Path.cwd()
    if args.config:
        cpath = Path(args.config)
        try:
            file_vals = json.loads(cpath.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {cpath}: {exc}") from exc
        if not isinstance(file_vals, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_vals) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        base = cpath.resolve().parent
    cfg = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            if key in file_vals and file_vals[key] != flag:
                log.warning("%s: flag value %r overrides config file value %r", key, flag, file_vals[key])
            value = flag
            root = Path.cwd()
        elif key in file_vals:
            value, root = file_vals[key], base
        else:
            value, root = default, Path.cwd()
        if value is REQUIRED:
            raise ConfigError(f"missing required parameter {key!r}")
        if key in PATH_KEYS and value is not None:
            value = (root / value).resolve()
        cfg[key] = value
    return cfg


def _emit(record: dict, out):
    text = json.dumps(record, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _finish_report(rep) -> int:
    print(json.dumps({"passed": rep.passed, "metrics": rep.metrics}, indent=2, sort_keys=True))
    return 0


# subcommands ------------------------------------------------------------------
def cmd_mantel(cfg) -> int:
    rep = experiments.mantel(seeds=[int(s) for s in cfg["seeds"]], k=int(cfg["k"]), tau=float(cfg["tau"]),
                             steps=int(cfg["steps"]), record_every=int(cfg["record_every"]),
                             alpha=float(cfg["alpha"]), out_dir=cfg["out"])
    return _finish_report(rep)


def cmd_entropy_rate(cfg) -> int:
    rep = experiments.entropy_rate(k=int(cfg["k"]), w0=float(cfg["w0"]), tau=float(cfg["tau"]),
                                   steps=int(cfg["steps"]), record_every=int(cfg["record_every"]),
                                   out_dir=cfg["out"])
    return _finish_report(rep)


def cmd_convergence(cfg) -> int:
    rep = experiments.convergence(ks=[int(k) for k in cfg["ks"]], ref_size=int(cfg["ref_size"]),
                                  t_checks=[float(t) for t in cfg["t_checks"]], tau=float(cfg["tau"]),
                                  out_dir=cfg["out"])
    return _finish_report(rep)


def cmd_flow(cfg) -> int:
    spec = read_functional_spec(cfg["spec"])
    w0 = read_kernel_csv(cfg["init"])
    fcfg = FlowConfig(scheme=cfg["scheme"], tau=float(cfg["tau"]), n_steps=int(cfg["steps"]),
                      record_every=int(cfg["record_every"]))
    t0 = time.perf_counter()
    traj = run_flow(spec, w0, fcfg)
    elapsed = time.perf_counter() - t0
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", traj)
    lo, hi = spec.box
    for n, w in zip(traj.steps, traj.kernels):
        write_kernel_csv(out / f"kernel_{n:06d}.csv", w)
        write_pgm(out / f"heatmap_{n:06d}.pgm", w.values, lo, hi)
    rep = experiments.ExperimentReport(
        "flow", {k: str(v) if isinstance(v, Path) else v for k, v in cfg.items()},
        {"f_initial": traj.f_values[0], "f_final": traj.f_values[-1], "slope_final": traj.slopes[-1],
         "records": len(traj), "converged": traj.converged,
         "error": None if traj.error is None else str(traj.error)},
        timings={"flow_s": elapsed})
    rep.write(out)
    if traj.error is not None:
        raise traj.error
    if not traj.converged:
        raise NonConvergenceError("implicit inner solver missed its tolerance on at least one step")
    print(json.dumps(rep.metrics, indent=2, sort_keys=True))
    return 0


def cmd_metric(cfg) -> int:
    a, b = read_kernel_csv(cfg["a"]), read_kernel_csv(cfg["b"])
    search = SearchConfig(restarts=int(cfg["restarts"]), seed=int(cfg["seed"]))
    t0 = time.perf_counter()
    if cfg["mode"] == "exact":
        al = delta_cut_bruteforce(a, b) if cfg["kind"] == "cut" else delta2_bruteforce(a, b)
        lower = upper = al.achieved_value
    elif cfg["kind"] == "cut":
        est = delta_cut_heuristic(a, b, search)
        al, lower, upper = est.alignment, est.lower_bound, est.upper_bound
    else:
        est = delta2_heuristic(a, b, search)
        al, lower, upper = est.alignment, est.lower_bound, est.upper_bound
    record = {"kind": cfg["kind"], "mode": cfg["mode"], "lower_bound": lower, "upper_bound": upper,
              "permutation": al.perm.tolist(), "size": al.perm.n,
              "wall_time": time.perf_counter() - t0}
    _emit(record, cfg["out"])
    return 0


def cmd_functional(cfg) -> int:
    spec = read_functional_spec(cfg["spec"])
    w = read_kernel_csv(cfg["kernel"])
    what = cfg["what"]
    if what == "value":
        _emit({"value": evaluate(spec, w)}, cfg["out"])
    elif what == "slope":
        _emit({"slope": local_slope(spec, w)}, cfg["out"])
    elif what == "lambda":
        sc = semiconvexity(spec)
        _emit({"lambda": sc.value, "lambda_coarse": sc.coarse, "unknown": list(sc.unknown)}, cfg["out"])
    else:
        phi = derivative(spec, w).values
        lines = [",".join(format_float(x) for x in row) for row in phi]
        text = "\n".join(lines) + "\n"
        if cfg["out"]:
            Path(cfg["out"]).write_text(text)
        else:
            sys.stdout.write(text)
    return 0


def cmd_sample(cfg) -> int:
    w = read_kernel_csv(cfg["kernel"])
    k, n, seed = int(cfg["k"]), int(cfg["n"]), int(cfg["seed"])
    if n < 1:
        raise ConfigError("--n must be positive")
    rows = ["sample,i,j,latent_i,latent_j,weight"]
    for s in range(n):
        g = sample_graph(w, k, seed=[seed, s] if n > 1 else seed)
        for i in range(k):
            for j in range(i, k):
                rows.append(f"{s},{i + 1},{j + 1},{format_float(g.latents[i])},"
                            f"{format_float(g.latents[j])},{format_float(g.weights[i, j])}")
    Path(cfg["out"]).write_text("\n".join(rows) + "\n")
    return 0


def cmd_mc_density(cfg) -> int:
    h = read_graph(cfg["graph"])
    w = read_kernel_csv(cfg["kernel"])
    mean, se = mc_hom_density(h, w, int(cfg["n"]), int(cfg["seed"]))
    record = {"mean": mean, "stderr": se, "n": int(cfg["n"]), "seed": int(cfg["seed"])}
    try:
        record["exact"] = hom_density(h, w)
    except GraphonError:
        record["exact"] = None
    _emit(record, None)
    return 0


COMMANDS = {
    "mantel": cmd_mantel, "entropy-rate": cmd_entropy_rate, "convergence": cmd_convergence,
    "flow": cmd_flow, "metric": cmd_metric, "functional": cmd_functional, "sample": cmd_sample,
    "mc-density": cmd_mc_density,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphonflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="JSON file with parameters; flags take precedence")
        return sp

    sp = add("mantel", "minimize T_triangle - T_edge/10 by forward Euler (heatmap panels + report)")
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--k", type=int)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--record-every", dest="record_every", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--out")

    sp = add("entropy-rate", "exponential convergence rate of the entropy flow")
    sp.add_argument("--k", type=int)
    sp.add_argument("--w0", type=float, help="constant initial value")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--record-every", dest="record_every", type=int)
    sp.add_argument("--out")

    sp = add("convergence", "cut distance of coarse entropy flows to the finest one")
    sp.add_argument("--ks", type=int, nargs="+")
    sp.add_argument("--ref-size", dest="ref_size", type=int)
    sp.add_argument("--t-checks", dest="t_checks", type=float, nargs="+")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--out")

    sp = add("flow", "integrate the gradient flow of a functional spec")
    sp.add_argument("--spec")
    sp.add_argument("--init")
    sp.add_argument("--scheme", choices=[FORWARD, IMPLICIT])
    sp.add_argument("--tau", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--record-every", dest="record_every", type=int)
    sp.add_argument("--out")

    sp = add("metric", "cut distance or invariant L2 distance between two kernels")
    sp.add_argument("--kind", choices=["cut", "l2"])
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="mode", action="store_const", const="exact")
    mode.add_argument("--heuristic", dest="mode", action="store_const", const="heuristic")
    sp.add_argument("a", nargs="?")
    sp.add_argument("b", nargs="?")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--out")

    sp = add("functional", "value, derivative, local slope or semiconvexity of a functional")
    sp.add_argument("--spec")
    sp.add_argument("--kernel")
    sp.add_argument("--what", choices=["value", "derivative", "slope", "lambda"])
    sp.add_argument("--out")

    sp = add("sample", "sample weighted graphs G_k[W]")
    sp.add_argument("--kernel")
    sp.add_argument("--k", type=int)
    sp.add_argument("--n", type=int, help="number of graphs")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")

    sp = add("mc-density", "Monte-Carlo homomorphism density with standard error")
    sp.add_argument("--graph")
    sp.add_argument("--kernel")
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
