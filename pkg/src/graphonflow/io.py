"""Plain-text kernel/graph files and PGM heatmaps."""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .errors import ConfigError, KernelFormatError
from .kernel import SimpleGraph, StepKernel

_HEADER = re.compile(r"^#\s*graphon\s+k=(\S+)\s+lo=(\S+)\s+hi=(\S+)\s*$")


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_kernel_csv(path, w: StepKernel) -> None:
    lines = [f"# graphon k={w.k} lo={format_float(w.lo)} hi={format_float(w.hi)}"]
    lines += [",".join(format_float(x) for x in row) for row in w.values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_kernel_csv(path, box: tuple[float, float] | None = None) -> StepKernel:
    """Parse a kernel file.

    The header fixes ``k`` and the box; ``box`` overrides the header box.
    Every problem is reported with its 1-based line and column.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise KernelFormatError(f"cannot read kernel file: {exc}", path) from exc
    lines = text.splitlines()
    if not lines:
        raise KernelFormatError("empty kernel file", path, 1)
    m = _HEADER.match(lines[0].strip())
    if m is None:
        raise KernelFormatError("expected header '# graphon k=<k> lo=<lo> hi=<hi>'", path, 1, 1)
    try:
        k = int(m.group(1))
        hdr_box = (float(m.group(2)), float(m.group(3)))
    except ValueError as exc:
        raise KernelFormatError(f"malformed header: {exc}", path, 1) from exc
    if k < 1:
        raise KernelFormatError("k must be positive", path, 1)
    rows = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        tokens = raw.split(",")
        row = []
        for col, tok in enumerate(tokens, start=1):
            try:
                row.append(float(tok))
            except ValueError:
                raise KernelFormatError(f"not a number: {tok.strip()!r}", path, lineno, col) from None
        if len(row) != k:
            raise KernelFormatError(f"expected {k} values, found {len(row)}", path, lineno)
        rows.append((lineno, row))
    if len(rows) != k:
        raise KernelFormatError(f"expected {k} rows, found {len(rows)}", path, len(lines))
    vals = np.array([r for _, r in rows])
    lo, hi = box if box is not None else hdr_box
    for i in range(k):
        for j in range(k):
            if vals[i, j] != vals[j, i]:
                raise KernelFormatError(
                    f"asymmetric entry: {float(vals[i, j])!r} != {float(vals[j, i])!r} at mirror position",
                    path, rows[i][0], j + 1)
            if not (lo <= vals[i, j] <= hi):
                raise KernelFormatError(f"value {float(vals[i, j])!r} outside box [{lo}, {hi}]",
                                        path, rows[i][0], j + 1)
    try:
        return StepKernel(vals, (lo, hi))
    except ConfigError as exc:
        raise KernelFormatError(str(exc), path) from exc


def read_graph(path) -> SimpleGraph:
    """First line ``<nV>``, then one ``<i> <j>`` pair (1-based) per line."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise KernelFormatError(f"cannot read graph file: {exc}", path) from exc
    body = [(n, ln.split()) for n, ln in enumerate(lines, start=1)
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise KernelFormatError("empty graph file", path, 1)
    lineno, first = body[0]
    if len(first) != 1:
        raise KernelFormatError("first line must hold the vertex count", path, lineno)
    try:
        nv = int(first[0])
    except ValueError:
        raise KernelFormatError(f"bad vertex count {first[0]!r}", path, lineno, 1) from None
    edges = []
    for lineno, toks in body[1:]:
        if len(toks) != 2:
            raise KernelFormatError("expected two vertex labels", path, lineno)
        pair = []
        for col, tok in enumerate(toks, start=1):
            try:
                v = int(tok)
            except ValueError:
                raise KernelFormatError(f"bad vertex label {tok!r}", path, lineno, col) from None
            if not 1 <= v <= nv:
                raise KernelFormatError(f"vertex {v} outside 1..{nv}", path, lineno, col)
            pair.append(v - 1)
        edges.append(tuple(pair))
    try:
        return SimpleGraph(nv, tuple(edges))
    except ConfigError as exc:
        raise KernelFormatError(str(exc), path) from exc


def write_graph(path, h: SimpleGraph) -> None:
    lines = [str(h.n_vertices)] + [f"{i + 1} {j + 1}" for i, j in h.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def heatmap_bytes(values: np.ndarray, lo: float, hi: float) -> bytes:
    """8-bit grey levels ``round(255 * (v - lo) / (hi - lo))``, halves rounded up."""
    scaled = 255.0 * (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8).tobytes()


def write_pgm(path, values: np.ndarray, lo: float, hi: float) -> None:
    h, w = np.asarray(values).shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + heatmap_bytes(values, lo, hi))


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5" or parts[2] != b"255":
        raise KernelFormatError("not an 8-bit binary PGM", path, 1)
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# functional specs -------------------------------------------------------------
_BUILTIN = re.compile(r"^(edge|triangle|path|cycle|star|complete)(\d*)$")


def builtin_graph(name: str) -> SimpleGraph | None:
    """``edge``, ``triangle``, ``path3``, ``cycle4``, ``star4``, ``complete4`` ..."""
    m = _BUILTIN.match(name.strip().lower())
    if m is None:
        return None
    kind, num = m.group(1), m.group(2)
    if kind in ("edge", "triangle"):
        return SimpleGraph.edge() if kind == "edge" else SimpleGraph.triangle()
    if not num:
        return None
    return getattr(SimpleGraph, kind)(int(num))


def _graph_ref(ref, base: Path) -> SimpleGraph:
    if not isinstance(ref, str):
        raise ConfigError(f"graph reference must be a string, got {ref!r}")
    path = base / ref
    if path.exists():
        return read_graph(path)
    g = builtin_graph(ref)
    if g is None:
        raise ConfigError(f"graph {ref!r} is neither a file nor a builtin name")
    return g


def parse_functional_spec(data: dict, base: Path = Path(".")):
    """Build a FunctionalSpec from its JSON form.

    ``{"terms": [{"coef": 1.0, "kind": "entropy"},
                 {"coef": -0.1, "kind": "hom", "graph": "edge.txt"},
                 {"coef": 1.0, "kind": "interaction", "h1": .., "h2": .., "h": ..}],
       "box": [0.05, 0.95]}``
    Graph references are files relative to ``base`` or builtin names.
    """
    from .functionals import Entropy, FunctionalSpec, Hom, Interaction, Term

    if not isinstance(data, dict) or "terms" not in data:
        raise ConfigError("functional spec must be an object with a 'terms' list")
    terms = []
    for i, t in enumerate(data["terms"]):
        if not isinstance(t, dict) or "kind" not in t:
            raise ConfigError(f"term {i}: expected an object with 'kind'")
        coef = float(t.get("coef", 1.0))
        kind = t["kind"]
        if kind == "entropy":
            terms.append(Term(coef, Entropy()))
        elif kind == "hom":
            terms.append(Term(coef, Hom(_graph_ref(t.get("graph"), base))))
        elif kind == "interaction":
            lam = t.get("lambda")
            inter = Interaction(_graph_ref(t.get("h1"), base), _graph_ref(t.get("h2"), base),
                                _graph_ref(t.get("h"), base),
                                lam=None if lam is None else float(lam))
            terms.append(Term(coef, inter))
        else:
            raise ConfigError(f"term {i}: unknown kind {kind!r}")
    box = data.get("box", [-1.0, 1.0])
    if not (isinstance(box, (list, tuple)) and len(box) == 2):
        raise ConfigError("'box' must be a pair [lo, hi]")
    return FunctionalSpec(tuple(terms), (float(box[0]), float(box[1])))


def read_functional_spec(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read spec file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise KernelFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno, exc.colno) from exc
    return parse_functional_spec(data, path.parent)


def write_trajectory_csv(path, traj) -> None:
    """Columns ``step,t,f,slope,residual``; one row per recorded snapshot."""
    rows = ["step,t,f,slope,residual"]
    for n, t, f, s, r in zip(traj.steps, traj.times, traj.f_values, traj.slopes, traj.step_residuals):
        rows.append(f"{n},{format_float(t)},{format_float(f)},{format_float(s)},{format_float(r)}")
    Path(path).write_text("\n".join(rows) + "\n")
