"""Deterministic CSV/JSON artifact emission and loading.

CSV files are comma-separated UTF-8 with LF line endings: leading ``#``
comment lines carry ``key = value`` metadata, then a header row, then
data.  All floats are serialized with 17 significant digits so re-running
an identical configuration reproduces byte-identical files.  Writes are
atomic (temp file + rename).

Schemas (versioned in the metadata):
  dual.v1:   t, y, W, W_y, W_yy
  primal.v1: t, x, V, V_x, V_xx, C_feedback, Pi_feedback, duality_gap
  paths.v1:  path, t, X, c, pi
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .dual_solver import Diagnostics, DualSolution, LogGrid
from .errors import UpstreamArtifactMissing
from .primal import PrimalSolution

__all__ = [
    "fmt",
    "write_csv",
    "read_csv",
    "write_json",
    "dual_to_csv",
    "dual_from_csv",
    "primal_to_csv",
    "primal_from_csv",
]

DUAL_SCHEMA = "dualhjb.dual.v1"
PRIMAL_SCHEMA = "dualhjb.primal.v1"
PATHS_SCHEMA = "dualhjb.paths.v1"


def fmt(x) -> str:
    """Canonical 17-significant-digit rendering of one value."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, metadata: dict, header: list[str], columns: list[np.ndarray]) -> None:
    lines = [f"# {k} = {fmt(v)}" for k, v in metadata.items()]
    lines.append(",".join(header))
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0])
    for i in range(n):
        lines.append(",".join(fmt(c[i]) for c in cols))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def read_csv(path) -> tuple[dict, dict]:
    path = Path(path)
    if not path.exists():
        raise UpstreamArtifactMissing(f"artifact not found: {path}")
    meta: dict = {}
    header: list[str] | None = None
    rows: list[list[float]] = []
    with path.open() as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            if header is None:
                header = [h.strip() for h in line.split(",")]
                continue
            rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise UpstreamArtifactMissing(f"no header row in {path}")
    data = np.asarray(rows, dtype=float)
    return meta, {name: data[:, j] for j, name in enumerate(header)}


def _json_render(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        items = [f'{pad}  "{k}": {_json_render(obj[k], indent + 1).lstrip()}' for k in obj]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        items = [f"{pad}  {_json_render(v, indent + 1).lstrip()}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]" if items else "[]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if v != v or v in (float("inf"), float("-inf")):
            return f'"{v}"'
        return format(v, ".17g")
    return json.dumps(str(obj))


def write_json(path, obj: dict) -> None:
    """Canonical JSON: insertion key order, 17-significant-digit floats."""
    _atomic_write(Path(path), _json_render(obj) + "\n")


# ---------------------------------------------------------------------------
# solution round trips
# ---------------------------------------------------------------------------

def dual_to_csv(sol: DualSolution, path, extra_meta: dict | None = None) -> None:
    grid = sol.grid
    meta = {
        "schema": DUAL_SCHEMA,
        "y_min": grid.y_min, "y_max": grid.y_max,
        "n_y": grid.n_y, "n_t": grid.n_t, "T": grid.T,
        "q": sol.q,
        "max_residual": sol.diagnostics.max_residual,
    }
    if extra_meta:
        meta.update(extra_meta)
    tt = np.repeat(sol.t, grid.n_y)
    yy = np.tile(sol.y, grid.n_t + 1)
    write_csv(path, meta, ["t", "y", "W", "W_y", "W_yy"],
              [tt, yy, sol.W.ravel(), sol.W_y.ravel(), sol.W_yy.ravel()])


def dual_from_csv(path) -> tuple[DualSolution, dict]:
    meta, cols = read_csv(path)
    if meta.get("schema") != DUAL_SCHEMA:
        raise UpstreamArtifactMissing(
            f"expected {DUAL_SCHEMA}, found {meta.get('schema')!r} in {path}")
    grid = LogGrid(y_min=float(meta["y_min"]), y_max=float(meta["y_max"]),
                   n_y=int(meta["n_y"]), n_t=int(meta["n_t"]), T=float(meta["T"]))
    shape = (grid.n_t + 1, grid.n_y)
    W = cols["W"].reshape(shape)
    W_y = cols["W_y"].reshape(shape)
    W_yy = cols["W_yy"].reshape(shape)
    dt = grid.dt
    W_t = np.empty_like(W)
    W_t[1:-1] = (W[2:] - W[:-2]) / (2.0 * dt)
    W_t[0] = (W[1] - W[0]) / dt
    W_t[-1] = (W[-1] - W[-2]) / dt
    diag = Diagnostics(max_residual=float(meta.get("max_residual", "nan")))
    sol = DualSolution(grid=grid, W=W, W_y=W_y, W_yy=W_yy, W_t=W_t,
                       clamp_bounds=[], diagnostics=diag, q=float(meta["q"]))
    return sol, meta


def primal_to_csv(primal: PrimalSolution, path, extra_meta: dict | None = None) -> None:
    n_x = len(primal.x)
    meta = {
        "schema": PRIMAL_SCHEMA,
        "n_x": n_x, "n_t": len(primal.t) - 1,
        "x_min": primal.x[0], "x_max": primal.x[-1],
        "T": primal.t[-1],
    }
    if extra_meta:
        meta.update(extra_meta)
    tt = np.repeat(primal.t, n_x)
    xx = np.tile(primal.x, len(primal.t))
    write_csv(path, meta,
              ["t", "x", "V", "V_x", "V_xx", "C_feedback", "Pi_feedback", "duality_gap"],
              [tt, xx, primal.V.ravel(), primal.V_x.ravel(), primal.V_xx.ravel(),
               primal.C_feedback.ravel(), primal.Pi_feedback.ravel(),
               primal.duality_gap.ravel()])


def primal_from_csv(path) -> tuple[PrimalSolution, dict]:
    meta, cols = read_csv(path)
    if meta.get("schema") != PRIMAL_SCHEMA:
        raise UpstreamArtifactMissing(
            f"expected {PRIMAL_SCHEMA}, found {meta.get('schema')!r} in {path}")
    n_x = int(meta["n_x"])
    n_t = int(meta["n_t"])
    shape = (n_t + 1, n_x)
    x = cols["x"][:n_x]
    t = cols["t"].reshape(shape)[:, 0]
    V = cols["V"].reshape(shape)
    V_t = np.gradient(V, t, axis=0)
    primal = PrimalSolution(
        x=x, t=t, V=V,
        V_x=cols["V_x"].reshape(shape),
        V_xx=cols["V_xx"].reshape(shape),
        V_t=V_t,
        C_feedback=cols["C_feedback"].reshape(shape),
        Pi_feedback=cols["Pi_feedback"].reshape(shape),
        duality_gap=cols["duality_gap"].reshape(shape),
        dual=None,
    )
    return primal, meta
