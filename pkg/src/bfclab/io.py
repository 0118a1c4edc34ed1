"""CSV artifacts with ``#`` comment headers.

Headers start with the tool version, then the artifact kind, then
(optionally) the resolved configuration between ``# --- config ---`` and
``# --- end config ---``, then free ``# key: value`` metadata lines.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import __version__
from .config import dump_config, parse_config
from .core_model import CorrelationTrace, TraceKind
from .eventsim import DARK, Channel, EventStream
from .franson import FringeCurve, VisibilityTable
from .schmidt import JSIMatrix, SchmidtResult

CONFIG_BEGIN = "# --- config ---"
CONFIG_END = "# --- end config ---"


def make_header(kind: str, config: dict | None = None, meta: dict | None = None) -> list:
    lines = [f"# bfclab {__version__}", f"# artifact: {kind}"]
    if config is not None:
        lines.append(CONFIG_BEGIN)
        lines += [f"# {ln}" if ln else "#" for ln in dump_config(config).splitlines()]
        lines.append(CONFIG_END)
    for k, v in (meta or {}).items():
        lines.append(f"# {k}: {v}")
    return lines


def _write(path, header: list, columns: str, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(header + [columns]) + "\n")
        for row in rows:
            fh.write(row + "\n")
    return path


def read_csv(path):
    """Return ``(comment_lines, column_names, rows_as_string_lists)``."""
    comments, columns, rows = [], None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line)
            elif columns is None:
                columns = line.split(",")
            else:
                rows.append(line.split(","))
    if columns is None:
        raise ValueError(f"{path}: no column header")
    return comments, columns, rows


def header_config(comments: list) -> dict | None:
    """Parse the embedded configuration back into a resolved config."""
    try:
        i, j = comments.index(CONFIG_BEGIN), comments.index(CONFIG_END)
    except ValueError:
        return None
    body = "\n".join(ln[2:] if ln.startswith("# ") else ln[1:] for ln in comments[i + 1:j])
    return parse_config(body)


def header_meta(comments: list) -> dict:
    out = {}
    inside = False
    for ln in comments:
        if ln == CONFIG_BEGIN:
            inside = True
        elif ln == CONFIG_END:
            inside = False
        elif not inside and ": " in ln:
            k, v = ln[2:].split(": ", 1)
            out[k] = v
    return out


def _expect(columns, wanted, path):
    if columns != wanted.split(","):
        raise ValueError(f"{path}: expected columns {wanted}, found {','.join(columns)}")


def write_trace(path, trace: CorrelationTrace, config=None, meta=None) -> Path:
    m = {"kind": trace.kind.value, **(meta or {})}
    rows = (f"{t:.12g},{v:.12g}" for t, v in zip(trace.tau, np.real(trace.values)))
    return _write(path, make_header("trace", config, m), "tau_s,value", rows)


def read_trace(path) -> CorrelationTrace:
    comments, cols, rows = read_csv(path)
    _expect(cols, "tau_s,value", path)
    data = np.array(rows, dtype=float).reshape(-1, 2)
    meta = header_meta(comments)
    kind = TraceKind(meta.get("kind", TraceKind.INTENSITY.value))
    step = float(np.median(np.diff(data[:, 0]))) if len(data) > 1 else 1.0
    return CorrelationTrace(float(data[0, 0]), step, data[:, 1], kind, meta)


def write_spectrum(path, detuning_hz, density, config=None, meta=None) -> Path:
    rows = (f"{f:.12g},{v:.12g}" for f, v in zip(detuning_hz, density))
    return _write(path, make_header("spectrum", config, meta), "detuning_hz,density", rows)


def _bin_label(b) -> str:
    return f"{b[0]}:{b[1]}" if isinstance(b, tuple) else str(b)


def _parse_bin(s: str):
    if ":" in s:
        a, b = s.split(":")
        return (int(a), int(b))
    return int(s)


def write_visibility_table(path, table: VisibilityTable, config=None, meta=None) -> Path:
    rows = (f"{_bin_label(b)},{r:.12g},{s:.12g},{e:.12g}"
            for b, r, s, e in zip(table.bins, table.v_raw, table.v_subtracted, table.sigma))
    return _write(path, make_header("visibility", config, meta),
                  "bin,v_raw,v_subtracted,sigma", rows)


def read_visibility_table(path) -> VisibilityTable:
    _, cols, rows = read_csv(path)
    _expect(cols, "bin,v_raw,v_subtracted,sigma", path)
    return VisibilityTable([_parse_bin(r[0]) for r in rows],
                           np.array([float(r[1]) for r in rows]),
                           np.array([float(r[2]) for r in rows]),
                           np.array([float(r[3]) for r in rows]))


def write_fringe(path, fringe: FringeCurve, config=None, meta=None) -> Path:
    rows = (f"{p:.12g},{c:.12g}" for p, c in zip(fringe.phase_grid, fringe.counts))
    m = {"background_ratio": fringe.background, **(meta or {})}
    return _write(path, make_header("fringe", config, m), "phase_rad,counts", rows)


def read_fringe(path) -> FringeCurve:
    comments, cols, rows = read_csv(path)
    _expect(cols, "phase_rad,counts", path)
    data = np.array(rows, dtype=float).reshape(-1, 2)
    bg = float(header_meta(comments).get("background_ratio", 0.0))
    return FringeCurve(data[:, 0], data[:, 1], background=bg)


def write_jsi(path, jsi: JSIMatrix, config=None, meta=None) -> Path:
    N = jsi.n_half
    rows = (f"{i - N},{j - N},{jsi.weights[i, j]:.12g}"
            for i in range(jsi.n) for j in range(jsi.n))
    return _write(path, make_header("jsi", config, meta), "m_signal,m_idler,weight", rows)


def read_jsi(path) -> JSIMatrix:
    _, cols, rows = read_csv(path)
    _expect(cols, "m_signal,m_idler,weight", path)
    cells = {(int(a), int(b)): float(w) for a, b, w in rows}
    N = max(max(abs(a), abs(b)) for a, b in cells)
    w = np.zeros((2 * N + 1, 2 * N + 1))
    for (a, b), v in cells.items():
        w[a + N, b + N] = v
    return JSIMatrix(w)


def write_schmidt(path, result: SchmidtResult, config=None, meta=None) -> Path:
    m = {"schmidt_number": f"{result.schmidt_number:.12g}",
         "dimension_lower_bound": result.dimension_lower_bound,
         "separable_contamination": f"{result.separable_contamination:.12g}", **(meta or {})}
    rows = (f"{k},{lam:.12g}" for k, lam in enumerate(result.eigenvalues))
    return _write(path, make_header("schmidt", config, m), "k,lambda", rows)


def read_schmidt(path) -> SchmidtResult:
    comments, cols, rows = read_csv(path)
    _expect(cols, "k,lambda", path)
    meta = header_meta(comments)
    return SchmidtResult(np.array([float(r[1]) for r in rows]), float(meta["schmidt_number"]),
                         float(meta.get("separable_contamination", 0.0)))


def write_events(path, stream: EventStream, config=None, include_truth: bool = False,
                 meta=None) -> Path:
    m = {"seed": stream.seed, **(meta or {})}
    labels = {int(c): c.label for c in Channel}
    if include_truth:
        truth = ["dark" if t == DARK else f"pair:{t}" for t in stream.truth.tolist()]
        rows = (f"{t!r},{labels[c]},{tr}" for t, c, tr in
                zip(stream.times.tolist(), stream.channels.tolist(), truth))
        cols = "timestamp_s,channel,truth"
    else:
        rows = (f"{t!r},{labels[c]}"
                for t, c in zip(stream.times.tolist(), stream.channels.tolist()))
        cols = "timestamp_s,channel"
    return _write(path, make_header("events", config, m), cols, rows)


def read_events(path) -> EventStream:
    comments, cols, rows = read_csv(path)
    if cols not in (["timestamp_s", "channel"], ["timestamp_s", "channel", "truth"]):
        raise ValueError(f"{path}: not an event file (columns {','.join(cols)})")
    times = np.array([float(r[0]) for r in rows])
    chans = np.array([Channel.parse(r[1]) for r in rows], dtype=np.int8)
    if len(cols) == 3:
        truth = np.array([DARK if r[2] == "dark" else int(r[2].split(":")[1]) for r in rows],
                         dtype=np.int64)
    else:
        truth = np.full(times.size, DARK, dtype=np.int64)
    meta = header_meta(comments)
    seed = int(meta["seed"]) if meta.get("seed", "None") != "None" else None
    params = {}
    cfg = header_config(comments)
    if cfg is not None:
        params["duration_s"] = cfg["source"]["duration_s"]
    return EventStream(times, chans, truth, seed=seed, params=params)


def write_key_rates(path, rows, config=None, meta=None) -> Path:
    def label(p):
        return p if isinstance(p, str) else f"{p[0]}:{p[1]}"
    body = (f"{label(r[0])}," + ",".join(f"{x:.12g}" for x in r[1:]) for r in rows)
    return _write(path, make_header("key_rate", config, meta),
                  "pair,cps,pie_bits,holevo_bits,secure_pie_bits,raw_bps,secure_bps", body)


def write_table(path, kind: str, columns: str, rows, config=None, meta=None) -> Path:
    return _write(path, make_header(kind, config, meta), columns,
                  (",".join(str(x) for x in r) for r in rows))
