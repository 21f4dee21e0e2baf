"""File formats: graphs, measures, decompositions and embedding dumps.

Graph text format::

    n m
    u v        (m lines, 0-based)

Binary embedding dump (little-endian)::

    magic   b"CCL1"
    uint32  n, n_scales, samples
    per scale: int32 index, int32 delta, int64[n * samples] values (row-major, vertex-major)
"""

from __future__ import annotations

import csv
import json
import struct
from fractions import Fraction
from pathlib import Path

import numpy as np

from .graphcore import Graph, GraphError, MetricSpace, PairMeasure, VertexMeasure

MAGIC = b"CCL1"
CSV_HEADER = ["vertex", "scale", "sample", "value"]


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def graph_to_text(g: Graph) -> str:
    lines = [f"{g.n} {g.m}"]
    lines.extend(f"{u} {v}" for u, v in g.edges)
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> Graph:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise GraphError("empty graph file")
    try:
        n, m = int(rows[0][0]), int(rows[0][1])
        edges = tuple((int(r[0]), int(r[1])) for r in rows[1:])
    except (ValueError, IndexError) as exc:
        raise GraphError(f"malformed graph file: {exc}") from None
    if len(edges) != m:
        raise GraphError(f"header announces {m} edges, found {len(edges)}")
    return Graph(n, edges)


def graph_from_json(data: dict) -> Graph:
    return Graph(int(data["n"]), tuple((int(u), int(v)) for u, v in data["edges"]))


def read_graph(path: str | Path) -> Graph:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return graph_from_json(json.loads(text))
    return graph_from_text(text)


def read_measure(path: str | Path, m: MetricSpace | None = None) -> VertexMeasure | PairMeasure:
    """``{"weights": [...]}`` gives a vertex measure, ``{"pairs": [[u, v, w], ...]}`` a pair measure.

    Pair measures take ``separation`` from the file, or from the closest
    support pair when a metric is supplied.
    """
    data = json.loads(Path(path).read_text())
    if "weights" in data:
        return VertexMeasure(tuple(_number(w) for w in data["weights"]))
    if "pairs" in data:
        pairs = tuple((int(u), int(v)) for u, v, _ in data["pairs"])
        weights = tuple(float(_number(w)) for _, _, w in data["pairs"])
        if "separation" in data:
            sep = int(data["separation"])
        elif m is not None:
            sep = min(int(m.dist[u, v]) for u, v in pairs)
        else:
            raise GraphError("pair measure needs a separation or a metric")
        n = int(data.get("n", m.n if m is not None else 1 + max(max(p) for p in pairs)))
        return PairMeasure(pairs, weights, sep, n)
    raise GraphError("measure file needs 'weights' or 'pairs'")


def _number(w):
    if isinstance(w, str):
        return Fraction(w)
    return w


def measure_to_json(nu: VertexMeasure | PairMeasure) -> dict:
    if isinstance(nu, VertexMeasure):
        return {"weights": [float(w) for w in nu.weights]}
    return {
        "pairs": [[u, v, w] for (u, v), w in zip(nu.pairs, nu.weights)],
        "separation": nu.separation,
        "n": nu.n,
    }


# ---------------------------------------------------------------- embedding dumps


def write_embedding_csv(path: str | Path, scales: list[tuple[int, int, np.ndarray]]) -> None:
    """``scales`` holds (index, delta, centred values n x samples)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for index, _, values in scales:
            n, samples = values.shape
            for v in range(n):
                for k in range(samples):
                    w.writerow([v, index, k, int(values[v, k])])


def read_embedding_csv(path: str | Path) -> dict[int, np.ndarray]:
    """Scale index -> centred values (n x samples)."""
    rows: dict[int, list[tuple[int, int, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise GraphError(f"embedding dump must start with header {','.join(CSV_HEADER)}")
        for rec in reader:
            if not rec:
                continue
            try:
                v, i, k, val = int(rec[0]), int(rec[1]), int(rec[2]), float(rec[3])
            except (ValueError, IndexError):
                raise GraphError(f"malformed embedding row at line {reader.line_num}: {rec}") from None
            rows.setdefault(i, []).append((v, k, val))
    if not rows:
        raise GraphError("embedding dump is empty")
    out = {}
    for i, recs in rows.items():
        n = 1 + max(r[0] for r in recs)
        samples = 1 + max(r[1] for r in recs)
        arr = np.zeros((n, samples), dtype=np.float64)
        for v, k, val in recs:
            arr[v, k] = val
        out[i] = arr
    return out


def write_embedding_bin(path: str | Path, scales: list[tuple[int, int, np.ndarray]]) -> None:
    n, samples = scales[0][2].shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", n, len(scales), samples))
        for index, delta, values in scales:
            fh.write(struct.pack("<ii", index, delta))
            fh.write(np.ascontiguousarray(values, dtype="<i8").tobytes())


def read_embedding_bin(path: str | Path) -> dict[int, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise GraphError("not a binary embedding dump (bad magic)")
    if len(raw) < 16:
        raise GraphError("binary embedding dump is truncated")
    n, n_scales, samples = struct.unpack_from("<III", raw, 4)
    if n_scales == 0:
        raise GraphError("embedding dump is empty")
    size = n * samples * 8
    if len(raw) != 16 + n_scales * (8 + size):
        raise GraphError(f"binary embedding dump has {len(raw)} bytes, header implies {16 + n_scales * (8 + size)}")
    pos, out = 16, {}
    for _ in range(n_scales):
        index, _ = struct.unpack_from("<ii", raw, pos)
        pos += 8
        out[index] = np.frombuffer(raw[pos : pos + size], dtype="<i8").reshape(n, samples).astype(np.float64)
        pos += size
    return out


def read_embedding(path: str | Path) -> dict[int, np.ndarray]:
    path = Path(path)
    if path.stat().st_size == 0:
        raise GraphError("embedding dump is empty")
    with open(path, "rb") as fh:
        head = fh.read(4)
    return read_embedding_bin(path) if head == MAGIC else read_embedding_csv(path)
