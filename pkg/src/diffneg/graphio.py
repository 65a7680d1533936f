"""Graph storage, canonical text format, and edge splitting.

The canonical file is UTF-8 text: a header line "N F M", then N rows of F
real-valued features, then M edge rows "u v".  Edges are undirected; reversed
or repeated lines collapse to one edge, self-loops are rejected.  Graphs are
immutable after construction.
"""

from __future__ import annotations

import numpy as np

from .rng import RandomSource


class GraphFormatError(ValueError):
    """Raised for malformed graph or split files; message names the line."""


class Graph:
    """An undirected graph with dense node features.

    `edges` is an (M, 2) int64 array with u < v per row, sorted
    lexicographically, deduplicated.  `adjacency[v]` is a sorted int64 array
    of neighbors.  Instances are treated as immutable.
    """

    def __init__(self, features: np.ndarray, edges: np.ndarray):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise GraphFormatError(f"features must be 2D, got shape {features.shape}")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = features.shape[0]
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise GraphFormatError("edge endpoint out of range")
            if (edges[:, 0] == edges[:, 1]).any():
                raise GraphFormatError("self-loop in edge list")
        edges = canonical_edges(edges)
        self.features = features
        self.edges = edges
        self.num_nodes = n
        self.num_features = features.shape[1]
        self.adjacency = _build_adjacency(n, edges)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.num_features == other.num_features
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.edges, other.edges)
        )

    # Identity hash: equal-but-distinct graphs may land in different cache
    # slots, which only costs a recompute, never a wrong lookup.
    __hash__ = object.__hash__

    def __repr__(self) -> str:
        return (f"Graph(num_nodes={self.num_nodes}, num_features={self.num_features}, "
                f"num_edges={len(self.edges)})")


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    """Orient each pair low-high, drop duplicates, sort lexicographically."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if not edges.size:
        return edges.reshape(0, 2)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return np.unique(np.column_stack([lo, hi]), axis=0)


def _build_adjacency(num_nodes: int, edges: np.ndarray) -> list[np.ndarray]:
    if not edges.size:
        return [np.empty(0, dtype=np.int64) for _ in range(num_nodes)]
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    bounds = np.searchsorted(src, np.arange(num_nodes + 1))
    return [dst[bounds[v]:bounds[v + 1]] for v in range(num_nodes)]


def neighbors(graph: Graph, v: int) -> list[int]:
    """Sorted neighbor list of v; empty for isolated nodes."""
    if not 0 <= v < graph.num_nodes:
        raise IndexError(f"node {v} out of range [0, {graph.num_nodes})")
    return [int(u) for u in graph.adjacency[v]]


def load_graph(path) -> Graph:
    """Parse the canonical text format; errors name the offending line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise GraphFormatError(f"{path}: empty file")
    header = lines[0].split()
    if len(header) != 3:
        raise GraphFormatError(f"{path}:1: header must be 'N F M', got {lines[0]!r}")
    try:
        n, f, m = (int(x) for x in header)
    except ValueError:
        raise GraphFormatError(f"{path}:1: non-integer header entry in {lines[0]!r}") from None
    if n < 1 or f < 0 or m < 0:
        raise GraphFormatError(f"{path}:1: invalid sizes N={n} F={f} M={m}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n + m:
        raise GraphFormatError(
            f"{path}: expected {n} feature rows and {m} edge rows, found {len(body)} lines")

    try:
        features = np.loadtxt(body[:n], dtype=np.float64, ndmin=2)
        if f == 0:
            features = np.empty((n, 0), dtype=np.float64)
    except ValueError:
        _locate_bad_row(path, body[:n], f, offset=2)
        raise
    if features.shape != (n, f):
        _locate_bad_row(path, body[:n], f, offset=2)
        raise GraphFormatError(f"{path}: feature block has shape {features.shape}, expected ({n}, {f})")

    edges = np.empty((m, 2), dtype=np.int64)
    for i, ln in enumerate(body[n:]):
        parts = ln.split()
        lineno = 1 + n + i + 1
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: edge row must be 'u v', got {ln!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer edge endpoint in {ln!r}") from None
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"{path}:{lineno}: endpoint out of range [0, {n})")
        if u == v:
            raise GraphFormatError(f"{path}:{lineno}: self-loop {u}")
        edges[i] = (u, v)
    return Graph(features, edges)


def _locate_bad_row(path, rows, width: int, offset: int) -> None:
    for i, ln in enumerate(rows):
        parts = ln.split()
        if len(parts) != width:
            raise GraphFormatError(
                f"{path}:{i + offset}: expected {width} feature values, got {len(parts)}")
        for p in parts:
            try:
                float(p)
            except ValueError:
                raise GraphFormatError(
                    f"{path}:{i + offset}: non-numeric feature entry {p!r}") from None


def save_graph(graph: Graph, path) -> None:
    """Write the canonical text format (features with full precision)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{graph.num_nodes} {graph.num_features} {len(graph.edges)}\n")
        for row in graph.features:
            fh.write(" ".join(format(x, ".17g") for x in row) + "\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


class EdgeSplit:
    """A disjoint train/val/test partition of a graph's edges.

    Edge arrays keep the order produced by the seeded shuffle, which later
    stages rely on for reproducibility.
    """

    def __init__(self, train_edges, val_edges, test_edges, seed: int):
        self.train_edges = np.asarray(train_edges, dtype=np.int64).reshape(-1, 2)
        self.val_edges = np.asarray(val_edges, dtype=np.int64).reshape(-1, 2)
        self.test_edges = np.asarray(test_edges, dtype=np.int64).reshape(-1, 2)
        self.seed = int(seed)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EdgeSplit):
            return NotImplemented
        return (self.seed == other.seed
                and np.array_equal(self.train_edges, other.train_edges)
                and np.array_equal(self.val_edges, other.val_edges)
                and np.array_equal(self.test_edges, other.test_edges))

    def __repr__(self) -> str:
        return (f"EdgeSplit(train={len(self.train_edges)}, val={len(self.val_edges)}, "
                f"test={len(self.test_edges)}, seed={self.seed})")


def split_edges(graph: Graph, seed: int) -> EdgeSplit:
    """Shuffle edges with the seed and cut 90/5/5.

    train = floor(0.90 E), val = floor(0.05 E), test = the remainder, taken
    in that order from the shuffled list.
    """
    m = len(graph.edges)
    if m < 20:
        raise ValueError(f"need at least 20 edges to split, got {m}")
    perm = RandomSource(seed).child("split").permutation(m)
    shuffled = graph.edges[perm]
    n_train = int(np.floor(0.90 * m))
    n_val = int(np.floor(0.05 * m))
    return EdgeSplit(
        shuffled[:n_train],
        shuffled[n_train:n_train + n_val],
        shuffled[n_train + n_val:],
        seed,
    )


def training_subgraph(graph: Graph, split: EdgeSplit) -> Graph:
    """Same nodes and features, edges restricted to the training part."""
    full = graph.edge_set()
    for u, v in split.train_edges:
        if (int(u), int(v)) not in full and (int(v), int(u)) not in full:
            raise ValueError(f"split edge ({u}, {v}) not present in graph")
    return Graph(graph.features, split.train_edges)


def save_split(split: EdgeSplit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"split seed={split.seed} train={len(split.train_edges)} "
                 f"val={len(split.val_edges)} test={len(split.test_edges)}\n")
        for part in (split.train_edges, split.val_edges, split.test_edges):
            for u, v in part:
                fh.write(f"{u} {v}\n")


def load_split(path) -> EdgeSplit:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("split "):
        raise GraphFormatError(f"{path}:1: missing split header")
    fields = {}
    for tok in lines[0].split()[1:]:
        key, _, value = tok.partition("=")
        try:
            fields[key] = int(value)
        except ValueError:
            raise GraphFormatError(f"{path}:1: bad header token {tok!r}") from None
    for key in ("seed", "train", "val", "test"):
        if key not in fields:
            raise GraphFormatError(f"{path}:1: header missing {key!r}")
    body = [ln for ln in lines[1:] if ln.strip()]
    total = fields["train"] + fields["val"] + fields["test"]
    if len(body) != total:
        raise GraphFormatError(f"{path}: expected {total} edge rows, found {len(body)}")
    rows = np.empty((total, 2), dtype=np.int64)
    for i, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{i + 2}: edge row must be 'u v', got {ln!r}")
        rows[i] = (int(parts[0]), int(parts[1]))
    a = fields["train"]
    b = a + fields["val"]
    return EdgeSplit(rows[:a], rows[a:b], rows[b:], fields["seed"])
