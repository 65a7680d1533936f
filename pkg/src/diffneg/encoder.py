"""Two-layer graph convolutional encoder producing 32-dim node embeddings."""

from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp

from . import tensor as tz
from .graphio import Graph
from .rng import RandomSource
from .tensor import ParamStore, Tensor

EMBED_DIM = 32

# Per-graph caches for the normalized adjacency and the CSR view of the
# feature matrix.  Graphs are immutable, so weak keying is safe.
_ADJ_CACHE: "weakref.WeakKeyDictionary[Graph, sp.csr_matrix]" = weakref.WeakKeyDictionary()
_FEATURE_CACHE: "weakref.WeakKeyDictionary[Graph, object]" = weakref.WeakKeyDictionary()

# Below this density the feature matmul runs through CSR instead of dense.
_SPARSE_DENSITY_CUTOFF = 0.25


class EncoderParams:
    """GCN weights: w1 (F x hidden), w2 (hidden x out), plus the dropout rate."""

    def __init__(self, store: ParamStore, dropout: float = 0.1):
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        self.store = store
        self.dropout = float(dropout)

    @property
    def w1(self) -> Tensor:
        return self.store["w1"]

    @property
    def w2(self) -> Tensor:
        return self.store["w2"]


def glorot_uniform(source: RandomSource, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return (source.uniform((fan_in, fan_out)) * 2.0 - 1.0) * limit


def init_encoder_params(num_features: int, source: RandomSource,
                        hidden_dim: int = EMBED_DIM, embed_dim: int = EMBED_DIM,
                        dropout: float = 0.1) -> EncoderParams:
    store = ParamStore()
    store.add("w1", glorot_uniform(source.child("w1"), num_features, hidden_dim))
    store.add("w2", glorot_uniform(source.child("w2"), hidden_dim, embed_dim))
    return EncoderParams(store, dropout=dropout)


def normalized_adjacency(graph: Graph) -> sp.csr_matrix:
    """Symmetrically normalized adjacency with self-loops.

    A_hat = D^{-1/2} (A + I) D^{-1/2} where D is the degree matrix of A + I.
    Rows of isolated nodes reduce to the single self-loop entry 1.
    """
    cached = _ADJ_CACHE.get(graph)
    if cached is not None:
        return cached
    n = graph.num_nodes
    e = graph.edges
    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    vals = np.ones(rows.shape[0], dtype=np.float64)
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    dinv = 1.0 / np.sqrt(deg)
    a_hat = sp.diags(dinv) @ a @ sp.diags(dinv)
    a_hat = a_hat.tocsr()
    _ADJ_CACHE[graph] = a_hat
    return a_hat


def _feature_operand(graph: Graph):
    """The feature matrix as CSR when sparse enough, else a dense Tensor."""
    cached = _FEATURE_CACHE.get(graph)
    if cached is not None:
        return cached
    x = graph.features
    density = np.count_nonzero(x) / x.size if x.size else 1.0
    operand = sp.csr_matrix(x) if density < _SPARSE_DENSITY_CUTOFF else Tensor(x)
    _FEATURE_CACHE[graph] = operand
    return operand


def encode(graph: Graph, params: EncoderParams, training: bool = False,
           source: RandomSource | None = None) -> Tensor:
    """H1 = ReLU(A_hat X W1), dropout on H1 in training, H2 = A_hat H1 W2.

    The output layer is linear, so embeddings are unbounded reals.  With
    training=False the result is a pure function of (graph, params).
    """
    if graph.num_features != params.w1.shape[0]:
        raise tz.ShapeError(
            f"graph has {graph.num_features} features but w1 expects {params.w1.shape[0]}")
    if training and params.dropout > 0.0 and source is None:
        raise ValueError("training-mode encode needs a RandomSource for dropout")
    a_hat = normalized_adjacency(graph)
    x = _feature_operand(graph)
    xw = tz.spmm(x, params.w1) if sp.issparse(x) else tz.matmul(x, params.w1)
    h1 = tz.relu(tz.spmm(a_hat, xw))
    if training and params.dropout > 0.0:
        keep = 1.0 - params.dropout
        mask = (source.uniform(h1.shape) < keep).astype(np.float64) / keep
        h1 = tz.mul(h1, Tensor(mask))
    return tz.spmm(a_hat, tz.matmul(h1, params.w2))
