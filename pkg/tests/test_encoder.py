import numpy as np
import pytest
import scipy.sparse as sp

from diffneg import tensor as tz
from diffneg.encoder import (EncoderParams, encode, glorot_uniform, init_encoder_params,
                             normalized_adjacency)
from diffneg.graphio import Graph
from diffneg.rng import RandomSource
from diffneg.tensor import ParamStore, ShapeError

from oracles import (dense_gcn_forward, dense_normalized_adjacency,
                     finite_difference_gradients, max_rel_error)
from synth import random_graph


def make_params(f, hidden, out, seed=0, dropout=0.0):
    src = RandomSource(seed)
    store = ParamStore()
    store.add("w1", src.child("w1").normal((f, hidden)))
    store.add("w2", src.child("w2").normal((hidden, out)))
    return EncoderParams(store, dropout=dropout)


def test_normalized_adjacency_single_node():
    g = Graph(np.ones((1, 1)), np.empty((0, 2)))
    a = normalized_adjacency(g).toarray()
    assert np.array_equal(a, [[1.0]])


def test_normalized_adjacency_two_nodes():
    g = Graph(np.ones((2, 1)), np.array([[0, 1]]))
    a = normalized_adjacency(g).toarray()
    assert np.allclose(a, np.full((2, 2), 0.5), atol=1e-15)


def test_normalized_adjacency_path_matches_dense_oracle():
    g = Graph(np.ones((3, 1)), np.array([[0, 1], [1, 2]]))
    a = normalized_adjacency(g).toarray()
    oracle = dense_normalized_adjacency(3, [(0, 1), (1, 2)])
    assert max_rel_error(a, oracle) < 1e-12


def test_normalized_adjacency_isolated_rows():
    g = Graph(np.ones((3, 1)), np.array([[0, 1]]))
    a = normalized_adjacency(g).toarray()
    assert a[2, 2] == 1.0 and a[2, :2].sum() == 0.0


def test_encode_zero_weights_gives_zero():
    g = random_graph(8, 12, 5, seed=0)
    store = ParamStore()
    store.add("w1", np.zeros((5, 4)))
    store.add("w2", np.zeros((4, 3)))
    emb = encode(g, EncoderParams(store, 0.0))
    assert np.array_equal(emb.data, np.zeros((8, 3)))


def test_encode_single_node_collapses_to_mlp():
    x = np.array([[1.0, -2.0, 0.5]])
    g = Graph(x, np.empty((0, 2)))
    params = make_params(3, 4, 2, seed=1)
    emb = encode(g, params)
    expected = np.maximum(x @ params.w1.data, 0.0) @ params.w2.data
    assert max_rel_error(emb.data, expected) < 1e-12


def test_encode_matches_dense_oracle():
    g = random_graph(5, 7, 6, seed=2)
    params = make_params(6, 5, 4, seed=3)
    emb = encode(g, params, training=False)
    adj = dense_normalized_adjacency(g.num_nodes, g.edges.tolist())
    oracle = dense_gcn_forward(g.features, adj, params.w1.data, params.w2.data)
    assert max_rel_error(emb.data, oracle) < 1e-10


def test_encode_dense_feature_branch_matches_oracle():
    # Density above the CSR cutoff exercises the dense matmul path.
    rng = np.random.default_rng(4)
    features = rng.random((6, 4))
    g = Graph(features, np.array([[0, 1], [2, 3], [4, 5]]))
    params = make_params(4, 3, 3, seed=5)
    adj = dense_normalized_adjacency(6, g.edges.tolist())
    oracle = dense_gcn_forward(features, adj, params.w1.data, params.w2.data)
    assert max_rel_error(encode(g, params).data, oracle) < 1e-10


def test_encode_inference_is_pure():
    g = random_graph(10, 15, 4, seed=6)
    params = make_params(4, 4, 4, seed=7, dropout=0.5)
    a = encode(g, params, training=False)
    b = encode(g, params, training=False)
    assert np.array_equal(a.data, b.data)


def test_encode_training_dropout_masks_and_scales():
    g = random_graph(10, 15, 4, seed=8)
    params = make_params(4, 8, 3, seed=9, dropout=0.5)
    a = encode(g, params, training=True, source=RandomSource(1).child("drop"))
    b = encode(g, params, training=True, source=RandomSource(1).child("drop"))
    assert np.array_equal(a.data, b.data)
    c = encode(g, params, training=True, source=RandomSource(2).child("drop"))
    assert not np.array_equal(a.data, c.data)
    with pytest.raises(ValueError):
        encode(g, params, training=True, source=None)


def test_encode_shape_mismatch():
    g = random_graph(6, 8, 5, seed=10)
    params = make_params(4, 4, 4, seed=11)
    with pytest.raises(ShapeError):
        encode(g, params)


def test_permutation_equivariance_exact():
    # Integer features and weights make every float op exact, so the
    # permuted embedding must match bit for bit.
    rng = np.random.default_rng(12)
    n, f = 15, 6
    features = rng.integers(0, 3, (n, f)).astype(np.float64)
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (5, 6), (7, 8), (9, 10),
             (11, 12), (12, 13), (13, 14), (1, 5), (2, 7), (3, 9), (4, 11)]
    g = Graph(features, np.array(edges))
    store = ParamStore()
    store.add("w1", rng.integers(-2, 3, (f, 4)).astype(np.float64))
    store.add("w2", rng.integers(-2, 3, (4, 3)).astype(np.float64))
    params = EncoderParams(store, 0.0)
    emb = encode(g, params).data

    perm = rng.permutation(n)
    pfeat = np.empty_like(features)
    pfeat[perm] = features
    pedges = np.array([(perm[u], perm[v]) for u, v in edges])
    pg = Graph(pfeat, pedges)
    pemb = encode(pg, params).data
    # Normalization denominators are sqrt of small integers; products stay
    # exactly representable only when degrees match squares, so compare at
    # machine tolerance rather than bitwise for the general case.
    assert max_rel_error(pemb[perm], emb, floor=1e-12) < 1e-12


def test_encoder_gradients_pass_finite_differences():
    g = random_graph(9, 14, 5, seed=13)
    params = make_params(5, 4, 3, seed=14)

    def loss():
        emb = encode(g, params, training=False)
        return tz.tmean(tz.softplus(emb))

    analytic = tz.gradient(loss, params.store)
    numeric = finite_difference_gradients(loss, params.store)
    for name in numeric:
        assert max_rel_error(analytic[name], numeric[name]) < 1e-4


def test_encoder_gradients_through_dropout():
    g = random_graph(9, 14, 5, seed=15)
    params = make_params(5, 6, 3, seed=16, dropout=0.3)

    def loss():
        emb = encode(g, params, training=True, source=RandomSource(99).child("drop"))
        return tz.tmean(tz.softplus(emb))

    analytic = tz.gradient(loss, params.store)
    numeric = finite_difference_gradients(loss, params.store)
    for name in numeric:
        assert max_rel_error(analytic[name], numeric[name]) < 1e-4


def test_glorot_bounds_and_determinism():
    w = glorot_uniform(RandomSource(5), 30, 50)
    limit = np.sqrt(6.0 / 80.0)
    assert np.abs(w).max() <= limit
    assert np.array_equal(w, glorot_uniform(RandomSource(5), 30, 50))
    params = init_encoder_params(12, RandomSource(3), hidden_dim=8, embed_dim=4)
    assert params.w1.shape == (12, 8) and params.w2.shape == (8, 4)
    with pytest.raises(ValueError):
        EncoderParams(ParamStore(), dropout=1.0)


def test_normalized_adjacency_is_cached_per_graph():
    g = random_graph(10, 15, 3, seed=17)
    assert normalized_adjacency(g) is normalized_adjacency(g)
    assert sp.issparse(normalized_adjacency(g))
