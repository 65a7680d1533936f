import numpy as np
import pytest
from scipy import stats

from diffneg.graphio import Graph
from diffneg.rng import RandomSource
from diffneg.samplers import (SamplerConfig, SamplingError, dns_negative,
                              heuristic_negative, pns_negative, uniform_negative)
from diffneg.tensor import Tensor


def make_graph(num_nodes, edges):
    return Graph(np.zeros((num_nodes, 1)), np.array(edges, dtype=np.int64).reshape(-1, 2))


def complete_graph(n):
    return make_graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)])


# ---------------------------------------------------------------- uniform

def test_uniform_single_survivor_always_chosen():
    # v = 0 is adjacent to everything except node 9.
    g = make_graph(10, [(0, u) for u in range(1, 9)])
    src = RandomSource(0)
    for _ in range(500):
        assert uniform_negative(g, 0, src) == 9


def test_uniform_enumeration_fallback_on_rare_survivor():
    # With one survivor in 5000 nodes, 200 rejections almost always run out,
    # forcing the explicit-enumeration path; the answer is the same.
    g = make_graph(5000, [(0, u) for u in range(1, 4999)])
    src = RandomSource(1)
    for _ in range(20):
        assert uniform_negative(g, 0, src) == 4999


def test_uniform_frequencies_on_edgeless_graph():
    g = make_graph(5, [])
    counts = np.zeros(5)
    src = RandomSource(2)
    for _ in range(100000):
        counts[uniform_negative(g, 2, src)] += 1
    assert counts[2] == 0
    freq = counts / counts.sum()
    assert np.abs(freq[[0, 1, 3, 4]] - 0.25).max() < 0.01


def test_uniform_never_returns_query_or_neighbor():
    g = make_graph(12, [(0, 1), (0, 2), (0, 3), (4, 5), (6, 7)])
    src = RandomSource(3)
    hits = {uniform_negative(g, 0, src) for _ in range(10000)}
    assert hits == set(range(4, 12))


def test_uniform_complete_graph_raises():
    g = complete_graph(4)
    with pytest.raises(SamplingError):
        uniform_negative(g, 1, RandomSource(4))


def test_uniform_deterministic_per_source():
    g = make_graph(30, [(0, 1)])
    a = uniform_negative(g, 0, RandomSource(5).child("n"))
    b = uniform_negative(g, 0, RandomSource(5).child("n"))
    assert a == b


# -------------------------------------------------------------------- pns

def _pns_odds_graph():
    # Query v=0 is adjacent to fillers 3..18, leaving candidates a=1 with
    # degree 1 and b=2 with degree 16.  Weight ratio 1 : 16^0.75 = 1 : 8.
    edges = [(0, f) for f in range(3, 19)]
    edges.append((1, 3))
    edges += [(2, f) for f in range(3, 19)]
    return make_graph(19, edges)


def test_pns_degree_powered_odds():
    g = _pns_odds_graph()
    cfg = SamplerConfig(kind="pns")
    src = RandomSource(6)
    wins = sum(pns_negative(g, 0, cfg, src) == 2 for _ in range(100000))
    assert wins / 100000 == pytest.approx(8.0 / 9.0, rel=0.05)


def test_pns_exponent_zero_is_uniform_chi_square():
    # Valid candidates for v=0 carry degrees 0..3; exponent 0 flattens them,
    # keeping even the isolated nodes in play.
    edges = [(2, 6), (3, 6), (3, 7), (4, 6), (4, 7), (4, 8)]
    g = make_graph(9, edges)
    cfg = SamplerConfig(kind="pns", pns_exponent=0.0)
    src = RandomSource(7)
    counts = np.zeros(9)
    n = 10000
    for _ in range(n):
        counts[pns_negative(g, 0, cfg, src)] += 1
    assert counts[0] == 0
    observed = counts[1:]
    chi2 = float(((observed - n / 8.0) ** 2 / (n / 8.0)).sum())
    assert chi2 < stats.chi2.ppf(0.99, df=7)


def test_pns_single_candidate():
    g = make_graph(4, [(0, 1), (0, 2), (3, 1)])
    cfg = SamplerConfig(kind="pns")
    assert pns_negative(g, 0, cfg, RandomSource(8)) == 3


def test_pns_all_zero_degree_falls_back_to_uniform():
    # Valid candidates 4 and 5 are isolated, so every powered degree is zero
    # and the draw must match the plain uniform sampler under the same seed.
    g = make_graph(6, [(0, 1), (0, 2), (0, 3)])
    cfg = SamplerConfig(kind="pns")
    for i in range(50):
        expected = uniform_negative(g, 0, RandomSource(9).child(i))
        assert pns_negative(g, 0, cfg, RandomSource(9).child(i)) == expected


def test_pns_excludes_zero_degree_when_positive_weights_exist():
    # Candidate 3 has degree 2, candidate 4 is isolated: 4 must never appear.
    g = make_graph(5, [(0, 1), (0, 2), (3, 1), (3, 2)])
    cfg = SamplerConfig(kind="pns")
    src = RandomSource(10)
    assert all(pns_negative(g, 0, cfg, src) == 3 for _ in range(200))


def test_pns_complete_graph_raises():
    with pytest.raises(SamplingError):
        pns_negative(complete_graph(3), 0, SamplerConfig(kind="pns"), RandomSource(11))


# -------------------------------------------------------------------- dns

def test_dns_matches_brute_force_argmax():
    # 10 valid candidates and dns_candidates=10, so the pool is exhaustive
    # and the pick must equal a plain argmax of the score row.
    g = make_graph(12, [(0, 1)])
    cfg = SamplerConfig(kind="dns", dns_candidates=10)
    for seed in range(20):
        emb = RandomSource(seed).normal((12, 6))
        valid = np.arange(2, 12)
        expected = int(valid[np.argmax(emb[valid] @ emb[0])])
        assert dns_negative(emb, g, 0, cfg, RandomSource(100 + seed)) == expected


def test_dns_all_tied_scores_pick_lowest_index():
    g = make_graph(8, [(0, 1)])
    cfg = SamplerConfig(kind="dns", dns_candidates=6)
    emb = np.zeros((8, 4))
    assert dns_negative(emb, g, 0, cfg, RandomSource(12)) == 2


def test_dns_score_scale_invariance():
    g = make_graph(40, [(0, 1), (0, 2)])
    cfg = SamplerConfig(kind="dns", dns_candidates=5)
    emb = RandomSource(13).normal((40, 8))
    a = dns_negative(emb, g, 0, cfg, RandomSource(14).child("d"))
    b = dns_negative(7.5 * emb, g, 0, cfg, RandomSource(14).child("d"))
    assert a == b


def test_dns_subsampled_pool_is_valid_and_deterministic():
    g = make_graph(40, [(0, u) for u in range(1, 6)])
    cfg = SamplerConfig(kind="dns", dns_candidates=5)
    emb = RandomSource(15).normal((40, 8))
    picks = [dns_negative(emb, g, 0, cfg, RandomSource(16).child(i)) for i in range(300)]
    assert set(picks) <= set(range(6, 40))
    again = [dns_negative(emb, g, 0, cfg, RandomSource(16).child(i)) for i in range(300)]
    assert picks == again


def test_dns_accepts_tensor_embeddings():
    g = make_graph(6, [(0, 1)])
    cfg = SamplerConfig(kind="dns", dns_candidates=4)
    emb = RandomSource(17).normal((6, 3))
    assert dns_negative(Tensor(emb), g, 0, cfg, RandomSource(18).child("x")) == \
        dns_negative(emb, g, 0, cfg, RandomSource(18).child("x"))


def test_dns_complete_graph_raises():
    with pytest.raises(SamplingError):
        dns_negative(np.zeros((3, 2)), complete_graph(3), 0,
                     SamplerConfig(kind="dns"), RandomSource(19))


def test_dns_dominant_candidate_wins_at_pool_rate():
    # Node 39 dominates every score, so it wins exactly when it lands in the
    # pool of 10 distinct picks out of 38 valid nodes: probability 10/38.
    g = make_graph(40, [(0, 1)])
    cfg = SamplerConfig(kind="dns", dns_candidates=10)
    emb = np.zeros((40, 2))
    emb[0] = [1.0, 0.0]
    emb[39] = [50.0, 0.0]
    emb[2:39, 0] = RandomSource(20).uniform((37,))
    src = RandomSource(21)
    picks = [dns_negative(emb, g, 0, cfg, src) for _ in range(1000)]
    assert set(picks) <= set(range(2, 40))
    rate = sum(p == 39 for p in picks) / 1000.0
    assert 0.15 < rate < 0.40  # 10/38 = 0.263 give or take sampling noise


# --------------------------------------------------------------- dispatch

def test_heuristic_dispatch_routes_by_kind():
    g = make_graph(10, [(0, 1)])
    emb = RandomSource(22).normal((10, 4))
    cfg_u = SamplerConfig(kind="uniform")
    cfg_p = SamplerConfig(kind="pns")
    cfg_d = SamplerConfig(kind="dns", dns_candidates=8)
    assert heuristic_negative("uniform", g, 0, cfg_u, RandomSource(23).child("a")) == \
        uniform_negative(g, 0, RandomSource(23).child("a"))
    assert heuristic_negative("pns", g, 0, cfg_p, RandomSource(24).child("b")) == \
        pns_negative(g, 0, cfg_p, RandomSource(24).child("b"))
    assert heuristic_negative("dns", g, 0, cfg_d, RandomSource(25).child("c"), emb) == \
        dns_negative(emb, g, 0, cfg_d, RandomSource(25).child("c"))


def test_heuristic_dispatch_errors():
    g = make_graph(4, [])
    with pytest.raises(ValueError, match="embeddings"):
        heuristic_negative("dns", g, 0, SamplerConfig(kind="dns"), RandomSource(26))
    with pytest.raises(ValueError, match="unknown"):
        heuristic_negative("top", g, 0, SamplerConfig(), RandomSource(27))


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(kind="nope")
    with pytest.raises(ValueError):
        SamplerConfig(dns_candidates=0)
    with pytest.raises(ValueError):
        SamplerConfig(pns_exponent=-0.5)
    cfg = SamplerConfig(kind="dns", dns_candidates=3, pns_exponent=0.0)
    assert cfg.dns_candidates == 3
