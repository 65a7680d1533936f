"""Ranking evaluation, the sub-linearity statistic, and distance profiles.

Link prediction quality is scored per held-out edge by ranking the true
neighbor against 9 sampled non-neighbors on dot-product score; MAP and NDCG
here are the single-positive forms 1/rank and 1/log2(rank+1).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .diffusion import DiffusionParams, NoiseSchedule, extract_multilevel, reverse_sample_batch
from .graphio import Graph
from .rng import RandomSource

EVAL_NEGATIVES = 9


@dataclass(frozen=True)
class RankingResult:
    """One query's candidate list: scores[0] is the positive, then negatives."""

    query: int
    positive: int
    negatives: tuple[int, ...]
    scores: tuple[float, ...]
    positive_rank: int
    ap: float
    ndcg: float


def rank_query(h_v, positive: int, negatives, embeddings) -> RankingResult:
    """Score candidates by dot product and rank the positive.

    Ties rank the positive ahead: positive_rank counts only strictly greater
    negative scores.
    """
    emb = np.asarray(embeddings.data if hasattr(embeddings, "data") else embeddings,
                     dtype=np.float64)
    h_v = np.asarray(h_v.data if hasattr(h_v, "data") else h_v, dtype=np.float64)
    negatives = [int(u) for u in negatives]
    candidates = [int(positive)] + negatives
    if len(set(candidates)) != len(candidates):
        raise ValueError("duplicate candidates in ranking list")
    scores = emb[np.array(candidates)] @ h_v
    rank = 1 + int((scores[1:] > scores[0]).sum())
    return RankingResult(
        query=-1,
        positive=int(positive),
        negatives=tuple(negatives),
        scores=tuple(float(s) for s in scores),
        positive_rank=rank,
        ap=1.0 / rank,
        ndcg=1.0 / math.log2(rank + 1.0),
    )


def _draw_eval_negatives(graph: Graph, v: int, positive: int,
                         source: RandomSource, count: int) -> list[int] | None:
    """`count` distinct nodes unlinked to v in the full graph, or None."""
    blocked = {v, positive} | {int(u) for u in graph.adjacency[v]}
    if graph.num_nodes - len(blocked) < count:
        return None
    picked: list[int] = []
    chosen: set[int] = set()
    misses = 0
    while len(picked) < count:
        u = source.integers(0, graph.num_nodes)
        if u in blocked or u in chosen:
            misses += 1
            if misses > 200:
                pool = np.array([w for w in range(graph.num_nodes)
                                 if w not in blocked and w not in chosen], dtype=np.int64)
                while len(picked) < count:
                    j = source.integers(0, len(pool))
                    picked.append(int(pool[j]))
                    pool = np.delete(pool, j)
                return picked
            continue
        picked.append(u)
        chosen.add(u)
    return picked


def evaluate_detailed(edges, embeddings, graph: Graph, seed: int) -> list[RankingResult]:
    """One RankingResult per held-out edge (query = first endpoint).

    Negative candidates are drawn uniformly among nodes unlinked to the query
    in the full graph (so no train, val, or test edge can appear as a
    negative), with an independent stream per query position.  Queries with
    too few unlinked nodes are skipped with a warning.
    """
    emb = np.asarray(embeddings.data if hasattr(embeddings, "data") else embeddings,
                     dtype=np.float64)
    base = RandomSource(seed)
    results: list[RankingResult] = []
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    for i, (v, u) in enumerate(edges):
        v, u = int(v), int(u)
        negs = _draw_eval_negatives(graph, v, u, base.child("eval", i), EVAL_NEGATIVES)
        if negs is None:
            warnings.warn(f"query {v} has too few unlinked nodes; skipped")
            continue
        r = rank_query(emb[v], u, negs, emb)
        results.append(RankingResult(v, r.positive, r.negatives, r.scores,
                                     r.positive_rank, r.ap, r.ndcg))
    return results


def evaluate(edges, embeddings, graph: Graph, seed: int) -> tuple[float, float]:
    """(MAP, NDCG) means over the split part given as an edge array."""
    results = evaluate_detailed(edges, embeddings, graph, seed)
    if not results:
        raise ValueError("no rankable queries in this split part")
    return (float(np.mean([r.ap for r in results])),
            float(np.mean([r.ndcg for r in results])))


@dataclass(frozen=True)
class PsiReport:
    t: int
    samples: int
    psi_values: np.ndarray
    fraction_nonneg: float


def psi_from_samples(x0: np.ndarray, xt: np.ndarray, eps0: np.ndarray,
                     alpha_bar_t: float) -> np.ndarray:
    """Psi for each trajectory given samples at steps 0 and t.

    Delta_i = sqrt(ab) mu_0 + sqrt(1 - ab) eps0_i - mu_t, and
    Psi_i = 2 Delta_i . sqrt(ab) (x0_i - mu_0) + ||Delta_i||^2, with mu_0 and
    mu_t the sample means over trajectories.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    eps0 = np.asarray(eps0, dtype=np.float64)
    mu0 = x0.mean(axis=0)
    mut = xt.mean(axis=0)
    root = math.sqrt(alpha_bar_t)
    delta = root * mu0 + math.sqrt(1.0 - alpha_bar_t) * eps0 - mut
    centered = root * (x0 - mu0)
    return 2.0 * np.einsum("ij,ij->i", delta, centered) + np.einsum("ij,ij->i", delta, delta)


def psi_statistic_multi(h_v, steps, samples: int, params: DiffusionParams,
                        schedule: NoiseSchedule, source: RandomSource,
                        query: int = -1) -> list[PsiReport]:
    """PsiReports for several steps sharing one set of reverse trajectories."""
    if samples < 100:
        raise ValueError(f"need at least 100 samples for stable means, got {samples}")
    steps = sorted(set(int(t) for t in steps))
    if not steps or steps[0] < 1:
        raise ValueError("steps must be >= 1")
    h_v = np.asarray(h_v.data if hasattr(h_v, "data") else h_v, dtype=np.float64)
    h_rows = np.broadcast_to(h_v, (samples, params.dim))
    sources = [source.child("traj", i) for i in range(samples)]
    trajs = reverse_sample_batch(h_rows, schedule, params, sources, steps,
                                 queries=[query] * samples)
    x0 = np.stack([traj.states[0] for traj in trajs])
    eps0 = source.child("eps0").normal((samples, params.dim))
    reports = []
    for t in steps:
        xt = np.stack([traj.states[t] for traj in trajs])
        psi = psi_from_samples(x0, xt, eps0, schedule.alpha_bar_at(t))
        reports.append(PsiReport(t, samples, psi, float((psi >= 0.0).mean())))
    return reports


def psi_statistic(h_v, t: int, samples: int, params: DiffusionParams,
                  schedule: NoiseSchedule, source: RandomSource,
                  query: int = -1) -> PsiReport:
    """Empirical check of the sub-linear positivity condition at one step."""
    return psi_statistic_multi(h_v, [t], samples, params, schedule, source, query)[0]


def distance_histogram(queries, embeddings, params: DiffusionParams,
                       schedule: NoiseSchedule, steps, graph: Graph,
                       source: RandomSource) -> list[tuple[int, str, float]]:
    """Long-form (query, set_label, distance) rows for the three populations.

    Per query: Euclidean distances from h_v to every training neighbor
    ("positive"), to one generated negative per extraction step ("gen_t<t>"),
    and to max(1, len(steps)) uniformly drawn non-neighbors ("uniform").
    `graph` is the training subgraph.
    """
    from .samplers import uniform_negative

    emb = np.asarray(embeddings.data if hasattr(embeddings, "data") else embeddings,
                     dtype=np.float64)
    steps = sorted(set(int(t) for t in steps))
    queries = [int(v) for v in queries]
    rows: list[tuple[int, str, float]] = []
    if not queries:
        return rows
    trajs = reverse_sample_batch(
        emb[np.array(queries)], schedule, params,
        [source.child("gen", i) for i in range(len(queries))], steps,
        queries=queries)
    for i, v in enumerate(queries):
        h_v = emb[v]
        for u in graph.adjacency[v]:
            rows.append((v, "positive", float(np.linalg.norm(h_v - emb[int(u)]))))
        for t, state in zip(steps, extract_multilevel(trajs[i], steps)):
            rows.append((v, f"gen_t{t}", float(np.linalg.norm(h_v - state))))
        usrc = source.child("uniform", i)
        for _ in range(max(1, len(steps))):
            w = uniform_negative(graph, v, usrc)
            rows.append((v, "uniform", float(np.linalg.norm(h_v - emb[w]))))
    return rows
