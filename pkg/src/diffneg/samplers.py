"""Heuristic negative samplers: uniform, popularity (PNS), and dynamic (DNS).

Validity is defined against the training subgraph only: a negative for query
v may be any node except v itself and its training neighbors.  Edges held
out for validation or testing are legitimately unobserved at train time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphio import Graph
from .rng import RandomSource

# Rejection sampling falls back to explicit enumeration after this many
# misses, which bounds the draw count on nearly-complete graphs.
_MAX_REJECTIONS = 200


class SamplingError(ValueError):
    """No valid negative candidate exists for the query."""


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "uniform"
    dns_candidates: int = 10
    pns_exponent: float = 0.75

    def __post_init__(self):
        if self.kind not in ("uniform", "pns", "dns"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.dns_candidates < 1:
            raise ValueError("dns_candidates must be >= 1")
        if self.pns_exponent < 0.0:
            raise ValueError("pns_exponent must be >= 0")


def _invalid_set(graph: Graph, v: int) -> set[int]:
    return {v} | {int(u) for u in graph.adjacency[v]}


def _valid_candidates(graph: Graph, v: int) -> np.ndarray:
    mask = np.ones(graph.num_nodes, dtype=bool)
    mask[v] = False
    mask[graph.adjacency[v]] = False
    return np.flatnonzero(mask)


def uniform_negative(graph: Graph, v: int, source: RandomSource) -> int:
    """A node drawn uniformly from V minus {v} and v's training neighbors."""
    invalid = _invalid_set(graph, v)
    if len(invalid) >= graph.num_nodes:
        raise SamplingError(f"node {v} is adjacent to every other node")
    for _ in range(_MAX_REJECTIONS):
        u = source.integers(0, graph.num_nodes)
        if u not in invalid:
            return u
    valid = _valid_candidates(graph, v)
    return int(valid[source.integers(0, len(valid))])


def pns_negative(graph: Graph, v: int, config: SamplerConfig, source: RandomSource) -> int:
    """Popularity-proportional draw: p(u) proportional to deg(u)^exponent.

    Degrees come from the training subgraph; candidates are filtered for
    validity first, then the powered degrees are normalized over the
    survivors.  Zero-degree candidates carry zero weight, so if nothing has
    positive weight the draw falls back to the uniform sampler.
    """
    valid = _valid_candidates(graph, v)
    if len(valid) == 0:
        raise SamplingError(f"node {v} is adjacent to every other node")
    deg = np.array([len(graph.adjacency[u]) for u in valid], dtype=np.float64)
    weights = deg ** config.pns_exponent if config.pns_exponent > 0 else np.ones_like(deg)
    if config.pns_exponent > 0:
        weights[deg == 0.0] = 0.0
    if weights.sum() <= 0.0:
        return uniform_negative(graph, v, source)
    return source.choice_weighted(valid, weights)


def dns_negative(embeddings, graph: Graph, v: int, config: SamplerConfig,
                 source: RandomSource) -> int:
    """Dynamic sampling: hardest of `dns_candidates` uniform candidates.

    Candidates are drawn without replacement (all valid nodes if fewer
    exist); the returned node maximizes the current score h_v . h_u, with
    ties broken toward the lowest node index.
    """
    emb = np.asarray(embeddings.data if hasattr(embeddings, "data") else embeddings,
                     dtype=np.float64)
    valid = _valid_candidates(graph, v)
    if len(valid) == 0:
        raise SamplingError(f"node {v} is adjacent to every other node")
    k = min(config.dns_candidates, len(valid))
    if k == len(valid):
        candidates = valid
    else:
        picked: list[int] = []
        chosen: set[int] = set()
        invalid = _invalid_set(graph, v)
        misses = 0
        while len(picked) < k:
            u = source.integers(0, graph.num_nodes)
            if u in invalid or u in chosen:
                misses += 1
                if misses > _MAX_REJECTIONS:
                    remaining = np.array(sorted(set(map(int, valid)) - chosen), dtype=np.int64)
                    while len(picked) < k:
                        j = source.integers(0, len(remaining))
                        picked.append(int(remaining[j]))
                        remaining = np.delete(remaining, j)
                    break
                continue
            picked.append(u)
            chosen.add(u)
        candidates = np.array(picked, dtype=np.int64)
    candidates = np.sort(candidates)
    scores = emb[candidates] @ emb[v]
    # argmax returns the first maximum; sorting first makes ties resolve to
    # the lowest node index.
    return int(candidates[int(np.argmax(scores))])


def heuristic_negative(kind: str, graph: Graph, v: int, config: SamplerConfig,
                       source: RandomSource, embeddings=None) -> int:
    """Dispatch by sampler kind; DNS requires current embeddings."""
    if kind == "uniform":
        return uniform_negative(graph, v, source)
    if kind == "pns":
        return pns_negative(graph, v, config, source)
    if kind == "dns":
        if embeddings is None:
            raise ValueError("dns sampler needs current embeddings")
        return dns_negative(embeddings, graph, v, config, source)
    raise ValueError(f"unknown sampler kind {kind!r}")
