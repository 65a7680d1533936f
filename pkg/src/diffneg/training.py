"""Alternating training: diffusion inner loop, contrastive encoder outer loop.

Each batch of training edges is processed in four stages: encode the
training subgraph, take `inner_steps` gradient steps on the noise-prediction
loss (embeddings frozen), reverse-sample a multi-level negative set per
query, then take one encoder step on the weighted link loss (diffusion
frozen).  Validation MAP drives early stopping.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .diffusion import (DiffusionParams, NoiseSchedule, build_schedule, default_extract_steps,
                        diffusion_loss, extract_multilevel, init_diffusion_params,
                        reverse_sample_batch)
from .encoder import EncoderParams, encode, init_encoder_params
from .evaluation import evaluate
from .graphio import EdgeSplit, Graph, training_subgraph
from .optim import make_optimizer
from .rng import RandomSource
from .samplers import SamplerConfig, heuristic_negative
from .tensor import Tensor


class TrainingDivergedError(RuntimeError):
    """A loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    lr_encoder: float = 0.01
    lr_diffusion: float = 0.001
    inner_steps: int = 5
    neighbor_cap: int = 20
    weights: tuple[float, ...] | None = None
    extract_steps: tuple[int, ...] | None = None
    t_max: int = 50
    schedule_policy: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 0.02
    hidden_dim: int = 32
    embed_dim: int = 32
    film_layers: int = 2
    dropout: float = 0.1
    sampler: str = "uniform"
    dns_candidates: int = 10
    pns_exponent: float = 0.75
    unconditional: bool = False
    unweighted: bool = False
    single_step: int | None = None
    no_generated: bool = False
    no_heuristic: bool = False
    patience: int = 20
    optimizer: str = "adam"
    seed: int = 0
    timing: str = "wall"

    def __post_init__(self):
        if self.lr_encoder <= 0 or self.lr_diffusion <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.inner_steps < 0:
            raise ValueError("epochs/batch_size/inner_steps out of range")
        if self.timing not in ("wall", "none"):
            raise ValueError(f"timing must be wall or none, got {self.timing!r}")
        steps = self.resolved_extract_steps()
        weights = self.resolved_weights()
        if len(weights) != len(steps):
            raise ValueError(f"{len(weights)} weights for {len(steps)} extraction steps")

    def resolved_extract_steps(self) -> tuple[int, ...]:
        if self.single_step is not None:
            if not 0 <= self.single_step <= self.t_max:
                raise ValueError(f"single_step {self.single_step} outside [0, {self.t_max}]")
            return (int(self.single_step),)
        if self.extract_steps is not None:
            return tuple(sorted(set(int(t) for t in self.extract_steps)))
        return tuple(default_extract_steps(self.t_max))

    def resolved_weights(self) -> tuple[float, ...]:
        steps = ((int(self.single_step),) if self.single_step is not None
                 else self.extract_steps or default_extract_steps(self.t_max))
        count = len(set(steps)) if self.single_step is None else 1
        if self.unweighted:
            return (1.0,) * count
        if self.single_step is not None:
            return (1.0,)
        if self.weights is not None:
            return tuple(float(w) for w in self.weights)
        # Linearly decayed from 1.0 in steps of 0.1, aligned to increasing t:
        # four steps give (1.0, 0.9, 0.8, 0.7).
        return tuple(1.0 - 0.1 * i for i in range(count))

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(self.sampler, self.dns_candidates, self.pns_exponent)


@dataclass(frozen=True)
class Quadruplet:
    """One training unit: query, positive, heuristic negative, generated set."""

    v: int
    u: int
    u_neg: int | None
    generated: tuple[np.ndarray, ...] = ()


@dataclass
class EpochLog:
    epoch: int
    diffusion_loss: float
    link_loss: float
    val_map: float
    val_ndcg: float
    wall_seconds: float


@dataclass
class TrainResult:
    encoder: EncoderParams
    diffusion: DiffusionParams
    schedule: NoiseSchedule
    log: list[EpochLog]
    best_epoch: int
    init_val_map: float
    init_val_ndcg: float
    config: TrainConfig


def _link_loss_rows(emb, vs, us, negs, generated, weights) -> Tensor:
    """Mean link loss over rows; `generated` is (B, k, d) constants or None."""
    emb_t = emb if isinstance(emb, Tensor) else Tensor(emb)
    vs = np.asarray(vs, dtype=np.int64)
    b = vs.shape[0]
    h_v = tz.gather_rows(emb_t, vs)
    h_u = tz.gather_rows(emb_t, np.asarray(us, dtype=np.int64))
    total = tz.tsum(tz.softplus(tz.affine(tz.row_dot(h_v, h_u), -1.0, 0.0)))
    if negs is not None:
        h_n = tz.gather_rows(emb_t, np.asarray(negs, dtype=np.int64))
        total = tz.add(total, tz.tsum(tz.softplus(tz.row_dot(h_v, h_n))))
    if generated is not None and len(weights):
        for i, w in enumerate(weights):
            s = tz.row_dot(h_v, Tensor(generated[:, i, :]))
            total = tz.add(total, tz.affine(tz.tsum(tz.softplus(s)), float(w), 0.0))
    return tz.affine(total, 1.0 / b, 0.0)


def link_loss(quad: Quadruplet, embeddings, weights) -> Tensor:
    """Pairwise objective for one quadruplet.

    softplus(-h_v.h_u) + softplus(h_v.h_u') + sum_i w_i softplus(h_v.h_di),
    using -log sigmoid(x) = softplus(-x).  Generated vectors are constants;
    gradients flow only through the embedding rows of v, u, u'.
    """
    gen = None
    weights = tuple(float(w) for w in weights)
    if quad.generated:
        if len(weights) != len(quad.generated):
            raise ValueError(f"{len(weights)} weights for {len(quad.generated)} generated negatives")
        gen = np.stack([np.asarray(g, dtype=np.float64) for g in quad.generated])[None, :, :]
    negs = None if quad.u_neg is None else [quad.u_neg]
    return _link_loss_rows(embeddings, [quad.v], [quad.u], negs,
                           gen, weights if gen is not None else ())


def _capped_neighbor_sets(subgraph: Graph, queries: np.ndarray, cap: int,
                          source: RandomSource) -> list[np.ndarray]:
    """Per query, its neighbor list sampled down to at most `cap` entries."""
    sets = []
    for i, v in enumerate(queries):
        adj = subgraph.adjacency[int(v)]
        if len(adj) > cap:
            idx = source.child("cap", i).permutation(len(adj))[:cap]
            adj = adj[np.sort(idx)]
        sets.append(adj)
    return sets


def _draw_pairs(queries: np.ndarray, neighbor_sets, source: RandomSource) -> np.ndarray:
    """(v, u) rows with u drawn from v's capped neighbors; u = -1 if none."""
    pairs = np.empty((len(queries), 2), dtype=np.int64)
    for i, v in enumerate(queries):
        adj = neighbor_sets[i]
        pairs[i, 0] = v
        pairs[i, 1] = int(adj[source.integers(0, len(adj))]) if len(adj) else -1
    return pairs


def inner_train_diffusion(queries, embeddings, subgraph: Graph, params: DiffusionParams,
                          optimizer, schedule: NoiseSchedule, config: TrainConfig,
                          source: RandomSource) -> float:
    """config.inner_steps gradient steps on the noise loss; returns mean loss.

    Each step re-draws the neighbor u, the step t, and the noise; the
    embeddings argument is raw values, so the encoder cannot be touched.
    """
    emb = np.asarray(embeddings.data if isinstance(embeddings, Tensor) else embeddings,
                     dtype=np.float64)
    queries = np.asarray(queries, dtype=np.int64)
    neighbor_sets = _capped_neighbor_sets(subgraph, queries, config.neighbor_cap,
                                          source.child("cap"))
    losses = []
    for s in range(config.inner_steps):
        pairs = _draw_pairs(queries, neighbor_sets, source.child("pairs", s))
        loss_source = source.child("loss", s)
        grads = tz.gradient(
            _traced(lambda: diffusion_loss(pairs, emb, schedule, params, loss_source)),
            params.store)
        value = _last_loss_value.pop()
        if not np.isfinite(value):
            raise TrainingDivergedError(f"diffusion loss became {value}")
        optimizer.step(grads)
        losses.append(value)
    return float(np.mean(losses)) if losses else 0.0


# gradient() evaluates the loss builder once; the builder deposits the loss
# value here so callers can log it without recomputing.
_last_loss_value: list[float] = []


def _traced(fn):
    def wrapped():
        loss = fn()
        _last_loss_value.append(float(loss.data))
        return loss
    return wrapped


def train(graph: Graph, split: EdgeSplit, config: TrainConfig) -> TrainResult:
    """Run the full alternating loop and return the best-validation model."""
    if len(split.train_edges) == 0:
        raise ValueError("empty training edge set")
    subgraph = training_subgraph(graph, split)
    run = RandomSource(config.seed)
    enc = init_encoder_params(graph.num_features, run.child("init", "encoder"),
                              config.hidden_dim, config.embed_dim, config.dropout)
    diff = init_diffusion_params(run.child("init", "diffusion"), config.embed_dim,
                                 config.film_layers, conditional=not config.unconditional)
    schedule = build_schedule(config.t_max, config.schedule_policy,
                              config.beta_start, config.beta_end)
    enc_opt = make_optimizer(config.optimizer, enc.store, config.lr_encoder)
    diff_opt = make_optimizer(config.optimizer, diff.store, config.lr_diffusion)
    steps = config.resolved_extract_steps()
    weights = config.resolved_weights()
    sampler_cfg = config.sampler_config()
    val_seed = config.seed

    def val_metrics() -> tuple[float, float]:
        emb = encode(subgraph, enc, training=False)
        return evaluate(split.val_edges, emb.data, graph, val_seed)

    init_map, init_ndcg = val_metrics()
    best_map = -1.0
    best_epoch = 0
    best_state = (enc.store.state(), diff.store.state())
    log: list[EpochLog] = []
    edges = split.train_edges
    for epoch in range(1, config.epochs + 1):
        t_start = time.perf_counter()
        order = run.child("shuffle", epoch).permutation(len(edges))
        diff_losses: list[float] = []
        link_losses: list[float] = []
        for b_idx, lo in enumerate(range(0, len(edges), config.batch_size)):
            batch = edges[order[lo:lo + config.batch_size]]
            vs, us = batch[:, 0], batch[:, 1]
            emb_t = encode(subgraph, enc, training=True,
                           source=run.child("dropout", epoch, b_idx))
            emb_values = emb_t.data

            gen = None
            if not config.no_generated:
                diff_losses.append(inner_train_diffusion(
                    vs, emb_values, subgraph, diff, diff_opt, schedule, config,
                    run.child("inner", epoch, b_idx)))
                trajs = reverse_sample_batch(
                    emb_values[vs], schedule, diff,
                    [run.child("gen", epoch, b_idx, i) for i in range(len(vs))],
                    steps, queries=vs)
                gen = np.stack([np.stack(extract_multilevel(t, steps)) for t in trajs])

            negs = None
            if not config.no_heuristic:
                negs = np.array([
                    heuristic_negative(config.sampler, subgraph, int(v), sampler_cfg,
                                       run.child("neg", epoch, b_idx, i),
                                       embeddings=emb_values)
                    for i, v in enumerate(vs)], dtype=np.int64)

            grads = tz.gradient(
                _traced(lambda: _link_loss_rows(emb_t, vs, us, negs, gen, weights)),
                enc.store)
            value = _last_loss_value.pop()
            if not np.isfinite(value):
                raise TrainingDivergedError(f"link loss became {value}")
            enc_opt.step(grads)
            link_losses.append(value)
        val_map, val_ndcg = val_metrics()
        wall = time.perf_counter() - t_start if config.timing == "wall" else 0.0
        log.append(EpochLog(epoch, float(np.mean(diff_losses)) if diff_losses else 0.0,
                            float(np.mean(link_losses)), val_map, val_ndcg, wall))
        if val_map > best_map:
            best_map = val_map
            best_epoch = epoch
            best_state = (enc.store.state(), diff.store.state())
        elif epoch - best_epoch >= config.patience:
            break
    enc.store.load_state(best_state[0])
    diff.store.load_state(best_state[1])
    return TrainResult(enc, diff, schedule, log, best_epoch, init_map, init_ndcg, config)
