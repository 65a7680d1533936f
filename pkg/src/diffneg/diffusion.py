"""Conditional denoising diffusion over embedding vectors.

The forward process corrupts a neighbor embedding h_u toward noise in T
steps; a small FiLM-conditioned network learns to predict the added noise
given the step and the query embedding h_v; ancestral reverse sampling then
generates synthetic neighbors for v, and intermediate states double as
negatives of graded hardness.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tz
from .rng import RandomSource
from .tensor import ParamStore, Tensor

DEFAULT_T = 50
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
SCHEDULE_POLICIES = ("linear", "cosine", "sigmoid")


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance tables for t = 1..T; arrays are indexed by t-1."""

    t_max: int
    policy: str
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._index(t)])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._index(t)])

    def alpha_bar_at(self, t: int) -> float:
        return float(self.alpha_bar[self._index(t)])

    def sigma_at(self, t: int) -> float:
        return float(self.sigma[self._index(t)])

    def _index(self, t: int) -> int:
        if not 1 <= t <= self.t_max:
            raise ValueError(f"step {t} outside [1, {self.t_max}]")
        return t - 1


def build_schedule(t_max: int, policy: str = "linear",
                   beta_start: float = DEFAULT_BETA_START,
                   beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Construct the beta/alpha tables for one of the three policies.

    linear: beta_t = beta_start + (t-1)(beta_end-beta_start)/(T-1).
    cosine: alpha_bar follows the squared-cosine curve with offset 0.008 and
    per-step beta clipped to 0.999 (beta_start/beta_end are ignored).
    sigmoid: beta_t = beta_start + (beta_end-beta_start) * logistic(12t/T - 6).
    """
    if t_max < 2:
        raise ValueError(f"t_max must be >= 2, got {t_max}")
    if not (0.0 < beta_start < beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}")
    t = np.arange(1, t_max + 1, dtype=np.float64)
    if policy == "linear":
        beta = beta_start + (t - 1.0) * (beta_end - beta_start) / (t_max - 1.0)
    elif policy == "cosine":
        grid = np.arange(0, t_max + 1, dtype=np.float64)
        f = np.cos(((grid / t_max + 0.008) / 1.008) * math.pi / 2.0) ** 2
        bar = f / f[0]
        beta = np.minimum(1.0 - bar[1:] / bar[:-1], 0.999)
    elif policy == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-(12.0 * t / t_max - 6.0)))
        beta = beta_start + (beta_end - beta_start) * s
    else:
        raise ValueError(f"unknown schedule policy {policy!r}")
    if beta.min() <= 0.0 or beta.max() >= 1.0:
        raise ValueError(f"policy {policy!r} produced beta outside (0, 1)")
    alpha = 1.0 - beta
    # alpha_bar is the running product of alpha, so the recurrence
    # alpha_bar_t = alpha_bar_{t-1} * alpha_t holds exactly in floating point.
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(t_max, policy, beta, alpha, alpha_bar, np.sqrt(beta))


def sublinear_lambdas(schedule: NoiseSchedule) -> np.ndarray:
    """(beta_1 / beta_{t+1}) * alpha_bar_t for t = 1..T-1.

    Each value is the exponent lambda relating the generated-negative density
    to the positive density; the sub-linearity argument needs all of them
    inside (0, 1).
    """
    beta = schedule.beta
    return (beta[0] / beta[1:]) * schedule.alpha_bar[:-1]


def default_extract_steps(t_max: int) -> list[int]:
    """Steps T/10, T/8, T/4, T/2 rounded half-up, floored at 1, deduplicated."""
    steps = set()
    for frac in (10, 8, 4, 2):
        steps.add(max(1, int(math.floor(t_max / frac + 0.5))))
    return sorted(steps)


class DiffusionParams:
    """Time-MLP plus stacked FiLM layers, all width `dim`.

    When `conditional` is false the query embedding is dropped from the
    conditioning vector (ablation), leaving the time encoding alone.
    """

    def __init__(self, store: ParamStore, dim: int, film_layers: int, conditional: bool = True):
        self.store = store
        self.dim = int(dim)
        self.film_layers = int(film_layers)
        self.conditional = bool(conditional)


def init_diffusion_params(source: RandomSource, dim: int = 32, film_layers: int = 2,
                          conditional: bool = True) -> DiffusionParams:
    from .encoder import glorot_uniform

    store = ParamStore()
    store.add("time_w1", glorot_uniform(source.child("time_w1"), dim, dim))
    store.add("time_b1", np.zeros(dim))
    store.add("time_w2", glorot_uniform(source.child("time_w2"), dim, dim))
    store.add("time_b2", np.zeros(dim))
    for k in range(film_layers):
        store.add(f"film{k}_gamma_w", glorot_uniform(source.child(f"film{k}_gamma_w"), dim, dim))
        store.add(f"film{k}_gamma_b", np.zeros(dim))
        store.add(f"film{k}_eta_w", glorot_uniform(source.child(f"film{k}_eta_w"), dim, dim))
        store.add(f"film{k}_eta_b", np.zeros(dim))
    return DiffusionParams(store, dim, film_layers, conditional)


def sinusoidal_base(t, dim: int) -> np.ndarray:
    """Interleaved sin/cos features: base[2i] = sin(t / 10000^{2i/dim}),
    base[2i+1] = cos at the same frequency.  Accepts a scalar step or an
    array of steps (result gains a leading axis)."""
    ts = np.asarray(t, dtype=np.float64)
    idx = np.arange(dim)
    freq = 1.0 / np.power(10000.0, (2.0 * (idx // 2)) / dim)
    angle = ts[..., None] * freq
    out = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return out


def _time_mlp_rows(base: np.ndarray, params: DiffusionParams) -> Tensor:
    """Traced MLP over (B, dim) base encodings: one ReLU hidden layer."""
    s = params.store
    hidden = tz.relu(tz.add(tz.matmul(Tensor(base), s["time_w1"]), s["time_b1"]))
    return tz.add(tz.matmul(hidden, s["time_w2"]), s["time_b2"])


def time_encoding(t: int, params: DiffusionParams) -> Tensor:
    """MLP(sinusoidal base) for one step; shape (dim,)."""
    if t < 0:
        raise ValueError(f"time step must be >= 0, got {t}")
    base = sinusoidal_base(np.array([t], dtype=np.float64), params.dim)
    return _squeeze_row(_time_mlp_rows(base, params))


def _squeeze_row(rows: Tensor) -> Tensor:
    # (1, d) -> (d,): summing the single row keeps gradients flowing.
    return tz.tsum(rows, axis=0)


def _film_rows(x, cond: Tensor, params: DiffusionParams) -> Tensor:
    """Apply the stacked FiLM layers to (B, dim) rows under conditioning rows."""
    s = params.store
    out = x if isinstance(x, Tensor) else Tensor(x)
    for k in range(params.film_layers):
        gamma = tz.add(tz.matmul(cond, s[f"film{k}_gamma_w"]), s[f"film{k}_gamma_b"])
        eta = tz.add(tz.matmul(cond, s[f"film{k}_eta_w"]), s[f"film{k}_eta_b"])
        out = tz.add(tz.mul(tz.add(gamma, Tensor(1.0)), out), eta)
    return out


def predict_noise(h_ut, t: int, h_v, params: DiffusionParams) -> Tensor:
    """FiLM-conditioned noise estimate for a single diffused vector.

    The conditioning vector is time_encoding(t) + h_v, shared by every
    stacked layer; each layer maps x to (gamma + 1) * x + eta.  Passing
    h_v=None (or an unconditional params object) drops the query term.
    """
    h_ut = np.asarray(h_ut.data if isinstance(h_ut, Tensor) else h_ut, dtype=np.float64)
    if h_ut.shape != (params.dim,):
        raise tz.ShapeError(f"h_ut has shape {h_ut.shape}, expected ({params.dim},)")
    cond = time_encoding(t, params)
    if params.conditional and h_v is not None:
        h_v = np.asarray(h_v.data if isinstance(h_v, Tensor) else h_v, dtype=np.float64)
        if h_v.shape != (params.dim,):
            raise tz.ShapeError(f"h_v has shape {h_v.shape}, expected ({params.dim},)")
        cond = tz.add(cond, Tensor(h_v))
    cond_rows = _reshape_to_row(cond)
    out = _film_rows(h_ut[None, :], cond_rows, params)
    return _squeeze_row(out)


def _reshape_to_row(vec: Tensor) -> Tensor:
    # (d,) -> (1, d); element-wise product with a ones row broadcasts the
    # shape without touching values and stays gradient-transparent.
    return tz.mul(vec, Tensor(np.ones((1, vec.shape[0]))))


def forward_diffuse(h_u: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """sqrt(alpha_bar_t) * h_u + sqrt(1 - alpha_bar_t) * eps.

    Vectorized: h_u and eps may be (B, d) with t an array of B steps.
    """
    h_u = np.asarray(h_u, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if h_u.shape != eps.shape:
        raise tz.ShapeError(f"h_u shape {h_u.shape} != eps shape {eps.shape}")
    ts = np.asarray(t)
    if ts.min() < 1 or ts.max() > schedule.t_max:
        raise ValueError(f"step {t} outside [1, {schedule.t_max}]")
    bar = schedule.alpha_bar[ts - 1]
    if h_u.ndim == 2 and bar.ndim == 1:
        bar = bar[:, None]
    return np.sqrt(bar) * h_u + np.sqrt(1.0 - bar) * eps


def diffusion_loss(pairs, embeddings, schedule: NoiseSchedule,
                   params: DiffusionParams, source: RandomSource) -> Tensor:
    """Mean squared noise-prediction error over a batch of (v, u) pairs.

    Per pair: t ~ Uniform{1..T}, eps ~ N(0, I), h_ut = forward_diffuse(h_u),
    loss term = ||eps - predict_noise(h_ut, t, h_v)||^2.  Embeddings enter as
    constants; gradients flow only into `params`.  Pairs with u < 0 mark
    queries that had no neighbor to draw and are skipped with a warning.
    Draw order: all steps t first (one batch), then all eps (one batch).
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    emb = np.asarray(embeddings.data if isinstance(embeddings, Tensor) else embeddings,
                     dtype=np.float64)
    keep = pairs[:, 1] >= 0
    if not keep.all():
        warnings.warn(f"skipping {int((~keep).sum())} neighborless queries in diffusion batch")
    pairs = pairs[keep]
    if pairs.shape[0] == 0:
        raise ValueError("diffusion_loss: no usable (v, u) pairs in batch")
    b = pairs.shape[0]
    ts = source.integers(1, schedule.t_max + 1, size=b)
    eps = source.normal((b, emb.shape[1]))
    h_ut = forward_diffuse(emb[pairs[:, 1]], ts, eps, schedule)
    cond = _time_mlp_rows(sinusoidal_base(ts.astype(np.float64), params.dim), params)
    if params.conditional:
        cond = tz.add(cond, Tensor(emb[pairs[:, 0]]))
    eps_hat = _film_rows(h_ut, cond, params)
    diff = tz.add(eps_hat, Tensor(-eps))
    return tz.affine(tz.squared_norm(diff), 1.0 / b, 0.0)


@dataclass
class Trajectory:
    """States h_{d,t|v} of one reverse run, keyed by time step."""

    query: int
    states: dict[int, np.ndarray] = field(default_factory=dict)


def _film_values(x: np.ndarray, cond: np.ndarray, params: DiffusionParams) -> np.ndarray:
    s = params.store
    out = x
    for k in range(params.film_layers):
        gamma = cond @ s[f"film{k}_gamma_w"].data + s[f"film{k}_gamma_b"].data
        eta = cond @ s[f"film{k}_eta_w"].data + s[f"film{k}_eta_b"].data
        out = (gamma + 1.0) * out + eta
    return out


def _time_mlp_values(base: np.ndarray, params: DiffusionParams) -> np.ndarray:
    s = params.store
    hidden = np.maximum(base @ s["time_w1"].data + s["time_b1"].data, 0.0)
    return hidden @ s["time_w2"].data + s["time_b2"].data


def reverse_sample_batch(h_vs, schedule: NoiseSchedule, params: DiffusionParams,
                         sources: list[RandomSource], extract_steps,
                         queries=None) -> list[Trajectory]:
    """Ancestral sampling for several queries at once (values only, no tape).

    Row i consumes only sources[i]: one (T, dim) normal draw supplying the
    initial state (row 0) and the per-step z vectors (rows 1..T-1, used for
    t = T down to 2; z = 0 at t = 1).
    """
    t_max, dim = schedule.t_max, params.dim
    h_vs = None if h_vs is None else np.asarray(
        h_vs.data if isinstance(h_vs, Tensor) else h_vs, dtype=np.float64).reshape(-1, dim)
    b = len(sources) if h_vs is None else h_vs.shape[0]
    if len(sources) != b:
        raise ValueError(f"need one RandomSource per query: {len(sources)} != {b}")
    wanted = set(int(s) for s in extract_steps) | {0}
    for s in wanted:
        if not 0 <= s <= t_max:
            raise ValueError(f"extraction step {s} outside [0, {t_max}]")
    draws = np.stack([src.normal((t_max, dim)) for src in sources])
    x = draws[:, 0, :].copy()
    states: dict[int, np.ndarray] = {}
    if t_max in wanted:
        states[t_max] = x.copy()
    time_bases = sinusoidal_base(np.arange(1, t_max + 1, dtype=np.float64), dim)
    for t in range(t_max, 0, -1):
        cond = _time_mlp_values(time_bases[t - 1:t], params)
        cond = cond + h_vs if (params.conditional and h_vs is not None) else np.broadcast_to(cond, (b, dim))
        eps_hat = _film_values(x, cond, params)
        beta_t = schedule.beta[t - 1]
        coeff = beta_t / math.sqrt(1.0 - schedule.alpha_bar[t - 1])
        x = (x - coeff * eps_hat) / math.sqrt(schedule.alpha[t - 1])
        if t > 1:
            x = x + schedule.sigma[t - 1] * draws[:, 1 + (t_max - t), :]
        if (t - 1) in wanted:
            states[t - 1] = x.copy()
    out = []
    for i in range(b):
        q = -1 if queries is None else int(queries[i])
        out.append(Trajectory(q, {t: states[t][i].copy() for t in states}))
    return out


def reverse_sample(h_v, schedule: NoiseSchedule, params: DiffusionParams,
                   source: RandomSource, extract_steps, query: int = -1) -> Trajectory:
    """Single-query ancestral sampling; records extract_steps plus step 0."""
    h_vs = None if h_v is None else np.asarray(
        h_v.data if isinstance(h_v, Tensor) else h_v, dtype=np.float64)[None, :]
    return reverse_sample_batch(h_vs, schedule, params, [source], extract_steps,
                                queries=[query])[0]


def extract_multilevel(traj: Trajectory, steps) -> list[np.ndarray]:
    """The recorded states at `steps`, ordered by increasing t."""
    ordered = sorted(set(int(s) for s in steps))
    missing = [s for s in ordered if s not in traj.states]
    if missing:
        raise KeyError(f"trajectory lacks states at steps {missing}")
    return [traj.states[s] for s in ordered]
