"""Differentially private contrastive training and ranking evaluation.

One training iteration: Poisson-sample positive edges, attach
without-replacement negatives, compute per-tuple gradients, clip, add
Gaussian noise scaled by ``sigma * clip_norm``, divide by the *configured*
batch size, and take an SGD step. The privacy ledger composes the
per-iteration divergence curve additively and converts at the configured
``delta`` after every step.

Randomness is split into fixed substreams of the run seed so that the
degree cap, the sampling/noise sequence, evaluation, and weight init stay
independently reproducible: stream 0 caps degrees, stream 1 drives the
training loop (sampling draws first, then the noise draw, each iteration),
stream 2 ranks candidates, stream 3 initializes weights. Given identical
inputs the trained weights are reproduced bit for bit.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import accountant
from .accountant import AccountantParams, DpResult, RdpCurve
from .clipping import freq_clip, standard_clip
from .errors import CapacityError, NumericError
from .graph import Graph, cap_degrees
from .models import DOT, EncoderModel, LossSpec, init_model, tuple_loss_grad
from .rng import make_rng
from .sampling import neg_sample_wor, poisson_positive

ADAPTIVE = "adaptive"
STANDARD = "standard"


@dataclasses.dataclass(frozen=True)
class LearningRate:
    """Constant rate, or step decay when ``decay_every > 0``."""

    base: float
    decay_every: int = 0
    decay_factor: float = 1.0

    def __post_init__(self):
        if not self.base > 0:
            raise ValueError("learning rate must be positive")
        if self.decay_every < 0:
            raise ValueError("decay_every must be >= 0")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError("decay_factor must lie in (0, 1]")

    def at(self, iteration: int) -> float:
        if self.decay_every <= 0:
            return self.base
        return self.base * self.decay_factor ** (iteration // self.decay_every)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    batch_size: int
    iterations: int
    k_neg: int = 4
    max_degree: int = 5
    clip_norm: float = 1.0
    sigma: float = 0.5
    learning_rate: LearningRate | float = 0.1
    seed: int = 0
    delta: float | None = None
    momentum: float = 0.0
    clip_mode: str = ADAPTIVE
    score_kind: str = DOT

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.k_neg < 1:
            raise ValueError("k_neg must be >= 1")
        if self.max_degree < 1:
            raise ValueError("max_degree must be >= 1")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.sigma > 0 and not math.isfinite(self.clip_norm):
            raise ValueError("noisy training needs a finite clip_norm")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.clip_mode not in (ADAPTIVE, STANDARD):
            raise ValueError(f"unknown clip_mode {self.clip_mode!r}")
        if isinstance(self.learning_rate, (int, float)):
            object.__setattr__(self, "learning_rate",
                               LearningRate(float(self.learning_rate)))


@dataclasses.dataclass
class PrivacyLedger:
    """Accumulated privacy cost of a training run.

    ``per_iteration_curve`` is the divergence curve of a single noisy step;
    ``composed_curve`` scales it by ``iterations_so_far``. Non-private runs
    (``sigma=0``) carry no curves and report infinite ``eps``.
    """

    delta: float
    iterations_so_far: int = 0
    per_iteration_curve: RdpCurve | None = None
    composed_curve: RdpCurve | None = None
    dp_at_delta: DpResult | None = None

    def advance(self, iterations: int) -> None:
        self.iterations_so_far = int(iterations)
        if self.per_iteration_curve is None:
            self.dp_at_delta = DpResult(eps=math.inf, delta=self.delta,
                                        best_alpha=math.nan,
                                        iterations=self.iterations_so_far)
            return
        self.composed_curve = accountant.compose(self.per_iteration_curve,
                                                 self.iterations_so_far)
        if self.iterations_so_far == 0:
            # nothing released yet; the conversion bound is vacuous
            self.dp_at_delta = DpResult(eps=0.0, delta=self.delta,
                                        best_alpha=math.nan, iterations=0)
        else:
            self.dp_at_delta = accountant.rdp_to_dp(
                self.composed_curve, self.delta, self.iterations_so_far)

    def to_text(self) -> str:
        dp = self.dp_at_delta
        lines = [
            f"iterations = {self.iterations_so_far}",
            f"delta = {self.delta:.17g}",
            f"eps = {dp.eps:.17g}" if dp is not None else "eps = inf",
            f"best_alpha = {dp.best_alpha:.17g}" if dp is not None
            else "best_alpha = nan",
        ]
        return "\n".join(lines) + "\n"

    def write(self, path_prefix: str) -> list[str]:
        """Write ``<prefix>.txt`` plus the two curve CSVs; returns the paths."""
        paths = [f"{path_prefix}.txt"]
        with open(paths[0], "w", encoding="utf-8") as fh:
            fh.write(self.to_text())
        if self.per_iteration_curve is not None:
            paths.append(f"{path_prefix}_per_iteration.csv")
            accountant.write_curve_csv(self.per_iteration_curve, paths[-1])
        if self.composed_curve is not None:
            paths.append(f"{path_prefix}_composed.csv")
            accountant.write_curve_csv(self.composed_curve, paths[-1])
        return paths


def write_metrics_csv(path, metrics: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("metric,value\n")
        for key, value in metrics.items():
            fh.write(f"{key},{float(value):.17g}\n")


def _tuple_gradients(model, features, batch, loss, score_kind, iteration):
    losses = []
    grads = []
    for t in batch.tuples:
        value, grad = tuple_loss_grad(model, features, t, loss, score_kind)
        losses.append(value)
        grads.append(grad)
    if losses and not np.all(np.isfinite(losses)):
        raise NumericError(f"non-finite tuple loss at iteration {iteration}")
    return losses, grads


def dp_train(graph: Graph, cfg: TrainConfig, loss: LossSpec,
             model: EncoderModel | None = None,
             alphas=None, callback=None) -> tuple[EncoderModel, PrivacyLedger]:
    """Train with noisy clipped contrastive SGD; returns (model, ledger).

    Degrees are capped first (stream 0 of ``cfg.seed``), fixing the edge set
    the accountant sees. The positive rate is ``batch_size / |edges|`` after
    capping. ``callback(iteration, mean_loss)``, when given, observes every
    step. Raises :class:`CapacityError` (annotated with the iteration) when
    a batch needs more negatives than there are active nodes, and
    :class:`NumericError` when a tuple loss goes non-finite.
    """
    if graph.features is None:
        raise ValueError("training requires node features")
    capped, cap_report = cap_degrees(graph, cfg.max_degree, cfg.seed)
    num_edges = capped.num_edges

    delta = cfg.delta
    if delta is None:
        if num_edges == 0:
            raise ValueError("cannot default delta on an edgeless graph")
        delta = 1.0 / num_edges

    gamma = cfg.batch_size / num_edges if num_edges else 0.0
    if gamma > 1.0:
        gamma = 1.0

    ledger = PrivacyLedger(delta=delta)
    if cfg.sigma > 0:
        params = AccountantParams(
            num_edges=num_edges,
            num_nodes=int(capped.active_nodes().size),
            max_degree=cfg.max_degree,
            gamma=gamma,
            k_neg=cfg.k_neg,
            sigma=cfg.sigma,
        )
        mode = cfg.clip_mode
        ledger.per_iteration_curve = accountant.rdp_curve(params, mode, alphas)
    ledger.advance(0)

    if model is None:
        in_dim = capped.features.shape[1]
        model = init_model("linear", in_dim, in_dim, cfg.seed)
    model = dataclasses.replace(model, weights=model.weights.copy())

    rng = make_rng(cfg.seed, 1)
    active = capped.active_nodes()
    velocity = np.zeros_like(model.weights)
    noise_std = cfg.sigma * cfg.clip_norm

    for t in range(cfg.iterations):
        positives = poisson_positive(capped.edges, gamma, rng)
        try:
            batch = neg_sample_wor(positives, cfg.k_neg, active, rng)
        except CapacityError as exc:
            raise CapacityError(f"iteration {t}: {exc}") from exc

        losses, grads = _tuple_gradients(model, capped.features, batch,
                                         loss, cfg.score_kind, t)
        if grads:
            if cfg.clip_mode == ADAPTIVE:
                total = freq_clip(batch, grads, cfg.clip_norm)
            else:
                total = standard_clip(grads, cfg.clip_norm)
        else:
            total = np.zeros_like(model.weights)

        if noise_std > 0:
            total = total + rng.normal(0.0, noise_std, size=total.shape)
        update = total / cfg.batch_size

        velocity = cfg.momentum * velocity + update
        model.weights -= cfg.learning_rate.at(t) * velocity

        ledger.advance(t + 1)
        if callback is not None:
            callback(t, float(np.mean(losses)) if losses else 0.0)

    model.__post_init__()  # re-validate: weights must still be finite
    return model, ledger


def evaluate_ranking(model: EncoderModel, graph: Graph, n_candidates: int,
                     seed: int, score_kind: str = DOT) -> tuple[float, float]:
    """Mean precision-at-1 and reciprocal rank over the graph's edges.

    For each edge ``(u, v)``, the true endpoint ``v`` is ranked against
    ``n_candidates - 1`` uniformly drawn non-neighbors of ``u`` by score
    against ``u``; score ties are broken toward the smaller node id.
    """
    if n_candidates < 2:
        raise ValueError("n_candidates must be >= 2")
    if graph.features is None:
        raise ValueError("ranking requires node features")
    if graph.num_edges == 0:
        raise ValueError("no edges to evaluate")

    embeddings = np.atleast_2d(model.encode(graph.features))
    if score_kind == DOT:
        scored = embeddings
    else:
        norms = np.linalg.norm(embeddings, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("cosine ranking undefined for zero embeddings")
        scored = embeddings / norms

    neighbors = [set() for _ in range(graph.num_nodes)]
    for u, v in graph.edges:
        neighbors[u].add(int(v))
        neighbors[v].add(int(u))

    rng = make_rng(seed, 2)
    active = graph.active_nodes()
    hits = 0
    rr_sum = 0.0
    for u, v in graph.edges:
        u, v = int(u), int(v)
        banned = neighbors[u] | {u}
        pool = np.array([n for n in active if int(n) not in banned],
                        dtype=np.int64)
        if pool.size < n_candidates - 1:
            raise CapacityError(
                f"node {u} has {pool.size} non-neighbors, "
                f"need {n_candidates - 1}")
        cands = rng.choice(pool, size=n_candidates - 1, replace=False)
        base = scored[u]
        s_true = float(scored[v] @ base)
        s_cands = scored[cands] @ base
        rank = 1 + int(np.sum(s_cands > s_true)) \
            + int(np.sum((s_cands == s_true) & (cands < v)))
        hits += rank == 1
        rr_sum += 1.0 / rank
    m = graph.num_edges
    return hits / m, rr_sum / m
