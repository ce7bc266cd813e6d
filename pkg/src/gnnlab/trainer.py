"""Joint edge-sampling + magnitude-pruning training.

Pipeline: initialize -> pre-train (T' SGD steps with per-step neighbor
sampling) -> prune the lowest-norm neurons -> rewind survivors to their
initial weights -> re-train until the training loss hits zero or T_max.

The SGD step applies the per-neuron update
    w_k += c_eta * (1/|D|) * sum_v y_v * b_k * x_winner(v,k) * 1{act > 0},
i.e. the risk gradient with neuron k's column scaled by its normalization
constant Z_k, so a lucky neuron's pattern projection gains exactly
c_eta * (hit fraction) per step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .gnn_model import (ModelState, NeighborhoodBatch, batch_forward,
                        batch_gradient, generalization_error)
from .graph_core import LabeledSubset, PatternSet, StructuredGraph
from .sampler import BatchSampler, SamplingStrategy

STOP_RULES = ("zero_train_error", "max_iters")
STOP_METRICS = ("hinge", "zero_one")
PRUNE_KINDS = ("magnitude", "random", "none")


@dataclass
class TrainConfig:
    K: int = 100
    c_eta: float = 1.0
    delta: float = 0.1
    beta: float = 0.0
    sampling: SamplingStrategy = field(default_factory=SamplingStrategy)
    t_prime: int | None = None       # None: ceil(max|X| / c_eta)
    t_max: int = 500
    batch_mode: str = "full"         # full | disjoint
    stop_rule: str = "zero_train_error"
    stop_metric: str = "hinge"       # training-error notion for early stop
    prune_kind: str = "magnitude"
    prune_balance: str = "per_sign"  # per_sign | global
    norm_mode: str = "over_surviving"
    trace_every: int = 0             # 0: no projection traces
    seed: int = 0

    def __post_init__(self):
        if self.c_eta <= 0:
            raise ValueError("c_eta must be > 0")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must be in [0, 1)")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")
        if self.stop_metric not in STOP_METRICS:
            raise ValueError(f"unknown stop metric {self.stop_metric!r}")
        if self.prune_kind not in PRUNE_KINDS:
            raise ValueError(f"unknown prune kind {self.prune_kind!r}")


@dataclass
class TrialOutcome:
    success: bool
    iterations: int
    test_hinge: float
    test_error: float
    train_error: float
    lucky_before: int = -1
    lucky_after: int = -1
    wall_time: float = 0.0
    censored: bool = False
    trace: np.ndarray | None = None      # (records, L, K) pattern projections
    trace_iters: np.ndarray | None = None

    def to_json(self) -> dict:
        return {"success": bool(self.success), "iterations": int(self.iterations),
                "test_hinge": float(self.test_hinge), "test_error": float(self.test_error),
                "train_error": float(self.train_error), "lucky_before": int(self.lucky_before),
                "lucky_after": int(self.lucky_after), "censored": bool(self.censored),
                "wall_time": float(self.wall_time)}


def initialize(d: int, K: int, delta: float, rng: np.random.Generator,
               norm_mode: str = "over_surviving") -> ModelState:
    """Gaussian init W ~ N(0, delta^2), signs b uniform +/-1, full mask."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    W = rng.normal(0.0, delta, size=(d, K))
    b = rng.choice(np.array([1, -1]), size=K)
    return ModelState(W=W, b=b.astype(np.int64), mask=np.ones(K), W0=W.copy(),
                      delta=delta, norm_mode=norm_mode)


def default_t_prime(graph: StructuredGraph, c_eta: float) -> int:
    return int(ceil(float(np.max(np.abs(graph.features))) / c_eta))


def _sgd_steps(model: ModelState, graph: StructuredGraph, batches: list[np.ndarray],
               config: TrainConfig, rng: np.random.Generator) -> None:
    """Run one SGD step per entry of `batches`, sampling fresh neighborhoods."""
    samplers = {}
    for nodes in batches:
        key = (len(nodes), int(nodes[0]))
        if key not in samplers:
            samplers[key] = BatchSampler(config.sampling, graph, nodes)
        ids, valid = samplers[key].draw(rng)
        nb = NeighborhoodBatch.from_samples(graph, ids, valid)
        step = batch_gradient(model, nb, graph.labels[nodes], scale_by_z=True)
        model.W -= config.c_eta * step
        model.W *= model.mask[None, :]


def pretrain(model: ModelState, graph: StructuredGraph, subset: LabeledSubset,
             config: TrainConfig, rng: np.random.Generator) -> ModelState:
    """T' SGD steps on the full training set or its disjoint chunks."""
    if len(subset) == 0:
        raise ValueError("empty training set")
    t_prime = config.t_prime if config.t_prime is not None else \
        default_t_prime(graph, config.c_eta)
    if t_prime == 0:
        return model
    if config.batch_mode == "disjoint":
        chunks = [c for c in np.array_split(subset.ids, t_prime) if len(c)]
        batches = chunks[:t_prime]
    else:
        batches = [subset.ids] * t_prime
    _sgd_steps(model, graph, batches, config, rng)
    return model


def _prune_counts(model: ModelState, beta: float, balance: str) -> dict[int, int]:
    if balance == "global":
        return {0: int(beta * model.K)}
    return {s: int(beta * model.K / 2) for s in (1, -1)}


def magnitude_prune(model: ModelState, beta: float, balance: str = "per_sign",
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Zero the mask of the lowest-column-norm neurons (ties: lowest id).

    per_sign prunes floor(beta*K/2) inside each sign class; global prunes
    floor(beta*K) overall.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must be in [0, 1)")
    norms = np.linalg.norm(model.W, axis=0)
    pruned = []
    for s, count in _prune_counts(model, beta, balance).items():
        cand = np.flatnonzero((model.mask > 0) & ((model.b == s) if s else True))
        count = min(count, len(cand))
        order = cand[np.argsort(norms[cand], kind="stable")]
        pruned.extend(order[:count])
    pruned = np.array(sorted(int(k) for k in pruned), dtype=np.int64)
    model.mask[pruned] = 0.0
    model.W[:, pruned] = 0.0
    return model.mask.copy(), pruned


def random_prune(model: ModelState, beta: float, rng: np.random.Generator,
                 balance: str = "per_sign") -> tuple[np.ndarray, np.ndarray]:
    """Prune the same neuron counts as magnitude_prune, chosen uniformly."""
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must be in [0, 1)")
    pruned = []
    for s, count in _prune_counts(model, beta, balance).items():
        cand = np.flatnonzero((model.mask > 0) & ((model.b == s) if s else True))
        count = min(count, len(cand))
        pruned.extend(rng.choice(cand, size=count, replace=False))
    pruned = np.array(sorted(int(k) for k in pruned), dtype=np.int64)
    model.mask[pruned] = 0.0
    model.W[:, pruned] = 0.0
    return model.mask.copy(), pruned


def rewind(model: ModelState) -> ModelState:
    """Reset surviving columns to their initial weights."""
    model.W = model.W0 * model.mask[None, :]
    return model


def _train_error(model: ModelState, nb: NeighborhoodBatch, y: np.ndarray,
                 metric: str) -> float:
    g = batch_forward(model, nb)
    if metric == "hinge":
        return float(np.mean(np.maximum(1.0 - y * g, 0.0)))
    return float(np.mean(np.sign(g) != y))


def retrain(model: ModelState, graph: StructuredGraph, subset: LabeledSubset,
            config: TrainConfig, rng: np.random.Generator,
            test: LabeledSubset | None = None,
            patterns: PatternSet | None = None) -> tuple[ModelState, TrialOutcome]:
    """Masked SGD until the training error reaches zero (or T_max).

    The stop check and all final evaluations use full neighborhoods.
    """
    if len(subset) == 0:
        raise ValueError("empty training set")
    t0 = time.perf_counter()
    y = graph.labels[subset.ids]
    train_nb = NeighborhoodBatch.from_graph(graph, subset.ids)
    bsampler = BatchSampler(config.sampling, graph, subset.ids)
    trace, trace_iters = [], []

    def record(t):
        if config.trace_every and patterns is not None and \
                t % config.trace_every == 0:
            trace.append(patterns.patterns @ model.W)
            trace_iters.append(t)

    record(0)
    iterations = 0
    check_stop = config.stop_rule == "zero_train_error"
    stopped = check_stop and _train_error(model, train_nb, y, config.stop_metric) == 0.0
    while not stopped and iterations < config.t_max:
        ids, valid = bsampler.draw(rng)
        nb = NeighborhoodBatch.from_samples(graph, ids, valid)
        step = batch_gradient(model, nb, y, scale_by_z=True)
        model.W -= config.c_eta * step
        model.W *= model.mask[None, :]
        iterations += 1
        record(iterations)
        if check_stop:
            stopped = _train_error(model, train_nb, y, config.stop_metric) == 0.0

    train_error = _train_error(model, train_nb, y, config.stop_metric)
    if test is not None and len(test) > 0:
        test_hinge, test_error = generalization_error(model, graph, test)
    else:
        test_hinge, test_error = float("nan"), float("nan")
    outcome = TrialOutcome(
        success=bool(test_error == 0.0),
        iterations=iterations,
        test_hinge=test_hinge,
        test_error=test_error,
        train_error=train_error,
        censored=bool(not stopped and check_stop),
        wall_time=time.perf_counter() - t0,
        trace=np.array(trace) if trace else None,
        trace_iters=np.array(trace_iters) if trace_iters else None,
    )
    return model, outcome


def run_algorithm1(graph: StructuredGraph, subset: LabeledSubset, config: TrainConfig,
                   patterns: PatternSet | None = None,
                   test: LabeledSubset | None = None,
                   ) -> tuple[ModelState, TrialOutcome]:
    """Full pipeline; deterministic given (graph, subset, config)."""
    t0 = time.perf_counter()
    ss = np.random.SeedSequence(config.seed)
    rng_init, rng_pre, rng_prune, rng_re = (np.random.default_rng(c)
                                            for c in ss.spawn(4))
    if test is None:
        test = LabeledSubset(np.setdiff1d(np.arange(graph.n), subset.ids))
    model = initialize(graph.d, config.K, config.delta, rng_init, config.norm_mode)
    pretrain(model, graph, subset, config, rng_pre)

    lucky_before = lucky_after = -1
    if patterns is not None:
        from .analysis import detect_lucky
        rep = detect_lucky(model, patterns, graph.sigma, weights=model.W0)
        lucky_ids = np.concatenate([rep.lucky_plus, rep.lucky_minus])
        lucky_before = len(lucky_ids)

    if config.beta > 0 and config.prune_kind != "none":
        if config.prune_kind == "magnitude":
            magnitude_prune(model, config.beta, config.prune_balance)
        else:
            random_prune(model, config.beta, rng_prune, config.prune_balance)
    rewind(model)
    if patterns is not None:
        lucky_after = int(np.sum(model.mask[lucky_ids] > 0)) if lucky_before >= 0 else -1

    model, outcome = retrain(model, graph, subset, config, rng_re, test=test,
                             patterns=patterns)
    outcome.lucky_before = lucky_before
    outcome.lucky_after = lucky_after
    outcome.wall_time = time.perf_counter() - t0
    return model, outcome


def theorem_bounds(alpha: float, beta: float, r: int, sigma: float, L: int,
                   K: int, c_eta: float, D: int, q: float) -> tuple[float, float]:
    """Unit-constant sample-size and iteration-count expressions; only ratios
    between calls are meaningful."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if not 0.0 <= beta < 1.0 - 1.0 / L:
        raise ValueError("beta must be in [0, 1 - 1/L)")
    if sigma >= 1.0 / L:
        raise ValueError("requires sigma < 1/L")
    if K <= L * L * np.log(q):
        raise ValueError("requires K > L^2 log q")
    d_req = (1.0 + L * L * sigma * sigma + 1.0 / K) * alpha ** -2 \
        * (1.0 + r * r) * (1.0 - beta) ** 2 * L * L * np.log(q)
    t_req = (1.0 / c_eta) * (1.0 + D ** -0.5) * (1.0 + L * sigma + K ** -0.5) \
        * (1.0 - beta) * L / alpha
    return float(d_req), float(t_req)
