"""Neighbor sampling for edge sparsification, plus the closed-form bounds on
the probability alpha that a sampled neighborhood contains a class-relevant
node.

A sample always contains the node itself plus up to r of its true neighbors.
The two-tier strategy includes each important neighbor independently with the
tier-weighted rate q = min(1, gamma*r / (deg - r + gamma)) and fills the
remaining slots uniformly without replacement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .graph_core import RELEVANT_TAGS, StructuredGraph, TAG_UNKNOWN

KINDS = ("full", "uniform", "two_tier")
IMPORTANT_MODES = ("relevant_only", "relevant_plus_lambda")


@dataclass(frozen=True)
class SamplingStrategy:
    kind: str = "full"
    r: int = 1
    gamma: float = 1.0
    lam: float = 0.0
    important: str = "relevant_only"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sampling kind {self.kind!r}")
        if self.important not in IMPORTANT_MODES:
            raise ValueError(f"unknown important-set mode {self.important!r}")
        if self.r < 1:
            raise ValueError("fan-out r must be >= 1")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")


@dataclass
class SampledNeighborhood:
    node: int
    iteration: int
    ids: np.ndarray   # sorted, contains node


def _hash_fraction(ids: np.ndarray) -> np.ndarray:
    """Deterministic pseudo-uniform value per node id (for the lambda tier)."""
    h = (ids.astype(np.uint64) * np.uint64(2654435761)) % np.uint64(2**32)
    return h.astype(np.float64) / 2.0**32


def important_mask(strategy: SamplingStrategy, graph: StructuredGraph) -> np.ndarray:
    """Boolean flag per node: belongs to the high-weight tier D_I."""
    rel = np.array([t in RELEVANT_TAGS for t in graph.tags])
    if strategy.important == "relevant_plus_lambda" and strategy.lam > 0:
        extra = _hash_fraction(np.arange(graph.n)) < strategy.lam
        return rel | (extra & ~rel)
    return rel


def inclusion_rate(strategy: SamplingStrategy, deg: int) -> float:
    """Tier-weighted inclusion probability of an important neighbor."""
    if deg <= strategy.r:
        return 1.0
    g, r, lam = strategy.gamma, strategy.r, strategy.lam
    if strategy.important == "relevant_plus_lambda":
        q = g * r / ((1.0 + (g - 1.0) * lam) * deg - r + g)
    else:
        q = g * r / (deg - r + g)
    return min(1.0, q)


def sample_neighbors(strategy: SamplingStrategy, graph: StructuredGraph, v: int,
                     rng: np.random.Generator, iteration: int = 0) -> SampledNeighborhood:
    """Sample up to r true neighbors of v; v itself is always included."""
    nbrs = graph.adj[v]
    deg = len(nbrs)
    if strategy.kind == "full" or deg <= strategy.r:
        chosen = nbrs
    elif strategy.kind == "uniform":
        chosen = rng.choice(nbrs, size=strategy.r, replace=False)
    else:
        imp = important_mask(strategy, graph)[nbrs]
        q = inclusion_rate(strategy, deg)
        keys = rng.random(deg)
        forced = imp & (rng.random(deg) < q)
        keys[forced] -= 1.0  # guaranteed ahead of everything unforced
        chosen = nbrs[np.argpartition(keys, strategy.r - 1)[:strategy.r]]
    ids = np.sort(np.concatenate(([v], chosen))).astype(np.int64)
    return SampledNeighborhood(node=v, iteration=iteration, ids=ids)


class BatchSampler:
    """Vectorized sampler over a fixed node set with precomputed neighbor
    tables; each draw() returns a padded (B, m) id matrix plus validity.

    Rows are sorted ascending; the per-node distribution is identical to
    sample_neighbors (uniform keys with a forced-important offset).
    """

    def __init__(self, strategy: SamplingStrategy, graph: StructuredGraph,
                 nodes: np.ndarray):
        self.strategy = strategy
        self.nodes = np.asarray(nodes)
        B = len(self.nodes)
        self.degs = np.array([graph.degree(int(v)) for v in self.nodes])
        maxdeg = int(self.degs.max())
        self.nbr = np.zeros((B, maxdeg), dtype=np.int64)
        self.nbr_valid = np.arange(maxdeg)[None, :] < self.degs[:, None]
        for i, v in enumerate(self.nodes):
            self.nbr[i, :self.degs[i]] = graph.adj[int(v)]
        if strategy.kind == "two_tier":
            self.imp = important_mask(strategy, graph)[self.nbr] & self.nbr_valid
            self.q = np.array([inclusion_rate(strategy, int(dv)) for dv in self.degs])

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        B, maxdeg = self.nbr.shape
        strategy = self.strategy
        if strategy.kind == "full" or maxdeg <= strategy.r:
            ids = np.concatenate([self.nodes[:, None], self.nbr], axis=1)
            valid = np.concatenate([np.ones((B, 1), bool), self.nbr_valid], axis=1)
        else:
            keys = rng.random((B, maxdeg))
            if strategy.kind == "two_tier":
                forced = self.imp & (rng.random((B, maxdeg)) < self.q[:, None])
                keys[forced] -= 1.0
            keys[~self.nbr_valid] = np.inf
            picks = np.argpartition(keys, strategy.r - 1, axis=1)[:, :strategy.r]
            chosen = np.take_along_axis(self.nbr, picks, axis=1)
            chosen_valid = np.take_along_axis(self.nbr_valid, picks, axis=1)
            ids = np.concatenate([self.nodes[:, None], chosen], axis=1)
            valid = np.concatenate([np.ones((B, 1), bool), chosen_valid], axis=1)
        ids = np.where(valid, ids, np.iinfo(np.int64).max)
        order = np.argsort(ids, axis=1)
        ids = np.take_along_axis(ids, order, axis=1)
        valid = np.take_along_axis(valid, order, axis=1)
        ids = np.where(valid, ids, 0)
        return ids, valid


def sample_batch(strategy: SamplingStrategy, graph: StructuredGraph,
                 nodes: np.ndarray, rng: np.random.Generator,
                 ) -> tuple[np.ndarray, np.ndarray]:
    return BatchSampler(strategy, graph, nodes).draw(rng)


class AlphaEstimate(NamedTuple):
    alpha: float
    stderr: float
    per_node_min: float


def estimate_alpha(strategy: SamplingStrategy, graph: StructuredGraph, subset,
                   trials: int, rng: np.random.Generator) -> AlphaEstimate:
    """Monte-Carlo estimate of P(sample contains a class-relevant node).

    `trials` is the total number of (node, repeat) samples, spread evenly
    over the subset.
    """
    if any(t == TAG_UNKNOWN for t in graph.tags):
        raise ValueError("estimate_alpha needs a fully tagged graph")
    ids = np.asarray(getattr(subset, "ids", subset))
    rel = np.array([t in RELEVANT_TAGS for t in graph.tags])
    repeats = max(1, int(np.ceil(trials / len(ids))))
    hits = 0
    total = 0
    per_node = np.zeros(len(ids))
    for _ in range(repeats):
        sids, valid = sample_batch(strategy, graph, ids, rng)
        contains = np.any(rel[sids] & valid, axis=1)
        per_node += contains
        hits += int(contains.sum())
        total += len(ids)
    p = hits / total
    stderr = float(np.sqrt(max(p * (1 - p), 1e-12) / total))
    return AlphaEstimate(alpha=float(p), stderr=stderr,
                         per_node_min=float(per_node.min() / repeats))


# ---------------------------------------------------------------------------
# closed-form bounds

class ImportanceBound(NamedTuple):
    lower: float
    large_R: float   # closed-form approximation for R >> r


def alpha_bound_uniform(cbar: int, R: int, r: int) -> tuple[float, float]:
    """Bracket on E[alpha] for uniform sampling of r of R neighbors when cbar
    of them are class-relevant (hypergeometric bounds)."""
    if cbar > R:
        raise ValueError("cbar cannot exceed the degree R")
    if r <= 0:
        return 0.0, 0.0
    r = min(r, R)
    lower = 1.0 - (1.0 - cbar / R) ** r
    upper = 1.0 - max(0.0, 1.0 - cbar / (R - r + 1)) ** r
    return lower, upper


def alpha_bound_importance(gamma: float, R: int, r: int) -> ImportanceBound:
    """Lower bound on E[alpha] for two-tier sampling with tier ratio gamma."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    return ImportanceBound(lower=gamma * r / (R - r + gamma),
                           large_R=gamma * r / R)


def alpha_bound_partial(gamma: float, lam: float, R: int, r: int) -> ImportanceBound:
    """Lower bound when a lambda fraction of unimportant nodes share the high
    tier weight."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    scale = 1.0 + (gamma - 1.0) * lam
    return ImportanceBound(lower=gamma * r / (scale * R - r + gamma),
                           large_R=gamma * r / (scale * R))


def gamma_for_alpha(alpha: float, R: int, r: int) -> float:
    """Tier ratio whose important-neighbor inclusion rate equals the requested
    alpha at degree R. The realized containment probability is at least this
    alpha (the uniform fill can only add hits)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if r >= R:
        return 1.0
    g = alpha * (R - r) / (r - alpha)
    return max(1.0, g)
