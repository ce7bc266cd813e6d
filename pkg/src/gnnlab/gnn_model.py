"""One-hidden-layer GNN with a max-pooling aggregator.

g(v) = (1/Z) * sum_k b_k * mask_k * max_{u in N(v)} relu(<w_k, x_u>)

Z is either K (over_K) or the per-sign surviving-neuron count
(over_surviving). Only W is trained; b is a fixed sign vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_core import GraphFormatError, StructuredGraph, neighborhood

NORM_MODES = ("over_K", "over_surviving")


@dataclass
class ModelState:
    W: np.ndarray                 # (d, K) hidden weights, columns w_k
    b: np.ndarray                 # (K,) signs in {+1, -1}
    mask: np.ndarray              # (K,) 0/1, neuron-wise prune mask
    W0: np.ndarray                # rewind snapshot
    delta: float = 0.0
    norm_mode: str = "over_surviving"

    def __post_init__(self):
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"unknown normalization mode {self.norm_mode!r}")
        if not np.all(np.isin(self.b, (1, -1))):
            raise ValueError("b entries must be +1/-1")

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def K(self) -> int:
        return self.W.shape[1]

    def surviving(self) -> np.ndarray:
        return np.flatnonzero(self.mask > 0)

    def z_per_neuron(self) -> np.ndarray:
        """Normalization constant Z_k for each neuron."""
        if self.norm_mode == "over_K":
            return np.full(self.K, float(self.K))
        z = np.empty(self.K)
        for s in (1, -1):
            cls = self.b == s
            z[cls] = max(1.0, float(np.sum(self.mask[cls] > 0)))
        return z

    def copy(self) -> "ModelState":
        return ModelState(W=self.W.copy(), b=self.b.copy(), mask=self.mask.copy(),
                          W0=self.W0.copy(), delta=self.delta, norm_mode=self.norm_mode)


@dataclass
class PatternHit:
    node: int
    neuron: int
    winner: int | None            # winning neighbor id
    feature: np.ndarray           # winning feature (zero vector if no winner)
    activation: float


def aggregate(w: np.ndarray, feats: np.ndarray, ids: np.ndarray | None = None,
              node: int = -1, neuron: int = -1) -> tuple[float, PatternHit]:
    """Max-pooling aggregation over one neighborhood.

    Returns max_u relu(<w, x_u>) and the argmax neighbor (ties broken by
    lowest neighbor id; no winner when the max is <= 0).
    """
    feats = np.atleast_2d(feats)
    if feats.shape[0] == 0:
        raise ValueError("empty neighborhood")
    if feats.shape[1] != w.shape[0]:
        raise ValueError("dimension mismatch")
    if ids is None:
        ids = np.arange(feats.shape[0])
    s = feats @ w
    mx = float(np.max(s))
    if mx <= 0.0:
        return 0.0, PatternHit(node, neuron, None, np.zeros_like(w), 0.0)
    tied = np.flatnonzero(s == mx)
    best = tied[np.argmin(np.asarray(ids)[tied])]
    return mx, PatternHit(node, neuron, int(ids[best]), feats[best].copy(), mx)


def forward(model: ModelState, graph: StructuredGraph, v: int,
            neighbors: np.ndarray | None = None) -> float:
    """GNN output for one node; `neighbors` overrides N(v) (sampled training)."""
    ids = neighborhood(graph, v) if neighbors is None else np.asarray(neighbors)
    feats = graph.features[ids]
    z = model.z_per_neuron()
    g = 0.0
    for k in model.surviving():
        act, _ = aggregate(model.W[:, k], feats, ids)
        g += model.b[k] * act / z[k]
    return g


def empirical_risk(model: ModelState, graph: StructuredGraph, subset,
                   samples: dict[int, np.ndarray] | None = None) -> float:
    """-(1/|D|) * sum_{v in D} y_v * g(v)."""
    ids = np.asarray(getattr(subset, "ids", subset))
    if len(ids) == 0:
        raise ValueError("empty subset")
    total = 0.0
    for v in ids:
        nb = samples.get(int(v)) if samples is not None else None
        total += graph.labels[v] * forward(model, graph, int(v), nb)
    return -total / len(ids)


def gradient(model: ModelState, graph: StructuredGraph, subset,
             samples: dict[int, np.ndarray] | None = None) -> np.ndarray:
    """Exact gradient of empirical_risk w.r.t. W; zero on pruned columns."""
    ids = np.asarray(getattr(subset, "ids", subset))
    if len(ids) == 0:
        raise ValueError("empty subset")
    z = model.z_per_neuron()
    grad = np.zeros_like(model.W)
    for v in ids:
        v = int(v)
        nb = samples.get(v) if samples is not None else None
        nb_ids = neighborhood(graph, v) if nb is None else np.asarray(nb)
        feats = graph.features[nb_ids]
        for k in model.surviving():
            act, hit = aggregate(model.W[:, k], feats, nb_ids, node=v, neuron=k)
            if hit.winner is not None:
                grad[:, k] -= graph.labels[v] * (model.b[k] / z[k]) * hit.feature
    return grad / len(ids)


def generalization_error(model: ModelState, graph: StructuredGraph, nodes,
                         ) -> tuple[float, float]:
    """(mean hinge max{1 - y*g, 0}, 0/1 error), with full neighborhoods."""
    ids = np.asarray(getattr(nodes, "ids", nodes))
    if len(ids) == 0:
        raise ValueError("empty node set")
    nb = NeighborhoodBatch.from_graph(graph, ids)
    g = batch_forward(model, nb)
    y = graph.labels[ids]
    hinge = float(np.mean(np.maximum(1.0 - y * g, 0.0)))
    zero_one = float(np.mean(np.sign(g) != y))
    return hinge, zero_one


# ---------------------------------------------------------------------------
# batched evaluation (used by the trainer and bulk evaluation)

class NeighborhoodBatch:
    """Padded (B, m) neighborhood id matrix with gathered feature rows.

    Rows are sorted ascending so that argmax-first-occurrence reproduces the
    lowest-node-id tie break of `aggregate`.
    """

    def __init__(self, graph: StructuredGraph, ids: np.ndarray, valid: np.ndarray):
        self.ids = ids
        self.valid = valid
        self.X = graph.features[np.where(valid, ids, 0)]
        self.X[~valid] = 0.0

    @classmethod
    def from_graph(cls, graph: StructuredGraph, nodes: np.ndarray) -> "NeighborhoodBatch":
        nodes = np.asarray(nodes)
        m = max(graph.degree(int(v)) for v in nodes) + 1
        ids = np.zeros((len(nodes), m), dtype=np.int64)
        valid = np.zeros((len(nodes), m), dtype=bool)
        for i, v in enumerate(nodes):
            row = np.sort(np.concatenate(([int(v)], graph.adj[int(v)])))
            ids[i, :len(row)] = row
            valid[i, :len(row)] = True
        return cls(graph, ids, valid)

    @classmethod
    def from_samples(cls, graph: StructuredGraph, ids: np.ndarray,
                     valid: np.ndarray) -> "NeighborhoodBatch":
        return cls(graph, ids, valid)

    def activations(self, model: ModelState) -> tuple[np.ndarray, np.ndarray]:
        """(act, win): relu-max activation (B, K) and argmax position (B, K)."""
        B, m = self.ids.shape
        S = (self.X.reshape(B * m, -1) @ model.W).reshape(B, m, model.K)
        S[~self.valid] = -np.inf
        win = S.argmax(axis=1)
        act = np.maximum(S.max(axis=1), 0.0)
        return act, win

    def winner_features(self, win: np.ndarray) -> np.ndarray:
        """Gather winning feature rows: (B, K, d)."""
        return self.X[np.arange(self.ids.shape[0])[:, None], win]


def batch_forward(model: ModelState, nb: NeighborhoodBatch) -> np.ndarray:
    act, _ = nb.activations(model)
    scale = model.b * model.mask / model.z_per_neuron()
    return act @ scale


def batch_gradient(model: ModelState, nb: NeighborhoodBatch, y: np.ndarray,
                   scale_by_z: bool = False) -> np.ndarray:
    """Vectorized gradient of empirical_risk over the batch.

    With scale_by_z, each neuron's column is multiplied by Z_k (the training
    update form, whose per-step pattern gain is c_eta * hit fraction).
    """
    act, win = nb.activations(model)
    active = act > 0.0
    z = np.ones(model.K) if scale_by_z else model.z_per_neuron()
    coeff = (-y[:, None] / len(y)) * (model.b * model.mask / z)[None, :] * active
    Xw = nb.winner_features(win)
    return np.einsum("vk,vkd->dk", coeff, Xw)


# ---------------------------------------------------------------------------
# checkpoint text format

def save_checkpoint(model: ModelState) -> str:
    lines = [f"{model.K} {model.d} {model.norm_mode}",
             " ".join(str(int(x)) for x in model.b),
             " ".join(str(int(x)) for x in model.mask)]
    for k in range(model.K):
        lines.append(" ".join(format(float(x), ".17g") for x in model.W[:, k]))
    return "\n".join(lines) + "\n"


def load_checkpoint(text: str) -> ModelState:
    lines = text.splitlines()
    if len(lines) < 3:
        raise GraphFormatError("truncated checkpoint")
    head = lines[0].split()
    if len(head) != 3:
        raise GraphFormatError(f"malformed checkpoint header: {lines[0]!r}")
    K, d, mode = int(head[0]), int(head[1]), head[2]
    b = np.array([int(x) for x in lines[1].split()], dtype=np.int64)
    mask = np.array([float(x) for x in lines[2].split()])
    if len(b) != K or len(mask) != K or len(lines) < 3 + K:
        raise GraphFormatError("checkpoint size mismatch")
    W = np.empty((d, K))
    for k in range(K):
        row = [float(x) for x in lines[3 + k].split()]
        if len(row) != d:
            raise GraphFormatError(f"weight row {k}: expected {d} values")
        W[:, k] = row
    return ModelState(W=W, b=b, mask=mask, W0=W.copy(), norm_mode=mode)
