"""Instrumentation for the theory: lucky-neuron detection, projection
dynamics, neuron scatter data, and the VC shattering construction."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .gnn_model import ModelState, forward
from .graph_core import TAG_UNKNOWN, PatternSet, StructuredGraph
from .trainer import TrialOutcome


@dataclass
class LuckyReport:
    """Neurons whose worst-case (over sigma-bounded noise) top pattern is the
    class-relevant one for their sign."""

    lucky_plus: np.ndarray     # ids within B_plus
    lucky_minus: np.ndarray
    fraction_plus: float       # |K_plus| / K
    fraction_minus: float
    prop1_bound: float
    lemma1_bound: float | None = None


def prop1_bound(K: int, L: int, sigma: float) -> float:
    return (1.0 - K ** -0.5 - L * sigma) / L


def lemma1_bound(eps_K: float, L: int, sigma: float) -> float:
    return (1.0 - eps_K - L * sigma / np.pi) / L


def detect_lucky(model: ModelState, patterns: PatternSet, sigma: float,
                 weights: np.ndarray | None = None,
                 eps_K: float | None = None) -> LuckyReport:
    """Margin test: neuron i in B_plus is lucky iff
    <w,p_plus> - sigma*||w|| >= max_{p != p_plus}(<w,p> + sigma*||w||)
    and <w,p_plus> > 0 (symmetric for B_minus)."""
    W = model.W if weights is None else weights
    proj = patterns.patterns @ W                      # (L, K)
    margin = sigma * np.linalg.norm(W, axis=0)
    out = {}
    for s, row in ((1, 0), (-1, 1)):
        own = proj[row] - margin
        others = np.delete(proj, row, axis=0) + margin
        lucky = (own >= others.max(axis=0)) & (proj[row] > 0) & (model.b == s)
        out[s] = np.flatnonzero(lucky)
    K = model.K
    return LuckyReport(
        lucky_plus=out[1], lucky_minus=out[-1],
        fraction_plus=len(out[1]) / K, fraction_minus=len(out[-1]) / K,
        prop1_bound=prop1_bound(K, patterns.L, sigma),
        lemma1_bound=None if eps_K is None else lemma1_bound(eps_K, patterns.L, sigma))


@dataclass
class ProjectionTrace:
    """Per-iteration pattern projections <w_k^(t), p> with the theory's
    reference growth lines."""

    iters: np.ndarray        # (T,)
    proj: np.ndarray         # (T, L, K)
    c_eta: float
    alpha: float
    r: int
    d_size: int              # |D|
    sigma: float
    q: float = np.e

    def lucky_reference(self, t: np.ndarray) -> np.ndarray:
        rate = self.c_eta * (self.alpha - self.sigma * np.sqrt(
            (1 + self.r ** 2) * np.log(self.q) / self.d_size))
        return rate * t

    def unlucky_reference(self, t: np.ndarray) -> np.ndarray:
        return self.c_eta * (1 + self.sigma) * np.sqrt(
            (1 + self.r ** 2) * np.log(self.q) / self.d_size) * t

    def check_lucky_growth(self, lucky_plus: np.ndarray, from_iter: int = 5) -> bool:
        """min over lucky i of <w_i^(t), p_plus> >= 0.5 * c_eta * alpha * t
        for every recorded t >= from_iter (0.5 is engineering slack)."""
        if len(lucky_plus) == 0:
            return True
        sel = self.iters >= from_iter
        lows = self.proj[sel][:, 0, :][:, lucky_plus].min(axis=1)
        return bool(np.all(lows >= 0.5 * self.c_eta * self.alpha * self.iters[sel]))

    def check_unlucky_bound(self, b: np.ndarray, from_iter: int = 1) -> bool:
        """max over j in B_minus, p != p_minus of |<w_j^(t), p>| stays under
        2 * c_eta * (1+sigma) * t * sqrt((1+r^2)/|D|) (2x slack)."""
        sel = self.iters >= from_iter
        cols = np.flatnonzero(b == -1)
        rows = [i for i in range(self.proj.shape[1]) if i != 1]
        vals = np.abs(self.proj[sel][:, rows, :][:, :, cols]).max(axis=(1, 2))
        cap = 2.0 * self.c_eta * (1 + self.sigma) * self.iters[sel] * np.sqrt(
            (1 + self.r ** 2) / self.d_size)
        return bool(np.all(vals <= cap))


def track_projections(outcome: TrialOutcome, c_eta: float, alpha: float, r: int,
                      d_size: int, sigma: float, q: float = np.e) -> ProjectionTrace:
    """Wrap a trial's recorded projections (trainer trace_every hook)."""
    if outcome.trace is None:
        raise ValueError("trial was run without projection tracing")
    return ProjectionTrace(iters=outcome.trace_iters, proj=outcome.trace,
                           c_eta=c_eta, alpha=alpha, r=r, d_size=d_size,
                           sigma=sigma, q=q)


def neuron_scatter(model: ModelState, patterns: PatternSet) -> np.ndarray:
    """One row per surviving neuron: (id, sign, norm, angle to p_plus, angle
    to p_minus), angles in degrees."""
    rows = []
    for k in model.surviving():
        w = model.W[:, k]
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            a_p = a_m = 90.0
        else:
            a_p = float(np.degrees(np.arccos(np.clip(w @ patterns.p_plus / norm, -1, 1))))
            a_m = float(np.degrees(np.arccos(np.clip(w @ patterns.p_minus / norm, -1, 1))))
        rows.append((k, int(model.b[k]), norm, a_p, a_m))
    return np.array(rows, dtype=[("neuron", "i8"), ("sign", "i8"), ("norm", "f8"),
                                 ("angle_plus", "f8"), ("angle_minus", "f8")])


# ---------------------------------------------------------------------------
# VC shattering construction

@dataclass
class VCConstruction:
    L: int
    labels: np.ndarray          # (m,) +/-1
    alpha: np.ndarray           # (m,) linear-system solution
    W: np.ndarray               # (d, m) positive-sign neurons
    U: np.ndarray               # (d, m) negative-sign neurons
    points: list[StructuredGraph]
    system: np.ndarray          # (m, m) all-ones-minus-identity


def _vc_points(L: int) -> tuple[list[StructuredGraph], np.ndarray, PatternSet]:
    """The 2^(L/2-1) star data points and their neighbor feature sums."""
    bits = L // 2 - 1
    m = 2 ** bits
    d = L
    P = PatternSet(patterns=np.eye(L, d), mode="orthogonal")
    q = P.irrelevant                      # (L-2, d)
    points, sums = [], np.zeros((m, d))
    for j in range(m):
        feats = np.empty((bits + 1, d))
        feats[0] = P.p_plus               # center node
        for i in range(bits):
            bit = (j >> i) & 1
            feats[1 + i] = bit * q[2 * i] + (1 - bit) * q[2 * i + 1]
        sums[j] = feats[1:].sum(axis=0)
        adj = [np.arange(1, bits + 1)] + [np.array([0])] * bits
        points.append(StructuredGraph(
            features=feats, labels=np.ones(bits + 1, dtype=np.int64),
            tags=[TAG_UNKNOWN] * (bits + 1), adj=adj, sigma=0.0))
    return points, sums, P


def vc_construct(L: int, labels: np.ndarray) -> VCConstruction:
    """Solve the shattering system and assemble the realizing weights.

    Neuron j is built from the feature sum of the complement point, so its
    max-pooled response is alpha_j at every point except point j itself,
    which yields g(point i) = sum_{j != i} alpha_j = y_i.
    """
    if L < 4 or L % 2 != 0:
        raise ValueError("L must be even and >= 4")
    points, sums, _ = _vc_points(L)
    m = len(points)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != (m,):
        raise ValueError(f"need {m} labels for L={L}")
    A = np.ones((m, m)) - np.eye(m)
    det = np.linalg.det(A)
    assert abs(abs(det) - (m - 1)) < 1e-6 or m == 2, "system must be invertible"
    alpha = np.linalg.solve(A, labels)
    comp = (m - 1) ^ np.arange(m)
    W = (np.maximum(alpha, 0.0)[None, :] * sums[comp].T)
    U = (np.maximum(-alpha, 0.0)[None, :] * sums[comp].T)
    return VCConstruction(L=L, labels=labels, alpha=alpha, W=W, U=U,
                          points=points, system=A)


def check_realization(W: np.ndarray, U: np.ndarray,
                      points: list[StructuredGraph], labels: np.ndarray) -> bool:
    """Honest forward evaluation: sign(g(point)) must match every label."""
    m = len(points)
    model = ModelState(
        W=np.hstack([W, U]),
        b=np.concatenate([np.ones(W.shape[1], dtype=np.int64),
                          -np.ones(U.shape[1], dtype=np.int64)]),
        mask=np.ones(W.shape[1] + U.shape[1]),
        W0=np.hstack([W, U]).copy(), norm_mode="over_K")
    for i in range(m):
        g = forward(model, points[i], 0)
        if np.sign(g) != labels[i]:
            return False
    return True


def vc_verify(L: int) -> bool:
    """Exhaustively realize every labeling of the constructed points."""
    if L > 8:
        raise ValueError("vc_verify capped at L=8")
    m = 2 ** (L // 2 - 1)
    for labeling in product((1.0, -1.0), repeat=m):
        c = vc_construct(L, np.array(labeling))
        if not check_realization(c.W, c.U, c.points, c.labels):
            return False
    return True
