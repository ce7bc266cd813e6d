"""Synthetic pattern sets and structured graphs for the planted-feature model.

A graph has three groups: class-relevant nodes carrying p_plus or p_minus,
and the remaining nodes carrying one irrelevant pattern each, connected to
exactly one relevant node (which fixes their label) plus random edges inside
their own group.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .graph_core import (
    TAG_VMINUS, TAG_VNMINUS, TAG_VNPLUS, TAG_VPLUS,
    LabeledSubset, PatternSet, StructuredGraph,
)

__all__ = ["GenConfig", "generate_patterns", "generate_graph", "draw_noise"]


@dataclass
class GenConfig:
    d: int = 30
    L: int = 30
    n: int = 2000
    degree: int = 10                  # target degree M of irrelevant nodes
    relevant_fraction: float = 0.1    # per class
    sigma: float = 0.1
    noise_mode: str = "gaussian_clipped"   # gaussian_clipped | uniform_ball | none
    pattern_mode: str = "relaxed"          # orthogonal | relaxed
    train_size: int = 100
    outlier_fraction: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.pattern_mode == "orthogonal" and self.L > self.d:
            raise ValueError(f"orthogonal mode needs L <= d (L={self.L}, d={self.d})")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if not 0 < self.relevant_fraction < 0.5:
            raise ValueError("relevant_fraction must be in (0, 0.5)")
        if self.degree >= self.n:
            raise ValueError("impossible degree (>= n)")
        if self.train_size > self.n:
            raise ValueError("train_size exceeds node count")


def generate_patterns(config: GenConfig, rng: np.random.Generator | None = None) -> PatternSet:
    """p_plus = e1, p_minus = e2; irrelevant patterns are Gaussian vectors
    projected onto the null space of {e1, e2} and normalized."""
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    d, L = config.d, config.L
    P = np.zeros((L, d))
    P[0, 0] = 1.0
    P[1, 1] = 1.0
    k = L - 2
    if k > 0:
        G = rng.standard_normal((k, d))
        G[:, :2] = 0.0  # null space of e1, e2
        if config.pattern_mode == "orthogonal":
            # orthonormalize within the null space
            Q, _ = np.linalg.qr(G[:, 2:].T)
            G = np.zeros((k, d))
            G[:, 2:] = Q.T[:k]
        else:
            G /= np.linalg.norm(G, axis=1, keepdims=True)
        P[2:] = G
    ps = PatternSet(patterns=P, mode=config.pattern_mode)
    ps.validate()
    return ps


def draw_noise(d: int, sigma: float, mode: str, rng: np.random.Generator,
               size: int | None = None) -> np.ndarray:
    """Noise vectors with Euclidean norm <= sigma."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    m = 1 if size is None else size
    if mode == "none" or sigma == 0.0:
        z = np.zeros((m, d))
    elif mode == "gaussian_clipped":
        z = rng.normal(0.0, sigma / np.sqrt(d), size=(m, d))
        norms = np.linalg.norm(z, axis=1)
        over = norms > sigma
        if np.any(over):
            z[over] *= (sigma / norms[over])[:, None]
    elif mode == "uniform_ball":
        g = rng.standard_normal((m, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radii = sigma * rng.random(m) ** (1.0 / d)
        z = g * radii[:, None]
    else:
        raise ValueError(f"unknown noise mode {mode!r}")
    return z[0] if size is None else z


def _adj_from_edges(n: int, edges: np.ndarray) -> list[np.ndarray]:
    if len(edges) == 0:
        return [np.empty(0, dtype=np.int64) for _ in range(n)]
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    counts = np.bincount(src, minlength=n)
    splits = np.cumsum(counts)[:-1]
    return [a.astype(np.int64) for a in np.split(dst, splits)]


def _regular_intra_edges(ids: np.ndarray, deg: int, rng: np.random.Generator) -> np.ndarray:
    """deg-regular random graph on the given node ids."""
    m = len(ids)
    if deg <= 0 or m < 2:
        return np.empty((0, 2), dtype=np.int64)
    deg = min(deg, m - 1)
    if deg * m % 2 == 1:
        raise ValueError("regular graph needs even degree sum")
    for attempt in range(20):
        try:
            g = nx.random_regular_graph(deg, m, seed=int(rng.integers(2**31)))
            break
        except nx.NetworkXError:
            continue
    else:  # pragma: no cover
        raise RuntimeError("could not build regular graph")
    e = np.array(g.edges(), dtype=np.int64)
    return ids[e]


def _pad_group_edges(ids: np.ndarray, current_deg: np.ndarray, target: int,
                     existing: set[tuple[int, int]], rng: np.random.Generator) -> list[tuple[int, int]]:
    """Random pairing inside a group until degrees reach target (best effort).

    Configuration-model style: one stub per missing edge end, shuffled and
    paired; pairs that would self-loop or duplicate an edge are retried in
    the next round.
    """
    deficit = np.maximum(target - np.asarray(current_deg, dtype=np.int64), 0)
    out: list[tuple[int, int]] = []
    for _ in range(200):
        if int(deficit.sum()) < 2 or int(np.count_nonzero(deficit)) < 2:
            break
        stubs = np.repeat(np.arange(len(ids)), deficit)
        rng.shuffle(stubs)
        if len(stubs) % 2:
            stubs = stubs[:-1]
        progress = False
        for i, j in zip(stubs[0::2], stubs[1::2]):
            if i == j or deficit[i] <= 0 or deficit[j] <= 0:
                continue
            u, v = int(ids[i]), int(ids[j])
            key = (min(u, v), max(u, v))
            if key in existing:
                continue
            existing.add(key)
            out.append(key)
            deficit[i] -= 1
            deficit[j] -= 1
            progress = True
        if not progress:
            break
    return out


def generate_graph(patterns: PatternSet, config: GenConfig,
                   rng: np.random.Generator | None = None,
                   ) -> tuple[StructuredGraph, LabeledSubset, LabeledSubset]:
    """Build a structured graph plus a balanced train split and its test rest."""
    config.validate()
    if patterns.L != config.L or patterns.d != config.d:
        raise ValueError("pattern set does not match config")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    n, M = config.n, config.degree
    n_rel = max(1, round(config.relevant_fraction * n))
    vplus = np.arange(n_rel)
    vminus = np.arange(n_rel, 2 * n_rel)
    vn = np.arange(2 * n_rel, n)
    n_vn = len(vn)
    if n_vn <= M:
        raise ValueError("too few irrelevant nodes for the requested degree")

    # one relevant anchor per irrelevant node; the anchor fixes the label
    anchors = rng.integers(0, 2 * n_rel, size=n_vn)
    vn_labels = np.where(anchors < n_rel, 1, -1)
    anchor_edges = np.stack([vn, anchors], axis=1)

    # a regular intra-group graph needs an even degree sum; with an odd sum
    # one node takes a second same-class anchor and joins the others with
    # M-2 extra edges instead (a few partners end up one over target)
    extra_edges: list[tuple[int, int]] = []
    if (M - 1) * n_vn % 2 == 0:
        intra = _regular_intra_edges(vn, M - 1, rng)
    else:
        i = int(rng.integers(n_vn))
        lo = 0 if vn_labels[i] == 1 else n_rel
        choices = np.setdiff1d(np.arange(lo, lo + n_rel), [anchors[i]])
        if len(choices) > 0:
            extra_edges.append((int(vn[i]), int(rng.choice(choices))))
        others = np.delete(vn, i)
        intra = _regular_intra_edges(others, M - 1, rng)
        partners = rng.choice(others, size=M - 2, replace=False)
        extra_edges.extend((int(vn[i]), int(u)) for u in partners)

    base = [anchor_edges, intra] if len(intra) else [anchor_edges]
    if extra_edges:
        base.append(np.array(extra_edges, dtype=np.int64))
    raw = np.vstack(base).astype(np.int64)
    codes = np.unique(np.minimum(raw[:, 0], raw[:, 1]) * n
                      + np.maximum(raw[:, 0], raw[:, 1]))

    # pad relevant nodes with intra-group edges toward degree M; the groups
    # have no intra-group edges yet, so only pairs added here can collide
    deg = np.bincount(codes // n, minlength=n) + np.bincount(codes % n, minlength=n)
    for group in (vplus, vminus):
        new = _pad_group_edges(group, deg[group], M, set(), rng)
        if new:
            arr = np.array(new, dtype=np.int64)
            codes = np.concatenate([codes, arr[:, 0] * n + arr[:, 1]])

    # outliers: irrelevant nodes with one extra cross-class relevant edge
    n_out = round(config.outlier_fraction * n_vn)
    outliers = rng.choice(vn, size=n_out, replace=False) if n_out else np.empty(0, dtype=np.int64)
    for v in outliers:
        lo = n_rel if vn_labels[int(v) - 2 * n_rel] == 1 else 0
        u = int(rng.integers(lo, lo + n_rel))
        codes = np.append(codes, min(int(v), u) * n + max(int(v), u))

    codes = np.unique(codes)
    edges = np.stack([codes // n, codes % n], axis=1).astype(np.int64)
    adj = _adj_from_edges(n, edges)

    labels = np.empty(n, dtype=np.int64)
    labels[vplus] = 1
    labels[vminus] = -1
    labels[vn] = vn_labels
    tags = [TAG_VPLUS] * n_rel + [TAG_VMINUS] * n_rel + [
        TAG_VNPLUS if y == 1 else TAG_VNMINUS for y in vn_labels]

    feats = np.empty((n, config.d))
    feats[vplus] = patterns.p_plus
    feats[vminus] = patterns.p_minus
    pat_idx = rng.integers(0, config.L - 2, size=n_vn)
    feats[vn] = patterns.irrelevant[pat_idx]
    feats += draw_noise(config.d, config.sigma, config.noise_mode, rng, size=n)

    graph = StructuredGraph(features=feats, labels=labels, tags=tags, adj=adj,
                            sigma=config.sigma)

    eligible = np.setdiff1d(np.arange(n), outliers)
    half = config.train_size // 2
    pos = eligible[labels[eligible] == 1]
    neg = eligible[labels[eligible] == -1]
    if half > len(pos) or half > len(neg):
        raise ValueError("train_size too large for class sizes")
    train_ids = np.sort(np.concatenate([
        rng.choice(pos, size=half, replace=False),
        rng.choice(neg, size=half, replace=False)]))
    test_ids = np.setdiff1d(eligible, train_ids)
    return graph, LabeledSubset(train_ids), LabeledSubset(test_ids)
