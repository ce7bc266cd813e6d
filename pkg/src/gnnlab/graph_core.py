"""Core graph and dataset types shared by every other module.

Nodes are dense 0-based integers. Adjacency is undirected and stores no
self-loops; ``neighborhood`` prepends the node itself, so every query sees
the self-connection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAG_VPLUS = "VPlus"
TAG_VMINUS = "VMinus"
TAG_VNPLUS = "VNPlus"
TAG_VNMINUS = "VNMinus"
TAG_UNKNOWN = "Unknown"

VALID_TAGS = (TAG_VPLUS, TAG_VMINUS, TAG_VNPLUS, TAG_VNMINUS, TAG_UNKNOWN)

RELEVANT_TAGS = (TAG_VPLUS, TAG_VMINUS)


class GraphFormatError(ValueError):
    """Raised on malformed graph text input."""


@dataclass
class PatternSet:
    """Ordered feature patterns: class-relevant p_plus, p_minus, then the
    class-irrelevant ones. All unit norm, p_plus and p_minus orthogonal."""

    patterns: np.ndarray  # (L, d)
    mode: str = "orthogonal"  # "orthogonal" | "relaxed"

    @property
    def d(self) -> int:
        return self.patterns.shape[1]

    @property
    def L(self) -> int:
        return self.patterns.shape[0]

    @property
    def p_plus(self) -> np.ndarray:
        return self.patterns[0]

    @property
    def p_minus(self) -> np.ndarray:
        return self.patterns[1]

    @property
    def irrelevant(self) -> np.ndarray:
        return self.patterns[2:]

    def validate(self, tol: float = 1e-9) -> None:
        P = self.patterns
        if self.mode == "orthogonal" and self.L > self.d:
            raise ValueError(f"need L <= d, got L={self.L}, d={self.d}")
        norms = np.linalg.norm(P, axis=1)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ValueError("patterns must be unit norm")
        G = P @ P.T
        if abs(G[0, 1]) > tol:
            raise ValueError("p_plus and p_minus must be orthogonal")
        # relevant directions are orthogonal to every irrelevant pattern
        if self.L > 2 and np.max(np.abs(G[2:, :2])) > tol:
            raise ValueError("irrelevant patterns must be orthogonal to p_plus/p_minus")
        if self.mode == "orthogonal":
            off = G - np.eye(self.L)
            if np.max(np.abs(off)) > tol:
                raise ValueError("orthogonal mode requires mutually orthogonal patterns")


@dataclass
class StructuredGraph:
    """Undirected graph with per-node features, labels and partition tags."""

    features: np.ndarray            # (n, d) float64
    labels: np.ndarray              # (n,) int, +1/-1
    tags: list[str]                 # partition tag per node
    adj: list[np.ndarray]           # sorted neighbor ids per node, no self
    sigma: float = 0.0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.adj = [np.asarray(a, dtype=np.int64) for a in self.adj]

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adj), default=0)

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def relevant_nodes(self) -> np.ndarray:
        return np.array([v for v, t in enumerate(self.tags) if t in RELEVANT_TAGS],
                        dtype=np.int64)


@dataclass
class LabeledSubset:
    """An ordered, duplicate-free set of labeled node ids."""

    ids: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("duplicate node ids in subset")

    def counts(self, graph: StructuredGraph) -> tuple[int, int]:
        y = graph.labels[self.ids]
        return int(np.sum(y == 1)), int(np.sum(y == -1))

    def imbalance(self, graph: StructuredGraph) -> int:
        plus, minus = self.counts(graph)
        return abs(plus - minus)

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    imbalance: int | None = None

    @property
    def ok(self) -> bool:
        return not self.violations


def neighborhood(graph: StructuredGraph, v: int) -> np.ndarray:
    """N(v) with self-connection: v first, then neighbors ascending."""
    if not 0 <= v < graph.n:
        raise IndexError(f"unknown node id {v}")
    return np.concatenate(([v], np.sort(graph.adj[v])))


def validate_assumptions(graph: StructuredGraph,
                         patterns: PatternSet | None = None,
                         subset: LabeledSubset | None = None) -> ValidationReport:
    """Check the data-model assumptions; violations are data, not errors."""
    report = ValidationReport()
    tags = graph.tags
    for v in range(graph.n):
        t = tags[v]
        if t == TAG_UNKNOWN:
            continue
        nbr_tags = {tags[int(u)] for u in graph.adj[v]}
        if t == TAG_VNPLUS and TAG_VPLUS not in nbr_tags:
            report.violations.append(f"node {v}: VNPlus without a VPlus neighbor")
        if t == TAG_VNMINUS and TAG_VMINUS not in nbr_tags:
            report.violations.append(f"node {v}: VNMinus without a VMinus neighbor")
        for u in graph.adj[v]:
            u = int(u)
            if u <= v:
                continue
            pair = {t, tags[u]}
            if pair == {TAG_VPLUS, TAG_VNMINUS} or pair == {TAG_VMINUS, TAG_VNPLUS}:
                report.violations.append(f"edge ({v},{u}): forbidden cross-class edge")
            if pair == {TAG_VPLUS, TAG_VMINUS}:
                report.warnings.append(f"edge ({v},{u}): VPlus-VMinus edge")
        want = 1 if t in (TAG_VPLUS, TAG_VNPLUS) else -1
        if graph.labels[v] != want:
            report.violations.append(f"node {v}: label {graph.labels[v]} inconsistent with tag {t}")
    if patterns is not None:
        for v in range(graph.n):
            t = tags[v]
            if t == TAG_VPLUS:
                ref = patterns.p_plus[None, :]
            elif t == TAG_VMINUS:
                ref = patterns.p_minus[None, :]
            elif t in (TAG_VNPLUS, TAG_VNMINUS):
                ref = patterns.irrelevant
            else:
                continue
            dist = np.min(np.linalg.norm(ref - graph.features[v], axis=1))
            if dist > graph.sigma + 1e-9:
                report.violations.append(
                    f"node {v}: feature is {dist:.3g} from nearest admissible pattern "
                    f"(sigma={graph.sigma})")
    if subset is not None:
        report.imbalance = subset.imbalance(graph)
    return report


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_graph(graph: StructuredGraph) -> str:
    """Serialize to the line-based text format (exact float round-trip)."""
    lines = [f"{graph.n} {graph.d} {_fmt(graph.sigma)}"]
    for v in range(graph.n):
        lines.append(" ".join(_fmt(x) for x in graph.features[v]))
    for v in range(graph.n):
        lines.append(f"{int(graph.labels[v])} {graph.tags[v]}")
    edges = [(v, int(u)) for v in range(graph.n) for u in graph.adj[v] if v < u]
    lines.append(f"edges {len(edges)}")
    for u, v in edges:
        lines.append(f"{u} {v}")
    return "\n".join(lines) + "\n"


def load_graph(text: str) -> StructuredGraph:
    """Parse the text format produced by save_graph."""
    lines = text.splitlines()
    if not lines:
        raise GraphFormatError("empty input")
    head = lines[0].split()
    if len(head) != 3:
        raise GraphFormatError(f"malformed header: {lines[0]!r}")
    try:
        n, d, sigma = int(head[0]), int(head[1]), float(head[2])
    except ValueError as e:
        raise GraphFormatError(f"malformed header: {e}") from None
    if len(lines) < 1 + 2 * n + 1:
        raise GraphFormatError("truncated file")
    feats = np.empty((n, d), dtype=np.float64)
    for v in range(n):
        row = lines[1 + v].split()
        if len(row) != d:
            raise GraphFormatError(f"feature line {v}: expected {d} values, got {len(row)}")
        feats[v] = [float(x) for x in row]
    labels = np.empty(n, dtype=np.int64)
    tags = []
    for v in range(n):
        parts = lines[1 + n + v].split()
        if len(parts) != 2:
            raise GraphFormatError(f"label line {v}: expected 'y tag'")
        y, tag = int(parts[0]), parts[1]
        if y not in (1, -1):
            raise GraphFormatError(f"label line {v}: label must be +1/-1")
        if tag not in VALID_TAGS:
            raise GraphFormatError(f"label line {v}: unknown tag {tag!r}")
        labels[v] = y
        tags.append(tag)
    eline = lines[1 + 2 * n].split()
    if len(eline) != 2 or eline[0] != "edges":
        raise GraphFormatError("missing 'edges m' line")
    m = int(eline[1])
    if len(lines) < 2 + 2 * n + m:
        raise GraphFormatError("truncated edge list")
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for i in range(m):
        parts = lines[2 + 2 * n + i].split()
        if len(parts) != 2:
            raise GraphFormatError(f"edge line {i}: expected 'u v'")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"edge line {i}: dangling edge endpoint ({u},{v})")
        if u == v:
            raise GraphFormatError(f"edge line {i}: self-loop not allowed")
        nbrs[u].add(v)
        nbrs[v].add(u)
    adj = [np.array(sorted(s), dtype=np.int64) for s in nbrs]
    return StructuredGraph(features=feats, labels=labels, tags=tags, adj=adj, sigma=sigma)
