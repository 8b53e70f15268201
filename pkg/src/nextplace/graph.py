"""Transition graphs and frozen node embeddings.

Builds directed weighted graphs from consecutive visits in training
sessions, runs biased second-order random walks over them, and trains
skip-gram-with-negative-sampling vectors that are frozen before model
training.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import stable_sigmoid
from .data import Session
from .util import derive_seed

EMBEDDING_MAGIC = b"N2VE"
EMBEDDING_FORMAT_VERSION = 1


class EmbeddingIOError(RuntimeError):
    """Malformed embedding file or mismatched vocabulary digest."""


@dataclass
class WalkConfig:
    p: float = 1.0                # return parameter
    q: float = 1.0                # in-out parameter
    walks_per_node: int = 10
    walk_length: int = 80
    window: int = 5
    negative_samples: int = 5
    embedding_dim: int = 500
    epochs: int = 5
    step_size: float = 0.025      # linearly decayed
    seed: int = 0

    def validate(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError(f"walk bias parameters must be positive: p={self.p}, q={self.q}")
        for name in ("walks_per_node", "walk_length", "window",
                     "negative_samples", "embedding_dim", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class TransitionGraph:
    n_nodes: int
    adjacency: dict[int, list[tuple[int, int]]] = field(default_factory=dict)

    def neighbors(self, node: int) -> list[tuple[int, int]]:
        return self.adjacency.get(node, [])

    def has_edge(self, a: int, b: int) -> bool:
        return any(nbr == b for nbr, _ in self.adjacency.get(a, []))

    def out_degree(self, node: int) -> int:
        return len(self.adjacency.get(node, []))

    def edge_weights(self) -> dict[tuple[int, int], int]:
        return {(a, nbr): w for a, nbrs in self.adjacency.items()
                for nbr, w in nbrs}


def build_transition_graph(train_sessions: list[Session],
                           n_nodes: int, level: str = "location") -> TransitionGraph:
    """Count consecutive within-session visits as directed edge weights.

    Self-loops are kept; nodes never visited stay isolated. Session order
    does not matter (pure counting).
    """
    if level not in ("location", "category"):
        raise ValueError(f"unknown graph level {level!r}")
    counts: dict[int, dict[int, int]] = {}
    for session in train_sessions:
        ids = [r.location if level == "location" else r.category
               for r in session.records]
        for a, b in zip(ids, ids[1:]):
            row = counts.setdefault(a, {})
            row[b] = row.get(b, 0) + 1
    adjacency = {a: sorted(row.items()) for a, row in counts.items()}
    return TransitionGraph(n_nodes, adjacency)


# ---------------------------------------------------------------------------
# alias sampling (Vose): O(1) draws from a fixed discrete distribution

def build_alias(weights) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0 or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("alias table needs non-negative weights with positive sum")
    n = w.size
    prob = w * (n / w.sum())
    alias = np.zeros(n, dtype=np.intp)
    small = [i for i in range(n) if prob[i] < 1.0]
    large = [i for i in range(n) if prob[i] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        alias[s] = l
        prob[l] = prob[l] - (1.0 - prob[s])
        (small if prob[l] < 1.0 else large).append(l)
    for i in large + small:
        prob[i] = 1.0
    return prob, alias


def alias_draw(prob: np.ndarray, alias: np.ndarray, rng: np.random.Generator) -> int:
    i = int(rng.integers(prob.size))
    return i if rng.random() < prob[i] else int(alias[i])


# ---------------------------------------------------------------------------
# biased walks

class _WalkTables:
    """First-order alias tables per node, second-order per traversed edge.

    Second-order weights follow the usual bias: returning to the previous
    node scales by 1/p, moving to a neighbor of the previous node keeps
    weight 1 (distance one along directed edges), anything else scales by
    1/q; all multiplied by the edge weight.
    """

    def __init__(self, graph: TransitionGraph, p: float, q: float):
        self.graph = graph
        self.p = p
        self.q = q
        self.first: dict[int, tuple] = {}
        self.second: dict[tuple[int, int], tuple | None] = {}
        self.neighbor_sets = {a: {nbr for nbr, _ in nbrs}
                              for a, nbrs in graph.adjacency.items()}
        for node, nbrs in graph.adjacency.items():
            names = np.array([nbr for nbr, _ in nbrs], dtype=np.intp)
            prob, alias = build_alias([w for _, w in nbrs])
            self.first[node] = (names, prob, alias)

    def step_from(self, node: int, rng) -> int | None:
        entry = self.first.get(node)
        if entry is None:
            return None
        names, prob, alias = entry
        return int(names[alias_draw(prob, alias, rng)])

    def step(self, prev: int, cur: int, rng) -> int | None:
        if self.p == 1.0 and self.q == 1.0:
            return self.step_from(cur, rng)  # bias collapses to first order
        key = (prev, cur)
        if key not in self.second:
            nbrs = self.graph.neighbors(cur)
            if not nbrs:
                self.second[key] = None
            else:
                prev_nbrs = self.neighbor_sets.get(prev, set())
                weights = []
                for nbr, w in nbrs:
                    if nbr == prev:
                        weights.append(w / self.p)
                    elif nbr in prev_nbrs:
                        weights.append(float(w))
                    else:
                        weights.append(w / self.q)
                names = np.array([nbr for nbr, _ in nbrs], dtype=np.intp)
                prob, alias = build_alias(weights)
                self.second[key] = (names, prob, alias)
        entry = self.second[key]
        if entry is None:
            return None
        names, prob, alias = entry
        return int(names[alias_draw(prob, alias, rng)])


def node2vec_walks(graph: TransitionGraph, config: WalkConfig) -> list[list[int]]:
    """walks_per_node truncated random walks from every node with out-edges.

    Each walk draws from its own derived seed, so the result is independent
    of generation order.
    """
    config.validate()
    tables = _WalkTables(graph, config.p, config.q)
    walks: list[list[int]] = []
    for node in sorted(graph.adjacency):
        for k in range(config.walks_per_node):
            rng = np.random.default_rng(derive_seed(config.seed, "walk", node, k))
            walk = [node]
            while len(walk) < config.walk_length:
                if len(walk) == 1:
                    nxt = tables.step_from(walk[-1], rng)
                else:
                    nxt = tables.step(walk[-2], walk[-1], rng)
                if nxt is None:
                    break  # sink: truncate early
                walk.append(nxt)
            walks.append(walk)
    return walks


# ---------------------------------------------------------------------------
# skip-gram with negative sampling

@dataclass
class EmbeddingTable:
    matrix: np.ndarray           # [vocab, dim]
    level: str = "location"
    seed: int = 0
    frozen: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]


def train_skipgram(walks: list[list[int]], n_nodes: int,
                   config: WalkConfig, level: str = "location") -> EmbeddingTable:
    """Window-based skip-gram with negative sampling over the walks.

    Negatives come from the unigram^(3/4) distribution of walk tokens; the
    step size decays linearly over all (epoch, pair) updates. Nodes that
    never appear in any walk get the zero vector.
    """
    config.validate()
    if not any(len(w) >= 2 for w in walks):
        raise ValueError("skip-gram needs at least one walk of length >= 2")
    counts = np.zeros(n_nodes)
    for walk in walks:
        for node in walk:
            if not 0 <= node < n_nodes:
                raise IndexError(f"walk node {node} outside vocabulary [0, {n_nodes})")
            counts[node] += 1
    noise = counts ** 0.75
    noise_prob, noise_alias = build_alias(noise)

    dim = config.embedding_dim
    init_rng = np.random.default_rng(derive_seed(config.seed, "sgns-init", level))
    w_in = init_rng.uniform(-0.5 / dim, 0.5 / dim, size=(n_nodes, dim))
    w_out = np.zeros((n_nodes, dim))

    pairs_per_epoch = sum(
        sum(min(i + config.window, len(walk) - 1) - max(i - config.window, 0)
            for i in range(len(walk)))
        for walk in walks)
    total = max(1, config.epochs * pairs_per_epoch)
    draw_rng = np.random.default_rng(derive_seed(config.seed, "sgns-draws", level))
    labels = np.zeros(config.negative_samples + 1)
    labels[0] = 1.0
    step = 0
    for epoch in range(config.epochs):
        order_rng = np.random.default_rng(
            derive_seed(config.seed, "sgns-order", level, epoch))
        order = order_rng.permutation(len(walks))
        for widx in order:
            walk = walks[widx]
            for i, center in enumerate(walk):
                lo = max(i - config.window, 0)
                hi = min(i + config.window, len(walk) - 1)
                for j in range(lo, hi + 1):
                    if j == i:
                        continue
                    lr = config.step_size * max(1.0 - step / total, 1e-4)
                    step += 1
                    context = walk[j]
                    targets = [context]
                    for _ in range(config.negative_samples):
                        neg = alias_draw(noise_prob, noise_alias, draw_rng)
                        if neg != context:
                            targets.append(neg)
                    targets = np.array(targets, dtype=np.intp)
                    u = w_out[targets]
                    v = w_in[center]
                    z = stable_sigmoid(u @ v)
                    e = lr * (labels[: targets.size] - z)
                    np.add.at(w_out, targets, np.outer(e, v))
                    w_in[center] += u.T @ e
    visited = counts > 0
    w_in[~visited] = 0.0
    return EmbeddingTable(w_in, level=level, seed=config.seed)


# ---------------------------------------------------------------------------
# embedding files

def save_embeddings(table: EmbeddingTable, path, vocab_digest: str,
                    config_digest: str = "") -> None:
    header = json.dumps({
        "level": table.level,
        "seed": table.seed,
        "vocab_size": table.vocab_size,
        "dim": table.dim,
        "vocab_digest": vocab_digest,
        "config_digest": config_digest,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", EMBEDDING_FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(table.matrix.astype("<f8").tobytes(order="C"))


def load_embeddings(path, expected_vocab_digest: str | None = None) -> EmbeddingTable:
    blob = Path(path).read_bytes()
    if blob[:4] != EMBEDDING_MAGIC:
        raise EmbeddingIOError("not an embedding file (bad magic)")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != EMBEDDING_FORMAT_VERSION:
        raise EmbeddingIOError(f"unsupported embedding format version {version}")
    header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    if expected_vocab_digest is not None and header["vocab_digest"] != expected_vocab_digest:
        raise EmbeddingIOError(
            "embedding file was built against a different vocabulary "
            f"(digest {header['vocab_digest'][:12]}… != {expected_vocab_digest[:12]}…)")
    body = blob[12 + header_len:]
    expected_bytes = header["vocab_size"] * header["dim"] * 8
    if len(body) != expected_bytes:
        raise EmbeddingIOError(
            f"embedding payload is {len(body)} bytes, expected {expected_bytes}")
    matrix = np.frombuffer(body, dtype="<f8").reshape(
        header["vocab_size"], header["dim"]).copy()
    return EmbeddingTable(matrix, level=header["level"], seed=header["seed"])
