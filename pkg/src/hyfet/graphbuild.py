"""Mention-graph construction from source vectors and distant labels.

The graph groups mentions that plausibly share a type, so a later
smoothing stage can pool evidence across them:

1. every type gets a *prototype* — the mean source vector of the mentions
   distantly labeled with it;
2. a mention is a *candidate* for a type when its cosine similarity to
   that prototype reaches a threshold delta (mentions may be candidates
   for several types, or none);
3. every pair of mentions inside the same candidate set is connected, and
   the union over all types forms the edge set.

Edge weight variants: ``attentive`` stores the cosine similarity between
the two endpoint vectors, ``plain`` stores 1, and ``random`` discards the
candidate structure and draws the same number of edges uniformly at
random (a control for ablations). Unlabeled mentions contribute nothing
to prototypes but still join candidate sets, so a test-time mention can
be wired into the graph next to its labeled neighbors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

GRAPH_MAGIC = "hyfet-graph"
GRAPH_VERSION = 1

_TINY_NORM = 1e-30


class GraphError(ValueError):
    """Malformed graph construction inputs or graph files."""


class GraphVariant(str, enum.Enum):
    RANDOM = "random"
    PLAIN = "plain"
    ATTENTIVE = "attentive"


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    """Row-normalize; zero rows stay zero so their cosines read as 0."""
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors / np.maximum(norms, _TINY_NORM)


def build_prototypes(
    vectors: np.ndarray, label_sets: Sequence[Sequence[int]], n_types: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mean source vector per type.

    Returns ``(prototypes, present)`` where ``present[t]`` is False for
    types with no labeled mention; their prototype rows are zero and they
    never admit candidates.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise GraphError(f"vectors must be 2-D (n, d), got shape {vectors.shape}")
    if len(label_sets) != vectors.shape[0]:
        raise GraphError(
            f"{vectors.shape[0]} vectors but {len(label_sets)} label sets"
        )
    protos = np.zeros((n_types, vectors.shape[1]))
    counts = np.zeros(n_types)
    for i, labels in enumerate(label_sets):
        for t in labels:
            if not (0 <= t < n_types):
                raise GraphError(f"mention {i} carries out-of-range type id {t}")
            protos[t] += vectors[i]
            counts[t] += 1
    present = counts > 0
    protos[present] /= counts[present, None]
    return protos, present


def candidate_sets(
    vectors: np.ndarray,
    prototypes: np.ndarray,
    present: np.ndarray,
    delta: float,
) -> list[np.ndarray]:
    """Per type, the sorted mention indices with cos(v_i, proto_t) >= delta."""
    v_unit = _unit_rows(np.asarray(vectors, dtype=np.float64))
    p_unit = _unit_rows(np.asarray(prototypes, dtype=np.float64))
    cos = v_unit @ p_unit.T  # (n, T)
    out = []
    for t in range(prototypes.shape[0]):
        if not present[t]:
            out.append(np.empty(0, dtype=np.int64))
            continue
        out.append(np.flatnonzero(cos[:, t] >= delta).astype(np.int64))
    return out


def _candidate_pairs(cands: list[np.ndarray], n: int) -> np.ndarray:
    """Union of all within-set pairs, as sorted unique linear ids i*n + j (i<j)."""
    chunks = []
    for idx in cands:
        if idx.size < 2:
            continue
        a, b = np.triu_indices(idx.size, k=1)
        chunks.append(idx[a].astype(np.int64) * n + idx[b])
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(chunks))


@dataclass
class MentionGraph:
    """Undirected weighted graph over mention indices; edges stored with i < j."""

    n: int
    variant: GraphVariant
    delta: float
    seed: int | None
    ei: np.ndarray
    ej: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.ei = np.asarray(self.ei, dtype=np.int64)
        self.ej = np.asarray(self.ej, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not (self.ei.shape == self.ej.shape == self.weights.shape):
            raise GraphError("edge arrays must share one shape")
        if self.ei.size and not (
            (self.ei < self.ej).all() and (0 <= self.ei).all() and (self.ej < self.n).all()
        ):
            raise GraphError("edges must satisfy 0 <= i < j < n")
        lin = self.ei * self.n + self.ej
        if np.unique(lin).size != lin.size:
            raise GraphError("duplicate edges")

    @property
    def n_edges(self) -> int:
        return int(self.ei.size)

    def edge_dict(self) -> dict[tuple[int, int], float]:
        return {
            (int(i), int(j)): float(w)
            for i, j, w in zip(self.ei, self.ej, self.weights)
        }

    def degrees(self) -> np.ndarray:
        """Neighbor counts, excluding the implicit self-loop."""
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.ei, 1)
        np.add.at(deg, self.ej, 1)
        return deg

    def normalized_csr(self) -> sp.csr_matrix:
        """Row-normalized adjacency: self-loops of weight 1 are added to
        every mention, negative weights are clipped to zero, then each row
        is scaled to sum to 1. Rows never vanish thanks to the self-loop."""
        w = np.clip(self.weights, 0.0, None)
        rows = np.concatenate([self.ei, self.ej, np.arange(self.n)])
        cols = np.concatenate([self.ej, self.ei, np.arange(self.n)])
        vals = np.concatenate([w, w, np.ones(self.n)])
        adj = sp.coo_matrix((vals, (rows, cols)), shape=(self.n, self.n)).tocsr()
        rowsum = np.asarray(adj.sum(axis=1)).ravel()
        return sp.diags(1.0 / rowsum) @ adj

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{GRAPH_MAGIC} {GRAPH_VERSION}\n")
            seed = "none" if self.seed is None else str(self.seed)
            fh.write(
                f"n={self.n} variant={self.variant.value} delta={self.delta!r} "
                f"seed={seed} edges={self.n_edges}\n"
            )
            for i, j, w in zip(self.ei, self.ej, self.weights):
                fh.write(f"{int(i)} {int(j)} {float(w)!r}\n")

    @classmethod
    def load(cls, path) -> "MentionGraph":
        with open(path, "r", encoding="utf-8") as fh:
            magic = fh.readline().split()
            if magic[:1] != [GRAPH_MAGIC]:
                raise GraphError(f"{path}:1: expected {GRAPH_MAGIC!r} header")
            try:
                meta = dict(kv.split("=", 1) for kv in fh.readline().split())
                n = int(meta["n"])
                variant = GraphVariant(meta["variant"])
                delta = float(meta["delta"])
                seed = None if meta["seed"] == "none" else int(meta["seed"])
                n_edges = int(meta["edges"])
            except (KeyError, ValueError) as exc:
                raise GraphError(f"{path}:2: malformed metadata line ({exc})") from None
            ei, ej, w = [], [], []
            for lineno, line in enumerate(fh, start=3):
                if not line.strip():
                    continue
                parts = line.split()
                if len(parts) != 3:
                    raise GraphError(f"{path}:{lineno}: expected 'i j weight'")
                ei.append(int(parts[0]))
                ej.append(int(parts[1]))
                w.append(float(parts[2]))
        if len(ei) != n_edges:
            raise GraphError(f"{path}: header promises {n_edges} edges, found {len(ei)}")
        return cls(n, variant, delta, seed, np.array(ei), np.array(ej), np.array(w))


def build_graph(
    vectors: np.ndarray,
    label_sets: Sequence[Sequence[int]],
    n_types: int,
    delta: float = 0.5,
    variant: GraphVariant = GraphVariant.ATTENTIVE,
    seed: int | None = None,
    eligible: np.ndarray | None = None,
) -> MentionGraph:
    """Construct the mention graph for one universe of mentions.

    ``label_sets`` may contain empty entries for unlabeled mentions; they
    join candidate sets but contribute no prototype mass. An ``eligible``
    boolean mask restricts edge endpoints to a subset of mentions (the
    rest keep only their implicit self-loops). The ``random`` variant
    requires a seed and redraws the same number of edges as the candidate
    construction, uniformly over all eligible pairs.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    variant = GraphVariant(variant)
    n = vectors.shape[0]
    if eligible is not None:
        eligible = np.asarray(eligible, dtype=bool)
        if eligible.shape != (n,):
            raise GraphError(f"eligible mask must have shape ({n},), got {eligible.shape}")
    protos, present = build_prototypes(vectors, label_sets, n_types)
    cands = candidate_sets(vectors, protos, present, delta)
    if eligible is not None:
        allowed = np.flatnonzero(eligible)
        cands = [np.intersect1d(c, allowed) for c in cands]
    pair_ids = _candidate_pairs(cands, n)
    ei, ej = pair_ids // n, pair_ids % n

    if variant is GraphVariant.RANDOM:
        if seed is None:
            raise GraphError("the random variant needs a seed for reproducibility")
        m = ei.size
        nodes = np.flatnonzero(eligible) if eligible is not None else np.arange(n)
        total = nodes.size * (nodes.size - 1) // 2
        if m > total:
            raise GraphError(f"cannot draw {m} distinct pairs from {total}")
        rng = np.random.default_rng(seed)
        a, b = np.triu_indices(nodes.size, k=1)
        pick = rng.choice(total, size=m, replace=False)
        ei, ej = nodes[a[pick]].astype(np.int64), nodes[b[pick]].astype(np.int64)
        order = np.lexsort((ej, ei))
        ei, ej = ei[order], ej[order]
        weights = np.ones(m)
    elif variant is GraphVariant.PLAIN:
        weights = np.ones(ei.size)
    else:
        v_unit = _unit_rows(vectors)
        weights = np.einsum("ij,ij->i", v_unit[ei], v_unit[ej])

    return MentionGraph(n, variant, delta, seed, ei, ej, weights)
