"""Type scoring, margin losses for clean/noisy mentions, and metrics.

Each type t owns an embedding phi_t and a bias; a mention representation
z scores f_t(z) = <phi_t, rep(z)> + b_t. The representation is the
point's tangent coordinates at the origin by default, or the raw point
coordinates (``ambient``); ambient scoring on the hyperboloid may use
either the Euclidean or the Minkowski inner product.

Losses follow a unit-margin hinge scheme that treats distant supervision
asymmetrically:

- a *clean* mention (labels form one chain, so all of them are trusted)
  pushes every gold type above +1 and every other type below -1;
- a *noisy* mention (divergent labels, so at most one path can be right)
  only pushes its best-scoring gold type above +1 — the model picks which
  label to trust — while still pushing all non-gold types below -1. The
  argmax choice is made on detached scores, ties resolve to the lowest
  type id, and gradient flows only through the chosen branch.

Prediction takes every type with a positive score, falling back to the
top-scoring type so no mention ends up typeless.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hyfet import autodiff as ad
from hyfet.hyperlayer import Geometry

PREDICTIONS_FORMAT = "hyfet-predictions"
PREDICTIONS_VERSION = 1


class ScoreSpace(str, enum.Enum):
    TANGENT = "tangent"
    AMBIENT = "ambient"


class AmbientInner(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    MINKOWSKI = "minkowski"


class LabelScorer:
    """Per-type linear scorer over a chosen mention representation."""

    def __init__(
        self,
        geometry: Geometry,
        n_types: int,
        rep_dim: int,
        rng: np.random.Generator,
        space: ScoreSpace = ScoreSpace.TANGENT,
        inner: AmbientInner = AmbientInner.EUCLIDEAN,
        name: str = "score",
    ):
        self.geometry = geometry
        self.n_types = n_types
        self.space = ScoreSpace(space)
        self.inner = AmbientInner(inner)
        if self.inner is AmbientInner.MINKOWSKI and (
            self.space is not ScoreSpace.AMBIENT or not geometry.is_hyperboloid
        ):
            raise ValueError(
                "the minkowski inner product only applies to ambient scoring "
                "on the hyperboloid"
            )
        width = rep_dim if self.space is ScoreSpace.TANGENT else geometry.point_size(rep_dim)
        self.width = width
        self.phi = ad.parameter(rng.uniform(-0.1, 0.1, size=(n_types, width)), f"{name}.weight")
        self.bias = ad.parameter(np.zeros(n_types), f"{name}.bias")

    def params(self) -> dict[str, ad.Tensor]:
        return {self.phi.name: self.phi, self.bias.name: self.bias}

    def representation(self, points):
        if self.space is ScoreSpace.TANGENT:
            return self.geometry.log0(points)
        return points

    def scores(self, points) -> ad.Tensor:
        """Score matrix (n, T) for a batch of manifold points."""
        rep = ad.as_tensor(self.representation(points))
        if self.inner is AmbientInner.MINKOWSKI:
            signs = np.ones(self.width)
            signs[0] = -1.0
            rep = rep * signs
        return ad.matmul(rep, ad.transpose(self.phi)) + self.bias

    def label_points(self) -> np.ndarray:
        """Type embeddings pushed onto the manifold (tangent space only)."""
        if self.space is not ScoreSpace.TANGENT:
            raise ValueError("label points are only defined for tangent-space scoring")
        return np.asarray(self.geometry.exp0(self.phi.data))


def _masks(label_sets: Sequence[Sequence[int]], n_types: int) -> np.ndarray:
    pos = np.zeros((len(label_sets), n_types))
    for i, labels in enumerate(label_sets):
        if len(labels) == 0:
            raise ValueError(f"mention {i} has an empty label set")
        for t in labels:
            pos[i, t] = 1.0
    return pos


def loss_clean(scores: ad.Tensor, label_sets: Sequence[Sequence[int]]) -> ad.Tensor:
    """Hinge loss trusting every gold label: sum over mentions of
    sum_{t in Y} relu(1 - f_t) + sum_{t not in Y} relu(1 + f_t)."""
    scores = ad.as_tensor(scores)
    pos = _masks(label_sets, scores.shape[1])
    return ad.sum(pos * ad.relu(1.0 - scores) + (1.0 - pos) * ad.relu(1.0 + scores))


def best_gold_types(score_values: np.ndarray, label_sets: Sequence[Sequence[int]]) -> np.ndarray:
    """argmax over each mention's gold types; ties go to the lowest id."""
    masked = np.where(_masks(label_sets, score_values.shape[1]) > 0, score_values, -np.inf)
    return masked.argmax(axis=1)


def loss_noisy(scores: ad.Tensor, label_sets: Sequence[Sequence[int]]) -> ad.Tensor:
    """Hinge loss trusting only the best-scoring gold label per mention.

    relu(1 - f_{t*}) + sum_{t not in Y} relu(1 + f_t), with t* chosen on
    detached scores so gradient reaches only the selected branch.
    """
    scores = ad.as_tensor(scores)
    n, n_types = scores.shape
    pos = _masks(label_sets, n_types)
    tstar = best_gold_types(scores.data, label_sets)
    picked = ad.take(scores, (np.arange(n), tstar))
    positive = ad.sum(ad.relu(1.0 - picked))
    negative = ad.sum((1.0 - pos) * ad.relu(1.0 + scores))
    return positive + negative


def total_loss(
    scores: ad.Tensor,
    label_sets: Sequence[Sequence[int]],
    clean_flags: Sequence[bool],
) -> ad.Tensor:
    """Clean-margin loss on chain-labeled mentions plus the noisy variant
    on the rest. Either group may be empty."""
    clean_idx = [i for i, c in enumerate(clean_flags) if c]
    noisy_idx = [i for i, c in enumerate(clean_flags) if not c]
    parts = []
    if clean_idx:
        sub = ad.take(scores, (np.array(clean_idx),))
        parts.append(loss_clean(sub, [label_sets[i] for i in clean_idx]))
    if noisy_idx:
        sub = ad.take(scores, (np.array(noisy_idx),))
        parts.append(loss_noisy(sub, [label_sets[i] for i in noisy_idx]))
    if not parts:
        raise ValueError("cannot compute a loss over zero mentions")
    return parts[0] + parts[1] if len(parts) == 2 else parts[0]


def predict(score_values: np.ndarray) -> list[tuple[int, ...]]:
    """Types with positive scores; top-scoring type when none are positive."""
    score_values = np.asarray(score_values)
    out = []
    for row in score_values:
        chosen = np.flatnonzero(row > 0.0)
        if chosen.size == 0:
            chosen = np.array([row.argmax()])
        out.append(tuple(int(t) for t in chosen))
    return out


# -- metrics -------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    strict: float
    macro_f1: float
    micro_f1: float
    macro_precision: float
    macro_recall: float
    micro_precision: float
    micro_recall: float


def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def evaluate(gold: Sequence[Sequence[int]], pred: Sequence[Sequence[int]]) -> Metrics:
    """Strict accuracy plus macro (mention-averaged) and micro (pooled) F1."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sets vs {len(pred)} predictions")
    if len(gold) == 0:
        raise ValueError("cannot evaluate zero mentions")
    strict = 0
    p_sum = r_sum = f_sum = 0.0
    hits = pred_total = gold_total = 0
    for g, p in zip(gold, pred):
        gs, ps = set(g), set(p)
        if not gs:
            raise ValueError("encountered an empty gold label set")
        inter = len(gs & ps)
        strict += gs == ps
        prec = inter / len(ps) if ps else 0.0
        rec = inter / len(gs)
        p_sum += prec
        r_sum += rec
        f_sum += _f1(prec, rec)
        hits += inter
        pred_total += len(ps)
        gold_total += len(gs)
    n = len(gold)
    micro_p = hits / pred_total if pred_total else 0.0
    micro_r = hits / gold_total
    return Metrics(
        strict=strict / n,
        macro_f1=f_sum / n,
        micro_f1=_f1(micro_p, micro_r),
        macro_precision=p_sum / n,
        macro_recall=r_sum / n,
        micro_precision=micro_p,
        micro_recall=micro_r,
    )


def per_label_counts(
    gold: Sequence[Sequence[int]], pred: Sequence[Sequence[int]], n_types: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(true positives, false positives, false negatives) per type."""
    tp = np.zeros(n_types, dtype=np.int64)
    fp = np.zeros(n_types, dtype=np.int64)
    fn = np.zeros(n_types, dtype=np.int64)
    for g, p in zip(gold, pred):
        gs, ps = set(g), set(p)
        for t in gs & ps:
            tp[t] += 1
        for t in ps - gs:
            fp[t] += 1
        for t in gs - ps:
            fn[t] += 1
    return tp, fp, fn


def save_predictions(path, keys, gold, pred, hierarchy) -> None:
    """Write one JSON line per mention with gold and predicted type paths."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps({"format": PREDICTIONS_FORMAT, "version": PREDICTIONS_VERSION}) + "\n"
        )
        for (si, mi), g, p in zip(keys, gold, pred):
            row = {
                "sentence": int(si),
                "mention": int(mi),
                "gold": [hierarchy.path(t) for t in sorted(set(g))],
                "predicted": [hierarchy.path(t) for t in sorted(set(p))],
            }
            fh.write(json.dumps(row) + "\n")
