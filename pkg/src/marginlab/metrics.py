"""Verification and identification metrics over embedding sets.

Scores are cosine similarities; acceptance always means score >= threshold.
Ties are broken by the lowest index everywhere so results reproduce
bit-for-bit.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllRejected,
    DegenerateInput,
    InfeasiblePairCount,
    InsufficientPairs,
    MissingMate,
)
from .geometry import normalize_rows
from .seeds import named_rng


@dataclass
class PairSet:
    """Verification pairs: parallel index arrays plus same-identity flags."""

    index_a: np.ndarray
    index_b: np.ndarray
    is_same: np.ndarray

    def __len__(self):
        return self.index_a.size


@dataclass
class RocCurve:
    """Operating points swept over every distinct score, threshold ascending.

    The final point uses threshold = inf (accept nothing), so far and tar
    both step down to zero; both arrays are non-increasing.
    """

    thresholds: np.ndarray
    far: np.ndarray
    tar: np.ndarray

    def points(self):
        return list(zip(self.thresholds, self.far, self.tar))


@dataclass
class IdentificationResult:
    rank1_accuracy: float
    n_probes: int
    n_gallery: int
    n_distractors: int


def build_pairs(labels, n_positive: int, n_negative: int, seed: int) -> PairSet:
    """Seeded sampling of same-class and cross-class index pairs, without
    replacement within each kind."""
    labels = np.asarray(labels)
    n = labels.size
    if n_positive < 1 or n_negative < 1:
        raise InfeasiblePairCount("need at least one positive and one negative pair")

    positives = []
    for value in np.unique(labels):
        members = np.flatnonzero(labels == value)
        for i in range(members.size):
            for j in range(i + 1, members.size):
                positives.append((members[i], members[j]))
    if len(positives) < n_positive:
        raise InfeasiblePairCount(
            f"requested {n_positive} positive pairs, only {len(positives)} exist"
        )
    total = n * (n - 1) // 2
    n_cross = total - len(positives)
    if n_cross < n_negative:
        raise InfeasiblePairCount(
            f"requested {n_negative} negative pairs, only {n_cross} exist"
        )

    rng = named_rng(seed, "pairs")
    positives = np.array(positives)
    pos_pick = positives[rng.permutation(len(positives))[:n_positive]]

    seen = set()
    neg_pick = []
    while len(neg_pick) < n_negative:
        a, b = int(rng.integers(n)), int(rng.integers(n))
        if a == b or labels[a] == labels[b]:
            continue
        key = (a, b) if a < b else (b, a)
        if key in seen:
            continue
        seen.add(key)
        neg_pick.append(key)
    neg_pick = np.array(neg_pick)

    index_a = np.concatenate([pos_pick[:, 0], neg_pick[:, 0]])
    index_b = np.concatenate([pos_pick[:, 1], neg_pick[:, 1]])
    is_same = np.concatenate([np.ones(n_positive, bool), np.zeros(n_negative, bool)])
    return PairSet(index_a, index_b, is_same)


def pair_scores(embeddings, pairs: PairSet) -> np.ndarray:
    """Cosine similarity of each pair's embeddings."""
    unit = normalize_rows(np.asarray(embeddings, dtype=np.float64))
    return np.sum(unit[pairs.index_a] * unit[pairs.index_b], axis=1)


def _validated_scores(scores, flags):
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    if scores.shape != flags.shape or scores.ndim != 1:
        raise DegenerateInput("scores and flags must be matching 1-d arrays")
    if not np.isfinite(scores).all():
        raise DegenerateInput("scores must be finite")
    if not flags.any() or flags.all():
        raise DegenerateInput("need at least one positive and one negative score")
    return scores, flags


def roc(scores, flags) -> RocCurve:
    """Sweep every distinct score as a threshold (plus an accept-nothing
    sentinel): FAR = accepted negatives / negatives, TAR = accepted
    positives / positives."""
    scores, flags = _validated_scores(scores, flags)
    pos = np.sort(scores[flags])
    neg = np.sort(scores[~flags])
    thresholds = np.concatenate([np.unique(scores), [np.inf]])
    # count of entries >= t via searchsorted on the sorted score arrays
    tar = (pos.size - np.searchsorted(pos, thresholds, side="left")) / pos.size
    far = (neg.size - np.searchsorted(neg, thresholds, side="left")) / neg.size
    return RocCurve(thresholds=thresholds, far=far, tar=tar)


def tar_at_far(curve: RocCurve, far_target: float) -> float:
    """TAR at the smallest threshold whose FAR <= far_target.

    A conservative step convention: no interpolation between operating
    points. When only the accept-nothing sentinel qualifies, warns
    AllRejected and returns 0.0.
    """
    if not 0.0 < far_target <= 1.0:
        raise ValueError(f"far_target must lie in (0, 1], got {far_target}")
    qualifying = np.flatnonzero(curve.far <= far_target)
    first = int(qualifying[0])  # far is non-increasing: the set is a suffix
    if first == curve.thresholds.size - 1 and curve.tar[first] == 0.0:
        warnings.warn(
            f"no operating point reaches FAR <= {far_target}; every pair rejected",
            AllRejected,
        )
    return float(curve.tar[first])


def rank1_identification(probe_embeddings, probe_labels, gallery_embeddings,
                         gallery_labels, distractor_embeddings) -> IdentificationResult:
    """Rank-1 over the gallery plus distractors, cosine similarity.

    A probe scores correct iff the single highest-cosine candidate is a
    gallery entry carrying the probe's label. Ties resolve to the lowest
    candidate index (gallery rows come before distractor rows).
    """
    probes = normalize_rows(np.asarray(probe_embeddings, dtype=np.float64))
    gallery = normalize_rows(np.asarray(gallery_embeddings, dtype=np.float64))
    probe_labels = np.asarray(probe_labels)
    gallery_labels = np.asarray(gallery_labels)
    distractors = np.asarray(distractor_embeddings, dtype=np.float64)
    if distractors.size:
        candidates = np.vstack([gallery, normalize_rows(distractors)])
    else:
        candidates = gallery

    missing = np.setdiff1d(probe_labels, gallery_labels)
    if missing.size:
        raise MissingMate(f"probe labels missing from gallery: {missing[:5].tolist()}")

    sims = probes @ candidates.T
    best = sims.argmax(axis=1)  # argmax takes the first (lowest-index) maximum
    in_gallery = best < gallery.shape[0]
    correct = in_gallery & (gallery_labels[np.minimum(best, gallery.shape[0] - 1)] == probe_labels)
    return IdentificationResult(
        rank1_accuracy=float(np.mean(correct)),
        n_probes=probes.shape[0],
        n_gallery=gallery.shape[0],
        n_distractors=int(distractors.shape[0]) if distractors.size else 0,
    )


def _candidate_thresholds(scores):
    """Midpoints between consecutive distinct scores, plus an accept-all and
    an accept-nothing endpoint.

    Interior thresholds generalize across folds (a perfectly separated score
    set scores 1.0 for any k); the trade-off is that exact invariance under
    monotone score transforms holds only for transforms that preserve
    midpoint sides, e.g. affine ones.
    """
    distinct = np.unique(scores)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate([[distinct[0] - 1.0], mids, [np.inf]])


def _best_threshold(scores, flags):
    """Accuracy-maximizing threshold; ties resolve to the lowest value."""
    best_t, best_acc = None, -1.0
    for t in _candidate_thresholds(scores):
        acc = float(np.mean((scores >= t) == flags))
        if acc > best_acc:
            best_t, best_acc = t, acc
    return best_t


def kfold_threshold_accuracy(scores, flags, k: int, seed: int) -> float:
    """LFW-style protocol: per fold, tune the threshold on the other k-1
    folds and score the held-out fold; returns the mean accuracy."""
    scores, flags = _validated_scores(scores, flags)
    if k < 2:
        raise InsufficientPairs(f"k must be >= 2, got {k}")
    n = scores.size
    if n < k:
        raise InsufficientPairs(f"{n} pairs cannot fill {k} folds")

    order = named_rng(seed, "folds").permutation(n)
    folds = np.array_split(order, k)
    accs = []
    for held_out in range(k):
        test_idx = folds[held_out]
        train_idx = np.concatenate([folds[i] for i in range(k) if i != held_out])
        t = _best_threshold(scores[train_idx], flags[train_idx])
        accs.append(float(np.mean((scores[test_idx] >= t) == flags[test_idx])))
    return float(np.mean(accs))
