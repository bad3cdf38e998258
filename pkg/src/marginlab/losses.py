"""Forward and backward passes for the five normalized-softmax margin losses.

Variants
--------
norm_softmax   plain rescaled cosine logits
cosface        additive cosine margin on the positive logit
arcface        additive angular margin on the positive logit
mv_softmax     arcface positive plus multiplicative emphasis s*(t*cos + t - 1)
               on masked hard-negative logits (an additive-cosine positive is
               available via ``mv_positive="cos"``)
npcface        per-sample collaborative positive margin plus disentangled
               hard-negative emphasis s*(t*cos + alpha)

The hard mask and the collaborative margins are *frozen* auxiliaries: they
are recomputed from the current cosines every iteration but treated as
constants by every backward pass, so no gradient flows through the mining
step. ``finite_difference_check`` follows the same convention.
"""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigMismatch, DimensionMismatch
from .geometry import cos_shifted, cosine_matrix, normalize_rows

PROB_FLOOR = 1e-300
# below this sin(theta), the arcface-style derivative factor uses its
# analytic limit cos(margin) instead of sin(theta + m)/sin(theta)
SIN_LIMIT = 1e-12


class Variant(str, Enum):
    NORM_SOFTMAX = "norm_softmax"
    COSFACE = "cosface"
    ARCFACE = "arcface"
    MV_SOFTMAX = "mv_softmax"
    NPCFACE = "npcface"


#: variants whose negative logits depend on the hard mask
MASKED_VARIANTS = (Variant.MV_SOFTMAX, Variant.NPCFACE)


@dataclass(frozen=True)
class LossConfig:
    """Variant selector plus every scalar hyperparameter.

    s      logit re-scaling (softmax sharpness)
    m      fixed positive margin (cosface / arcface / mv_softmax)
    t      multiplicative emphasis on hard-negative logits, >= 1
    alpha  additive emphasis on hard-negative logits (npcface)
    m0     basic collaborative margin (npcface; also the mask criterion)
    m1     collaborative margin range (npcface)
    mv_positive  "arc" or "cos": positive-margin flavor for mv_softmax
    """

    variant: Variant = Variant.NPCFACE
    s: float = 64.0
    m: float = 0.5
    t: float = 1.1
    alpha: float = 0.25
    m0: float = 0.4
    m1: float = 0.2
    mv_positive: str = "arc"

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError(f"s must be positive, got {self.s}")
        if self.t < 1:
            raise ValueError(f"t must be >= 1, got {self.t}")
        if not 0 <= self.m < np.pi:
            raise ValueError(f"m must lie in [0, pi), got {self.m}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 <= self.m0 < np.pi:
            raise ValueError(f"m0 must lie in [0, pi), got {self.m0}")
        if self.m1 < 0 or self.m0 + self.m1 >= np.pi:
            raise ValueError(f"need 0 <= m1 and m0 + m1 < pi, got m1={self.m1}")
        if self.mv_positive not in ("arc", "cos"):
            raise ValueError(f"mv_positive must be 'arc' or 'cos', got {self.mv_positive!r}")


@dataclass
class GradientBundle:
    """Gradients of the batch loss at every stage of the pipeline.

    d_features / d_weights are with respect to the *raw*, pre-normalization
    arrays. Each row of d_logits sums to zero: the softmax gradient identity.
    """

    loss: float
    d_logits: np.ndarray
    d_cosines: np.ndarray
    d_features: np.ndarray
    d_weights: np.ndarray


def _check_labels(labels, n_rows, n_cols):
    labels = np.asarray(labels)
    if labels.shape != (n_rows,):
        raise DimensionMismatch(f"labels shape {labels.shape}, expected ({n_rows},)")
    if labels.size and (labels.min() < 0 or labels.max() >= n_cols):
        raise DimensionMismatch("label out of range for the class count")
    return labels.astype(np.intp)


def _require_aux(config, mask, margins):
    if mask is None:
        raise ConfigMismatch(f"{config.variant.value} requires a hard mask")
    if config.variant is Variant.NPCFACE and margins is None:
        raise ConfigMismatch("npcface requires collaborative margins")


def _positive_margins(config, n, margins):
    """Per-sample positive margin actually applied by the variant."""
    if config.variant is Variant.NPCFACE:
        return np.asarray(margins, dtype=np.float64)
    return np.full(n, config.m)


def forward_logits(cosines, labels, config: LossConfig, mask=None, margins=None) -> np.ndarray:
    """Margined logit matrix for one batch.

    ``mask`` (N x C binary, zero on the label column) and ``margins``
    (length N) are consulted only by mv_softmax / npcface; the other
    variants ignore them.
    """
    cosines = np.asarray(cosines, dtype=np.float64)
    n, c = cosines.shape
    labels = _check_labels(labels, n, c)
    rows = np.arange(n)

    if config.variant in MASKED_VARIANTS:
        _require_aux(config, mask, margins)

    logits = config.s * cosines
    if config.variant is Variant.NORM_SOFTMAX:
        return logits

    pos_cos = cosines[rows, labels]
    if config.variant is Variant.MV_SOFTMAX:
        hard = np.asarray(mask, dtype=bool)
        logits = np.where(hard, config.s * (config.t * cosines + (config.t - 1.0)), logits)
    elif config.variant is Variant.NPCFACE:
        hard = np.asarray(mask, dtype=bool)
        logits = np.where(hard, config.s * (config.t * cosines + config.alpha), logits)

    if config.variant is Variant.COSFACE or (
        config.variant is Variant.MV_SOFTMAX and config.mv_positive == "cos"
    ):
        logits[rows, labels] = config.s * (pos_cos - config.m)
    else:
        m_pos = _positive_margins(config, n, margins)
        logits[rows, labels] = config.s * cos_shifted(pos_cos, m_pos)
    return logits


def softmax_probabilities(logits) -> np.ndarray:
    """Row-stable softmax: subtract the row max before exponentiating."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_value(probs, labels) -> float:
    """Mean cross-entropy -log p_y; probabilities floored at 1e-300."""
    probs = np.asarray(probs, dtype=np.float64)
    n, c = probs.shape
    labels = _check_labels(labels, n, c)
    p_y = np.maximum(probs[np.arange(n), labels], PROB_FLOOR)
    return float(-np.mean(np.log(p_y)))


def backward_logits(probs, labels) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to the logits.

    Entry (i, k) = (p_ik - [k == y_i]) / N, so every row sums to zero.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n, c = probs.shape
    labels = _check_labels(labels, n, c)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return grad / n


def _arc_positive_factor(pos_cos, m_pos, s):
    """d/dcos of s*cos_shifted(cos, m): s*sin(theta+m)/sin(theta).

    Uses the analytic limit s*cos(m) where sin(theta) vanishes and exactly
    zero where the summed angle is clamped at pi.
    """
    pos_cos = np.asarray(pos_cos, dtype=np.float64)
    m_pos = np.asarray(m_pos, dtype=np.float64)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - pos_cos * pos_cos))
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = s * (np.cos(m_pos) + pos_cos * np.sin(m_pos) / sin_t)
    factor = np.where(sin_t < SIN_LIMIT, s * np.cos(m_pos), factor)
    return np.where(pos_cos < np.cos(np.pi - m_pos), 0.0, factor)


def backward_cosines(d_logits, cosines, labels, config: LossConfig, mask=None, margins=None) -> np.ndarray:
    """Chain ``d_logits`` through the margined logit map: returns dL/dcos.

    The mask and the collaborative margins must be the same frozen arrays
    that produced the matching forward logits.
    """
    d_logits = np.asarray(d_logits, dtype=np.float64)
    cosines = np.asarray(cosines, dtype=np.float64)
    n, c = cosines.shape
    labels = _check_labels(labels, n, c)
    rows = np.arange(n)

    if config.variant in MASKED_VARIANTS:
        _require_aux(config, mask, margins)
        hard = np.asarray(mask, dtype=bool)
        factors = np.where(hard, config.s * config.t, config.s)
    else:
        factors = np.full((n, c), config.s)

    if config.variant is Variant.COSFACE or (
        config.variant is Variant.MV_SOFTMAX and config.mv_positive == "cos"
    ):
        factors[rows, labels] = config.s
    elif config.variant is not Variant.NORM_SOFTMAX:
        m_pos = _positive_margins(config, n, margins)
        factors[rows, labels] = _arc_positive_factor(cosines[rows, labels], m_pos, config.s)
    return d_logits * factors


def backward_parameters(d_cosines, raw_features, raw_weights):
    """Pull dL/dcos back through normalization onto the raw arrays.

    cos_ij = <x_i/|x_i|, w_j/|w_j|>, so
        dcos/dx_i = (w_hat_j - cos_ij * x_hat_i) / |x_i|
    and symmetrically for w_j. Returns (d_features, d_weights).
    """
    d_cosines = np.asarray(d_cosines, dtype=np.float64)
    x = np.asarray(raw_features, dtype=np.float64)
    w = np.asarray(raw_weights, dtype=np.float64)
    x_hat = normalize_rows(x)
    w_hat = normalize_rows(w)
    x_norms = np.linalg.norm(x, axis=1)
    w_norms = np.linalg.norm(w, axis=1)
    cos = x_hat @ w_hat.T  # unclamped: the clamp is a no-op inside (-1, 1)

    row_mix = np.sum(d_cosines * cos, axis=1)
    d_features = (d_cosines @ w_hat - row_mix[:, None] * x_hat) / x_norms[:, None]
    col_mix = np.sum(d_cosines * cos, axis=0)
    d_weights = (d_cosines.T @ x_hat - col_mix[:, None] * w_hat) / w_norms[:, None]
    return d_features, d_weights


def frozen_auxiliaries(cosines, labels, config: LossConfig):
    """Mask and collaborative margins for the variants that need them.

    Returns (None, None) for the plain variants, so the result can be fed
    straight into the forward/backward calls.
    """
    from .hardness import collaborative_margin, compute_mask

    if config.variant not in MASKED_VARIANTS:
        return None, None
    mask = compute_mask(cosines, labels, config.m0)
    if config.variant is Variant.NPCFACE:
        margins = collaborative_margin(cosines, mask, config.m0, config.m1)
    else:
        margins = None
    return mask, margins


def loss_and_gradients(raw_features, raw_weights, labels, config: LossConfig,
                       mask=None, margins=None) -> GradientBundle:
    """Full forward/backward sweep from raw features and weights.

    When ``mask``/``margins`` are omitted they are mined from the current
    cosines (the per-iteration semantics); pass explicit arrays to keep
    them frozen across evaluations, e.g. for finite differences.
    """
    cosines = cosine_matrix(normalize_rows(raw_features), normalize_rows(raw_weights))
    if config.variant in MASKED_VARIANTS and mask is None:
        mask, margins = frozen_auxiliaries(cosines, labels, config)
    logits = forward_logits(cosines, labels, config, mask, margins)
    probs = softmax_probabilities(logits)
    loss = loss_value(probs, labels)
    d_logits = backward_logits(probs, labels)
    d_cosines = backward_cosines(d_logits, cosines, labels, config, mask, margins)
    d_features, d_weights = backward_parameters(d_cosines, raw_features, raw_weights)
    return GradientBundle(loss, d_logits, d_cosines, d_features, d_weights)


def _loss_only(raw_features, raw_weights, labels, config, mask, margins):
    cosines = cosine_matrix(normalize_rows(raw_features), normalize_rows(raw_weights))
    logits = forward_logits(cosines, labels, config, mask, margins)
    return loss_value(softmax_probabilities(logits), labels)


def finite_difference_check(features, weights, labels, config: LossConfig,
                            epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The mask and collaborative margins are computed once from the
    unperturbed inputs and held fixed across every perturbed evaluation,
    matching the frozen-auxiliary backward pass. The relative error of a
    coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-4], got {epsilon}")
    features = np.array(features, dtype=np.float64)
    weights = np.array(weights, dtype=np.float64)

    cosines = cosine_matrix(normalize_rows(features), normalize_rows(weights))
    mask, margins = frozen_auxiliaries(cosines, labels, config)
    bundle = loss_and_gradients(features, weights, labels, config, mask, margins)

    worst = 0.0
    for array, analytic in ((features, bundle.d_features), (weights, bundle.d_weights)):
        for idx in np.ndindex(array.shape):
            saved = array[idx]
            array[idx] = saved + epsilon
            up = _loss_only(features, weights, labels, config, mask, margins)
            array[idx] = saved - epsilon
            down = _loss_only(features, weights, labels, config, mask, margins)
            array[idx] = saved
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(analytic[idx] - numeric) / max(abs(analytic[idx]), abs(numeric), 1e-12)
            worst = max(worst, err)
    return worst
