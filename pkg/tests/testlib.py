"""Shared instance generators for the gradient and loss tests.

Finite differences in double precision have an absolute noise floor around
1e-10, so gradient-check instances are drawn clustered (bounded cosine gaps
keep the softmax away from saturation) at moderate scale s, and instances
whose true gradient contains a coordinate smaller than ``floor`` are
rejected: at such coordinates the relative-error denominator is pure fd
noise. Selection looks only at gradient magnitudes, never at analytic vs
numeric agreement, so a wrong analytic gradient cannot hide.
"""

import numpy as np

from marginlab.losses import LossConfig, Variant, loss_and_gradients

VARIANTS = list(Variant)
CONDITION_FLOOR = 1e-3


def draw_instance(variant: Variant, seed: int):
    """One clustered random instance: (features, weights, labels, config)."""
    rng = np.random.default_rng([seed, VARIANTS.index(variant)])
    n = int(rng.integers(1, 5))
    c = int(rng.integers(2, 9))
    d = int(rng.integers(4, 9))
    hub = rng.standard_normal(d)
    hub /= np.linalg.norm(hub)
    features = hub + 0.25 * rng.standard_normal((n, d))
    weights = hub + 0.25 * rng.standard_normal((c, d))
    labels = rng.integers(0, c, n)
    config = LossConfig(
        variant=variant,
        s=float(rng.uniform(4, 9)),
        m=float(rng.uniform(0.05, 0.6)),
        t=float(rng.uniform(1.0, 1.3)),
        alpha=float(rng.uniform(0.0, 0.35)),
        m0=float(rng.uniform(0.1, 0.5)),
        m1=float(rng.uniform(0.0, 0.3)),
    )
    return features, weights, labels, config


def well_conditioned(features, weights, labels, config, floor=CONDITION_FLOOR):
    bundle = loss_and_gradients(features, weights, labels, config)
    smallest = min(np.abs(bundle.d_features).min(), np.abs(bundle.d_weights).min())
    return smallest >= floor


def conditioned_instances(variant: Variant, count: int):
    """Yield ``count`` well-conditioned instances, skipping noisy draws."""
    produced = 0
    seed = 0
    while produced < count:
        features, weights, labels, config = draw_instance(variant, seed)
        seed += 1
        if not well_conditioned(features, weights, labels, config):
            continue
        produced += 1
        yield features, weights, labels, config


def random_cosine_row(rng, c, bound=0.9):
    """One row of cosines bounded away from the arccos endpoints."""
    return rng.uniform(-bound, bound, c)
