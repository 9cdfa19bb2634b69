"""Stochastic views of feature vectors.

Weak view: small additive Gaussian noise. Strong view: coordinate dropout
to zero plus larger Gaussian noise. Both operate on a whole (B, d) batch in
one call and consume a fixed number of RNG draws per call (dropout uniforms
first, then noise normals), so stream positions stay aligned across
configurations that share a seed.
"""

from dataclasses import dataclass

import numpy as np


class AugmentError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    weak_noise_sigma: float = 1.5
    strong_noise_sigma: float = 2.5
    strong_dropout_rate: float = 0.0

    def __post_init__(self):
        if self.weak_noise_sigma < 0 or self.strong_noise_sigma < 0:
            raise AugmentError("noise sigmas must be >= 0")
        if self.strong_noise_sigma < self.weak_noise_sigma:
            raise AugmentError(
                f"strong noise sigma {self.strong_noise_sigma} must be >= "
                f"weak noise sigma {self.weak_noise_sigma}"
            )
        if not 0.0 <= self.strong_dropout_rate < 1.0:
            raise AugmentError(
                f"dropout rate must be in [0, 1), got {self.strong_dropout_rate}"
            )


def weak_augment(x, cfg, rng):
    """x + sigma * N(0, I)."""
    noise = rng.standard_normal(x.shape)
    return x + cfg.weak_noise_sigma * noise


def strong_augment(x, cfg, rng):
    """Zero each coordinate with prob dropout_rate, add sigma * N(0, I) to
    the survivors. Dropout uniforms are drawn before the noise."""
    drop = rng.random(x.shape) < cfg.strong_dropout_rate
    noise = rng.standard_normal(x.shape)
    return np.where(drop, 0.0, x + cfg.strong_noise_sigma * noise)
