"""Dynamic loss-weight adjustment: weights are pulled toward the normalized
inverse of each loss value and renormalized onto the probability simplex."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EPSILON = 1e-8
DEFAULT_RATE = 0.05


@dataclass
class WeightState:
    weights: np.ndarray
    rate: float = DEFAULT_RATE
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) < 1:
            raise ValueError("weights must be a non-empty 1-D vector")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {w.sum()}")
        if not 0.0 < self.rate <= 1.0:
            raise ValueError("adjustment rate must lie in (0, 1]")
        self.weights = w

    @classmethod
    def uniform(cls, n: int = 6, rate: float = DEFAULT_RATE, epsilon: float = DEFAULT_EPSILON):
        return cls(np.full(n, 1.0 / n), rate, epsilon)


def target_weights(losses, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Normalized inverse losses: the smallest loss gets the largest target."""
    l = np.asarray(losses, dtype=np.float64)
    if np.any(np.isnan(l)):
        raise ValueError("NaN loss value fed to the weight adjuster")
    inv = 1.0 / (l + epsilon)
    return inv / inv.sum()


def update(state: WeightState, losses) -> WeightState:
    """One adjustment step: w <- w + r * (target - w), renormalized to the simplex.

    The Wasserstein adversarial loss can go negative, which would break the
    inverse-loss positivity assumption, so magnitudes are fed to the inverter.
    """
    l = np.abs(np.asarray(losses, dtype=np.float64))
    if l.shape != state.weights.shape:
        raise ValueError(f"expected {len(state.weights)} losses, got {l.shape}")
    if np.any(np.isnan(l)) or np.any(np.isinf(l)):
        raise ValueError("non-finite loss value fed to the weight adjuster")
    tgt = target_weights(l, state.epsilon)
    new = state.weights + state.rate * (tgt - state.weights)
    new = np.clip(new, 0.0, None)
    new = new / new.sum()
    return WeightState(new, state.rate, state.epsilon)
