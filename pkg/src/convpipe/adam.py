"""Adaptive-moment weight updates with shared per-batch correction factors.

The bias-correction factors 1/(1-beta^t) involve a pow(), so they are
computed once per mini-batch and reused by both layer updates; both layers
therefore share a single step counter. The small constant is added outside
the square root: step = eta * m_hat / (sqrt(v_hat) + eps).
"""

from dataclasses import dataclass

import numpy as np

from .dims import DEFAULT_DIMS


@dataclass(frozen=True)
class AdamHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eta: float = 0.01
    eps: float = 1e-7

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1/beta2 must lie in (0, 1)")
        if self.eta <= 0.0 or self.eps <= 0.0:
            raise ValueError("eta and eps must be positive")


@dataclass
class AdamState:
    """First/second moment arrays for both layers plus the shared step count."""

    m_w1: np.ndarray
    v_w1: np.ndarray
    m_w2: np.ndarray
    v_w2: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, dims=DEFAULT_DIMS):
        return cls(m_w1=np.zeros((dims.pool_map, dims.hidden)),
                   v_w1=np.zeros((dims.pool_map, dims.hidden)),
                   m_w2=np.zeros((dims.hidden, dims.classes)),
                   v_w2=np.zeros((dims.hidden, dims.classes)))


@dataclass(frozen=True)
class CorrectionFactors:
    c1: float
    c2: float
    t: int


def correction_factors(hyper: AdamHyper, t: int) -> CorrectionFactors:
    """Bias-correction multipliers c1 = 1/(1-beta1^t), c2 = 1/(1-beta2^t)."""
    if t < 1:
        raise ValueError(f"step counter must be >= 1 for bias correction, got {t}")
    return CorrectionFactors(c1=1.0 / (1.0 - hyper.beta1 ** t),
                             c2=1.0 / (1.0 - hyper.beta2 ** t),
                             t=t)


def adam_update(w, m, v, g, corr: CorrectionFactors, hyper: AdamHyper):
    """One elementwise moment + weight update, in place.

    m <- beta1*m + (1-beta1)*g
    v <- beta2*v + (1-beta2)*g^2
    w <- w - eta * (m*c1) / (sqrt(v*c2) + eps)
    """
    if not (w.shape == m.shape == v.shape == g.shape):
        raise ValueError(f"shape mismatch: w{w.shape} m{m.shape} "
                         f"v{v.shape} g{g.shape}")
    m[...] = hyper.beta1 * m + (1.0 - hyper.beta1) * g
    v[...] = hyper.beta2 * v + (1.0 - hyper.beta2) * (g * g)
    w -= hyper.eta * (m * corr.c1) / (np.sqrt(v * corr.c2) + hyper.eps)


def apply_batch_update(state: AdamState, weights, grads, hyper: AdamHyper):
    """Advance the step counter once and update both layers with shared factors.

    The output layer is updated first: its gradients come out of the backward
    pass first, and its update produces the factors the hidden layer reuses.
    """
    state.step += 1
    corr = correction_factors(hyper, state.step)
    adam_update(weights.w2, state.m_w2, state.v_w2, grads.g_w2, corr, hyper)
    adam_update(weights.w1, state.m_w1, state.v_w1, grads.g_w1, corr, hyper)
    return corr
