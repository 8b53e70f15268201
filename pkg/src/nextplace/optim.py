"""Adam optimizer with decoupled weight decay, plus global-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


class GradientError(RuntimeError):
    """A gradient went non-finite; the offending parameter is named."""


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-5
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update over all parameters, applied in place.

    Weight decay is decoupled from the moment estimates (applied directly to
    the weights), so it acts as plain L2 shrinkage independent of gradient
    scale. Moments are keyed by parameter name, which must be unique.
    """
    if len(params) != len(grads):
        raise ValueError(f"adam_step: {len(params)} params but {len(grads)} grads")
    names = [p.name for p in params]
    if None in names or len(set(names)) != len(names):
        raise ValueError("adam_step: every parameter needs a unique name")
    for p, g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ValueError(
                f"adam_step: grad shape {g.shape} does not match parameter "
                f"{p.name} of shape {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient for parameter {p.name}")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g in zip(params, grads):
        m = state.first_moment.setdefault(p.name, np.zeros_like(p.data))
        v = state.second_moment.setdefault(p.name, np.zeros_like(p.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= state.learning_rate * (
            m_hat / (np.sqrt(v_hat) + state.epsilon) + state.weight_decay * p.data)
    return state


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is at most
    max_norm; returns the pre-clip norm.

    The trigger has a hair of slack so that re-clipping an already clipped
    set is an exact no-op (idempotence) despite rounding in the scale.
    """
    if max_norm <= 0:
        raise ValueError(f"clip_global_norm: max_norm must be positive, got {max_norm}")
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm * (1.0 + 1e-12):
        ratio = max_norm / norm
        for g in grads:
            g *= ratio
    return norm
