"""Plain SGD and Adam updates over flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

SGD = "sgd"
ADAM = "adam"
OPTIMIZER_VARIANTS = (SGD, ADAM)


@dataclass
class SgdState:
    step: int = 0

    def copy(self) -> SgdState:
        return SgdState(self.step)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    def copy(self) -> AdamState:
        return AdamState(self.m.copy(), self.v.copy(), self.step)


OptimizerState = SgdState | AdamState


def make_optimizer(variant: str, dim: int) -> OptimizerState:
    if variant == SGD:
        return SgdState()
    if variant == ADAM:
        return AdamState(np.zeros(dim), np.zeros(dim))
    raise ValueError(f"unknown optimizer variant: {variant!r}")


def apply_update(state: OptimizerState, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """One optimizer step.  Mutates `params` (and the moment buffers) in place."""
    if params.shape != grad.shape:
        raise ValueError("parameter/gradient shapes disagree")
    state.step += 1
    if isinstance(state, SgdState):
        params -= lr * grad
        return params
    state.m *= ADAM_BETA1
    state.m += (1.0 - ADAM_BETA1) * grad
    state.v *= ADAM_BETA2
    state.v += (1.0 - ADAM_BETA2) * grad * grad
    m_hat = state.m / (1.0 - ADAM_BETA1 ** state.step)
    v_hat = state.v / (1.0 - ADAM_BETA2 ** state.step)
    params -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params
