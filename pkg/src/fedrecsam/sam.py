"""Sharpness-aware gradient steps and the norm-based regularizer gradient.

The two-step scheme: take the gradient at the current point, rescale it to the
worst-case perturbation on the radius-rho sphere, then return the gradient
evaluated at the perturbed point.  Shared and private parameter partitions get
independent radii.  A zero radius (or a degenerate gradient) short-circuits to
the plain gradient, bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import ClientState, GlobalParams, _loss_and_grads, make_batch_ctx
from .vectors import SharedVec

DEGENERATE_GRAD_NORM = 1e-12


@dataclass
class SamConfig:
    """Perturbation radii for the shared (co) and private (ur) partitions."""

    rho_co: float = 0.0
    rho_ur: float = 0.0
    enable_shared: bool = True
    enable_nonshared: bool = True

    def __post_init__(self) -> None:
        if self.rho_co < 0 or self.rho_ur < 0:
            raise ValueError("perturbation radii must be non-negative")

    @property
    def effective_rho_co(self) -> float:
        return self.rho_co if self.enable_shared else 0.0

    @property
    def effective_rho_ur(self) -> float:
        return self.rho_ur if self.enable_nonshared else 0.0


SIGMA_FIXED = "fixed"
SIGMA_FROM_RHO = "from_rho"


@dataclass
class NormRegConfig:
    """Gaussian-perturbation norm regularizer settings.

    `big_n` is the training-set cardinality proxy; `sigma_policy` either keeps
    the configured sigma or derives it from the perturbation radii at train time.
    """

    enabled: bool = False
    sigma: float = 1.0
    big_n: int = 1
    sigma_policy: str = SIGMA_FIXED

    def __post_init__(self) -> None:
        if self.sigma_policy not in (SIGMA_FIXED, SIGMA_FROM_RHO):
            raise ValueError(f"unknown sigma policy: {self.sigma_policy!r}")
        if self.enabled and self.sigma_policy == SIGMA_FIXED and self.sigma <= 0:
            raise ValueError("sigma must be positive when the regularizer is enabled")
        if self.big_n < 1:
            raise ValueError("big_n must be a positive count")


def sigma_from_rho(rho: float, t_dim: int, big_n: int) -> float:
    """Largest admissible Gaussian std for one partition given its radius."""
    ln_sqrt_n = 0.5 * math.log(big_n)
    return rho / math.sqrt(2.0 * ln_sqrt_n + t_dim + 2.0 * math.sqrt(t_dim * ln_sqrt_n))


def resolve_norm_reg(
    cfg: NormRegConfig, sam: SamConfig, t_co: int, t_ur: int, default_big_n: int
) -> NormRegConfig:
    """Fill in big_n and, under the from-rho policy, the partition-minimum sigma."""
    big_n = cfg.big_n if cfg.big_n > 1 else max(default_big_n, 1)
    sigma = cfg.sigma
    if cfg.enabled and cfg.sigma_policy == SIGMA_FROM_RHO:
        sigma = min(
            sigma_from_rho(sam.effective_rho_co, t_co, big_n),
            sigma_from_rho(sam.effective_rho_ur, t_ur, big_n),
        )
        if sigma <= 0:
            raise ValueError("from-rho sigma policy requires positive radii")
    return replace(cfg, big_n=big_n, sigma=sigma, sigma_policy=SIGMA_FIXED)


def worst_case_perturbation(grad: np.ndarray, rho: float) -> np.ndarray:
    """Gradient rescaled to norm rho; zero vector for rho=0 or a degenerate gradient."""
    norm = float(np.linalg.norm(grad))
    if rho == 0.0 or norm <= DEGENERATE_GRAD_NORM:
        return np.zeros_like(grad)
    return (rho / norm) * grad


def worst_case_perturbation_shared(grad: SharedVec, rho: float) -> SharedVec:
    """Shared-space analogue; the perturbation lives on the gradient's sparse support."""
    norm = grad.norm()
    if rho == 0.0 or norm <= DEGENERATE_GRAD_NORM:
        return SharedVec.zeros(grad.n_items, grad.dim, grad.score.size)
    return grad.scaled(rho / norm)


def _private_step(
    g: GlobalParams, c: ClientState, ctx, cfg: SamConfig
) -> tuple[float, np.ndarray]:
    """Loss at the unperturbed point and the private-partition SAM gradient."""
    rho = cfg.effective_rho_ur
    loss, _, grad_ur = _loss_and_grads(g, c, ctx, want_co=False)
    if rho == 0.0:
        return loss, grad_ur
    norm = float(np.linalg.norm(grad_ur))
    if norm <= DEGENERATE_GRAD_NORM:
        return loss, grad_ur
    eps = (rho / norm) * grad_ur
    _, _, grad_ur_sam = _loss_and_grads(g, c, ctx, ur_shift=eps, want_co=False)
    return loss, grad_ur_sam


def _shared_step(g: GlobalParams, c: ClientState, ctx, cfg: SamConfig) -> SharedVec:
    """Shared-partition SAM gradient, evaluated with the client's current embedding."""
    rho = cfg.effective_rho_co
    _, grad_co, _ = _loss_and_grads(g, c, ctx, want_ur=False)
    if rho == 0.0:
        return grad_co
    norm = grad_co.norm()
    if norm <= DEGENERATE_GRAD_NORM:
        return grad_co
    eps = grad_co.scaled(rho / norm)
    _, grad_co_sam, _ = _loss_and_grads(g, c, ctx, co_shift=eps, want_ur=False)
    return grad_co_sam


def sam_grad_nonshared(
    g: GlobalParams,
    c: ClientState,
    items: np.ndarray,
    labels: np.ndarray,
    cfg: SamConfig,
) -> np.ndarray:
    """Private-partition gradient at the worst-case-perturbed user embedding.

    With a zero radius this is bitwise the plain gradient.
    """
    _, grad = _private_step(g, c, make_batch_ctx(items, labels), cfg)
    return grad


def sam_grad_shared(
    g: GlobalParams,
    c: ClientState,
    items: np.ndarray,
    labels: np.ndarray,
    cfg: SamConfig,
) -> SharedVec:
    """Shared-partition gradient at the worst-case-perturbed shared parameters.

    The caller is expected to have applied the private step already; the
    perturbation support is the batch-touched item rows plus score weights.
    """
    return _shared_step(g, c, make_batch_ctx(items, labels), cfg)


def norm_reg_gradient(theta: np.ndarray, cfg: NormRegConfig, t_dim: int) -> np.ndarray:
    """Gradient of the regularizer's only theta-dependent (log) term.

    d/dtheta [ (T/2) / sqrt(N) * log(1 + ||theta||^2 / (T sigma^2)) ]
        = theta / (sqrt(N) * (sigma^2 + ||theta||^2 / T)).
    """
    if not cfg.enabled:
        return np.zeros_like(theta)
    denom = cfg.sigma ** 2 + float(np.vdot(theta, theta)) / t_dim
    return theta / (math.sqrt(cfg.big_n) * denom)


def norm_reg_gradient_shared(
    g: GlobalParams, touched_items: np.ndarray, cfg: NormRegConfig
) -> SharedVec:
    """Norm-regularizer gradient over the shared parameters, restricted to a support.

    Matches `norm_reg_gradient` on the full flat shared vector, then keeps only the
    touched item rows plus the score weights so client uploads stay sparse.
    """
    t_score = g.score.num_params
    if not cfg.enabled:
        return SharedVec.zeros(g.num_items, g.dim, t_score)
    ids = np.unique(np.asarray(touched_items, dtype=np.int64))
    return _norm_reg_shared(g, ids, cfg)


def _norm_reg_shared(g: GlobalParams, uniq: np.ndarray, cfg: NormRegConfig) -> SharedVec:
    score_flat = g.score.flat()
    flat_sq = float(np.vdot(g.item_embeddings, g.item_embeddings)) + float(
        np.vdot(score_flat, score_flat)
    )
    denom = math.sqrt(cfg.big_n) * (cfg.sigma ** 2 + flat_sq / g.t_co)
    return SharedVec(g.num_items, g.dim, uniq, g.item_embeddings[uniq] / denom, score_flat / denom)
