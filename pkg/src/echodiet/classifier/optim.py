"""Focal loss, Adam and cosine annealing written out from their formulas.

The numpy functions are the reference definitions; the torch variants are
what the training loop runs and are checked against them in the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ConfigError, TrainingError
from ..labels import N_CLASSES

P_FLOOR = 1e-12


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _alpha_vector(alpha, n):
    if alpha is None:
        return np.ones(n)
    a = np.asarray(alpha, dtype=np.float64)
    if a.shape != (n,) or np.any(a < 0):
        raise ConfigError(f"alpha must be {n} non-negative weights")
    return a


def focal_loss(probs, targets, gamma: float = 2.0, alpha=None) -> float:
    """Mean of ``-alpha_t (1 - p_t)^gamma log p_t`` over the batch.

    ``p_t`` is the probability of the true class, clamped to [1e-12, 1].
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if not math.isfinite(gamma) or gamma < 0:
        raise ConfigError("gamma must be finite and non-negative")
    if p.shape[0] != y.shape[0]:
        raise ValueError("one target per probability row is required")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1) > 1e-6):
        raise ValueError("probabilities must be non-negative and sum to 1")
    if np.any((y < 0) | (y >= p.shape[1])):
        raise ValueError("target class out of range")
    a = _alpha_vector(alpha, p.shape[1])[y]
    pt = np.clip(p[np.arange(len(y)), y], P_FLOOR, 1.0)
    return float(np.mean(-a * (1 - pt) ** gamma * np.log(pt)))


def focal_loss_grad(logits, targets, gamma: float = 2.0, alpha=None) -> np.ndarray:
    """Analytic gradient of the batch-mean focal loss w.r.t. the logits.

    With ``p = softmax(z)``::

        dL/dz_j = alpha_t [gamma (1 - p_t)^(gamma - 1) p_t log p_t - (1 - p_t)^gamma]
                  (delta_jt - p_j) / N
    """
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, k = z.shape
    p = softmax(z)
    a = _alpha_vector(alpha, k)[y]
    pt = p[np.arange(n), y]
    log_pt = np.log(np.clip(pt, P_FLOOR, 1.0))
    one_minus = 1 - pt
    if gamma == 0:
        focus = np.zeros(n)
    else:
        focus = gamma * one_minus ** (gamma - 1) * pt * log_pt
    coef = a * (focus - one_minus ** gamma)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), y] = 1.0
    return coef[:, None] * (onehot - p) / n


def focal_loss_torch(logits: torch.Tensor, targets: torch.Tensor, gamma: float = 2.0,
                     alpha: torch.Tensor | None = None) -> torch.Tensor:
    log_p = torch.log_softmax(logits, dim=-1)
    log_pt = log_p.gather(1, targets[:, None]).squeeze(1).clamp(min=math.log(P_FLOOR))
    pt = log_pt.exp()
    loss = -(1 - pt) ** gamma * log_pt
    if alpha is not None:
        loss = loss * alpha.to(loss.dtype)[targets]
    return loss.mean()


def inverse_frequency_alpha(targets, n_classes: int = N_CLASSES) -> np.ndarray:
    """Class weights proportional to 1/frequency, scaled to mean 1 over present classes.

    Classes absent from ``targets`` get weight 1; they never contribute.
    """
    counts = np.bincount(np.asarray(targets, dtype=np.int64), minlength=n_classes).astype(np.float64)
    alpha = np.ones(n_classes)
    present = counts > 0
    if present.any():
        inv = 1.0 / counts[present]
        alpha[present] = inv / inv.mean()
    return alpha


@dataclass
class AdamState:
    params: list
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params, beta1=0.9, beta2=0.999, eps=1e-8):
        zeros = [p * 0 for p in params]
        return cls(list(params), zeros, [z * 0 for z in zeros], 0, beta1, beta2, eps)


def _finite(x) -> bool:
    if isinstance(x, torch.Tensor):
        return bool(torch.isfinite(x).all())
    return bool(np.all(np.isfinite(x)))


def adam_step(state: AdamState, grads, lr: float) -> AdamState:
    """One bias-corrected Adam update; works on numpy arrays or torch tensors."""
    grads = list(grads)
    if len(grads) != len(state.params):
        raise ValueError("one gradient per parameter is required")
    for i, g in enumerate(grads):
        if not _finite(g):
            raise TrainingError(f"non-finite gradient for parameter {i} at step {state.t + 1}")
    t = state.t + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    params, ms, vs = [], [], []
    for p, m, v, g in zip(state.params, state.m, state.v, grads):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        params.append(p - lr * m_hat / (v_hat ** 0.5 + eps))
        ms.append(m)
        vs.append(v)
    return AdamState(params, ms, vs, t, b1, b2, eps)


class Adam:
    """Drives :func:`adam_step` over the parameters of a torch module."""

    def __init__(self, parameters, beta1=0.9, beta2=0.999, eps=1e-8):
        self.parameters = [p for p in parameters if p.requires_grad]
        with torch.no_grad():
            self.state = AdamState.init([p.detach().clone() for p in self.parameters],
                                        beta1, beta2, eps)

    def zero_grad(self):
        for p in self.parameters:
            p.grad = None

    @torch.no_grad()
    def step(self, lr: float):
        grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in self.parameters]
        self.state.params = [p.detach() for p in self.parameters]
        self.state = adam_step(self.state, grads, lr)
        for p, new in zip(self.parameters, self.state.params):
            p.copy_(new)


def cosine_lr(epoch: float, lr0: float = 1e-2, epochs: int = 30, lr_min: float = 0.0) -> float:
    """``lr_min + (lr0 - lr_min) (1 + cos(pi epoch / epochs)) / 2``."""
    if epochs < 1:
        raise ConfigError("epochs must be at least 1")
    if not 0 <= epoch <= epochs:
        raise ValueError(f"epoch {epoch} outside [0, {epochs}]")
    return lr_min + 0.5 * (lr0 - lr_min) * (1 + math.cos(math.pi * epoch / epochs))
