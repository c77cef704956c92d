"""Losses: clamped binary cross-entropy and the differentiable parity.

``soft_xor`` maps per-window flip probabilities to the implied global
flip probability through the product form of parity: with bits encoded
as ``1 - 2p`` in [-1, 1], XOR is multiplication, so

    y_hat = (1 - prod_k (1 - 2 p_k)) / 2.

It is exact on hard bits, equals ``p`` for a single window, and its
gradient with respect to any one window vanishes when another window
sits at exactly 1/2.
"""

from __future__ import annotations

import torch

PRED_CLAMP = 1e-7


def soft_xor(probs: torch.Tensor) -> torch.Tensor:
    """(B, m) per-window probabilities -> (B,) global flip probability."""
    if probs.dim() != 2 or probs.shape[1] < 1:
        raise ValueError(f"expected (batch, m >= 1), got {tuple(probs.shape)}")
    return 0.5 * (1.0 - torch.prod(1.0 - 2.0 * probs, dim=1))


def bce(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy with predictions clamped away from 0/1."""
    if probs.shape != targets.shape:
        raise ValueError(
            f"shape mismatch {tuple(probs.shape)} vs {tuple(targets.shape)}")
    p = probs.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP)
    t = targets.to(p.dtype)
    return -(t * torch.log(p) + (1.0 - t) * torch.log1p(-p)).mean()


def softxor_loss(window_probs: torch.Tensor,
                 y_global: torch.Tensor) -> torch.Tensor:
    """BCE between the soft parity of the window outputs and the global bit."""
    return bce(soft_xor(window_probs), y_global)
