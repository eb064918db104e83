"""Direction Prediction Subnetwork (DPS): left back / center / right back per video."""
import logging
from typing import Optional

import torch
from torch import nn

from Backend.errors import ArgumentError, ShapeError
from Backend.poolformer import PoolFormerStack

logger = logging.getLogger(__name__)

NUM_DIRECTIONS = 3
DIRECTION_MODES = ("network_only", "saliency_only", "combined")
FUSION_MODES = ("product", "mean")


class DirectionPredictionNetwork(nn.Module):
    """Per-frame 3-way logits from frame features joined with raw snippet features."""

    def __init__(
        self,
        in_channels: int,
        width: int = 64,
        blocks: int = 2,
        pool_size: int = 5,
        mlp_ratio: int = 2,
        conv_kernel: int = 3,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.stack = PoolFormerStack(in_channels, NUM_DIRECTIONS, width, blocks, pool_size, mlp_ratio, conv_kernel)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.dim() != 4 or features.shape[-1] != self.in_channels:
            raise ShapeError(f"expected (B,T,N,{self.in_channels}) direction features, got {tuple(features.shape)}")
        batch, snippets, frames, channels = features.shape
        return self.stack(features.reshape(batch, snippets * frames, channels))


def refine_with_saliency(
    logits: torch.Tensor,
    saliency_sums: torch.Tensor,
    mode: str = "combined",
    fusion: str = "product",
) -> torch.Tensor:
    """Per-frame direction distributions, shape (B, L, 3).

    `product` multiplies the network and saliency softmaxes and renormalises,
    evaluated as softmax(logits + sums). `mean` averages the two distributions.
    """
    if mode not in DIRECTION_MODES:
        raise ArgumentError(f"direction mode must be one of {DIRECTION_MODES}, got {mode!r}")
    if fusion not in FUSION_MODES:
        raise ArgumentError(f"fusion must be one of {FUSION_MODES}, got {fusion!r}")
    if saliency_sums.shape != logits.shape:
        raise ShapeError(f"saliency {tuple(saliency_sums.shape)} does not match logits {tuple(logits.shape)}")
    sums = saliency_sums.to(logits.dtype)
    if mode == "network_only":
        return torch.softmax(logits, dim=-1)
    if mode == "saliency_only":
        return torch.softmax(sums, dim=-1)
    if fusion == "product":
        return torch.softmax(logits + sums, dim=-1)
    return 0.5 * (torch.softmax(logits, dim=-1) + torch.softmax(sums, dim=-1))


def pool_frames(frame_probs: torch.Tensor, valid: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Mean over (valid) frames, giving one distribution per video."""
    if valid is None:
        pooled = frame_probs.mean(dim=1)
    else:
        weights = valid.reshape(frame_probs.shape[0], -1, 1).to(frame_probs.dtype)
        pooled = (frame_probs * weights).sum(dim=1) / weights.sum(dim=1).clamp_min(1.0)
    return pooled / pooled.sum(dim=-1, keepdim=True)


def predict_direction(
    features: torch.Tensor,
    saliency_sums: torch.Tensor,
    network: DirectionPredictionNetwork,
    mode: str = "combined",
    fusion: str = "product",
    valid: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Video-level (B, 3) distributions ordered (left_back, center, right_back).

    `saliency_sums` holds raw per-frame third sums, shape (B, T*N, 3).
    """
    if mode == "saliency_only":
        logits = torch.zeros(saliency_sums.shape, dtype=features.dtype, device=features.device)
    else:
        logits = network(features)
    return pool_frames(refine_with_saliency(logits, saliency_sums, mode, fusion), valid)


def ablate(
    mode: str,
    features: torch.Tensor,
    saliency_sums: torch.Tensor,
    network: DirectionPredictionNetwork,
    fusion: str = "product",
    valid: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    if mode not in DIRECTION_MODES:
        raise ArgumentError(f"direction mode must be one of {DIRECTION_MODES}, got {mode!r}")
    return predict_direction(features, saliency_sums, network, mode, fusion, valid)
