"""Frame Prediction Subnetwork (FPS): frame-level anomaly scores from fused features."""
import logging

import torch
from torch import nn

from Backend.errors import ShapeError
from Backend.poolformer import PoolFormerStack

logger = logging.getLogger(__name__)


def fuse_features(frame: torch.Tensor, snippet: torch.Tensor) -> torch.Tensor:
    """Concatenate (B, T, N, C') frame features with (B, T, C'') snippet features repeated over N."""
    if frame.dim() != 4 or snippet.dim() != 3:
        raise ShapeError(f"expected (B,T,N,C') and (B,T,C''), got {tuple(frame.shape)} and {tuple(snippet.shape)}")
    if frame.shape[:2] != snippet.shape[:2]:
        raise ShapeError(f"B/T mismatch: frame {tuple(frame.shape[:2])} vs snippet {tuple(snippet.shape[:2])}")
    repeated = snippet.unsqueeze(2).expand(-1, -1, frame.shape[2], -1)
    return torch.cat([frame, repeated.to(frame.dtype)], dim=-1)


class FramePredictionNetwork(nn.Module):
    """Runs the pooling stack over the flattened T*N frame axis so that
    neighbouring frames mix across snippet boundaries."""

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
        self.stack = PoolFormerStack(in_channels, 1, width, blocks, pool_size, mlp_ratio, conv_kernel)

    def forward(self, fused: torch.Tensor) -> torch.Tensor:
        if fused.dim() != 4 or fused.shape[-1] != self.in_channels:
            raise ShapeError(f"expected (B,T,N,{self.in_channels}) fused features, got {tuple(fused.shape)}")
        batch, snippets, frames, channels = fused.shape
        logits = self.stack(fused.reshape(batch, snippets * frames, channels))
        return torch.sigmoid(logits).reshape(batch, snippets, frames)


def predict_frames(fused: torch.Tensor, network: FramePredictionNetwork) -> torch.Tensor:
    return network(fused)
