"""Training objectives for the frame and direction subnetworks.

Every loss reduces per video first and then averages over the batch, so a
batch of equal-length videos gives the plain element mean.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import torch

from Backend.errors import ArgumentError, ShapeError, TrainingAbortedError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 2.0
    lambda1: float = 1.0
    lambda2: float = 1.6e-3
    lambda3: float = 0.3
    rank_frames: int = 48
    eps: float = 1e-7
    hinged_ranking: bool = False

    def __post_init__(self):
        if self.gamma < 0:
            raise ArgumentError(f"gamma must be >= 0, got {self.gamma}")
        if self.rank_frames < 1:
            raise ArgumentError(f"rank_frames must be >= 1, got {self.rank_frames}")
        if not 0 < self.eps <= 1e-3:
            raise ArgumentError(f"eps must lie in (0, 1e-3], got {self.eps}")


@dataclass
class LossComponents:
    bf: torch.Tensor
    fr: torch.Tensor
    smooth: torch.Tensor
    df: torch.Tensor

    def as_dict(self) -> Dict[str, float]:
        return {
            "L_BF": float(self.bf.detach()),
            "L_FR": float(self.fr.detach()),
            "L_smooth": float(self.smooth.detach()),
            "L_DF": float(self.df.detach()),
        }


def _per_video(values: torch.Tensor) -> torch.Tensor:
    return values.reshape(values.shape[0], -1) if values.dim() > 1 else values.reshape(1, -1)


def _masked_video_mean(values: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    values = _per_video(values)
    if mask is None:
        return values.mean(dim=1).mean()
    mask = _per_video(mask).to(values.dtype)
    if mask.shape != values.shape:
        raise ShapeError(f"mask shape {tuple(mask.shape)} does not match {tuple(values.shape)}")
    return ((values * mask).sum(dim=1) / mask.sum(dim=1).clamp_min(1.0)).mean()


def binary_focal_loss(
    labels: torch.Tensor,
    scores: torch.Tensor,
    gamma: float = 2.0,
    eps: float = 1e-7,
    mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Focal loss between pseudo labels P and frame scores S."""
    if labels.shape != scores.shape:
        raise ShapeError(f"labels {tuple(labels.shape)} and scores {tuple(scores.shape)} differ")
    s = scores.clamp(eps, 1.0 - eps)
    p = labels.to(s.dtype)
    loss = -p * (1.0 - s) ** gamma * torch.log(s) - (1.0 - p) * s ** gamma * torch.log(1.0 - s)
    return _masked_video_mean(loss, mask)


def frame_ranking_loss(
    pos_scores: torch.Tensor,
    neg_scores: torch.Tensor,
    rank_frames: int,
    hinged: bool = False,
    pos_mask: Optional[torch.Tensor] = None,
    neg_mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Pairs the R highest positive and negative frame scores rank by rank."""
    pos = _per_video(pos_scores)
    neg = _per_video(neg_scores)
    if pos.shape[0] != neg.shape[0]:
        raise ShapeError(f"{pos.shape[0]} positive videos but {neg.shape[0]} negative videos")
    if pos_mask is not None:
        pos = pos.masked_fill(~_per_video(pos_mask).bool(), float("-inf"))
    if neg_mask is not None:
        neg = neg.masked_fill(~_per_video(neg_mask).bool(), float("-inf"))
    available = min(
        int(torch.isfinite(pos).sum(dim=1).min()),
        int(torch.isfinite(neg).sum(dim=1).min()),
    )
    if rank_frames < 1 or rank_frames > available:
        raise ArgumentError(f"rank_frames={rank_frames} exceeds the {available} frames per video")
    top_pos = torch.topk(pos, rank_frames, dim=1).values
    top_neg = torch.topk(neg, rank_frames, dim=1).values
    terms = 1.0 - top_pos + top_neg
    if hinged:
        terms = torch.relu(terms)
    return terms.mean(dim=1).mean()


def smoothness_loss(scores: torch.Tensor, lengths: Optional[Sequence[int]] = None) -> torch.Tensor:
    """Squared differences of adjacent frame scores divided by the frame count F.

    `lengths` gives each video's valid prefix; videos with F < 2 contribute 0.
    """
    values = _per_video(scores)
    batch, width = values.shape
    if lengths is None:
        lengths = [width] * batch
    if len(lengths) != batch:
        raise ShapeError(f"{len(lengths)} lengths for {batch} videos")
    if width < 2:
        return values.sum() * 0.0
    diffs = (values[:, 1:] - values[:, :-1]) ** 2
    frame_count = torch.as_tensor(list(lengths), dtype=values.dtype, device=values.device)
    positions = torch.arange(1, width, device=values.device).unsqueeze(0)
    valid = (positions < frame_count.unsqueeze(1)).to(values.dtype)
    per_video = (diffs * valid).sum(dim=1) / frame_count.clamp_min(1.0)
    per_video = torch.where(frame_count >= 2, per_video, torch.zeros_like(per_video))
    return per_video.mean()


def direction_focal_loss(
    targets: torch.Tensor,
    probs: torch.Tensor,
    gamma: float = 2.0,
    eps: float = 1e-7,
) -> torch.Tensor:
    """Focal loss between one-hot direction labels and predicted distributions."""
    y = targets.reshape(-1, targets.shape[-1]) if targets.dim() > 0 else targets
    p = probs.reshape(-1, probs.shape[-1])
    if y.shape != p.shape:
        raise ShapeError(f"targets {tuple(y.shape)} and probs {tuple(p.shape)} differ")
    if y.shape[0] == 0:
        return probs.sum() * 0.0
    is_binary = ((y == 0) | (y == 1)).all()
    if not bool(is_binary) or not bool((y.sum(dim=1) == 1).all()):
        raise ArgumentError("direction targets must be one-hot rows")
    p = p.clamp(eps, 1.0 - eps)
    y = y.to(p.dtype)
    per_video = -(y * (1.0 - p) ** gamma * torch.log(p)).sum(dim=1)
    return per_video.mean()


def total_loss(components: LossComponents, cfg: LossConfig, step: int = -1) -> torch.Tensor:
    for name, value in (
        ("L_BF", components.bf),
        ("L_FR", components.fr),
        ("L_smooth", components.smooth),
        ("L_DF", components.df),
    ):
        if not bool(torch.isfinite(value).all()):
            logger.error(f"Non-finite {name} encountered")
            raise TrainingAbortedError(name, float(value.detach()), step)
    return (
        components.bf
        + cfg.lambda1 * components.fr
        + cfg.lambda2 * components.smooth
        + cfg.lambda3 * components.df
    )
