"""Snippet-level scoring and pseudo-label synthesis for coarse-to-fine training."""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn
from tqdm import tqdm

from Backend.errors import ArgumentError, ShapeError
from Backend.tensor_io import read_tensor

logger = logging.getLogger(__name__)

PSEUDO_LABEL_THRESHOLD = 0.5


@dataclass
class SnippetScores:
    positive: torch.Tensor
    negative: torch.Tensor


@dataclass
class PseudoLabels:
    positive: torch.Tensor
    negative: torch.Tensor


class SnippetNetwork:
    """Maps snippet features (B, T, C) to refined features (B, T, C'') and scores (B, T)."""

    out_channels: int

    def score(self, features: torch.Tensor, video_ids: Optional[Sequence[str]] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        raise NotImplementedError


class ToySnippetScorer(nn.Module, SnippetNetwork):
    """Two-layer perceptron; the hidden activation doubles as the refined snippet feature."""

    def __init__(self, in_channels: int, hidden: int = 32, zero_head: bool = False):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = hidden
        self.embed = nn.Linear(in_channels, hidden)
        self.act = nn.ReLU()
        self.head = nn.Linear(hidden, 1)
        if zero_head:
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    def forward(self, features: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        if features.shape[-1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} channels, got {features.shape[-1]}")
        refined = self.act(self.embed(features))
        scores = torch.sigmoid(self.head(refined)).squeeze(-1)
        return refined, scores

    def score(self, features: torch.Tensor, video_ids: Optional[Sequence[str]] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        return self(features)


class PrecomputedSnippetNetwork(SnippetNetwork):
    """Outputs of an external snippet network stored per video.

    Reads `<video_id>.snippet_refined.fdpn` (T x C'') and
    `<video_id>.snippet_scores.fdpn` (T) from `directory`.
    """

    def __init__(self, directory, out_channels: int):
        self.directory = Path(directory)
        self.out_channels = out_channels

    def score(self, features: torch.Tensor, video_ids: Optional[Sequence[str]] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        if video_ids is None or len(video_ids) != features.shape[0]:
            raise ArgumentError("precomputed snippet network needs one video_id per batch row")
        refined, scores = [], []
        for vid in video_ids:
            r = read_tensor(self.directory / f"{vid}.snippet_refined.fdpn")
            s = read_tensor(self.directory / f"{vid}.snippet_scores.fdpn").reshape(-1)
            if r.shape != (features.shape[1], self.out_channels) or s.shape[0] != features.shape[1]:
                raise ShapeError(f"{vid}: precomputed snippet outputs have shapes {r.shape} / {s.shape}")
            if np.any(s < 0) or np.any(s > 1):
                raise ArgumentError(f"{vid}: precomputed snippet scores must lie in [0, 1]")
            refined.append(r)
            scores.append(s)
        return (
            torch.from_numpy(np.stack(refined)).to(features.device),
            torch.from_numpy(np.stack(scores)).to(features.device),
        )


def pseudo_labels(scores: torch.Tensor, frames_per_snippet: int, positive: bool) -> torch.Tensor:
    """(B, T) snippet scores -> (B, T, N) binary frame labels."""
    if positive:
        labels = (scores >= PSEUDO_LABEL_THRESHOLD).to(torch.float32)
    else:
        labels = torch.zeros(scores.shape, dtype=torch.float32, device=scores.device)
    return labels.unsqueeze(-1).expand(*scores.shape, frames_per_snippet).contiguous()


def make_pseudo_labels(scores: SnippetScores, frames_per_snippet: int) -> PseudoLabels:
    if frames_per_snippet < 1:
        raise ArgumentError(f"frames_per_snippet must be positive, got {frames_per_snippet}")
    with torch.no_grad():
        return PseudoLabels(
            positive=pseudo_labels(scores.positive.detach(), frames_per_snippet, positive=True),
            negative=pseudo_labels(scores.negative.detach(), frames_per_snippet, positive=False),
        )


def snippet_broadcast(scores: torch.Tensor, frames_per_snippet: int) -> torch.Tensor:
    """Baseline frame scorer: each snippet's score copied to all of its frames."""
    return scores.unsqueeze(-1).expand(*scores.shape, frames_per_snippet).contiguous()


def mil_ranking_loss(
    pos_scores: torch.Tensor,
    neg_scores: torch.Tensor,
    sparsity: float = 8e-5,
    smoothness: float = 8e-5,
) -> torch.Tensor:
    """max(0, 1 - max S+ + max S-) per pair, plus sparsity and smoothness on S+."""
    hinge = torch.relu(1.0 - pos_scores.max(dim=1).values + neg_scores.max(dim=1).values)
    sparse = pos_scores.sum(dim=1)
    smooth = ((pos_scores[:, 1:] - pos_scores[:, :-1]) ** 2).sum(dim=1)
    return (hinge + sparsity * sparse + smoothness * smooth).mean()


def train_snippet_scorer(
    model: ToySnippetScorer,
    pos_features: torch.Tensor,
    neg_features: torch.Tensor,
    epochs: int = 300,
    learning_rate: float = 1e-3,
    batch_size: int = 16,
    seed: int = 0,
    sparsity: float = 8e-5,
    smoothness: float = 8e-5,
    progress: bool = False,
) -> List[float]:
    """Fits the toy scorer on abnormal/normal video pairs; returns the per-epoch mean loss."""
    if len(pos_features) == 0 or len(neg_features) == 0:
        raise ArgumentError("snippet training needs abnormal and normal videos")
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    steps = max(1, math.ceil(max(len(pos_features), len(neg_features)) / batch_size))
    history = []
    model.train()
    for epoch in tqdm(range(epochs), desc="snippet net", disable=not progress):
        total = 0.0
        for _ in range(steps):
            pos_idx = torch.randint(len(pos_features), (batch_size,), generator=generator)
            neg_idx = torch.randint(len(neg_features), (batch_size,), generator=generator)
            _, s_pos = model(pos_features[pos_idx])
            _, s_neg = model(neg_features[neg_idx])
            loss = mil_ranking_loss(s_pos, s_neg, sparsity, smoothness)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
        history.append(total / steps)
        if (epoch + 1) % 50 == 0:
            logger.info(f"Snippet net epoch {epoch + 1}/{epochs}: MIL loss {history[-1]:.4f}")
    model.eval()
    return history
