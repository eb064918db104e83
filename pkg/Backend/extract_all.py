import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from Backend.errors import ArgumentError, ShapeError
from Backend.saliency import grid_cell_bounds
from Backend.tensor_io import read_tensor, write_tensor

logger = logging.getLogger(__name__)

EXTRACTOR_KINDS = ("toy_snippet", "toy_frame", "precomputed")
STATS_PER_CELL = 3  # mean, variance, max


@dataclass(frozen=True)
class ExtractorSpec:
    kind: str
    channels: int
    seed: int = 0
    stat_grid: int = 3
    source: str = ""
    feature_dir: str = ""

    def __post_init__(self):
        if self.kind not in EXTRACTOR_KINDS:
            raise ArgumentError(f"extractor kind must be one of {EXTRACTOR_KINDS}, got {self.kind!r}")
        if self.channels <= 0:
            raise ArgumentError(f"channels must be positive, got {self.channels}")


def feature_path(root, video_id: str, kind: str) -> Path:
    return Path(root) / f"{video_id}.{kind}.fdpn"


def store_features(path, features: np.ndarray) -> None:
    features = np.asarray(features, dtype=np.float32)
    if not np.all(np.isfinite(features)):
        raise ArgumentError(f"refusing to store non-finite features to {path}")
    write_tensor(path, features)


def load_features(path) -> np.ndarray:
    return read_tensor(path)


def pooled_grid_statistics(pixels: np.ndarray, grid: int) -> np.ndarray:
    """Mean / variance / max per grid cell over a (..., P, H, W) stack.

    The P axis (frames of a snippet, or a single frame) is pooled together
    with the cell's pixels. Output shape is (..., 3 * grid * grid).
    """
    rows = grid_cell_bounds(pixels.shape[-2], grid)
    cols = grid_cell_bounds(pixels.shape[-1], grid)
    stats = []
    for i in range(grid):
        for j in range(grid):
            cell = pixels[..., rows[i]:rows[i + 1], cols[j]:cols[j + 1]]
            cell = cell.reshape(*cell.shape[:-3], -1).astype(np.float64)
            stats.extend([cell.mean(axis=-1), cell.var(axis=-1), cell.max(axis=-1)])
    return np.stack(stats, axis=-1)


class FeatureExtractor:
    """Snippet-level and frame-level feature extraction.

    The toy kinds pool grid statistics and project them with a fixed random
    matrix drawn from `spec.seed`; `precomputed` reads backbone features
    stored as `<video_id>.<source>.fdpn` under `spec.feature_dir`.
    """

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec
        self._projection = None
        if spec.kind != "precomputed":
            stat_dim = STATS_PER_CELL * spec.stat_grid ** 2
            rng = np.random.default_rng(spec.seed)
            self._projection = rng.standard_normal((stat_dim, spec.channels)) / np.sqrt(stat_dim)
        logger.info(f"FeatureExtractor ready: kind={spec.kind}, channels={spec.channels}")

    def _project(self, stats: np.ndarray) -> np.ndarray:
        return (stats @ self._projection).astype(np.float32)

    def _load_precomputed(self, video_id: Optional[str]) -> np.ndarray:
        if video_id is None:
            raise ArgumentError("precomputed features need a video_id")
        features = load_features(feature_path(self.spec.feature_dir, video_id, self.spec.source))
        if features.ndim != 2 or features.shape[1] != self.spec.channels:
            raise ShapeError(
                f"{video_id}: precomputed features have shape {features.shape}, "
                f"expected (*, {self.spec.channels})"
            )
        return features

    def extract_snippet_features(
        self,
        frames: np.ndarray,
        num_snippets: int,
        frames_per_snippet: int,
        video_id: Optional[str] = None,
    ) -> np.ndarray:
        """T x C features for one video."""
        if self.spec.kind == "precomputed":
            features = self._load_precomputed(video_id)
            if features.shape[0] != num_snippets:
                raise ShapeError(f"{video_id}: {features.shape[0]} snippet rows, expected {num_snippets}")
            return features
        if self.spec.kind != "toy_snippet":
            raise ArgumentError(f"{self.spec.kind} extractor cannot produce snippet features")
        frames = np.asarray(frames)
        if frames.ndim != 3 or frames.shape[0] == 0:
            raise ArgumentError(f"expected a non-empty frame stack, got shape {frames.shape}")
        if frames.shape[0] != num_snippets * frames_per_snippet:
            raise ShapeError(
                f"{frames.shape[0]} frames, expected T*N = {num_snippets * frames_per_snippet} after padding"
            )
        snippets = frames.reshape(num_snippets, frames_per_snippet, *frames.shape[1:])
        return self._project(pooled_grid_statistics(snippets, self.spec.stat_grid))

    def extract_frame_features(
        self,
        masked_frames: np.ndarray,
        video_id: Optional[str] = None,
        index: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """One C' vector per frame. `index` selects model positions from precomputed per-frame rows."""
        if self.spec.kind == "precomputed":
            features = self._load_precomputed(video_id)
            return features[index] if index is not None else features
        if self.spec.kind != "toy_frame":
            raise ArgumentError(f"{self.spec.kind} extractor cannot produce frame features")
        masked_frames = np.asarray(masked_frames)
        if masked_frames.ndim != 3 or masked_frames.shape[0] == 0:
            raise ArgumentError(f"expected a non-empty frame stack, got shape {masked_frames.shape}")
        return self._project(pooled_grid_statistics(masked_frames[:, None], self.spec.stat_grid))
