"""Saliency heatmaps, grid importance scores, top-K masking and direction thirds."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from Backend.errors import ArgumentError, ShapeError
from Backend.tensor_io import read_tensor

logger = logging.getLogger(__name__)

FrameStack = Union[np.ndarray, Sequence[np.ndarray]]


@dataclass(frozen=True)
class GridScores:
    scores: np.ndarray
    n: int


@dataclass(frozen=True)
class GridMask:
    mask: np.ndarray
    k: int


@dataclass(frozen=True)
class DirectionSaliency:
    """Saliency mass over the left / center / right panorama thirds."""

    sums: np.ndarray

    @property
    def thirds(self) -> np.ndarray:
        return softmax(self.sums)


def softmax(values: np.ndarray) -> np.ndarray:
    return torch.softmax(torch.as_tensor(np.asarray(values, dtype=np.float64)), dim=-1).numpy()


def _stack(frames: FrameStack) -> np.ndarray:
    try:
        stack = np.stack([np.asarray(f, dtype=np.float32) for f in frames])
    except ValueError as e:
        raise ShapeError(f"frames have mismatched dimensions: {e}") from e
    if stack.ndim != 3:
        raise ShapeError(f"expected a sequence of 2-D frames, got shape {stack.shape}")
    return stack


class SaliencyModel:
    """Produces one non-negative heatmap per frame."""

    name = "base"

    def __call__(self, frames: FrameStack, video_id: Optional[str] = None) -> np.ndarray:
        raise NotImplementedError


class TemporalDifferenceSaliency(SaliencyModel):
    """|frame_t - frame_{t-1}|, box smoothed, minus a robust per-frame noise floor."""

    name = "tempdiff"

    def __init__(self, kernel: int = 5, noise_floor: float = 3.0):
        if kernel < 1 or kernel % 2 == 0:
            raise ArgumentError(f"kernel must be a positive odd integer, got {kernel}")
        self.kernel = kernel
        self.noise_floor = noise_floor

    def __call__(self, frames: FrameStack, video_id: Optional[str] = None) -> np.ndarray:
        stack = _stack(frames)
        if stack.shape[0] == 0:
            raise ArgumentError("need at least one frame")
        diff = np.zeros_like(stack)
        diff[1:] = np.abs(stack[1:] - stack[:-1])
        smoothed = F.avg_pool2d(
            torch.from_numpy(diff).unsqueeze(1),
            self.kernel,
            stride=1,
            padding=self.kernel // 2,
            count_include_pad=False,
        ).squeeze(1).numpy()
        if self.noise_floor <= 0:
            return smoothed.astype(np.float32)
        flat = smoothed.reshape(smoothed.shape[0], -1)
        median = np.median(flat, axis=1)
        mad = np.median(np.abs(flat - median[:, None]), axis=1)
        floor = median + self.noise_floor * 1.4826 * mad
        return np.maximum(smoothed - floor[:, None, None], 0.0).astype(np.float32)


class PrecomputedSaliency(SaliencyModel):
    """Reads `<directory>/<video_id>.saliency.fdpn` written by an external saliency model."""

    name = "file"

    def __init__(self, directory):
        self.directory = Path(directory)

    def __call__(self, frames: FrameStack, video_id: Optional[str] = None) -> np.ndarray:
        if video_id is None:
            raise ArgumentError("precomputed saliency needs a video_id")
        stack = _stack(frames)
        heat = read_tensor(self.directory / f"{video_id}.saliency.fdpn")
        if heat.shape != stack.shape:
            raise ShapeError(f"{video_id}: saliency shape {heat.shape} does not match frames {stack.shape}")
        if not np.all(np.isfinite(heat)) or np.any(heat < 0):
            raise ArgumentError(f"{video_id}: saliency must be finite and non-negative")
        return heat


def build_saliency_model(kind: str, kernel: int = 5, noise_floor: float = 3.0, directory: str = "") -> SaliencyModel:
    if kind == "tempdiff":
        return TemporalDifferenceSaliency(kernel=kernel, noise_floor=noise_floor)
    if kind == "file":
        return PrecomputedSaliency(directory)
    raise ArgumentError(f"unknown saliency model {kind!r}")


def compute_saliency(frames: FrameStack, model: Optional[SaliencyModel] = None, video_id: Optional[str] = None) -> np.ndarray:
    model = model or TemporalDifferenceSaliency()
    return model(frames, video_id=video_id)


def grid_cell_bounds(size: int, n: int) -> np.ndarray:
    """Cell start offsets plus the end; the last cell absorbs the remainder."""
    if n <= 0:
        raise ArgumentError(f"grid size n must be positive, got {n}")
    if size < n:
        raise ShapeError(f"dimension {size} is smaller than grid size {n}")
    step = size // n
    return np.array([i * step for i in range(n)] + [size])


def _cell_of(size: int, n: int) -> np.ndarray:
    return np.minimum(np.arange(size) // (size // n), n - 1)


def _grid_sums(heat: np.ndarray, n: int) -> np.ndarray:
    rows = grid_cell_bounds(heat.shape[-2], n)[:-1]
    cols = grid_cell_bounds(heat.shape[-1], n)[:-1]
    sums = np.add.reduceat(np.asarray(heat, dtype=np.float64), rows, axis=-2)
    return np.add.reduceat(sums, cols, axis=-1)


def grid_scores(h: np.ndarray, n: int) -> GridScores:
    h = np.asarray(h)
    if h.ndim != 2:
        raise ShapeError(f"heatmap must be 2-D, got shape {h.shape}")
    return GridScores(scores=_grid_sums(h, n), n=n)


def _topk_masks(scores: np.ndarray, k: int) -> np.ndarray:
    n = scores.shape[-1]
    if not 1 <= k <= n * n:
        raise ArgumentError(f"top-K must lie in [1, {n * n}], got {k}")
    flat = scores.reshape(-1, n * n)
    # stable sort keeps the smallest row-major index first among ties
    order = np.argsort(-flat, axis=1, kind="stable")[:, :k]
    masks = np.zeros_like(flat, dtype=np.int8)
    np.put_along_axis(masks, order, 1, axis=1)
    return masks.reshape(scores.shape)


def topk_mask(g: GridScores, k: int) -> GridMask:
    return GridMask(mask=_topk_masks(np.asarray(g.scores), k), k=k)


def apply_mask(frame: np.ndarray, m: Union[GridMask, np.ndarray]) -> np.ndarray:
    """I_masked = I * M, with M upsampled to pixels over the grid cells."""
    mask = np.asarray(m.mask if isinstance(m, GridMask) else m)
    frame = np.asarray(frame)
    if mask.ndim < 2 or mask.shape[-1] != mask.shape[-2]:
        raise ShapeError(f"mask must be n x n, got shape {mask.shape}")
    if frame.ndim < 2 or mask.shape[:-2] not in ((), frame.shape[:-2]):
        raise ShapeError(f"mask {mask.shape} does not tile frame {frame.shape}")
    n = mask.shape[-1]
    height, width = frame.shape[-2:]
    if height < n or width < n:
        raise ShapeError(f"frame {height}x{width} is smaller than a {n}x{n} grid")
    pixel_mask = mask[..., _cell_of(height, n), :][..., _cell_of(width, n)]
    return frame * pixel_mask.astype(frame.dtype)


def mask_frames(
    frames: np.ndarray,
    heatmaps: np.ndarray,
    n: int,
    k: int,
    granularity: str = "frame",
    frames_per_snippet: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Masks every frame by its (or its snippet's) top-K salient cells."""
    if frames.shape != heatmaps.shape:
        raise ShapeError(f"frames {frames.shape} and heatmaps {heatmaps.shape} differ")
    scores = _grid_sums(heatmaps, n)
    if granularity == "snippet":
        if frames.shape[0] % frames_per_snippet:
            raise ShapeError(f"{frames.shape[0]} frames do not split into snippets of {frames_per_snippet}")
        per_snippet = scores.reshape(-1, frames_per_snippet, n, n).sum(axis=1)
        masks = np.repeat(_topk_masks(per_snippet, k), frames_per_snippet, axis=0)
    elif granularity == "frame":
        masks = _topk_masks(scores, k)
    else:
        raise ArgumentError(f"mask granularity must be frame or snippet, got {granularity!r}")
    return apply_mask(frames, masks), masks


def direction_thirds(heatmaps: np.ndarray) -> np.ndarray:
    """Raw saliency sums over the three vertical panorama thirds, shape (..., 3)."""
    heatmaps = np.asarray(heatmaps, dtype=np.float64)
    if heatmaps.ndim < 2 or heatmaps.shape[-1] < 3:
        raise ShapeError(f"heatmap width must be at least 3, got shape {heatmaps.shape}")
    width = heatmaps.shape[-1]
    starts = [0, -(-width // 3), -(-2 * width // 3)]
    return np.add.reduceat(heatmaps.sum(axis=-2), starts, axis=-1)


def direction_saliency(h: np.ndarray) -> DirectionSaliency:
    h = np.asarray(h)
    if h.ndim != 2:
        raise ShapeError(f"heatmap must be 2-D, got shape {h.shape}")
    return DirectionSaliency(sums=direction_thirds(h))
