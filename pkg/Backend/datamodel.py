"""Dataset schema, manifest I/O, ground-truth expansion and the synthetic generator."""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from Backend.errors import ArgumentError, ManifestParseError, ReadError, UsageError, ValidationError, WriteError
from Backend.tensor_io import read_tensor, write_tensor

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")
LABELS = ("normal", "abnormal")
DIRECTIONS = ("left_back", "center", "right_back")
MANIFEST_HEADER = ("video_id", "split", "label", "direction", "frame_count", "anomaly_ranges")

MANIFEST_NAME = "manifest.csv"
ANNOTATIONS_NAME = "annotations.csv"
FRAMES_DIR = "frames"

Range = Tuple[int, int]


@dataclass(frozen=True)
class VideoSample:
    video_id: str
    split: str
    label: str
    direction: Optional[str]
    frame_count: int
    anomaly_ranges: Tuple[Range, ...] = ()

    @property
    def is_abnormal(self) -> bool:
        return self.label == "abnormal"

    @property
    def direction_index(self) -> int:
        return DIRECTIONS.index(self.direction) if self.direction else -1

    def validate(self) -> "VideoSample":
        vid = self.video_id
        if not vid:
            raise ValidationError("<empty>", "video_id must not be empty")
        if self.split not in SPLITS:
            raise ValidationError(vid, f"split must be one of {SPLITS}, got {self.split!r}")
        if self.label not in LABELS:
            raise ValidationError(vid, f"label must be one of {LABELS}, got {self.label!r}")
        if self.frame_count <= 0:
            raise ValidationError(vid, f"frame_count must be positive, got {self.frame_count}")
        if self.direction is not None and self.direction not in DIRECTIONS:
            raise ValidationError(vid, f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if (self.direction is not None) != self.is_abnormal:
            raise ValidationError(vid, "direction must be present exactly for abnormal videos")
        needs_ranges = self.split == "test" and self.is_abnormal
        if bool(self.anomaly_ranges) != needs_ranges:
            raise ValidationError(vid, "anomaly ranges must be given exactly for abnormal test videos")
        previous_end = -1
        for start, end in sorted(self.anomaly_ranges):
            if not 0 <= start <= end < self.frame_count:
                raise ValidationError(vid, f"range {start}-{end} outside [0, {self.frame_count})")
            if start <= previous_end:
                raise ValidationError(vid, f"range {start}-{end} overlaps a previous range")
            previous_end = end
        return self


@dataclass(frozen=True)
class FrameGroundTruth:
    video_id: str
    labels: np.ndarray


@dataclass(frozen=True)
class SyntheticSpec:
    num_videos: int = 24
    frame_count: int = 512
    anomaly_duration_range: Tuple[int, int] = (8, 64)
    anomaly_intensity: float = 1.0
    direction_signal: bool = True
    seed: int = 0
    height: int = 36
    width: int = 72
    num_test_videos: Optional[int] = None
    noise_std: float = 0.05
    background: float = 0.2
    blob_size: Tuple[int, int] = (8, 12)

    @property
    def test_count(self) -> int:
        return self.num_videos // 3 if self.num_test_videos is None else self.num_test_videos

    def validate(self) -> "SyntheticSpec":
        low, high = self.anomaly_duration_range
        train_count = self.num_videos - self.test_count
        if train_count < 2 or self.test_count < 2:
            raise ArgumentError("need at least two train and two test videos (one per label)")
        if not 1 <= low <= high <= self.frame_count:
            raise ArgumentError(f"bad anomaly_duration_range {self.anomaly_duration_range}")
        if self.height < 3 or self.width < 3:
            raise ArgumentError("frames must be at least 3x3")
        blob_h, blob_w = self.blob_size
        if not (0 < blob_h <= self.height // 3 and 0 < blob_w <= self.width // 3):
            raise ArgumentError(f"blob {self.blob_size} does not fit a grid cell")
        if self.noise_std < 0:
            raise ArgumentError("noise_std must be non-negative")
        return self


def _parse_ranges(text: str, line_num: int) -> Tuple[Range, ...]:
    if not text.strip():
        return ()
    ranges = []
    for part in text.split(";"):
        bounds = part.strip().split("-")
        if len(bounds) != 2:
            raise ManifestParseError(line_num, f"bad range {part!r}, expected start-end")
        try:
            ranges.append((int(bounds[0]), int(bounds[1])))
        except ValueError:
            raise ManifestParseError(line_num, f"non-integer range {part!r}")
    return tuple(ranges)


def load_manifest(path) -> List[VideoSample]:
    path = Path(path)
    samples = []
    seen = set()
    if not path.is_file():
        raise ReadError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        for line_num, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if line_num == 1:
                if tuple(c.strip() for c in line.split(",")) != MANIFEST_HEADER:
                    raise ManifestParseError(line_num, f"expected header {','.join(MANIFEST_HEADER)}")
                continue
            if not line.strip():
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(MANIFEST_HEADER):
                raise ManifestParseError(line_num, f"expected {len(MANIFEST_HEADER)} fields, got {len(cells)}")
            video_id, split, label, direction, frame_count, ranges = cells
            try:
                count = int(frame_count)
            except ValueError:
                raise ManifestParseError(line_num, f"frame_count {frame_count!r} is not an integer")
            sample = VideoSample(
                video_id=video_id,
                split=split,
                label=label,
                direction=direction or None,
                frame_count=count,
                anomaly_ranges=_parse_ranges(ranges, line_num),
            ).validate()
            if video_id in seen:
                raise ValidationError(video_id, "duplicate video_id")
            seen.add(video_id)
            samples.append(sample)
    logger.info(f"Loaded {len(samples)} videos from {path}")
    return samples


def write_manifest(samples: Sequence[VideoSample], path) -> None:
    path = Path(path)
    lines = [",".join(MANIFEST_HEADER)]
    for s in samples:
        ranges = ";".join(f"{a}-{b}" for a, b in s.anomaly_ranges)
        lines.append(f"{s.video_id},{s.split},{s.label},{s.direction or ''},{s.frame_count},{ranges}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise WriteError(f"could not write manifest {path}: {e}") from e


def ranges_to_labels(frame_count: int, ranges: Sequence[Range]) -> np.ndarray:
    labels = np.zeros(frame_count, dtype=np.int8)
    for start, end in ranges:
        labels[start:end + 1] = 1
    return labels


def expand_ground_truth(sample: VideoSample) -> FrameGroundTruth:
    if sample.split != "test":
        raise UsageError(f"{sample.video_id}: frame-level ground truth exists only for test videos")
    return FrameGroundTruth(sample.video_id, ranges_to_labels(sample.frame_count, sample.anomaly_ranges))


def snippet_index(frame_count: int, num_snippets: int, frames_per_snippet: int) -> Tuple[np.ndarray, np.ndarray]:
    """Source frame for each of the T*N model positions, plus the non-padded mask.

    Short videos repeat their last frame; long videos are subsampled uniformly.
    """
    total = num_snippets * frames_per_snippet
    if frame_count <= 0:
        raise ArgumentError("frame_count must be positive")
    positions = np.arange(total)
    if frame_count <= total:
        return np.minimum(positions, frame_count - 1), positions < frame_count
    index = np.round(np.linspace(0, frame_count - 1, total)).astype(np.int64)
    return index, np.ones(total, dtype=bool)


def positions_to_frames(position_values: np.ndarray, frame_count: int) -> np.ndarray:
    """One value per original frame from T*N position values (padding dropped)."""
    total = len(position_values)
    if frame_count <= total:
        return np.asarray(position_values[:frame_count])
    nearest = np.round(np.arange(frame_count) * (total - 1) / (frame_count - 1)).astype(np.int64)
    return np.asarray(position_values)[nearest]


def frames_to_positions(frame_values: np.ndarray, num_snippets: int, frames_per_snippet: int) -> np.ndarray:
    """T*N position values from one value per original frame; inverse of positions_to_frames."""
    frame_values = np.asarray(frame_values)
    index, _ = snippet_index(len(frame_values), num_snippets, frames_per_snippet)
    return frame_values[index]


def write_frames(path, frames: np.ndarray) -> None:
    write_tensor(path, frames)


def load_frames(path) -> np.ndarray:
    frames = read_tensor(path)
    if frames.ndim != 3:
        raise ArgumentError(f"{path}: expected a frames x height x width tensor, got rank {frames.ndim}")
    return frames


@dataclass
class Dataset:
    root: Path
    samples: List[VideoSample] = field(default_factory=list)

    @classmethod
    def open(cls, root) -> "Dataset":
        root = Path(root)
        return cls(root=root, samples=load_manifest(root / MANIFEST_NAME))

    def split(self, name: str) -> List[VideoSample]:
        return [s for s in self.samples if s.split == name]

    def get(self, video_id: str) -> VideoSample:
        for s in self.samples:
            if s.video_id == video_id:
                return s
        raise ArgumentError(f"unknown video {video_id!r}")

    def frames_path(self, video_id: str) -> Path:
        return self.root / FRAMES_DIR / f"{video_id}.fdpn"

    def load_frames(self, video_id: str) -> np.ndarray:
        frames = load_frames(self.frames_path(video_id))
        expected = self.get(video_id).frame_count
        if frames.shape[0] != expected:
            raise ValidationError(video_id, f"frame file has {frames.shape[0]} frames, manifest says {expected}")
        return frames

    def annotations(self) -> Dict[str, List[Range]]:
        """True anomaly ranges for every abnormal video, train split included when known."""
        path = self.root / ANNOTATIONS_NAME
        out = {s.video_id: list(s.anomaly_ranges) for s in self.samples if s.anomaly_ranges}
        if path.exists():
            table = pd.read_csv(path, dtype={"video_id": str})
            for row in table.itertuples(index=False):
                out.setdefault(str(row.video_id), [])
                if (int(row.start), int(row.end)) not in out[str(row.video_id)]:
                    out[str(row.video_id)].append((int(row.start), int(row.end)))
        return out


def _third_bounds(width: int, third: int) -> Tuple[int, int]:
    # columns x with 3 * x // width == third
    return -(-third * width // 3), -(-(third + 1) * width // 3)


def generate_synthetic(spec: SyntheticSpec, out_dir) -> Dataset:
    """Write a toy panorama dataset: manifest, raw frame tensors and annotations."""
    spec.validate()
    out_dir = Path(out_dir)
    rng = np.random.default_rng(spec.seed)
    blob_h, blob_w = spec.blob_size
    low, high = spec.anomaly_duration_range
    frame_count = spec.frame_count

    test_count = spec.test_count
    plan = [("train", i) for i in range(spec.num_videos - test_count)]
    plan += [("test", i) for i in range(test_count)]

    samples = []
    annotations = []
    for split, i in plan:
        video_id = f"{split}_{i:03d}"
        abnormal = i % 2 == 0
        frames = spec.background + spec.noise_std * rng.standard_normal(
            (frame_count, spec.height, spec.width)
        )
        direction = None
        ranges: Tuple[Range, ...] = ()
        if abnormal:
            duration = int(rng.integers(low, high + 1))
            start = int(rng.integers(0, frame_count - duration + 1))
            end = start + duration - 1
            third = int(rng.integers(0, 3))
            row = int(rng.integers(0, 3))
            if spec.direction_signal:
                direction = DIRECTIONS[third]
            else:
                direction = DIRECTIONS[int(rng.integers(0, 3))]
            r0, r1 = row * spec.height // 3, (row + 1) * spec.height // 3
            c0, c1 = _third_bounds(spec.width, third)
            y0 = int(rng.integers(r0, r1 - blob_h + 1))
            x0 = int(rng.integers(c0, c1 - blob_w + 1))
            flicker = 0.5 + 0.5 * rng.random((duration, blob_h, blob_w))
            frames[start:end + 1, y0:y0 + blob_h, x0:x0 + blob_w] += spec.anomaly_intensity * flicker
            annotations.append({"video_id": video_id, "start": start, "end": end})
            if split == "test":
                ranges = ((start, end),)
        sample = VideoSample(
            video_id=video_id,
            split=split,
            label="abnormal" if abnormal else "normal",
            direction=direction,
            frame_count=frame_count,
            anomaly_ranges=ranges,
        ).validate()
        samples.append(sample)
        write_frames(out_dir / FRAMES_DIR / f"{video_id}.fdpn", frames.astype(np.float32))

    write_manifest(samples, out_dir / MANIFEST_NAME)
    try:
        pd.DataFrame(annotations, columns=["video_id", "start", "end"]).to_csv(
            out_dir / ANNOTATIONS_NAME, index=False, lineterminator="\n"
        )
    except OSError as e:
        raise WriteError(f"could not write annotations: {e}") from e
    logger.info(f"✅ Generated {len(samples)} synthetic videos in {out_dir}")
    return Dataset(root=out_dir, samples=samples)
