import hashlib
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values

from Backend.errors import ConfigError
from Backend.losses import LossConfig

logger = logging.getLogger(__name__)

# Short names used in the literature, accepted in config files and on the CLI.
ALIASES = {
    "B": "batch_size",
    "T": "num_snippets",
    "N": "frames_per_snippet",
    "n": "grid_n",
    "K": "top_k",
    "R": "rank_frames",
}

CHOICES = {
    "optimizer": ("adam", "sgd"),
    "device": ("cpu", "auto"),
    "saliency": ("tempdiff", "file"),
    "mask_granularity": ("frame", "snippet"),
    "snippet_extractor": ("toy_snippet", "precomputed"),
    "frame_extractor": ("toy_frame", "precomputed"),
    "snippet_net": ("toy", "precomputed"),
    "dps_mode": ("network_only", "saliency_only", "combined"),
    "dps_fusion": ("product", "mean"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    # published hyperparameters
    batch_size: int = 16
    num_snippets: int = 32
    frames_per_snippet: int = 16
    grid_n: int = 3
    top_k: int = 4
    gamma: float = 2.0
    rank_frames: int = 48
    lambda1: float = 1.0
    lambda2: float = 1.6e-3
    lambda3: float = 0.3

    # losses
    eps: float = 1e-7
    hinged_ranking: bool = False

    # optimisation
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 200
    seed: int = 0
    device: str = "cpu"
    checkpoint_every: int = 50
    num_workers: int = 1

    # saliency and masking
    saliency: str = "tempdiff"
    saliency_dir: str = ""
    saliency_kernel: int = 5
    saliency_noise_floor: float = 3.0
    mask_granularity: str = "frame"

    # feature extraction
    snippet_extractor: str = "toy_snippet"
    frame_extractor: str = "toy_frame"
    snippet_channels: int = 64
    frame_channels: int = 32
    stat_grid: int = 3
    feature_dir: str = ""
    snippet_feature_source: str = "i3d"
    frame_feature_source: str = "resnet"

    # snippet network
    snippet_net: str = "toy"
    snippet_dir: str = ""
    snippet_hidden: int = 32
    snippet_epochs: int = 300
    snippet_learning_rate: float = 1e-3
    snippet_sparsity: float = 8e-5
    snippet_smoothness: float = 8e-5
    joint_training: bool = False

    # frame / direction subnetworks
    fps_width: int = 64
    fps_blocks: int = 2
    pool_window: int = 5
    mlp_ratio: int = 2
    conv_kernel: int = 3
    dps_mode: str = "combined"
    dps_fusion: str = "product"

    # evaluation
    fps_nominal: float = 30.0

    def __post_init__(self):
        self.validate()

    @property
    def frames_per_video(self) -> int:
        return self.num_snippets * self.frames_per_snippet

    def validate(self) -> None:
        positive = (
            "batch_size", "num_snippets", "frames_per_snippet", "grid_n", "rank_frames",
            "epochs", "checkpoint_every", "num_workers", "saliency_kernel", "snippet_channels",
            "frame_channels", "stat_grid", "snippet_hidden", "fps_width", "fps_blocks",
            "pool_window", "mlp_ratio", "conv_kernel",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 1 <= self.top_k <= self.grid_n ** 2:
            raise ConfigError(f"top_k must lie in [1, {self.grid_n ** 2}], got {self.top_k}")
        if self.rank_frames > self.frames_per_video:
            raise ConfigError(
                f"rank_frames={self.rank_frames} exceeds frames per video {self.frames_per_video}"
            )
        if self.learning_rate <= 0 or self.snippet_learning_rate <= 0:
            raise ConfigError("learning rates must be positive")
        if self.fps_nominal <= 0:
            raise ConfigError("fps_nominal must be positive")
        if self.pool_window % 2 == 0 or self.conv_kernel % 2 == 0:
            raise ConfigError("pool_window and conv_kernel must be odd")
        for name, allowed in CHOICES.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        # LossConfig owns the gamma / eps / lambda checks
        try:
            self.loss_config()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def loss_config(self) -> LossConfig:
        return LossConfig(
            gamma=self.gamma,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            lambda3=self.lambda3,
            rank_frames=self.rank_frames,
            eps=self.eps,
            hinged_ranking=self.hinged_ranking,
        )

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        return replace(self, **coerce_values(overrides))

    @classmethod
    def from_file(cls, path, overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values = {k: v for k, v in dotenv_values(path).items() if v is not None}
        values.update(overrides or {})
        logger.info(f"Loaded {len(values)} config keys from {path}")
        return cls(**coerce_values(values))

    def to_text(self) -> str:
        lines = [f"{k}={_format_value(v)}" for k, v in sorted(asdict(self).items())]
        return "\n".join(lines) + "\n"

    def snapshot_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def write_snapshot(self, path) -> str:
        """Write config.txt once; an existing snapshot must match exactly."""
        path = Path(path)
        text = self.to_text()
        if path.exists():
            if path.read_text(encoding="utf-8") != text:
                raise ConfigError(f"{path} exists with a different configuration")
            return self.snapshot_hash()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return self.snapshot_hash()


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_DEFAULTS = {f.name: f.default for f in fields(RunConfig)}


def canonical_key(key: str) -> str:
    key = ALIASES.get(key, key)
    key = key.replace("-", "_")
    if key not in _DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    return key


def coerce_values(values: Mapping[str, Any]) -> Dict[str, Any]:
    """Map raw strings (or typed values) onto RunConfig field types."""
    out = {}
    for raw_key, raw in values.items():
        key = canonical_key(raw_key)
        kind = type(_DEFAULTS[key])
        try:
            if kind is bool:
                if isinstance(raw, bool):
                    value = raw
                elif str(raw).strip().lower() in _TRUE:
                    value = True
                elif str(raw).strip().lower() in _FALSE:
                    value = False
                else:
                    raise ValueError(f"not a boolean: {raw!r}")
            elif kind is int:
                if isinstance(raw, float) and not raw.is_integer():
                    raise ValueError(f"not an integer: {raw!r}")
                value = int(str(raw).strip()) if isinstance(raw, str) else int(raw)
            elif kind is float:
                value = float(raw)
            else:
                value = str(raw).strip()
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {e}") from e
        out[key] = value
    return out
