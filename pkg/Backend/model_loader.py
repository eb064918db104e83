import logging
import threading
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch
from torch import nn

from Backend.config import RunConfig
from Backend.direction_net import DirectionPredictionNetwork
from Backend.errors import CheckpointError, FormatError
from Backend.frame_net import FramePredictionNetwork
from Backend.snippet_net import ToySnippetScorer
from Backend.tensor_io import read_container, write_container

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "fdpn"

# Most recently loaded checkpoints, keyed by (path, mtime, size); oldest evicted first
CHECKPOINT_CACHE_SIZE = 4
_checkpoint_cache: "OrderedDict[Tuple[str, int, int], Tuple[Dict[str, np.ndarray], Dict[str, Any]]]" = OrderedDict()
_lock = threading.Lock()


def get_device(preference: str = "cpu") -> torch.device:
    if preference == "cpu":
        return torch.device("cpu")
    if torch.cuda.is_available():
        return torch.device("cuda")
    if hasattr(torch.backends, "mps") and torch.backends.mps.is_available():
        return torch.device("mps")
    return torch.device("cpu")


class FDPNModel(nn.Module):
    """Snippet scorer + frame prediction + direction prediction subnetworks."""

    def __init__(self, config: RunConfig, snippet_channels: int, frame_channels: int, refined_channels: int):
        super().__init__()
        self.snippet_channels = snippet_channels
        self.frame_channels = frame_channels
        self.refined_channels = refined_channels
        self.snippet_scorer: Optional[ToySnippetScorer] = None
        if config.snippet_net == "toy":
            self.snippet_scorer = ToySnippetScorer(snippet_channels, refined_channels)
        stack = dict(
            width=config.fps_width,
            blocks=config.fps_blocks,
            pool_size=config.pool_window,
            mlp_ratio=config.mlp_ratio,
            conv_kernel=config.conv_kernel,
        )
        self.frame_net = FramePredictionNetwork(frame_channels + refined_channels, **stack)
        self.direction_net = DirectionPredictionNetwork(frame_channels + snippet_channels, **stack)

    def architecture(self) -> Dict[str, Any]:
        return {
            "snippet_channels": self.snippet_channels,
            "frame_channels": self.frame_channels,
            "refined_channels": self.refined_channels,
            "has_snippet_scorer": self.snippet_scorer is not None,
        }


def build_model(config: RunConfig, snippet_channels: int, frame_channels: int, refined_channels: int) -> FDPNModel:
    # parameter init is drawn from the seed's first derived stream
    torch.manual_seed(derived_seed(config.seed, 0))
    return FDPNModel(config, snippet_channels, frame_channels, refined_channels)


def derived_seed(seed: int, stream: int) -> int:
    """Independent child seeds: 0 = parameter init, 1 = pair sampling, 2 = synthetic data."""
    return int(np.random.SeedSequence(seed).spawn(3)[stream].generate_state(1)[0])


def _optimizer_tensors(optimizer: Optional[torch.optim.Optimizer]) -> Dict[str, np.ndarray]:
    if optimizer is None:
        return {}
    out = {}
    for index, state in optimizer.state_dict()["state"].items():
        for key, value in state.items():
            if torch.is_tensor(value):
                out[f"optim.{index}.{key}"] = value.detach().cpu().numpy().astype(np.float32)
    return out


def save_checkpoint(
    path,
    model: FDPNModel,
    config: RunConfig,
    step: int,
    optimizer: Optional[torch.optim.Optimizer] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    tensors = {f"model.{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    tensors.update(_optimizer_tensors(optimizer))
    metadata = {
        "kind": CHECKPOINT_KIND,
        "step": int(step),
        "seed": config.seed,
        "config_hash": config.snapshot_hash(),
        "snippet_net": config.snippet_net,
        **model.architecture(),
        **(extra or {}),
    }
    write_container(path, tensors, metadata)
    logger.info(f"✅ Saved checkpoint {path} (step {step})")
    return Path(path)


def _read_cached(path: Path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    stat = path.stat()
    key = (str(path.resolve()), stat.st_mtime_ns, stat.st_size)
    with _lock:
        if key in _checkpoint_cache:
            logger.info(f"Returning cached checkpoint for {path}")
            _checkpoint_cache.move_to_end(key)
            return _checkpoint_cache[key]
        logger.info(f"Loading checkpoint {path}")
        try:
            entry = read_container(path)
        except FormatError as e:
            raise CheckpointError(str(e)) from e
        # a rewritten file leaves its old entry behind under a stale key
        for stale in [k for k in _checkpoint_cache if k[0] == key[0]]:
            del _checkpoint_cache[stale]
        _checkpoint_cache[key] = entry
        while len(_checkpoint_cache) > CHECKPOINT_CACHE_SIZE:
            _checkpoint_cache.popitem(last=False)
        return entry


def load_checkpoint(
    path,
    config: RunConfig,
    device: Optional[torch.device] = None,
    optimizer_factory=None,
) -> Tuple[FDPNModel, Dict[str, Any], Optional[torch.optim.Optimizer]]:
    """Rebuilds the model (and optionally its optimizer state) from a checkpoint."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    tensors, metadata = _read_cached(path)
    if metadata.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path}: not an FDPN checkpoint")
    if metadata.get("snippet_net") != config.snippet_net:
        raise CheckpointError(
            f"{path}: trained with snippet_net={metadata.get('snippet_net')}, config asks for {config.snippet_net}"
        )
    model = FDPNModel(
        config,
        int(metadata["snippet_channels"]),
        int(metadata["frame_channels"]),
        int(metadata["refined_channels"]),
    )
    state = {k[len("model."):]: torch.from_numpy(v.copy()) for k, v in tensors.items() if k.startswith("model.")}
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise CheckpointError(f"{path}: parameters do not fit the configured architecture: {e}") from e
    device = device or torch.device("cpu")
    model = model.to(device)

    optimizer = None
    if optimizer_factory is not None:
        optimizer = optimizer_factory(model)
        saved: Dict[int, Dict[str, torch.Tensor]] = {}
        for name, value in tensors.items():
            if name.startswith("optim."):
                _, index, key = name.split(".", 2)
                saved.setdefault(int(index), {})[key] = torch.from_numpy(value.copy())
        if saved:
            optimizer_state = optimizer.state_dict()
            optimizer_state["state"] = saved
            optimizer.load_state_dict(optimizer_state)
    return model, metadata, optimizer
