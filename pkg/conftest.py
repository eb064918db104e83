import numpy as np
import pytest
import torch

from Backend.config import RunConfig
from Backend.datamodel import SyntheticSpec, generate_synthetic

TINY = dict(
    batch_size=4,
    num_snippets=8,
    frames_per_snippet=4,
    rank_frames=4,
    epochs=6,
    checkpoint_every=3,
    snippet_channels=16,
    frame_channels=12,
    snippet_hidden=8,
    snippet_epochs=10,
    fps_width=16,
    fps_blocks=1,
)


@pytest.fixture
def tiny_config() -> RunConfig:
    return RunConfig(**TINY)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """8 videos (4 train, 4 test) of 32 frames; even indices are abnormal."""
    spec = SyntheticSpec(
        num_videos=8,
        num_test_videos=4,
        frame_count=32,
        anomaly_duration_range=(4, 8),
        seed=3,
    )
    root = tmp_path_factory.mktemp("tiny_dataset")
    generate_synthetic(spec, root)
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
