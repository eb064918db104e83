import pytest
import torch

from Backend.errors import ShapeError
from Backend.frame_net import FramePredictionNetwork, fuse_features, predict_frames
from Backend.losses import binary_focal_loss
from Backend.poolformer import PoolFormerStack, Pooling1d


def test_fuse_without_repetition():
    frame = torch.randn(2, 3, 1, 4)
    snippet = torch.randn(2, 3, 5)
    fused = fuse_features(frame, snippet)
    assert fused.shape == (2, 3, 1, 9)
    assert torch.equal(fused[:, :, 0, 4:], snippet)


def test_fuse_zero_snippet_channels():
    frame = torch.randn(1, 2, 4, 3)
    fused = fuse_features(frame, torch.zeros(1, 2, 6))
    assert torch.equal(fused[..., :3], frame)
    assert torch.all(fused[..., 3:] == 0)


def test_fuse_repeats_over_frames():
    snippet = torch.randn(1, 2, 5)
    fused = fuse_features(torch.zeros(1, 2, 4, 1), snippet)
    for f in range(4):
        assert torch.equal(fused[0, :, f, 1:], snippet[0])


def test_fuse_mismatch():
    with pytest.raises(ShapeError):
        fuse_features(torch.zeros(2, 3, 4, 1), torch.zeros(2, 2, 5))


def test_zero_head_scores_one_half():
    network = FramePredictionNetwork(7, width=8, blocks=1)
    scores = predict_frames(torch.randn(2, 3, 4, 7), network)
    assert scores.shape == (2, 3, 4)
    assert torch.all(scores == 0.5)


def test_scores_in_unit_interval_after_perturbation():
    network = FramePredictionNetwork(5, width=8, blocks=2)
    torch.nn.init.normal_(network.stack.head.weight, std=5.0)
    scores = network(torch.randn(3, 4, 4, 5) * 10)
    assert torch.all((scores >= 0) & (scores <= 1))


def test_wrong_channel_count():
    with pytest.raises(ShapeError):
        FramePredictionNetwork(5)(torch.randn(1, 2, 2, 6))


def test_pooling_mixes_across_snippet_boundaries():
    # a change in the last frame of snippet 0 must reach the first frame of snippet 1
    network = FramePredictionNetwork(3, width=8, blocks=1)
    torch.nn.init.normal_(network.stack.head.weight)
    x = torch.randn(1, 2, 4, 3)
    y = x.clone()
    y[0, 0, 3] += 1.0
    assert not torch.allclose(network(x)[0, 1, 0], network(y)[0, 1, 0])


def test_pooling_token_mixer_on_constant_sequence_is_zero():
    assert torch.allclose(Pooling1d(5)(torch.ones(1, 9, 4)), torch.zeros(1, 9, 4))


def test_stack_output_shape():
    stack = PoolFormerStack(6, 3, width=8, blocks=2)
    assert stack(torch.randn(2, 11, 6)).shape == (2, 11, 3)


def test_shifted_input_shifts_interior_scores():
    network = FramePredictionNetwork(3, width=8, blocks=1)
    torch.nn.init.normal_(network.stack.head.weight)
    sequence = torch.randn(36, 3)
    scores = network(sequence[:32].reshape(1, 4, 8, 3)).reshape(-1)
    shifted = network(sequence[4:].reshape(1, 4, 8, 3)).reshape(-1)
    # one block and a width-3 conv see 3 positions either side; stay clear of both ends
    torch.testing.assert_close(scores[8:28], shifted[4:24])


def test_neighbouring_frames_reach_each_score():
    network = FramePredictionNetwork(3, width=8, blocks=1)
    torch.nn.init.normal_(network.stack.head.weight)
    x = torch.randn(1, 4, 8, 3, requires_grad=True)
    network(x).reshape(-1)[10].backward()
    grad = x.grad.reshape(32, 3).abs().sum(dim=-1)
    assert grad[9] > 0 and grad[11] > 0


def test_fits_a_single_video():
    labels = torch.zeros(32)
    labels[10:18] = 1.0
    features = torch.randn(1, 32, 4) * 0.3
    features[0, :, 0] += labels * 2 - 1
    features = features.reshape(1, 4, 8, 4)
    network = FramePredictionNetwork(4, width=16, blocks=1)
    optimizer = torch.optim.Adam(network.parameters(), lr=1e-2)
    for _ in range(400):
        optimizer.zero_grad()
        loss = binary_focal_loss(labels.reshape(1, 4, 8), network(features), gamma=0.0)
        loss.backward()
        optimizer.step()
    scores = network(features).detach().reshape(-1)
    assert torch.all(scores[labels == 1] >= 0.9)
    assert torch.all(scores[labels == 0] <= 0.1)
