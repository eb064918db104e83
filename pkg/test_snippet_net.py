import numpy as np
import pytest
import torch

from Backend.errors import ArgumentError, ShapeError
from Backend.snippet_net import (
    PrecomputedSnippetNetwork,
    SnippetScores,
    ToySnippetScorer,
    make_pseudo_labels,
    mil_ranking_loss,
    pseudo_labels,
    snippet_broadcast,
    train_snippet_scorer,
)
from Backend.tensor_io import write_tensor


def test_zero_head_scores_one_half():
    scorer = ToySnippetScorer(6, hidden=4, zero_head=True)
    refined, scores = scorer(torch.randn(3, 5, 6))
    assert refined.shape == (3, 5, 4)
    assert torch.all(scores == 0.5)


def test_identical_videos_identical_scores():
    scorer = ToySnippetScorer(6, hidden=4)
    video = torch.randn(1, 5, 6)
    _, scores = scorer(video.repeat(3, 1, 1))
    assert torch.equal(scores[0], scores[1]) and torch.equal(scores[1], scores[2])


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        ToySnippetScorer(6)(torch.randn(1, 2, 5))


@pytest.mark.parametrize("scores, n, positive, expected", [
    ([0.7, 0.3], 2, True, [1, 1, 0, 0]),
    ([0.9, 0.9], 2, False, [0, 0, 0, 0]),
    ([0.5], 3, True, [1, 1, 1]),
])
def test_pseudo_label_examples(scores, n, positive, expected):
    labels = pseudo_labels(torch.tensor([scores]), n, positive)
    assert labels.reshape(-1).tolist() == expected


def test_pseudo_label_contract():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        batch, snippets, n = (int(v) for v in rng.integers(1, 5, size=3))
        raw = rng.random((batch, snippets))
        # exact threshold hits
        raw[rng.random((batch, snippets)) < 0.1] = 0.5
        pos = torch.tensor(raw, dtype=torch.float32)
        neg = torch.tensor(rng.random((batch, snippets)), dtype=torch.float32)
        labels = make_pseudo_labels(SnippetScores(pos, neg), n)
        assert labels.positive.shape == (batch, snippets, n)
        assert torch.all(labels.positive == labels.positive[..., :1])
        assert torch.equal(labels.positive[..., 0], (pos >= 0.5).float())
        assert torch.all(labels.negative == 0)


def test_pseudo_labels_need_positive_n():
    with pytest.raises(ArgumentError):
        make_pseudo_labels(SnippetScores(torch.zeros(1, 2), torch.zeros(1, 2)), 0)


def test_snippet_broadcast():
    frames = snippet_broadcast(torch.tensor([[0.2, 0.9]]), 3)
    assert frames.reshape(-1).tolist() == pytest.approx([0.2, 0.2, 0.2, 0.9, 0.9, 0.9])


def test_mil_ranking_loss_values():
    pos = torch.tensor([[0.1, 0.9]])
    neg = torch.tensor([[0.2, 0.3]])
    assert float(mil_ranking_loss(pos, neg, 0.0, 0.0)) == pytest.approx(0.4)
    assert float(mil_ranking_loss(pos, neg, 1.0, 1.0)) == pytest.approx(0.4 + 1.0 + 0.64)
    separated = mil_ranking_loss(torch.tensor([[1.0, 0.0]]), torch.tensor([[0.0, 0.0]]), 0.0, 0.0)
    assert float(separated) == 0.0


def test_training_separates_videos_and_is_deterministic():
    gen = torch.Generator().manual_seed(0)
    neg = torch.randn(6, 8, 10, generator=gen) * 0.1
    pos = neg.clone()
    pos[:, 3] += 2.0

    def run():
        torch.manual_seed(1)
        scorer = ToySnippetScorer(10, hidden=8)
        history = train_snippet_scorer(scorer, pos, neg, epochs=80, learning_rate=1e-2, batch_size=4, seed=2)
        return scorer, history

    scorer, history = run()
    _, again = run()
    assert history == again
    assert history[-1] < 0.5 * history[0]
    with torch.no_grad():
        _, scores = scorer(pos)
    assert torch.all(scores[:, 3] > scores[:, 0])


def test_training_needs_both_classes():
    with pytest.raises(ArgumentError):
        train_snippet_scorer(ToySnippetScorer(4), torch.zeros(0, 2, 4), torch.zeros(3, 2, 4))


def test_precomputed_snippet_network(tmp_path):
    write_tensor(tmp_path / "v1.snippet_refined.fdpn", np.ones((4, 3)))
    write_tensor(tmp_path / "v1.snippet_scores.fdpn", np.array([0.1, 0.2, 0.8, 0.4]))
    network = PrecomputedSnippetNetwork(tmp_path, out_channels=3)
    refined, scores = network.score(torch.zeros(1, 4, 7), ["v1"])
    assert refined.shape == (1, 4, 3)
    assert scores.tolist() == pytest.approx([[0.1, 0.2, 0.8, 0.4]])
    with pytest.raises(ShapeError):
        network.score(torch.zeros(1, 5, 7), ["v1"])
    with pytest.raises(ArgumentError):
        network.score(torch.zeros(1, 4, 7))
