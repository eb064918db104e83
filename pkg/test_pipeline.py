from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from Backend.cli import main
from Backend.config import RunConfig
from Backend.datamodel import Dataset, SyntheticSpec, generate_synthetic, load_frames, write_frames, write_manifest
from Backend.errors import CheckpointError, ConfigError, PreconditionError, UsageError
from Backend.experiments import boundary_trials, direction_ablation_trials, grid_topk_sweep
from Backend.extract_all import feature_path, load_features
from Backend import model_loader
from Backend.model_loader import CHECKPOINT_CACHE_SIZE, build_model, load_checkpoint, save_checkpoint
from Backend.tensor_io import read_tensor, write_container
from Backend.training_pipeline import (
    LOSS_COLUMNS,
    evaluate,
    export_features,
    export_masks,
    predict,
    prepare_video,
    run_pipeline,
    train,
)
from conftest import TINY

TINY_SPEC = SyntheticSpec(num_videos=8, num_test_videos=4, frame_count=32, anomaly_duration_range=(4, 8), seed=5)


@pytest.fixture(scope="module")
def trained(tiny_dataset, tmp_path_factory):
    config = RunConfig(**TINY)
    return config, train(config, tiny_dataset, tmp_path_factory.mktemp("trained"))


def test_prepare_video_shapes(tiny_config, tiny_dataset):
    frames = load_frames(tiny_dataset / "frames" / "train_000.fdpn")
    prepared = prepare_video(frames, "train_000", tiny_config)
    T, N = tiny_config.num_snippets, tiny_config.frames_per_snippet
    assert prepared.snippet_features.shape == (T, tiny_config.snippet_channels)
    assert prepared.frame_features.shape == (T, N, tiny_config.frame_channels)
    assert prepared.saliency_sums.shape == (T * N, 3)
    assert prepared.valid.all()


def test_export_masks_and_features(tiny_config, tiny_dataset, tmp_path):
    export_masks(tiny_dataset, tiny_config, tmp_path / "masked")
    masked = read_tensor(tmp_path / "masked" / "test_001.masked.fdpn")
    mask = read_tensor(tmp_path / "masked" / "test_001.mask.fdpn")
    assert masked.shape[0] == tiny_config.frames_per_video
    assert set(np.unique(mask)) <= {0.0, 1.0}

    export_features(tiny_dataset, tiny_config, tmp_path / "features")
    snippet = load_features(feature_path(tmp_path / "features", "train_001", "toy_snippet"))
    frame = load_features(feature_path(tmp_path / "features", "train_001", "toy_frame"))
    assert snippet.shape == (tiny_config.num_snippets, tiny_config.snippet_channels)
    assert frame.shape == (tiny_config.frames_per_video, tiny_config.frame_channels)


def test_loss_log(trained):
    config, artifacts = trained
    log = pd.read_csv(artifacts.loss_log)
    assert list(log.columns) == LOSS_COLUMNS
    assert log["step"].tolist() == list(range(1, config.epochs + 1))
    assert np.isfinite(log.drop(columns="step").to_numpy()).all()
    assert [p.name for p in artifacts.checkpoints] == ["step_000003.fdpk", "step_000006.fdpk"]
    assert artifacts.latest_checkpoint.exists()
    assert (artifacts.run_dir / "config.txt").exists()
    assert (artifacts.run_dir / "snippet_loss.csv").exists()


def test_training_is_deterministic(tiny_config, tiny_dataset, tmp_path):
    first = train(tiny_config, tiny_dataset, tmp_path / "a")
    second = train(tiny_config, tiny_dataset, tmp_path / "b")
    pd.testing.assert_frame_equal(first.losses, second.losses, check_exact=True)
    assert first.latest_checkpoint.read_bytes() == second.latest_checkpoint.read_bytes()


def test_resume_continues_the_same_run(tiny_config, tiny_dataset, tmp_path):
    full = train(tiny_config, tiny_dataset, tmp_path / "full")
    partial = train(tiny_config, tiny_dataset, tmp_path / "split", stop_after=2)
    assert partial.losses["step"].tolist() == [1, 2]
    resumed = train(tiny_config, tiny_dataset, tmp_path / "split", resume=True)
    assert resumed.losses["step"].tolist() == full.losses["step"].tolist()
    pd.testing.assert_frame_equal(resumed.losses, full.losses, check_exact=False, rtol=1e-6)


def test_resume_with_a_different_config(tiny_config, tiny_dataset, tmp_path):
    train(tiny_config, tiny_dataset, tmp_path, stop_after=1)
    with pytest.raises(ConfigError):
        train(replace(tiny_config, lambda2=0.5), tiny_dataset, tmp_path, resume=True)


def test_existing_run_needs_resume(trained, tiny_dataset):
    config, artifacts = trained
    with pytest.raises(UsageError):
        train(config, tiny_dataset, artifacts.run_dir)


def test_resume_without_checkpoint(tiny_config, tiny_dataset, tmp_path):
    with pytest.raises(PreconditionError):
        train(tiny_config, tiny_dataset, tmp_path, resume=True)


def test_training_needs_normal_videos(tiny_config, tiny_dataset, tmp_path):
    samples = [s for s in Dataset.open(tiny_dataset).samples if s.is_abnormal or s.split == "test"]
    write_manifest(samples, tmp_path / "data" / "manifest.csv")
    with pytest.raises(PreconditionError):
        train(tiny_config, tmp_path / "data", tmp_path / "run")


def test_zero_head_checkpoint_is_chance_level(tiny_config, tiny_dataset, tmp_path):
    model = build_model(tiny_config, tiny_config.snippet_channels, tiny_config.frame_channels, tiny_config.snippet_hidden)
    path = save_checkpoint(tmp_path / "zero.fdpk", model, tiny_config, 0)
    report = evaluate(path, tiny_dataset, tiny_config)
    assert all(np.all(s == 0.5) for s in report.per_video_scores.values())
    assert report.auc_roc == pytest.approx(0.5)


def test_evaluate_writes_reports(trained, tiny_dataset, tmp_path):
    config, artifacts = trained
    report = evaluate(artifacts.latest_checkpoint, tiny_dataset, config, "fdpn", tmp_path / "fdpn")
    assert 0.0 <= report.auc_roc <= 1.0 and 0.0 <= report.auc_pr <= 1.0
    assert report.direction_accuracy is not None
    assert sorted(report.per_video_scores) == ["test_000", "test_001", "test_002", "test_003"]
    assert all(len(s) == 32 for s in report.per_video_scores.values())
    assert (tmp_path / "fdpn" / "summary.csv").exists()

    baseline = evaluate(artifacts.latest_checkpoint, tiny_dataset, config, "snippet_broadcast")
    assert baseline.direction_accuracy is None
    for scores in baseline.per_video_scores.values():
        # constant within each snippet
        assert np.all(scores.reshape(config.num_snippets, -1) == scores.reshape(config.num_snippets, -1)[:, :1])


def test_evaluate_unknown_system(trained, tiny_dataset):
    config, artifacts = trained
    with pytest.raises(UsageError):
        evaluate(artifacts.latest_checkpoint, tiny_dataset, config, "snippet")


def test_predict(trained, tiny_dataset, tmp_path):
    config, artifacts = trained
    prediction = predict(artifacts.latest_checkpoint, tiny_dataset / "frames" / "test_002.fdpn", config, tmp_path)
    assert prediction.video_id == "test_002"
    assert prediction.scores.shape == (32,)
    assert np.all((prediction.scores >= 0) & (prediction.scores <= 1))
    assert prediction.direction.sum() == pytest.approx(1.0, abs=1e-6)
    assert len(pd.read_csv(tmp_path / "test_002.scores.csv")) == 32
    assert pd.read_csv(tmp_path / "test_002.direction.csv")["direction"].tolist() == ["left_back", "center", "right_back"]


def test_static_normal_scene_scores_below_half(tiny_config, tiny_dataset, tmp_path):
    config = replace(tiny_config, epochs=30, checkpoint_every=30)
    artifacts = train(config, tiny_dataset, tmp_path / "run")
    frame = load_frames(tiny_dataset / "frames" / "train_001.fdpn")[0]
    write_frames(tmp_path / "static.fdpn", np.repeat(frame[None], 32, axis=0))
    prediction = predict(artifacts.latest_checkpoint, tmp_path / "static.fdpn", config)
    assert prediction.scores.max() < 0.5


class TestCheckpointCache:
    def _model(self, config):
        return build_model(config, config.snippet_channels, config.frame_channels, config.snippet_hidden)

    def test_cache_stays_bounded(self, tiny_config, tmp_path):
        model = self._model(tiny_config)
        for step in range(CHECKPOINT_CACHE_SIZE + 3):
            load_checkpoint(save_checkpoint(tmp_path / f"step_{step}.fdpk", model, tiny_config, step), tiny_config)
            assert len(model_loader._checkpoint_cache) <= CHECKPOINT_CACHE_SIZE

    def test_rewritten_checkpoint_replaces_its_entry(self, tiny_config, tmp_path):
        model = self._model(tiny_config)
        path = tmp_path / "latest.fdpk"
        for step in range(3):
            save_checkpoint(path, model, tiny_config, step, extra={"padding": "x" * step})
            _, metadata, _ = load_checkpoint(path, tiny_config)
            assert metadata["step"] == step
        resolved = str(path.resolve())
        assert sum(1 for key in model_loader._checkpoint_cache if key[0] == resolved) == 1


class TestCheckpointErrors:
    def test_missing(self, tiny_config, tiny_dataset, tmp_path):
        with pytest.raises(CheckpointError):
            evaluate(tmp_path / "none.fdpk", tiny_dataset, tiny_config)

    def test_corrupt(self, tiny_config, tiny_dataset, tmp_path):
        path = tmp_path / "bad.fdpk"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            evaluate(path, tiny_dataset, tiny_config)

    def test_wrong_kind(self, tiny_config, tiny_dataset, tmp_path):
        path = tmp_path / "other.fdpk"
        write_container(path, {}, {"kind": "other"})
        with pytest.raises(CheckpointError):
            evaluate(path, tiny_dataset, tiny_config)

    def test_snippet_network_mismatch(self, trained, tiny_dataset):
        config, artifacts = trained
        with pytest.raises(CheckpointError):
            evaluate(artifacts.latest_checkpoint, tiny_dataset, replace(config, snippet_net="precomputed"))


def test_run_pipeline(tiny_config, tiny_dataset, tmp_path):
    reports = run_pipeline(tiny_config, tiny_dataset, tmp_path)
    assert set(reports) == {"fdpn", "snippet_broadcast"}
    for system in reports:
        assert (tmp_path / "eval" / system / "scores.csv").exists()


class TestCommandLine:
    def _overrides(self):
        out = []
        for key, value in TINY.items():
            out += [f"--{key.replace('_', '-')}", str(value)]
        return out

    def test_synth(self, tmp_path):
        args = ["synth", "--out", str(tmp_path), "--num-videos", "6", "--frame-count", "16",
                "--min-duration", "2", "--max-duration", "4", "--quiet"]
        assert main(args) == 0
        assert len(Dataset.open(tmp_path).samples) == 6

    def test_missing_dataset_exits_2(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope"), "--run-dir", str(tmp_path / "run"), "--quiet"]) == 2

    def test_bad_override_exits_2(self, tiny_dataset, tmp_path):
        args = ["train", "--data", str(tiny_dataset), "--run-dir", str(tmp_path), "--quiet", "--top-k", "99"]
        assert main(args) == 2

    def test_train_eval_report(self, tiny_dataset, tmp_path):
        run = tmp_path / "run"
        common = ["--data", str(tiny_dataset), "--run-dir", str(run), "--quiet"]
        assert main(["train", *common, *self._overrides()]) == 0
        assert (run / "loss_log.csv").exists()
        assert main(["train", *common, *self._overrides()]) == 2
        assert main(["eval", *common]) == 0
        assert main(["eval", *common, "--system", "snippet_broadcast"]) == 0
        assert main([
            "report", "--current", str(run / "eval" / "fdpn"),
            "--reference", str(run / "eval" / "snippet_broadcast"), "--out", str(tmp_path / "report"),
        ]) == 0
        deltas = pd.read_csv(tmp_path / "report" / "bucket_improvement.csv")
        assert list(deltas.columns) == ["bucket", "threshold", "delta"]
        assert set(deltas["threshold"]) == {0.6, 0.7, 0.8, 0.9}


class TestExperiments:
    def test_boundary_trials_table(self, tiny_config, tmp_path):
        spec = replace(TINY_SPEC, anomaly_duration_range=(1, tiny_config.frames_per_snippet - 1))
        table = boundary_trials([0], tiny_config, tmp_path, spec)
        assert list(table.columns[:4]) == ["seed", "fdpn_auc_roc", "snippet_auc_roc", "frame_wins"]
        assert (tmp_path / "boundary_trials.csv").exists()

    def test_direction_ablation_table(self, tiny_config, tmp_path):
        table = direction_ablation_trials([0], tiny_config, tmp_path, TINY_SPEC)
        assert set(table.columns) == {"seed", "network_only", "saliency_only", "combined"}
        assert table[["network_only", "saliency_only", "combined"]].apply(lambda c: c.between(0, 1)).all().all()

    def test_grid_topk_sweep(self, tiny_config, tmp_path):
        table = grid_topk_sweep(tiny_config, tmp_path, grids=(2,), top_ks=(1, 2, 7), spec=TINY_SPEC)
        assert table[["grid_n", "top_k"]].values.tolist() == [[2, 1], [2, 2]]


ACCEPTANCE = RunConfig(epochs=200, checkpoint_every=1000)


@pytest.mark.slow
def test_acceptance_overfit(tmp_path):
    data = tmp_path / "data"
    generate_synthetic(SyntheticSpec(num_videos=24, num_test_videos=8, frame_count=512, seed=11), data)
    artifacts = train(ACCEPTANCE, data, tmp_path / "run")
    assert evaluate(artifacts.latest_checkpoint, data, ACCEPTANCE).auc_roc >= 0.95


@pytest.mark.slow
def test_acceptance_boundary_sharpness(tmp_path):
    table = boundary_trials(range(20), ACCEPTANCE, tmp_path)
    assert table["frame_wins"].sum() >= 16


@pytest.mark.slow
def test_acceptance_direction(tmp_path):
    table = direction_ablation_trials(range(20), ACCEPTANCE, tmp_path)
    assert table["combined"].mean() >= 0.9
    best_single = table[["network_only", "saliency_only"]].max(axis=1)
    assert (table["combined"] >= best_single).sum() >= 16
