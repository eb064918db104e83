import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from Backend.config import RunConfig
from Backend.datamodel import (
    DIRECTIONS,
    Dataset,
    VideoSample,
    expand_ground_truth,
    frames_to_positions,
    load_frames,
    positions_to_frames,
    snippet_index,
)
from Backend.direction_net import predict_direction
from Backend.errors import ConfigError, PreconditionError, TrainingAbortedError, UsageError
from Backend.extract_all import ExtractorSpec, FeatureExtractor, feature_path, store_features
from Backend.frame_net import fuse_features
from Backend.losses import (
    LossComponents,
    binary_focal_loss,
    direction_focal_loss,
    frame_ranking_loss,
    smoothness_loss,
    total_loss,
)
from Backend.metrics import EvalReport, build_report, write_report
from Backend.model_loader import (
    FDPNModel,
    build_model,
    derived_seed,
    get_device,
    load_checkpoint,
    save_checkpoint,
)
from Backend.saliency import SaliencyModel, build_saliency_model, direction_thirds, mask_frames
from Backend.snippet_net import (
    PrecomputedSnippetNetwork,
    SnippetScores,
    make_pseudo_labels,
    snippet_broadcast,
    train_snippet_scorer,
)
from Backend.tensor_io import write_tensor

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

SYSTEMS = ("fdpn", "snippet_broadcast")
LOSS_COLUMNS = ["step", "L_BF", "L_FR", "L_smooth", "L_DF", "total"]

CONFIG_NAME = "config.txt"
LOSS_LOG_NAME = "loss_log.csv"
SNIPPET_LOG_NAME = "snippet_loss.csv"
CHECKPOINT_DIR = "checkpoints"
LATEST_NAME = "latest.fdpk"


@dataclass
class PreparedVideo:
    video_id: str
    frame_count: int
    index: np.ndarray
    valid: np.ndarray
    snippet_features: np.ndarray  # (T, C)
    frame_features: np.ndarray  # (T, N, C')
    saliency_sums: np.ndarray  # (T*N, 3)
    masks: Optional[np.ndarray] = None
    masked_frames: Optional[np.ndarray] = None


@dataclass
class FeatureBank:
    """Stacked per-video inputs, one row per video."""

    video_ids: List[str]
    samples: List[VideoSample]
    snippet: torch.Tensor
    frame: torch.Tensor
    sums: torch.Tensor
    valid: torch.Tensor
    frame_counts: List[int]
    refined: Optional[torch.Tensor] = None
    snippet_scores: Optional[torch.Tensor] = None

    def rows(self, predicate: Callable[[VideoSample], bool]) -> torch.Tensor:
        return torch.tensor([i for i, s in enumerate(self.samples) if predicate(s)], dtype=torch.long)


@dataclass
class RunArtifacts:
    run_dir: Path
    config_hash: str
    loss_log: Path
    latest_checkpoint: Path
    checkpoints: List[Path] = field(default_factory=list)
    losses: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=LOSS_COLUMNS))
    snippet_history: List[float] = field(default_factory=list)


@dataclass
class Prediction:
    video_id: str
    scores: np.ndarray
    direction: np.ndarray


@dataclass
class _Extractors:
    saliency: SaliencyModel
    snippet: FeatureExtractor
    frame: FeatureExtractor


def _extractors(config: RunConfig) -> _Extractors:
    snippet_kind = "precomputed" if config.snippet_extractor == "precomputed" else "toy_snippet"
    frame_kind = "precomputed" if config.frame_extractor == "precomputed" else "toy_frame"
    return _Extractors(
        saliency=build_saliency_model(
            config.saliency, config.saliency_kernel, config.saliency_noise_floor, config.saliency_dir
        ),
        snippet=FeatureExtractor(ExtractorSpec(
            snippet_kind, config.snippet_channels, config.seed, config.stat_grid,
            config.snippet_feature_source, config.feature_dir,
        )),
        frame=FeatureExtractor(ExtractorSpec(
            frame_kind, config.frame_channels, config.seed + 1, config.stat_grid,
            config.frame_feature_source, config.feature_dir,
        )),
    )


def prepare_video(
    frames: np.ndarray,
    video_id: str,
    config: RunConfig,
    extractors: Optional[_Extractors] = None,
    keep_masked: bool = False,
) -> PreparedVideo:
    """frames -> snippet index -> saliency -> masks -> features -> direction thirds."""
    extractors = extractors or _extractors(config)
    T, N = config.num_snippets, config.frames_per_snippet
    index, valid = snippet_index(frames.shape[0], T, N)
    heat = frames_to_positions(extractors.saliency(frames, video_id=video_id), T, N)
    clip = frames_to_positions(frames, T, N)
    masked, masks = mask_frames(clip, heat, config.grid_n, config.top_k, config.mask_granularity, N)
    snippet_features = extractors.snippet.extract_snippet_features(clip, T, N, video_id)
    frame_features = extractors.frame.extract_frame_features(masked, video_id, index)
    return PreparedVideo(
        video_id=video_id,
        frame_count=int(frames.shape[0]),
        index=index,
        valid=valid,
        snippet_features=snippet_features,
        frame_features=frame_features.reshape(T, N, -1),
        saliency_sums=direction_thirds(heat).astype(np.float32),
        masks=masks if keep_masked else None,
        masked_frames=masked if keep_masked else None,
    )


def _prepare_all(
    dataset: Dataset,
    samples: Sequence[VideoSample],
    config: RunConfig,
    progress: bool = False,
    keep_masked: bool = False,
) -> List[PreparedVideo]:
    extractors = _extractors(config)

    def work(sample: VideoSample) -> PreparedVideo:
        return prepare_video(dataset.load_frames(sample.video_id), sample.video_id, config, extractors, keep_masked)

    if config.num_workers > 1:
        with ThreadPoolExecutor(max_workers=config.num_workers) as pool:
            return list(tqdm(pool.map(work, samples), total=len(samples), desc="preparing", disable=not progress))
    return [work(s) for s in tqdm(samples, desc="preparing", disable=not progress)]


def prepare_dataset(
    dataset: Dataset,
    samples: Sequence[VideoSample],
    config: RunConfig,
    device: Optional[torch.device] = None,
    progress: bool = False,
) -> FeatureBank:
    prepared = _prepare_all(dataset, samples, config, progress)
    device = device or torch.device("cpu")

    def stack(name: str, dtype=torch.float32) -> torch.Tensor:
        return torch.from_numpy(np.stack([getattr(p, name) for p in prepared])).to(device=device, dtype=dtype)

    return FeatureBank(
        video_ids=[p.video_id for p in prepared],
        samples=list(samples),
        snippet=stack("snippet_features"),
        frame=stack("frame_features"),
        sums=stack("saliency_sums"),
        valid=stack("valid", torch.bool),
        frame_counts=[p.frame_count for p in prepared],
    )


def export_masks(dataset_dir, config: RunConfig, out_dir, progress: bool = False) -> Path:
    """Writes `<video_id>.masked.fdpn` and `<video_id>.mask.fdpn` for every video."""
    dataset = Dataset.open(dataset_dir)
    out_dir = Path(out_dir)
    for p in _prepare_all(dataset, dataset.samples, config, progress, keep_masked=True):
        write_tensor(out_dir / f"{p.video_id}.masked.fdpn", p.masked_frames)
        write_tensor(out_dir / f"{p.video_id}.mask.fdpn", p.masks.astype(np.float32))
    logger.info(f"✅ Masked {len(dataset.samples)} videos into {out_dir}")
    return out_dir


def export_features(dataset_dir, config: RunConfig, out_dir, progress: bool = False) -> Path:
    """Writes snippet features, frame features and direction thirds per video."""
    dataset = Dataset.open(dataset_dir)
    out_dir = Path(out_dir)
    snippet_kind = config.snippet_extractor
    frame_kind = config.frame_extractor
    for p in _prepare_all(dataset, dataset.samples, config, progress):
        store_features(feature_path(out_dir, p.video_id, snippet_kind), p.snippet_features)
        store_features(feature_path(out_dir, p.video_id, frame_kind), p.frame_features.reshape(-1, p.frame_features.shape[-1]))
        store_features(feature_path(out_dir, p.video_id, "thirds"), p.saliency_sums)
    logger.info(f"✅ Extracted features for {len(dataset.samples)} videos into {out_dir}")
    return out_dir


def step_generator(seed: int, step: int) -> torch.Generator:
    """Pair-sampling stream for one training step; independent of any earlier step."""
    state = np.random.SeedSequence([derived_seed(seed, 1), step]).generate_state(1)[0]
    return torch.Generator().manual_seed(int(state))


def _trainable_parameters(model: FDPNModel, config: RunConfig) -> List[torch.nn.Parameter]:
    params = list(model.frame_net.parameters()) + list(model.direction_net.parameters())
    if config.joint_training and model.snippet_scorer is not None:
        params += list(model.snippet_scorer.parameters())
    return params


def optimizer_factory(config: RunConfig) -> Callable[[FDPNModel], torch.optim.Optimizer]:
    def make(model: FDPNModel) -> torch.optim.Optimizer:
        params = _trainable_parameters(model, config)
        if config.optimizer == "sgd":
            return torch.optim.SGD(params, lr=config.learning_rate, momentum=0.9)
        return torch.optim.Adam(params, lr=config.learning_rate)
    return make


def _snippet_outputs(
    model: FDPNModel, bank: FeatureBank, rows: torch.Tensor, config: RunConfig
) -> Tuple[torch.Tensor, torch.Tensor]:
    if bank.refined is not None:
        return bank.refined[rows], bank.snippet_scores[rows]
    return model.snippet_scorer(bank.snippet[rows])


def _cache_snippet_outputs(model: FDPNModel, bank: FeatureBank, config: RunConfig) -> None:
    """Frozen snippet network: score every video once."""
    with torch.no_grad():
        if model.snippet_scorer is not None:
            model.snippet_scorer.eval()
            refined, scores = model.snippet_scorer(bank.snippet)
        else:
            network = PrecomputedSnippetNetwork(config.snippet_dir, config.snippet_hidden)
            refined, scores = network.score(bank.snippet, bank.video_ids)
    bank.refined = refined.to(torch.float32)
    bank.snippet_scores = scores.to(torch.float32)


def _direction_targets(bank: FeatureBank, rows: torch.Tensor) -> torch.Tensor:
    targets = torch.zeros(len(rows), len(DIRECTIONS), device=bank.snippet.device)
    for i, row in enumerate(rows.tolist()):
        targets[i, bank.samples[row].direction_index] = 1.0
    return targets


def compute_losses(
    model: FDPNModel,
    bank: FeatureBank,
    pos_rows: torch.Tensor,
    neg_rows: torch.Tensor,
    config: RunConfig,
) -> LossComponents:
    """One forward pass over B abnormal/normal pairs."""
    cfg = config.loss_config()
    N = config.frames_per_snippet
    refined_pos, scores_pos = _snippet_outputs(model, bank, pos_rows, config)
    refined_neg, scores_neg = _snippet_outputs(model, bank, neg_rows, config)
    pseudo = make_pseudo_labels(SnippetScores(scores_pos, scores_neg), N)

    frame_pos, frame_neg = bank.frame[pos_rows], bank.frame[neg_rows]
    valid_pos = bank.valid[pos_rows]
    valid_neg = bank.valid[neg_rows]
    s_pos = model.frame_net(fuse_features(frame_pos, refined_pos))
    s_neg = model.frame_net(fuse_features(frame_neg, refined_neg))

    bf = binary_focal_loss(
        torch.cat([pseudo.positive, pseudo.negative]).reshape(2 * len(pos_rows), -1),
        torch.cat([s_pos, s_neg]).reshape(2 * len(pos_rows), -1),
        cfg.gamma,
        cfg.eps,
        mask=torch.cat([valid_pos, valid_neg]),
    )
    fr = frame_ranking_loss(
        s_pos.reshape(len(pos_rows), -1),
        s_neg.reshape(len(neg_rows), -1),
        cfg.rank_frames,
        cfg.hinged_ranking,
        pos_mask=valid_pos,
        neg_mask=valid_neg,
    )
    smooth = smoothness_loss(s_pos.reshape(len(pos_rows), -1), valid_pos.sum(dim=1).tolist())
    probs = predict_direction(
        fuse_features(frame_pos, bank.snippet[pos_rows]),
        bank.sums[pos_rows],
        model.direction_net,
        config.dps_mode,
        config.dps_fusion,
        valid_pos,
    )
    df = direction_focal_loss(_direction_targets(bank, pos_rows), probs, cfg.gamma, cfg.eps)
    return LossComponents(bf=bf, fr=fr, smooth=smooth, df=df)


def _write_loss_log(rows: List[Dict[str, float]], path: Path) -> pd.DataFrame:
    table = pd.DataFrame(rows, columns=LOSS_COLUMNS)
    table["step"] = table["step"].astype(np.int64)
    table.to_csv(path, index=False, lineterminator="\n")
    return table


def _check_training_set(train: List[VideoSample], config: RunConfig) -> None:
    if not any(s.is_abnormal for s in train):
        raise PreconditionError("training split has no abnormal video")
    if not any(not s.is_abnormal for s in train):
        raise PreconditionError("training split has no normal video")
    shortest = min(min(s.frame_count, config.frames_per_video) for s in train)
    if shortest < config.rank_frames:
        raise PreconditionError(
            f"rank_frames={config.rank_frames} exceeds the {shortest} real frames of the shortest training video"
        )
    if config.joint_training and config.snippet_net != "toy":
        raise ConfigError("joint_training needs the toy snippet network")


def train(
    config: RunConfig,
    dataset_dir,
    run_dir,
    resume: bool = False,
    progress: bool = False,
    stop_after: Optional[int] = None,
) -> RunArtifacts:
    """Two-stage training: snippet scorer first, then FPS and DPS on pseudo labels.

    `stop_after` ends the run early at that step with a checkpoint, as an
    interrupted run would; `resume=True` continues from the latest checkpoint.
    """
    start_time = time.time()
    run_dir = Path(run_dir)
    checkpoint_dir = run_dir / CHECKPOINT_DIR
    latest = checkpoint_dir / LATEST_NAME
    loss_log = run_dir / LOSS_LOG_NAME

    # Step 1: Validate inputs before any compute
    logger.info("Step 1: Loading dataset and checking the training split")
    dataset = Dataset.open(dataset_dir)
    train_samples = dataset.split("train")
    _check_training_set(train_samples, config)
    if latest.exists() and not resume:
        raise UsageError(f"{run_dir} already holds a training run; pass --resume to continue it")
    if resume and not latest.exists():
        raise PreconditionError(f"nothing to resume: {latest} does not exist")
    config_hash = config.write_snapshot(run_dir / CONFIG_NAME)
    device = get_device(config.device)

    # Step 2: Saliency, masking and features for every training video
    logger.info("Step 2: Preparing masked frames and features")
    bank = prepare_dataset(dataset, train_samples, config, device, progress)

    # Step 3: Snippet network (trained once, then frozen)
    logger.info("Step 3: Preparing the snippet network")
    make_optimizer = optimizer_factory(config)
    snippet_history: List[float] = []
    history: List[Dict[str, float]] = []
    if resume:
        model, metadata, optimizer = load_checkpoint(latest, config, device, make_optimizer)
        start_step = int(metadata["step"]) + 1
        if loss_log.exists():
            previous = pd.read_csv(loss_log, float_precision="round_trip")
            history = previous[previous["step"] < start_step].to_dict("records")
        logger.info(f"Resuming from step {start_step - 1}")
    else:
        model = build_model(config, config.snippet_channels, config.frame_channels, config.snippet_hidden).to(device)
        if model.snippet_scorer is not None:
            pos = bank.rows(lambda s: s.is_abnormal)
            neg = bank.rows(lambda s: not s.is_abnormal)
            snippet_history = train_snippet_scorer(
                model.snippet_scorer,
                bank.snippet[pos],
                bank.snippet[neg],
                epochs=config.snippet_epochs,
                learning_rate=config.snippet_learning_rate,
                batch_size=config.batch_size,
                seed=derived_seed(config.seed, 1),
                sparsity=config.snippet_sparsity,
                smoothness=config.snippet_smoothness,
                progress=progress,
            )
            pd.DataFrame({"epoch": np.arange(1, len(snippet_history) + 1), "loss": snippet_history}).to_csv(
                run_dir / SNIPPET_LOG_NAME, index=False, lineterminator="\n"
            )
        optimizer = make_optimizer(model)
        start_step = 1
    if not config.joint_training:
        if model.snippet_scorer is not None:
            model.snippet_scorer.requires_grad_(False)
        _cache_snippet_outputs(model, bank, config)

    # Step 4: Frame and direction subnetworks on sampled pairs
    pos_rows = bank.rows(lambda s: s.is_abnormal)
    neg_rows = bank.rows(lambda s: not s.is_abnormal)
    steps_per_epoch = max(1, math.ceil(max(len(pos_rows), len(neg_rows)) / config.batch_size))
    total_steps = config.epochs * steps_per_epoch
    logger.info(f"Step 4: Training FPS/DPS for {total_steps} steps ({steps_per_epoch} per epoch)")
    checkpoints: List[Path] = []
    loss_cfg = config.loss_config()
    model.frame_net.train()
    model.direction_net.train()
    try:
        for step in tqdm(range(start_step, total_steps + 1), desc="training", disable=not progress):
            generator = step_generator(config.seed, step)
            pos = pos_rows[torch.randint(len(pos_rows), (config.batch_size,), generator=generator)]
            neg = neg_rows[torch.randint(len(neg_rows), (config.batch_size,), generator=generator)]
            components = compute_losses(model, bank, pos, neg, config)
            loss = total_loss(components, loss_cfg, step)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            history.append({"step": step, **components.as_dict(), "total": float(loss.detach())})

            stopping = stop_after is not None and step >= stop_after
            if step % config.checkpoint_every == 0 or step == total_steps or stopping:
                path = checkpoint_dir / f"step_{step:06d}.fdpk"
                extra = {"total_steps": total_steps, "steps_per_epoch": steps_per_epoch}
                save_checkpoint(path, model, config, step, optimizer, extra)
                save_checkpoint(latest, model, config, step, optimizer, extra)
                checkpoints.append(path)
                _write_loss_log(history, loss_log)
                logger.info(f"Step {step}/{total_steps}: total loss {history[-1]['total']:.5f}")
            if stopping:
                logger.warning(f"Stopping early after step {step}")
                break
    except TrainingAbortedError as e:
        _write_loss_log(history, loss_log)
        logger.error(f"Training aborted: {e}; last good checkpoint kept at {latest}")
        raise

    losses = _write_loss_log(history, loss_log)
    logger.info(f"✅ Training completed in {time.time() - start_time:.2f} seconds")
    return RunArtifacts(
        run_dir=run_dir,
        config_hash=config_hash,
        loss_log=loss_log,
        latest_checkpoint=latest,
        checkpoints=checkpoints,
        losses=losses,
        snippet_history=snippet_history,
    )


def _score_video(
    model: FDPNModel,
    bank: FeatureBank,
    row: int,
    config: RunConfig,
    system: str,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-original-frame scores and the video's direction distribution."""
    rows = torch.tensor([row])
    refined, scores = _snippet_outputs(model, bank, rows, config)
    if system == "fdpn":
        positions = model.frame_net(fuse_features(bank.frame[rows], refined))
    else:
        positions = snippet_broadcast(scores, config.frames_per_snippet)
    direction = predict_direction(
        fuse_features(bank.frame[rows], bank.snippet[rows]),
        bank.sums[rows],
        model.direction_net,
        config.dps_mode,
        config.dps_fusion,
        bank.valid[rows],
    )
    values = positions.reshape(-1).cpu().numpy().astype(np.float64)
    return positions_to_frames(values, bank.frame_counts[row]), direction[0].cpu().numpy().astype(np.float64)


def evaluate(
    checkpoint,
    dataset_dir,
    config: RunConfig,
    system: str = "fdpn",
    out_dir=None,
    progress: bool = False,
) -> EvalReport:
    """Scores every test video and builds the frame-level report."""
    if system not in SYSTEMS:
        raise UsageError(f"system must be one of {SYSTEMS}, got {system!r}")
    start_time = time.time()
    device = get_device(config.device)
    model, metadata, _ = load_checkpoint(checkpoint, config, device)
    model.eval()

    logger.info(f"Step 1: Preparing test videos for {system}")
    dataset = Dataset.open(dataset_dir)
    test_samples = dataset.split("test")
    if not test_samples:
        raise PreconditionError("dataset has no test videos")
    bank = prepare_dataset(dataset, test_samples, config, device, progress)

    logger.info("Step 2: Scoring frames")
    scores: Dict[str, np.ndarray] = {}
    labels: Dict[str, np.ndarray] = {}
    predictions: Dict[str, np.ndarray] = {}
    truths: Dict[str, str] = {}
    with torch.no_grad():
        _cache_snippet_outputs(model, bank, config)
        for row, sample in enumerate(tqdm(test_samples, desc="scoring", disable=not progress)):
            frame_scores, direction = _score_video(model, bank, row, config, system)
            scores[sample.video_id] = frame_scores
            labels[sample.video_id] = expand_ground_truth(sample).labels
            if sample.is_abnormal and system == "fdpn":
                predictions[sample.video_id] = direction
                truths[sample.video_id] = sample.direction

    logger.info("Step 3: Computing metrics")
    report = build_report(
        scores,
        labels,
        predictions,
        truths,
        system=system,
        config_hash=metadata.get("config_hash", ""),
        fps_nominal=config.fps_nominal,
    )
    if out_dir is not None:
        write_report(report, out_dir)
    direction_text = "n/a" if report.direction_accuracy is None else f"{report.direction_accuracy:.4f}"
    logger.info(
        f"✅ {system}: AUC-ROC {report.auc_roc:.4f}, AUC-PR {report.auc_pr:.4f}, "
        f"direction {direction_text} in {time.time() - start_time:.2f} seconds"
    )
    return report


def predict(checkpoint, video_path, config: RunConfig, out_dir=None) -> Prediction:
    """One score per original frame plus a 3-way direction distribution for a single video file."""
    video_path = Path(video_path)
    video_id = video_path.name.split(".")[0]
    frames = load_frames(video_path)
    device = get_device(config.device)
    model, _, _ = load_checkpoint(checkpoint, config, device)
    model.eval()
    prepared = prepare_video(frames, video_id, config)
    sample = VideoSample(video_id, "test", "normal", None, prepared.frame_count)
    bank = FeatureBank(
        video_ids=[video_id],
        samples=[sample],
        snippet=torch.from_numpy(prepared.snippet_features[None]).to(device),
        frame=torch.from_numpy(prepared.frame_features[None]).to(device),
        sums=torch.from_numpy(prepared.saliency_sums[None]).to(device),
        valid=torch.from_numpy(prepared.valid[None]).to(device),
        frame_counts=[prepared.frame_count],
    )
    with torch.no_grad():
        _cache_snippet_outputs(model, bank, config)
        scores, direction = _score_video(model, bank, 0, config, "fdpn")
    prediction = Prediction(video_id=video_id, scores=scores, direction=direction)
    if out_dir is not None:
        write_prediction(prediction, out_dir)
    return prediction


def write_prediction(prediction: Prediction, out_dir) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores_path = out_dir / f"{prediction.video_id}.scores.csv"
    direction_path = out_dir / f"{prediction.video_id}.direction.csv"
    pd.DataFrame({"frame": np.arange(len(prediction.scores)), "score": prediction.scores}).to_csv(
        scores_path, index=False, lineterminator="\n"
    )
    pd.DataFrame({"direction": list(DIRECTIONS), "probability": prediction.direction}).to_csv(
        direction_path, index=False, lineterminator="\n"
    )
    logger.info(f"✅ Wrote prediction for {prediction.video_id} to {out_dir}")
    return scores_path, direction_path


def run_pipeline(config: RunConfig, dataset_dir, run_dir, progress: bool = False) -> Dict[str, EvalReport]:
    """Train, then evaluate the frame network and the snippet-broadcast baseline."""
    start_time = time.time()
    logger.info("Starting FDPN pipeline")
    try:
        artifacts = train(config, dataset_dir, run_dir, progress=progress)
        reports = {
            system: evaluate(
                artifacts.latest_checkpoint, dataset_dir, config, system, Path(run_dir) / "eval" / system, progress
            )
            for system in SYSTEMS
        }
        logger.info(f"Pipeline completed successfully in {time.time() - start_time:.2f} seconds")
        return reports
    except Exception as e:
        logger.error(f"Pipeline failed: {str(e)}")
        raise
