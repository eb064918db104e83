from .config import RunConfig
from .datamodel import Dataset, SyntheticSpec, VideoSample, generate_synthetic, load_manifest
from .extract_all import ExtractorSpec, FeatureExtractor
from .metrics import EvalReport, auc_pr, auc_roc, direction_accuracy, duration_bucket_improvement
from .model_loader import load_checkpoint, save_checkpoint
from .training_pipeline import evaluate, predict, run_pipeline, train

__version__ = '1.0.0'
