from .checkpoint import Checkpoint, CheckpointError
from .config import (IEMOCAP_ALPHA, MECHANISM_VARIANTS, MELD_ALPHA, MODALITY_VARIANTS, VARIANTS,
                     ModelConfig, TrainConfig, Variant, benchmark_model_config, variant_spec)
from .loop import (Records, TrainingError, TrainResult, collect_records, evaluate, evaluate_network,
                   network_from_checkpoint, predict_proba, train)
from .metrics import Metrics, compute_metrics, confusion_matrix
from .model import Batch, DFERCNetwork, emotion_loss, predict_distribution, total_loss
from .optim import AdamW, clip_grad_norm, warmup_lr

__all__ = [
    "Checkpoint", "CheckpointError", "IEMOCAP_ALPHA", "MECHANISM_VARIANTS", "MELD_ALPHA", "MODALITY_VARIANTS",
    "VARIANTS", "ModelConfig", "TrainConfig", "Variant", "benchmark_model_config", "variant_spec", "Records",
    "TrainingError", "TrainResult", "collect_records", "evaluate", "evaluate_network",
    "network_from_checkpoint", "predict_proba", "train", "Metrics", "compute_metrics", "confusion_matrix",
    "Batch", "DFERCNetwork", "emotion_loss", "predict_distribution", "total_loss", "AdamW", "clip_grad_norm",
    "warmup_lr",
]
