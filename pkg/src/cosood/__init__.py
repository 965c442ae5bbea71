"""Out-of-distribution detection with scaled cosine-similarity classifier heads.

A small numpy autodiff core (:mod:`cosood.ndcore`), classifier heads
(:mod:`cosood.heads`), SGD training with selective weight decay
(:mod:`cosood.train`), synthetic data (:mod:`cosood.data`), OOD scoring and
metrics (:mod:`cosood.detect`) and a CLI (:mod:`cosood.cli`).
"""
from ._accel import backend, set_backend
from .checkpoint import Checkpoint, load_checkpoint, model_from_checkpoint, save_checkpoint
from .data import BlobSpec, Dataset, Role, gen_blobs, gen_noise_ood, gen_shifted_ood, read_dataset, write_dataset
from .detect import MetricsReport, auroc, aupr, compute_metrics, detect_ood, ensemble_scores, score_batch
from .errors import *  # noqa: F401,F403
from .heads import HeadKind, HeadOutput, HeadParams, create_head, head_forward, head_loss
from .model import Model, ModelSpec
from .train import TrainConfig, train_model

__version__ = "0.1.0"
