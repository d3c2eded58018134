"""
Training loop, evaluation and checkpointing.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from config.settings import settings
from analysis.writers import write_csv
from models.model import Model
from schemas.net_schemas import TrainConfig
from schemas.report_schemas import EvalResult, TrainLogRow
from store.checkpoint_store import get_checkpoint_store
from tensor.autodiff import Tape
from tensor.ops import softmax_cross_entropy
from tensor.real import RealTensor
from train.datasets import DatasetHandle
from train.optim import Optimizer, clip_latent_weights, learning_rate, make_optimizer
from utils.exceptions import DatasetFormatError, DivergenceError, ShapeMismatchError
from utils.logger import get_logger

logger = get_logger(__name__)

TRAIN_LOG = "train_log.csv"


@dataclass
class TrainResult:
    """What a training run produced."""

    log: List[TrainLogRow] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)
    final: Optional[EvalResult] = None
    checkpoint: Optional[Path] = None


def _top_k_hits(logits: np.ndarray, labels: np.ndarray, k: int) -> int:
    scores = logits.reshape(logits.shape[0], -1)
    top = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return int((top == labels[:, None]).any(axis=1).sum())


def evaluate(model: Model, dataset: DatasetHandle, batch_size: int = 256) -> EvalResult:
    """
    Top-1 and top-5 accuracy in infer mode.

    Returns:
        EvalResult: Accuracies in [0, 1] with top5 >= top1.

    Raises:
        ShapeMismatchError: If the dataset's images do not fit the model.
    """
    if tuple(dataset.image_shape) != tuple(model.spec.input_shape):
        raise ShapeMismatchError(f"Dataset images {dataset.image_shape} do not fit model input {tuple(model.spec.input_shape)}")
    k = min(5, model.spec.num_classes)
    top1 = top5 = 0
    for images, labels in dataset.batches(batch_size):
        logits = model.forward(images, "infer").data
        top1 += _top_k_hits(logits, labels, 1)
        top5 += _top_k_hits(logits, labels, k)
    n = max(len(dataset), 1)
    return EvalResult(top1=top1 / n, top5=top5 / n, samples=len(dataset))


def train_step(model: Model, optimizer: Optimizer, images: RealTensor, labels: np.ndarray, lr: float, weight_clip: float) -> float:
    """
    One optimization step; returns the loss before the update.

    Raises:
        DivergenceError: If the loss is not finite.
    """
    with Tape() as tape:
        logits = model.forward(images, "train")
        loss = softmax_cross_entropy(logits, labels)
    value = loss.item()
    if not math.isfinite(value):
        raise DivergenceError(f"Loss became {value} at step {optimizer.steps + 1}; betas {model.betas()}")
    tape.backward(loss)
    optimizer.step(lr)
    params = model.named_parameters()
    clip_latent_weights([params[name] for name in model.binary_weight_names()], weight_clip)
    return value


def save_checkpoint(model: Model, path: Union[str, Path]) -> Path:
    return get_checkpoint_store().save(path, model.state_tensors())


def load_checkpoint(model: Model, path: Union[str, Path]) -> Model:
    model.load_state(get_checkpoint_store().load(path))
    return model


def train(
    model: Model,
    dataset: DatasetHandle,
    cfg: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    eval_dataset: Optional[DatasetHandle] = None,
    log_every: int = 50,
) -> TrainResult:
    """
    Train `model` on `dataset`.

    Batches follow a permutation seeded by cfg.seed; a final batch of one
    sample is dropped (batchnorm needs two). Each epoch appends a log row
    with the mean loss, top-1/top-5 (on eval_dataset when given, otherwise
    on the epoch's training batches) and every LAB site's beta.

    Args:
        model (Model): Built model, updated in place.
        dataset (DatasetHandle): Training split.
        cfg (TrainConfig): Optimization settings.
        out_dir: If set, receives train_log.csv and the checkpoint.
        eval_dataset: Optional held-out split evaluated after every epoch.
        log_every (int): Steps between step log rows.

    Returns:
        TrainResult: Log rows, per-step losses, final evaluation, checkpoint path.

    Raises:
        DatasetFormatError: With fewer than two training records.
        DivergenceError: On a non-finite loss.
    """
    if len(dataset) < 2:
        raise DatasetFormatError(f"Training needs at least 2 training records, got {len(dataset)}")
    if tuple(dataset.image_shape) != tuple(model.spec.input_shape):
        raise ShapeMismatchError(f"Dataset images {dataset.image_shape} do not fit model input {tuple(model.spec.input_shape)}")
    rng = np.random.default_rng(cfg.seed)
    optimizer = make_optimizer(cfg.optimizer, model.named_parameters())
    batch_size = min(cfg.batch_size, len(dataset))
    steps_per_epoch = len(dataset) // batch_size + (1 if len(dataset) % batch_size >= 2 else 0)
    total_steps = cfg.epochs * steps_per_epoch
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)

    result = TrainResult()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        losses, hits1, hits5, seen = [], 0, 0, 0
        for images, labels in dataset.batches(batch_size, rng, augment=cfg.augment):
            if step >= total_steps:
                break
            if len(labels) < 2:
                continue
            lr = learning_rate(cfg.learning_rate, cfg.lr_schedule, step, total_steps)
            loss = train_step(model, optimizer, images, labels, lr, cfg.weight_clip)
            step += 1
            losses.append(loss)
            result.step_losses.append(loss)
            if eval_dataset is None:
                logits = model.forward(images, "infer").data
                hits1 += _top_k_hits(logits, labels, 1)
                hits5 += _top_k_hits(logits, labels, min(5, model.spec.num_classes))
                seen += len(labels)
            if step % log_every == 0:
                result.log.append(TrainLogRow(epoch=epoch, step=step, loss=loss, lr=lr, betas=model.betas()))
                logger.debug(f"epoch {epoch} step {step}: loss {loss:.4f}")
        if not losses:
            break
        if eval_dataset is not None:
            accuracy = evaluate(model, eval_dataset)
            top1, top5 = accuracy.top1, accuracy.top5
            result.final = accuracy
        else:
            top1, top5 = hits1 / seen, hits5 / seen
        row = TrainLogRow(epoch=epoch, step=step, loss=float(np.mean(losses)), top1=top1, top5=top5, betas=model.betas())
        result.log.append(row)
        betas = ", ".join(f"{name}={beta:.4f}" for name, beta in row.betas.items())
        logger.info(f"ℹ Epoch {epoch}: loss {row.loss:.4f}, top-1 {top1:.4f}, top-5 {top5:.4f}" + (f", beta {betas}" if betas else ""))
        if step >= total_steps:
            break

    if out_dir is not None:
        out_dir = Path(out_dir)
        write_csv(out_dir / TRAIN_LOG, result.log)
        result.checkpoint = save_checkpoint(model, out_dir / settings.CHECKPOINT_NAME)
    logger.info(f"✓ Trained {step} steps")
    return result
