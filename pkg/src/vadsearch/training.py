"""Training loop: Adam + cosine annealing, masked BCE, early stopping."""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .metrics import auc
from .model import VadModel


@dataclass
class TrainConfig:
    max_epochs: int = 20
    batch_size: int = 32
    initial_lr: float = 1e-3
    early_stop_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("max_epochs", "batch_size", "early_stop_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if self.early_stop_patience > self.max_epochs:
            raise ValueError("patience must be <= max_epochs")


@dataclass
class EpochStats:
    train_loss: float
    val_loss: float
    val_auc: float
    lr: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    best_state: dict | None = None
    stop_reason: str = ""
    wall_seconds: float = 0.0


class NonFiniteLossError(RuntimeError):
    def __init__(self, epoch: int, batch_index: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch_index}")
        self.epoch = epoch
        self.batch_index = batch_index


def _to_tensors(data):
    inputs, labels, masks = data[:3]
    return (torch.as_tensor(np.asarray(inputs), dtype=torch.float32),
            torch.as_tensor(np.asarray(labels), dtype=torch.float32),
            torch.as_tensor(np.asarray(masks), dtype=torch.float32))


def masked_bce(logits, labels, masks):
    per_entry = nn.functional.binary_cross_entropy_with_logits(
        logits, labels, reduction="none")
    denom = masks.sum().clamp_min(1.0)
    return (per_entry * masks).sum() / denom


@torch.no_grad()
def _evaluate(model, inputs, labels, masks, batch_size):
    model.eval()
    losses, weights = [], []
    probs_all, labels_all = [], []
    for i in range(0, len(inputs), batch_size):
        x, y, m = inputs[i:i + batch_size], labels[i:i + batch_size], masks[i:i + batch_size]
        logits = model.logits(x)
        losses.append(masked_bce(logits, y, m).item())
        weights.append(float(m.sum()))
        valid = m.bool()
        probs_all.append(torch.sigmoid(logits)[valid].numpy())
        labels_all.append(y[valid].numpy())
    loss = float(np.average(losses, weights=weights))
    scores = np.concatenate(probs_all)
    truth = np.concatenate(labels_all)
    try:
        val_auc = auc(scores, truth)
    except ValueError:  # single-class validation set
        val_auc = float("nan")
    return loss, val_auc


def train(model: VadModel, train_data, val_data, cfg: TrainConfig) -> TrainReport:
    """train_data/val_data: (inputs (N,1,T,F), labels (N,T,J), masks (N,T,J))."""
    start = time.time()
    tr_x, tr_y, tr_m = _to_tensors(train_data)
    va_x, va_y, va_m = _to_tensors(val_data)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.initial_lr,
                                 betas=(0.9, 0.999), eps=1e-8)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=cfg.max_epochs, eta_min=0.0)
    gen = torch.Generator().manual_seed(cfg.seed)
    report = TrainReport()
    epochs_without_improvement = 0
    for epoch in range(cfg.max_epochs):
        model.train()
        order = torch.randperm(len(tr_x), generator=gen)
        epoch_losses = []
        for bi, i in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[i:i + cfg.batch_size]
            optimizer.zero_grad()
            loss = masked_bce(model.logits(tr_x[idx]), tr_y[idx], tr_m[idx])
            if not torch.isfinite(loss):
                raise NonFiniteLossError(epoch, bi)
            loss.backward()
            optimizer.step()
            epoch_losses.append(loss.item())
        scheduler.step()
        val_loss, val_auc = _evaluate(model, va_x, va_y, va_m, cfg.batch_size)
        report.epochs.append(EpochStats(
            train_loss=float(np.mean(epoch_losses)), val_loss=val_loss,
            val_auc=val_auc, lr=optimizer.param_groups[0]["lr"]))
        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            report.best_state = copy.deepcopy(model.state_dict())
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= cfg.early_stop_patience:
                report.stop_reason = "early_stop"
                break
    if not report.stop_reason:
        report.stop_reason = "max_epochs"
    if report.best_state is not None:
        model.load_state_dict(report.best_state)
    report.wall_seconds = time.time() - start
    return report
