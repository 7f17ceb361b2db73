"""Two-phase training loop.

Phase 1 warms the network up on the easier scenes (one or two objects)
at a higher learning rate; phase 2 runs the full training split with
early stopping on validation loss. Both phases track the best
validation state and the model is restored to it afterwards.
"""

import copy
import json
import math
import os
from dataclasses import asdict

import torch
from torch import nn
from torch.utils.data import DataLoader

from .config import PhaseConfig, TrainConfig
from .data import Container, FrameDataset, read_container
from .model import FusionNet


class TrainingError(Exception):
    pass


def _epoch_loss(model, loader, loss_fn, optimizer=None):
    total = 0.0
    count = 0
    for dv, mask, truth in loader:
        pred = model(dv, mask) if model.mask_backbone is not None \
            else model(dv)
        loss = loss_fn(pred, truth)
        if optimizer is not None:
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        total += float(loss.detach()) * dv.shape[0]
        count += dv.shape[0]
    return total / max(count, 1)


def _run_phase(model, phase_name, pc: PhaseConfig, train_ds, val_ds, seed,
               history):
    optimizer = torch.optim.AdamW(model.parameters(), lr=pc.lr,
                                  weight_decay=pc.weight_decay)
    loss_fn = nn.MSELoss()
    generator = torch.Generator().manual_seed(seed)
    train_loader = DataLoader(train_ds, batch_size=pc.batch_size,
                              shuffle=True, generator=generator)
    val_loader = DataLoader(val_ds, batch_size=pc.batch_size)

    best_val = math.inf
    best_state = None
    best_epoch = -1
    for epoch in range(pc.epochs):
        model.train()
        train_loss = _epoch_loss(model, train_loader, loss_fn, optimizer)
        model.eval()
        with torch.no_grad():
            val_loss = _epoch_loss(model, val_loader, loss_fn)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingError(
                f"{phase_name}: non-finite loss at epoch {epoch}")
        history.append({"phase": phase_name, "epoch": epoch,
                        "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        elif pc.patience is not None and epoch - best_epoch >= pc.patience:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    return best_val


def _phase1_indices(container: Container, indices):
    keep = container.object_counts[indices] <= 2
    return indices[keep]


def train(model: FusionNet, dataset_dir, tc: TrainConfig = None, seed: int = 0,
          out_dir=None):
    """Train in place; returns the history list.

    If out_dir is given, model.pt and history.json are written there.
    """
    if tc is None:
        tc = TrainConfig()
    container = read_container(dataset_dir)
    if "train" not in container.splits or "val" not in container.splits:
        raise TrainingError("dataset needs train.idx and val.idx")
    train_idx = container.splits["train"]
    val_idx = container.splits["val"]

    history = []
    p1_train = _phase1_indices(container, train_idx)
    p1_val = _phase1_indices(container, val_idx)
    if p1_train.size and p1_val.size:
        _run_phase(model, "phase1", tc.phase1,
                   FrameDataset(container, p1_train),
                   FrameDataset(container, p1_val), seed, history)
    _run_phase(model, "phase2", tc.phase2,
               FrameDataset(container, train_idx),
               FrameDataset(container, val_idx), seed + 1, history)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        torch.save({"state_dict": model.state_dict(),
                    "config": asdict(model.config),
                    "seed": seed,
                    "history": history},
                   os.path.join(out_dir, "model.pt"))
        with open(os.path.join(out_dir, "history.json"), "w") as fh:
            json.dump(history, fh, indent=2)
    return history
