"""Checkpoint loading and batched prediction to the flat image format."""

import numpy as np
import torch

from .config import N_IMAGE, ModelConfig
from .data import FrameDataset, read_container
from .model import FusionNet, build_model


def load_checkpoint(path) -> FusionNet:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    config = ModelConfig(**payload["config"])
    model = FusionNet(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def predict(model: FusionNet, dataset_dir, split=None, batch_size=64):
    """Returns an (n, 4096) float32 array in dataset (or split-file) order."""
    container = read_container(dataset_dir)
    if split is not None:
        if split not in container.splits:
            raise ValueError(f"split {split!r} not present in {dataset_dir}")
        indices = container.splits[split]
    else:
        indices = np.arange(container.n)
    ds = FrameDataset(container, indices)
    out = np.empty((len(ds), N_IMAGE), dtype=np.float32)
    model.eval()
    row = 0
    with torch.no_grad():
        for start in range(0, len(ds), batch_size):
            batch = [ds[i] for i in range(start, min(start + batch_size,
                                                     len(ds)))]
            dv = torch.stack([b[0] for b in batch])
            mask = torch.stack([b[1] for b in batch])
            pred = model(dv, mask) if model.mask_backbone is not None \
                else model(dv)
            chunk = pred.reshape(len(batch), N_IMAGE).numpy()
            out[row:row + len(batch)] = chunk
            row += len(batch)
    return out


def write_predictions(array, path):
    """Flat little-endian float32 rows, one 4096-pixel image per frame."""
    np.ascontiguousarray(array, dtype="<f4").tofile(path)


def infer(checkpoint_path, dataset_dir, out_path, split=None, batch_size=64):
    model = load_checkpoint(checkpoint_path)
    preds = predict(model, dataset_dir, split=split, batch_size=batch_size)
    write_predictions(preds, out_path)
    return preds.shape[0]
