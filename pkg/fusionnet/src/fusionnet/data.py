"""Reader for the on-disk measurement container.

This package deliberately reads the files itself rather than importing
the generator: the directory layout (manifest.json plus flat
little-endian arrays) is the interface.
"""

import json
import os

import numpy as np
import torch
from torch.utils.data import Dataset

N_MEASUREMENTS = 104
N_IMAGE = 4096
IMAGE_SIDE = 64


class ContainerError(Exception):
    pass


class Container:
    """In-memory view of one dataset directory."""

    def __init__(self, voltages, truths, masks, object_counts, splits):
        self.voltages = voltages
        self.truths = truths
        self.masks = masks
        self.object_counts = object_counts
        self.splits = splits

    @property
    def n(self):
        return self.voltages.shape[0]


def _read_split(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    return np.array([int(ln) for ln in lines], dtype=np.int64)


def read_container(root) -> Container:
    manifest_path = os.path.join(root, "manifest.json")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise ContainerError(f"no manifest.json under {root}")
    except json.JSONDecodeError as exc:
        raise ContainerError(f"manifest.json is not valid JSON: {exc}")

    if manifest.get("version") != 1:
        raise ContainerError(
            f"unsupported container version {manifest.get('version')!r}")
    counts = manifest.get("counts")
    n = manifest.get("n")
    if not isinstance(counts, list) or len(counts) != 4:
        raise ContainerError("manifest counts must be a list of 4 ints")
    if n != int(sum(counts)):
        raise ContainerError(f"manifest n={n} but counts sum to {sum(counts)}")

    def load(name, dtype, width):
        path = os.path.join(root, name)
        if not os.path.exists(path):
            raise ContainerError(f"missing {name}")
        itemsize = np.dtype(dtype).itemsize
        expect = n * width * itemsize
        actual = os.path.getsize(path)
        if actual != expect:
            raise ContainerError(
                f"{name} holds {actual} bytes, expected {expect}")
        return np.fromfile(path, dtype=dtype).reshape(n, width)

    voltages = load("voltages.f32le", "<f4", N_MEASUREMENTS)
    truths = load("truths.f32le", "<f4", N_IMAGE)
    masks = load("masks.u8", np.uint8, N_IMAGE)

    splits = {}
    for name in ("train", "val", "test"):
        path = os.path.join(root, f"{name}.idx")
        if os.path.exists(path):
            idx = _read_split(path)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ContainerError(f"{name}.idx points outside the dataset")
            splits[name] = idx

    object_counts = np.repeat(np.arange(1, 5), counts)
    return Container(voltages, truths, masks, object_counts, splits)


class FrameDataset(Dataset):
    """Torch view of a container; indices select a subset (a split)."""

    def __init__(self, container: Container, indices=None):
        self.container = container
        if indices is None:
            indices = np.arange(container.n)
        self.indices = np.asarray(indices, dtype=np.int64)

    def __len__(self):
        return int(self.indices.size)

    def __getitem__(self, i):
        j = int(self.indices[i])
        c = self.container
        dv = torch.from_numpy(np.ascontiguousarray(c.voltages[j]))
        mask = torch.from_numpy(
            c.masks[j].astype(np.float32).reshape(1, IMAGE_SIDE, IMAGE_SIDE))
        truth = torch.from_numpy(
            c.truths[j].reshape(1, IMAGE_SIDE, IMAGE_SIDE).copy())
        return dv, mask, truth
