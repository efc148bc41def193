"""Labeled datasets: a synthetic Gaussian mixture and an IDX file reader."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, LengthError, PairingError, ParameterError
from .nn_core import Rng

CLASS_SEPARATION = 3.0

IDX_IMAGES_MAGIC = b"\x00\x00\x08\x03"
IDX_LABELS_MAGIC = b"\x00\x00\x08\x01"


@dataclass(eq=False)
class Dataset:
    inputs: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.inputs.ndim != 2:
            if self.inputs.size == 0:
                self.inputs = self.inputs.reshape(0, 0)
            else:
                raise DataError("inputs must be a 2-D array of shape (n, d)")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise DataError(f"{self.inputs.shape[0]} inputs vs {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.inputs)):
            raise DataError("non-finite input entries")
        self.inputs.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes, name or self.name)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ParameterError("train_fraction must lie strictly between 0 and 1")


def gen_gaussian_mixture(num_classes: int, dim: int, per_class: int, spread: float,
                         seed: int) -> Dataset:
    """Isotropic Gaussian classes around means on a sphere of radius 3.

    Samples are ordered class by class.
    """
    if num_classes < 2:
        raise ParameterError("num_classes must be >= 2")
    if dim < 2:
        raise ParameterError("dim must be >= 2")
    if per_class < 1:
        raise ParameterError("per_class must be >= 1")
    if not spread > 0:
        raise ParameterError("spread must be > 0")
    rng = Rng(seed, stream_id=0x6D6978)
    directions = rng.normal((num_classes, dim))
    means = CLASS_SEPARATION * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    noise = rng.normal((num_classes, per_class, dim))
    x = means[:, None, :] + spread * noise
    y = np.repeat(np.arange(num_classes), per_class)
    return Dataset(x.reshape(-1, dim), y, num_classes, f"gmm-c{num_classes}-d{dim}-s{seed}")


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    n = len(ds)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    perm = Rng(spec.seed, stream_id=0x73706C).permutation(n)
    n_train = int(round(spec.train_fraction * n))
    n_train = min(max(n_train, 1), n - 1) if n > 1 else n
    return (ds.subset(perm[:n_train], ds.name + ":train"),
            ds.subset(perm[n_train:], ds.name + ":test"))


# --- IDX ---------------------------------------------------------------------

def _read_idx(path, magic: bytes, ndim: int) -> tuple[tuple[int, ...], bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != magic:
        raise FormatError(f"{path}: bad IDX magic {raw[:4]!r}, expected {magic!r}")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise LengthError(f"{path}: truncated IDX header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header_len])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = raw[header_len:]
    if len(payload) < expected:
        raise LengthError(f"{path}: header declares {expected} bytes of data, found {len(payload)}")
    if len(payload) > expected:
        raise LengthError(f"{path}: {len(payload) - expected} trailing bytes after IDX payload")
    return dims, payload


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    """Read an IDX3 image file and IDX1 label file; pixels are scaled by 1/255."""
    (n_img, rows, cols), pix = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    (n_lab,), lab = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        raise PairingError(f"{n_img} images but {n_lab} labels")
    x = np.frombuffer(pix, dtype=np.uint8).astype(np.float64).reshape(n_img, rows * cols) / 255.0
    y = np.frombuffer(lab, dtype=np.uint8).astype(np.int64)
    if num_classes is None:
        num_classes = int(y.max()) + 1 if y.size else 1
    return Dataset(x, y, num_classes, Path(images_path).stem)


def write_idx(images: np.ndarray, labels, images_path, labels_path) -> None:
    """Write uint8 images of shape (n, rows, cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(IDX_IMAGES_MAGIC + struct.pack(">III", n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(IDX_LABELS_MAGIC + struct.pack(">I", len(labels)) + labels.tobytes())


# --- CSV ---------------------------------------------------------------------

def to_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"x{i}" for i in range(ds.dim)])
        for x, y in zip(ds.inputs, ds.labels):
            w.writerow([int(y)] + [repr(float(v)) for v in x])


def from_csv(path, num_classes: int | None = None, name: str | None = None) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["label"]:
        raise FormatError(f"{path}: expected a header starting with 'label'")
    dim = len(rows[0]) - 1
    body = rows[1:]
    if any(len(r) != dim + 1 for r in body):
        raise FormatError(f"{path}: ragged rows")
    try:
        y = np.array([int(r[0]) for r in body], dtype=np.int64)
        x = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64).reshape(len(body), dim)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if num_classes is None:
        num_classes = int(y.max()) + 1 if y.size else 1
    return Dataset(x, y, num_classes, name or Path(path).stem)
