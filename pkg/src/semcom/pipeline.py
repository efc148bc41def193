"""End-to-end stages built from a RunConfig, plus artifact files with metadata sidecars."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import allocation, channel, datasets, eval_harness, ib_mask, transceiver
from .config import RunConfig
from .errors import ArtifactError, CorruptionError
from .nn_core import Rng

ARTIFACTS = {
    "dataset": "dataset.csv",
    "model": "model.bin",
    "mask": "mask.json",
    "csi": "csi.csv",
    "plan": "plan.csv",
    "sweep": "sweep.csv",
    "halfsplit": "halfsplit.json",
    "halfsplit_coords": "halfsplit_coords.csv",
}


# --- in-memory stages ----------------------------------------------------------

def make_dataset(cfg: RunConfig) -> datasets.Dataset:
    d = cfg.dataset
    if d.kind == "idx":
        return datasets.load_idx(d.idx_images, d.idx_labels)
    return datasets.gen_gaussian_mixture(d.num_classes, d.dim, d.per_class, d.spread, cfg.seed)


def split_dataset(ds: datasets.Dataset, cfg: RunConfig) -> tuple[datasets.Dataset, datasets.Dataset]:
    return datasets.split(ds, datasets.SplitSpec(cfg.dataset.train_fraction, cfg.seed))


def train_model(train: datasets.Dataset, cfg: RunConfig, num_classes: int | None = None) -> transceiver.TscModel:
    return transceiver.train(train, cfg.transceiver, num_classes)


def make_mask(model, train: datasets.Dataset, cfg: RunConfig) -> ib_mask.RobustnessMask:
    return ib_mask.generate_mask(model, train, cfg.ib)


def sample_csi(cfg: RunConfig) -> channel.SubchannelSet:
    c = cfg.channel
    return channel.sample_subchannels(c.s, c.capacity, c.mean_snr_db, c.variance_db, cfg.seed, c.dispersion)


def make_plan(mask, subs: channel.SubchannelSet, strategy: str, cfg: RunConfig) -> allocation.AllocationPlan:
    return allocation.allocate(strategy, mask, subs, Rng(cfg.seed, stream_id=0x706C6E))


def run_sweep(model, mask, test: datasets.Dataset, cfg: RunConfig) -> eval_harness.SweepReport:
    return eval_harness.run_snr_sweep(model, mask, cfg.channel.geometry(), test, cfg.sweep)


def run_halfsplit(model, mask, test: datasets.Dataset, train: datasets.Dataset,
                  cfg: RunConfig) -> eval_harness.HalfSplitReport:
    return eval_harness.half_split_analysis(model, mask, test, cfg.halfsplit.noisy_snr_db,
                                            Rng(cfg.seed, stream_id=0x686C66), reference=train)


# --- artifact files ------------------------------------------------------------

def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_artifact(path, data: bytes | str, cfg: RunConfig, **extra) -> str:
    """Write ``data`` and a deterministic JSON sidecar carrying its checksum."""
    raw = data.encode() if isinstance(data, str) else data
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(raw)
    return seal_artifact(path, cfg, **extra)


def seal_artifact(path, cfg: RunConfig, **extra) -> str:
    """Write the sidecar for a file that is already on disk."""
    path = Path(path)
    digest = sha256_bytes(path.read_bytes())
    meta = {"artifact": path.name, "sha256": digest, "seed": cfg.seed, **extra, "config": cfg.to_dict()}
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True, default=list) + "\n")
    return digest


def read_artifact(path) -> tuple[bytes, dict]:
    """Return file bytes and sidecar, verifying the recorded checksum."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing upstream artifact {path}")
    raw = path.read_bytes()
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise ArtifactError(f"missing metadata sidecar {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except ValueError:
        raise CorruptionError(f"unreadable sidecar {meta_path}") from None
    if meta.get("sha256") != sha256_bytes(raw):
        raise CorruptionError(f"{path} does not match the checksum in {meta_path.name}")
    return raw, meta
