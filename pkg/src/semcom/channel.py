"""Parallel AWGN subchannels with per-subchannel SNR (perfect CSI, unit gain)."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AllocationError, FormatError, ParameterError, ShapeError
from .nn_core import Rng

# Full-scale OFDM geometry (used by --paper-scale); pilots are metadata only.
PAPER_SUBCARRIERS = 272
PAPER_PILOTS = 16
PAPER_DATA_SUBCARRIERS = 256


@dataclass(frozen=True, eq=False)
class SubchannelSet:
    snr_db: np.ndarray
    capacity: int = 1
    mean_snr_db: float = 0.0
    variance_db: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        snr = np.array(self.snr_db, dtype=np.float64).reshape(-1)
        if snr.size < 1:
            raise ParameterError("need at least one subchannel")
        if self.capacity < 1:
            raise ParameterError("subchannel capacity must be >= 1")
        if not np.all(np.isfinite(snr)):
            raise ParameterError("subchannel SNRs must be finite")
        snr.flags.writeable = False
        object.__setattr__(self, "snr_db", snr)

    @property
    def s(self) -> int:
        return self.snr_db.size

    @property
    def total_capacity(self) -> int:
        return self.s * self.capacity

    def negated(self) -> "SubchannelSet":
        return SubchannelSet(-self.snr_db, self.capacity, -self.mean_snr_db, self.variance_db, self.seed)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    per_unit_noise_std: np.ndarray

    def __post_init__(self):
        std = np.array(self.per_unit_noise_std, dtype=np.float64).reshape(-1)
        if np.any(std < 0) or not np.all(np.isfinite(std)):
            raise ParameterError("noise stds must be finite and non-negative")
        std.flags.writeable = False
        object.__setattr__(self, "per_unit_noise_std", std)

    @property
    def gain(self) -> np.ndarray:
        return np.ones_like(self.per_unit_noise_std)


def sample_subchannels(s: int, capacity: int, mean_snr_db: float, variance_db: float, seed: int,
                       dispersion: str = "variance", stream: int = 0) -> SubchannelSet:
    """Gaussian SNRs in dB, clamped to three standard deviations around the mean.

    ``dispersion`` says whether ``variance_db`` is a variance (dB^2) or a std (dB).
    """
    if s < 1:
        raise ParameterError("s must be >= 1")
    if variance_db < 0:
        raise ParameterError("variance_db must be >= 0")
    if dispersion == "variance":
        std = np.sqrt(variance_db)
    elif dispersion == "std":
        std = float(variance_db)
    else:
        raise ParameterError(f"dispersion must be 'variance' or 'std', got {dispersion!r}")
    if std == 0:
        snr = np.full(s, float(mean_snr_db))
    else:
        draws = Rng(seed, stream_id=0x736E72).spawn(stream).normal(s)
        snr = mean_snr_db + std * np.clip(draws, -3.0, 3.0)
    return SubchannelSet(snr, capacity, float(mean_snr_db), float(variance_db), seed)


def snr_to_noise_std(snr_db, signal_power: float):
    if not signal_power > 0:
        raise ParameterError("signal_power must be > 0")
    out = np.sqrt(signal_power * 10.0 ** (-np.asarray(snr_db, dtype=np.float64) / 10.0))
    return float(out) if out.ndim == 0 else out


def realize(plan, subs: SubchannelSet, signal_power: float) -> ChannelRealization:
    assign = np.asarray(plan.assign if hasattr(plan, "assign") else plan, dtype=np.int64)
    if assign.size and (assign.min() < 0 or assign.max() >= subs.s):
        raise AllocationError("plan references a subchannel outside the set")
    if np.any(np.bincount(assign, minlength=subs.s) > subs.capacity):
        raise AllocationError("plan exceeds subchannel capacity")
    return ChannelRealization(snr_to_noise_std(subs.snr_db[assign], signal_power))


def transmit(z, realization: ChannelRealization, rng: Rng) -> np.ndarray:
    """``z_hat = z + std * eps``; accepts one block ``(m,)`` or a batch ``(n, m)``."""
    z = np.asarray(z, dtype=np.float64)
    std = realization.per_unit_noise_std
    if z.shape[-1] != std.size:
        raise ShapeError(f"feature length {z.shape[-1]} != realization length {std.size}")
    return z + std * rng.normal(z.shape)


def csi_to_csv(subs: SubchannelSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subchannel_index", "snr_db"])
        for j, v in enumerate(subs.snr_db):
            w.writerow([j, repr(float(v))])


def csi_from_csv(path, capacity: int = 1) -> SubchannelSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["subchannel_index", "snr_db"]:
        raise FormatError(f"{path}: expected header 'subchannel_index,snr_db'")
    try:
        entries = sorted((int(r[0]), float(r[1])) for r in rows[1:] if r)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if [j for j, _ in entries] != list(range(len(entries))):
        raise FormatError(f"{path}: subchannel indices must be 0..s-1 without gaps")
    snr = np.array([v for _, v in entries])
    return SubchannelSet(snr, capacity, float(snr.mean()) if snr.size else 0.0,
                         float(snr.var()) if snr.size else 0.0, None)
