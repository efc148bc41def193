"""Accuracy-vs-SNR sweeps across allocation strategies, and the robust/non-robust half split."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .allocation import allocate
from .channel import realize, sample_subchannels, snr_to_noise_std
from .datasets import Dataset
from .errors import ConfigError, DataError
from .ib_mask import RobustnessMask, rank_units
from .nn_core import Rng
from .transceiver import TscModel, decode, encode

SWEEP_STRATEGIES = ("proposed", "random", "worst_case")


@dataclass
class ChannelGeometry:
    s: int = 16
    capacity: int = 2
    dispersion: str = "variance"

    def check(self, m: int) -> "ChannelGeometry":
        if self.s < 1 or self.capacity < 1:
            raise ConfigError("channel.s and channel.capacity must be >= 1")
        if self.s * self.capacity < m:
            raise ConfigError(f"{self.s} subchannels x capacity {self.capacity} cannot carry m = {m} units")
        return self


@dataclass
class SweepConfig:
    snr_points_db: list[float] = field(default_factory=lambda: [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0])
    variance_list_db: list[float] = field(default_factory=lambda: [15.0, 2.0])
    strategies: list[str] = field(default_factory=lambda: list(SWEEP_STRATEGIES))
    realizations_per_point: int = 20
    samples_per_realization: int | None = None  # None = full test set
    seed: int = 0

    def validate(self) -> "SweepConfig":
        if not self.snr_points_db:
            raise ConfigError("sweep.snr_points_db must not be empty")
        if not self.variance_list_db or any(v < 0 for v in self.variance_list_db):
            raise ConfigError("sweep.variance_list_db must be non-empty and non-negative")
        if self.realizations_per_point < 1:
            raise ConfigError("sweep.realizations_per_point must be >= 1")
        bad = [s for s in self.strategies if s not in SWEEP_STRATEGIES]
        if bad or not self.strategies:
            raise ConfigError(f"sweep.strategies must be a non-empty subset of {SWEEP_STRATEGIES}")
        if self.samples_per_realization is not None and self.samples_per_realization < 1:
            raise ConfigError("sweep.samples_per_realization must be >= 1 or null")
        return self


@dataclass
class SweepRow:
    snr_db: float
    variance_db: float
    strategy: str
    mean_accuracy: float
    std_accuracy: float
    n: int
    accuracies: list[float] = field(default_factory=list, repr=False)


@dataclass
class SweepReport:
    rows: list[SweepRow]
    metadata: dict

    def get(self, snr_db: float, variance_db: float, strategy: str) -> SweepRow:
        for r in self.rows:
            if r.snr_db == snr_db and r.variance_db == variance_db and r.strategy == strategy:
                return r
        raise KeyError((snr_db, variance_db, strategy))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["snr_db", "variance_db", "strategy", "mean_accuracy", "std_accuracy", "n"])
        for r in self.rows:
            w.writerow([repr(float(r.snr_db)), repr(float(r.variance_db)), r.strategy,
                        repr(float(r.mean_accuracy)), repr(float(r.std_accuracy)), r.n])
        return buf.getvalue()


def _stream(*parts: int) -> int:
    out = 0
    for p in parts:
        out = (out << 16) | (int(p) & 0xFFFF)
    return out


def run_snr_sweep(model: TscModel, mask: RobustnessMask, geometry: ChannelGeometry, ds: Dataset,
                  cfg: SweepConfig) -> SweepReport:
    """Mean/std test accuracy per (SNR, variance, strategy) over random CSI draws.

    Within one realization every strategy sees the same CSI and the same
    channel noise draws, so strategy differences are paired.
    """
    cfg.validate()
    if mask.m != model.m:
        raise ConfigError(f"mask has {mask.m} units but the model encodes {model.m}")
    geometry.check(model.m)
    if len(ds) == 0:
        raise DataError("empty evaluation set")
    z_all = encode(model, ds.inputs)
    y_all = ds.labels
    n_eval = len(ds) if cfg.samples_per_realization is None else min(cfg.samples_per_realization, len(ds))
    root = Rng(cfg.seed, stream_id=0x737770)
    results: dict[tuple[int, int, str], list[float]] = {}
    for vi, var in enumerate(cfg.variance_list_db):
        for si, snr in enumerate(cfg.snr_points_db):
            for rep in range(cfg.realizations_per_point):
                key = _stream(vi, si, rep)
                subs = sample_subchannels(geometry.s, geometry.capacity, snr, var, cfg.seed,
                                          dispersion=geometry.dispersion, stream=key)
                if n_eval < len(ds):
                    idx = np.sort(root.spawn(1, key).permutation(len(ds))[:n_eval])
                    z, y = z_all[idx], y_all[idx]
                else:
                    z, y = z_all, y_all
                eps = root.spawn(2, key).normal(z.shape)
                for strat in cfg.strategies:
                    plan = allocate(strat, mask, subs, root.spawn(3, key))
                    std = realize(plan, subs, model.signal_power).per_unit_noise_std
                    _, pred = decode(model, z + std * eps)
                    results.setdefault((vi, si, strat), []).append(float(np.mean(pred == y)))
    rows = []
    for vi, var in enumerate(cfg.variance_list_db):
        for si, snr in enumerate(cfg.snr_points_db):
            for strat in cfg.strategies:
                acc = np.array(results[(vi, si, strat)])
                std = float(acc.std(ddof=1)) if acc.size > 1 else 0.0
                rows.append(SweepRow(float(snr), float(var), strat, float(acc.mean()), std, int(acc.size),
                                     acc.tolist()))
    meta = {"seed": cfg.seed, "config": asdict(cfg), "geometry": asdict(geometry), "num_eval_samples": n_eval}
    return SweepReport(rows, meta)


# --- PCA / silhouette ----------------------------------------------------------

@dataclass
class PcaResult:
    coords: np.ndarray  # (n, 2)
    components: np.ndarray  # (2, d)
    eigenvalues: np.ndarray  # (2,)
    iterations: list[int]
    degenerate: bool  # second component carries no variance
    near_degenerate: bool  # top two eigenvalues within 10% of each other


def _power_iteration(cov: np.ndarray, start: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, float, int]:
    v = start / np.linalg.norm(start)
    lam = float(v @ cov @ v)
    for it in range(1, max_iter + 1):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v, 0.0, it
        w /= norm
        new_lam = float(w @ cov @ w)
        converged = abs(new_lam - lam) <= tol * max(abs(new_lam), 1e-300) and np.linalg.norm(w - v) <= np.sqrt(tol)
        v, lam = w, new_lam
        if converged:
            return v, lam, it
    return v, lam, max_iter


def pca_2d(vectors, tol: float = 1e-9, max_iter: int = 1000) -> PcaResult:
    """Top-2 principal projection by power iteration with deflation."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 2:
        raise DataError("pca_2d needs at least 3 vectors of dimension >= 2")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / x.shape[0]
    start = Rng(0, stream_id=0x706361).normal(x.shape[1])
    comps, lams, iters = [], [], []
    deflated = cov.copy()
    for _ in range(2):
        v, lam, it = _power_iteration(deflated, start.copy(), tol, max_iter)
        lam = max(lam, 0.0)
        j = int(np.argmax(np.abs(v)))
        if v[j] < 0:
            v = -v
        comps.append(v)
        lams.append(lam)
        iters.append(it)
        deflated = deflated - lam * np.outer(v, v)
    if lams[1] > lams[0]:
        comps.reverse()
        lams.reverse()
    comps_a = np.array(comps)
    lams_a = np.array(lams)
    top = lams_a[0]
    degenerate = top <= 0 or lams_a[1] <= 1e-12 * top
    near = bool(top > 0 and lams_a[1] / top > 0.9)
    if degenerate:
        warnings.warn("pca_2d: second principal component is degenerate", RuntimeWarning, stacklevel=2)
    return PcaResult(xc @ comps_a.T, comps_a, lams_a, iters, bool(degenerate), near)


def silhouette(coords, labels) -> float:
    """Mean silhouette coefficient with Euclidean distance.

    Classes with a single point are dropped with a warning.  If every
    pairwise distance is zero the score is 0 and a warning is issued.
    """
    x = np.asarray(coords, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim == 1:
        x = x[:, None]
    classes, counts = np.unique(y, return_counts=True)
    singles = classes[counts < 2]
    if singles.size:
        warnings.warn(f"silhouette: dropping singleton classes {singles.tolist()}", RuntimeWarning, stacklevel=2)
        keep = ~np.isin(y, singles)
        x, y = x[keep], y[keep]
        classes = classes[counts >= 2]
    if classes.size < 2:
        raise DataError("silhouette needs at least two classes with two or more points each")
    sq = np.sum(x * x, axis=1)
    d = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0))
    np.fill_diagonal(d, 0.0)
    if not np.any(d > 0):
        warnings.warn("silhouette: all points coincide; score set to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    onehot = (y[:, None] == classes[None, :]).astype(np.float64)
    sizes = onehot.sum(axis=0)
    sums = d @ onehot  # (n, C) total distance to each class
    own = np.argmax(onehot, axis=1)
    rows = np.arange(y.size)
    a = sums[rows, own] / (sizes[own] - 1.0)
    mean_other = sums / sizes[None, :]
    mean_other[rows, own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(np.mean(s))


# --- half split ---------------------------------------------------------------

@dataclass
class HalfCondition:
    half: str
    channel: str
    accuracy: float
    silhouette: float
    units: list[int]
    coords: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    pca_near_degenerate: bool = False


@dataclass
class HalfSplitReport:
    conditions: list[HalfCondition]
    noisy_snr_db: float
    noise_std: float
    metadata: dict = field(default_factory=dict)

    def get(self, half: str, channel: str) -> HalfCondition:
        for c in self.conditions:
            if c.half == half and c.channel == channel:
                return c
        raise KeyError((half, channel))

    def degradation(self, half: str) -> float:
        return self.get(half, "ideal").accuracy - self.get(half, "noisy").accuracy

    def to_dict(self) -> dict:
        return {
            "noisy_snr_db": self.noisy_snr_db,
            "noise_std": self.noise_std,
            "conditions": [
                {"half": c.half, "channel": c.channel, "accuracy": c.accuracy, "silhouette": c.silhouette,
                 "units": c.units, "pca_near_degenerate": c.pca_near_degenerate}
                for c in self.conditions
            ],
            "degradation": {"first": self.degradation("first"), "second": self.degradation("second")},
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def coords_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["half", "channel", "class", "pc1", "pc2"])
        for c in self.conditions:
            for (p1, p2), lab in zip(c.coords, c.labels):
                w.writerow([c.half, c.channel, int(lab), repr(float(p1)), repr(float(p2))])
        return buf.getvalue()


def half_split_analysis(model: TscModel, mask: RobustnessMask, ds: Dataset, noisy_snr_db: float = 0.0,
                        rng: Rng | None = None, reference: Dataset | None = None) -> HalfSplitReport:
    """Decode from the top-ranked or bottom-ranked half of the units alone.

    The excluded half is imputed by its per-unit mean over ``reference``
    (the training split; ``ds`` if not given).  In the noisy condition the
    retained units get AWGN at ``noisy_snr_db`` relative to the model's
    signal power; both halves see the same noise draws.
    """
    if mask.m != model.m:
        raise ConfigError(f"mask has {mask.m} units but the model encodes {model.m}")
    rng = rng or Rng(0, stream_id=0x686C66)
    order = rank_units(mask)
    cut = (model.m + 1) // 2
    halves = {"first": np.sort(order[:cut]), "second": np.sort(order[cut:])}
    z = encode(model, ds.inputs)
    ref = z if reference is None else encode(model, reference.inputs)
    fill = ref.mean(axis=0)
    noise_std = snr_to_noise_std(noisy_snr_db, model.signal_power)
    eps = rng.normal(z.shape)
    conds = []
    for half in ("first", "second"):
        idx = halves[half]
        for channel in ("ideal", "noisy"):
            zz = np.tile(fill, (len(ds), 1))
            zz[:, idx] = z[:, idx]
            if channel == "noisy":
                zz[:, idx] += noise_std * eps[:, idx]
            _, pred = decode(model, zz)
            acc = float(np.mean(pred == ds.labels))
            sub = zz[:, idx]
            if idx.size >= 2:
                pca = pca_2d(sub)
                coords, near = pca.coords, pca.near_degenerate
            else:
                coords = np.column_stack([sub[:, 0] - sub[:, 0].mean(), np.zeros(len(ds))])
                near = True
            conds.append(HalfCondition(half, channel, acc, silhouette(coords, ds.labels), idx.tolist(),
                                       coords, ds.labels.copy(), near))
    return HalfSplitReport(conds, float(noisy_snr_db), float(noise_std))
