"""Per-unit robustness mask from artificial-noise optimization under an IB bound.

For a frozen transceiver, each sample gets a noise std vector ``sigma`` that
minimizes

    E_eps[ CE(y, decoder(z + sigma * eps)) ]  -/+  beta * KL(sigma, delta)

with ``KL = 0.5 * sum(sigma^2/delta^2 + log(delta^2/sigma^2) - 1)``.  The
``paper_literal`` sign subtracts the KL term, ``well_posed`` adds it.  Sigma is
parameterized as ``softplus(rho)`` with ``rho`` starting at zero.  Per-sample
sigmas are pooled into scores ``r_k = sum_i sigma_k^i / sum_i sum_l sigma_l^i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .errors import DataError, DivergenceError, DomainError, FormatError, ParameterError, ShapeError
from .nn_core import Rng, backward, forward, softmax_cross_entropy, softplus, softplus_grad
from .transceiver import TscModel, _require_frozen, encode

KL_SIGNS = ("paper_literal", "well_posed")


@dataclass
class IbConfig:
    beta: float = 0.3
    lr: float = 0.05
    iters: int = 100
    noise_draws: int = 8
    sigma_pre_clamp: tuple[float, float] = (-10.0, 10.0)
    kl_sign: str = "paper_literal"
    delta_floor: float = 1e-6
    seed: int = 0
    mode: str = "per_sample"  # or "shared": one sigma for the whole batch
    num_samples: int | None = 256  # analysis samples drawn from the dataset; None = all
    chunk_size: int = 256

    def validate(self) -> "IbConfig":
        if self.beta < 0:
            raise ParameterError("ib.beta must be >= 0")
        if not self.lr > 0:
            raise ParameterError("ib.lr must be > 0")
        if self.iters < 0:
            raise ParameterError("ib.iters must be >= 0")
        if self.noise_draws < 1:
            raise ParameterError("ib.noise_draws must be >= 1")
        if not self.delta_floor > 0:
            raise ParameterError("ib.delta_floor must be > 0")
        lo, hi = self.sigma_pre_clamp
        if not lo < hi:
            raise ParameterError("ib.sigma_pre_clamp must be an increasing pair")
        if self.kl_sign not in KL_SIGNS:
            raise ParameterError(f"ib.kl_sign must be one of {KL_SIGNS}")
        if self.mode not in ("per_sample", "shared"):
            raise ParameterError("ib.mode must be 'per_sample' or 'shared'")
        if self.num_samples is not None and self.num_samples < 1:
            raise ParameterError("ib.num_samples must be >= 1 or null")
        if self.chunk_size < 1:
            raise ParameterError("ib.chunk_size must be >= 1")
        return self


@dataclass(eq=False)
class DeltaProfile:
    delta: np.ndarray
    R: float

    @classmethod
    def from_delta(cls, delta) -> "DeltaProfile":
        delta = np.asarray(delta, dtype=np.float64)
        return cls(delta, float(np.max(delta * delta)))


@dataclass(eq=False)
class SigmaResult:
    sigma: np.ndarray
    loss_trace: np.ndarray
    sample_index: int


@dataclass(eq=False)
class RobustnessMask:
    r: np.ndarray
    sigma_mean_sq: np.ndarray
    robust_flags: np.ndarray
    delta_profile: DeltaProfile
    num_samples: int
    beta: float | None = None
    kl_sign: str | None = None
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.r.size


def estimate_delta(model: TscModel, ds: Dataset, delta_floor: float = 1e-6) -> DeltaProfile:
    """Population std of each encoded unit over ``ds``, floored at ``delta_floor``."""
    _require_frozen(model)
    if len(ds) == 0:
        raise DataError("cannot estimate feature dispersion on an empty dataset")
    z = encode(model, ds.inputs)
    return delta_from_features(z, delta_floor)


def delta_from_features(z: np.ndarray, delta_floor: float = 1e-6) -> DeltaProfile:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[0] == 0:
        raise DataError("no feature vectors")
    return DeltaProfile.from_delta(np.maximum(z.std(axis=0), delta_floor))


def kl_summands(sigma, delta) -> np.ndarray:
    """Per-unit ``0.5 * (s^2/d^2 + log(d^2/s^2) - 1)``; zero exactly when sigma == delta."""
    sigma = np.asarray(sigma, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    ratio = (sigma / delta) ** 2
    return 0.5 * (ratio - np.log(ratio) - 1.0)


def _kl_grad(sigma, delta):
    return sigma / (delta * delta) - 1.0 / sigma


def _batch_loss_and_grad(model: TscModel, z, y, sigma, delta, beta, kl_sign, eps, shared=False):
    """Vectorized loss for ``n`` samples with ``D`` noise draws each.

    ``z``, ``sigma``: (n, m); ``eps``: (n, D, m).  With ``shared`` the sigma
    rows are identical and the loss is the batch mean.
    Returns per-sample loss (n,) and gradient (n, m).
    """
    n, draws, m = eps.shape
    z_tilde = (z[:, None, :] + sigma[:, None, :] * eps).reshape(n * draws, m)
    logits, cache = forward(model.decoder, z_tilde)
    ce, dlogits = softmax_cross_entropy(logits, np.repeat(y, draws))
    ce_mean = ce.reshape(n, draws).mean(axis=1)
    g_in = backward(model.decoder, cache, dlogits / draws).input_grad.reshape(n, draws, m)
    g_ce = np.einsum("ndm,ndm->nm", g_in, eps)
    kl = kl_summands(sigma, delta).sum(axis=1)
    g_kl = _kl_grad(sigma, delta)
    sign = -1.0 if kl_sign == "paper_literal" else 1.0
    loss = ce_mean + sign * beta * kl
    grad = g_ce + sign * beta * g_kl
    if shared:
        loss = np.full(n, loss.mean())
        grad = np.broadcast_to(g_ce.mean(axis=0) + sign * beta * g_kl[0], (n, m)).copy()
    return loss, grad


def ib_loss_and_grad(model: TscModel, z, y: int, sigma, delta: DeltaProfile, beta: float = 0.3,
                     kl_sign: str = "paper_literal", noise_draws: int = 8, rng: Rng | None = None,
                     eps: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Monte-Carlo IB bound and its sigma-gradient for one sample.

    Pass ``eps`` of shape (noise_draws, m) to hold the noise fixed (e.g. for
    finite differences); otherwise it is drawn from ``rng``.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    sigma = np.asarray(sigma, dtype=np.float64).reshape(-1)
    dvec = delta.delta if isinstance(delta, DeltaProfile) else np.asarray(delta, dtype=np.float64)
    if not (z.size == sigma.size == dvec.size == model.m):
        raise ShapeError("z, sigma and delta must all have length m")
    if np.any(sigma <= 0) or np.any(dvec <= 0):
        raise DomainError("sigma and delta must be strictly positive")
    if kl_sign not in KL_SIGNS:
        raise ParameterError(f"kl_sign must be one of {KL_SIGNS}")
    if eps is None:
        if rng is None:
            raise ParameterError("either rng or eps is required")
        eps = rng.normal((noise_draws, model.m))
    eps = np.asarray(eps, dtype=np.float64).reshape(1, -1, model.m)
    loss, grad = _batch_loss_and_grad(model, z[None], np.array([y]), sigma[None], dvec, beta, kl_sign, eps)
    return float(loss[0]), grad[0]


def _optimize(model, z, y, dvec, cfg: IbConfig, rngs, indices, shared=False) -> list[SigmaResult]:
    n, m = z.shape
    lo, hi = cfg.sigma_pre_clamp
    rho = np.zeros((n, m))
    trace = np.empty((cfg.iters, n))
    for it in range(cfg.iters):
        sigma = softplus(rho).reshape(n, m)
        eps = np.stack([r.normal((cfg.noise_draws, m)) for r in rngs])
        loss, grad = _batch_loss_and_grad(model, z, y, sigma, dvec, cfg.beta, cfg.kl_sign, eps, shared)
        if not np.all(np.isfinite(loss)) or not np.all(np.isfinite(grad)):
            bad = int(np.flatnonzero(~np.isfinite(loss) | ~np.isfinite(grad).all(axis=1))[0])
            raise DivergenceError(f"non-finite IB loss at iteration {it} (sample {indices[bad]})")
        trace[it] = loss
        rho = np.clip(rho - cfg.lr * grad * softplus_grad(rho), lo, hi)
    sigma = softplus(rho).reshape(n, m)
    return [SigmaResult(sigma[i].copy(), trace[:, i].copy(), int(indices[i])) for i in range(n)]


def _sample_rng(cfg: IbConfig, sample_index: int) -> Rng:
    return Rng(cfg.seed, stream_id=0x69620000 + int(sample_index))


def optimize_sigma_for_sample(model: TscModel, x, y: int, delta: DeltaProfile, cfg: IbConfig | None = None,
                              rng: Rng | None = None, sample_index: int = 0) -> SigmaResult:
    """Softplus-parameterized gradient descent on the noise std for one input."""
    cfg = (cfg or IbConfig()).validate()
    _require_frozen(model)
    z = encode(model, np.asarray(x, dtype=np.float64).reshape(1, -1))
    rng = rng or _sample_rng(cfg, sample_index)
    return _optimize(model, z, np.array([int(y)]), delta.delta, cfg, [rng], [sample_index])[0]


def optimize_sigmas(model: TscModel, ds: Dataset, delta: DeltaProfile, cfg: IbConfig,
                    indices=None) -> list[SigmaResult]:
    """Per-sample optimization over ``ds`` in fixed-size chunks.

    Sample ``i`` always draws from its own stream keyed by ``(cfg.seed, i)``.
    """
    cfg.validate()
    _require_frozen(model)
    indices = np.arange(len(ds)) if indices is None else np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise DataError("no samples to analyse")
    z_all = encode(model, ds.inputs[indices])
    y_all = ds.labels[indices]
    if cfg.mode == "shared":
        rngs = [_sample_rng(cfg, int(i)) for i in indices]
        res = _optimize(model, z_all, y_all, delta.delta, cfg, rngs, indices, shared=True)
        return [SigmaResult(res[0].sigma, res[0].loss_trace, -1)]
    out: list[SigmaResult] = []
    for start in range(0, indices.size, cfg.chunk_size):
        sl = slice(start, start + cfg.chunk_size)
        rngs = [_sample_rng(cfg, int(i)) for i in indices[sl]]
        out.extend(_optimize(model, z_all[sl], y_all[sl], delta.delta, cfg, rngs, indices[sl]))
    return out


def compute_mask(sigma_results: list[SigmaResult], delta: DeltaProfile, cfg: IbConfig | None = None) -> RobustnessMask:
    if not sigma_results:
        raise DataError("need at least one sigma result")
    sig = np.stack([np.asarray(s.sigma, dtype=np.float64) for s in sigma_results])
    if sig.shape[1] != delta.delta.size:
        raise ShapeError("sigma length does not match delta length")
    if np.any(sig < 0):
        raise DomainError("sigma entries must be non-negative")
    per_unit = sig.sum(axis=0)
    r = per_unit / per_unit.sum()
    sms = np.mean(sig * sig, axis=0)
    return RobustnessMask(r, sms, sms > delta.R, delta, len(sigma_results),
                          cfg.beta if cfg else None, cfg.kl_sign if cfg else None, cfg.seed if cfg else None)


def analysis_indices(n: int, cfg: IbConfig) -> np.ndarray:
    """First ``cfg.num_samples`` of a seeded permutation, returned in ascending order."""
    if cfg.num_samples is None or cfg.num_samples >= n:
        return np.arange(n)
    perm = Rng(cfg.seed, stream_id=0x616E61).permutation(n)
    return np.sort(perm[:cfg.num_samples])


def generate_mask(model: TscModel, ds: Dataset, cfg: IbConfig | None = None) -> RobustnessMask:
    """Full mask pipeline: dispersion estimate, per-sample noise optimization, pooling."""
    cfg = (cfg or IbConfig()).validate()
    delta = estimate_delta(model, ds, cfg.delta_floor)
    results = optimize_sigmas(model, ds, delta, cfg, analysis_indices(len(ds), cfg))
    return compute_mask(results, delta, cfg)


def rank_units(mask: RobustnessMask) -> np.ndarray:
    """Unit indices by descending score; equal scores keep ascending index."""
    return np.argsort(-np.asarray(mask.r), kind="stable")


# --- JSON ----------------------------------------------------------------------

def mask_to_dict(mask: RobustnessMask) -> dict:
    return {
        "m": mask.m,
        "beta": mask.beta,
        "kl_sign": mask.kl_sign,
        "delta": [float(v) for v in mask.delta_profile.delta],
        "R": float(mask.delta_profile.R),
        "sigma_mean_sq": [float(v) for v in mask.sigma_mean_sq],
        "r": [float(v) for v in mask.r],
        "robust_flags": [bool(v) for v in mask.robust_flags],
        "num_samples": int(mask.num_samples),
        "seed": mask.seed,
    }


def mask_to_json(mask: RobustnessMask) -> str:
    return json.dumps(mask_to_dict(mask), indent=1) + "\n"


def mask_from_dict(d: dict) -> RobustnessMask:
    try:
        r = np.asarray(d["r"], dtype=np.float64)
        delta = np.asarray(d["delta"], dtype=np.float64)
        sms = np.asarray(d["sigma_mean_sq"], dtype=np.float64)
        flags = np.asarray(d["robust_flags"], dtype=bool)
        m = int(d["m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed mask record: {exc}") from None
    if not (r.size == delta.size == sms.size == flags.size == m):
        raise FormatError("mask arrays must all have length m")
    if np.any(r < 0) or abs(r.sum() - 1.0) > 1e-9:
        raise FormatError(f"mask scores must be non-negative and sum to 1 (sum = {r.sum()!r})")
    return RobustnessMask(r, sms, flags, DeltaProfile(delta, float(d["R"])), int(d["num_samples"]),
                          d.get("beta"), d.get("kl_sign"), d.get("seed"))


def save_mask(mask: RobustnessMask, path) -> str:
    text = mask_to_json(mask)
    Path(path).write_text(text)
    return text


def load_mask(path) -> RobustnessMask:
    try:
        d = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from None
    return mask_from_dict(d)
