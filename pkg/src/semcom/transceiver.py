"""Encoder/decoder pair trained jointly through an AWGN channel, then frozen."""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .errors import (ConfigError, CorruptionError, DivergenceError, FormatError,
                     FrozenModelError, ShapeError, VersionError)
from .nn_core import (Network, NetworkSpec, Rng, Velocity, backward, forward,
                      sgd_step, softmax_cross_entropy)

log = logging.getLogger(__name__)

MODEL_MAGIC = b"SEMCOMTM"
FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    m: int = 32
    encoder_hidden: list[int] = field(default_factory=lambda: [64])
    decoder_hidden: list[int] = field(default_factory=lambda: [64, 32])
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.02
    momentum: float = 0.9
    train_snr_db: float = 10.0
    seed: int = 0
    power_ema: float = 0.9
    normalize_power: bool = True

    def validate(self):
        if self.m < 1:
            raise ConfigError("transceiver.m must be >= 1")
        if self.epochs < 0:
            raise ConfigError("transceiver.epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("transceiver.batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigError("transceiver.lr must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("transceiver.momentum must lie in [0, 1)")
        if not 0.0 <= self.power_ema < 1.0:
            raise ConfigError("transceiver.power_ema must lie in [0, 1)")
        return self


@dataclass(eq=False)
class TscModel:
    encoder: Network
    decoder: Network
    train_snr_db: float
    signal_power: float
    frozen: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.encoder.output_dim != self.decoder.input_dim:
            raise ShapeError("encoder output dim must equal decoder input dim")
        if self.frozen:
            self.freeze()

    @property
    def m(self) -> int:
        return self.encoder.output_dim

    @property
    def num_classes(self) -> int:
        return self.decoder.output_dim

    def freeze(self) -> "TscModel":
        if not self.signal_power > 0:
            raise ConfigError("signal_power must be > 0 before freezing")
        self.encoder.freeze()
        self.decoder.freeze()
        self.frozen = True
        return self

    def __setattr__(self, name, value):
        if getattr(self, "frozen", False) and name in ("encoder", "decoder", "signal_power", "train_snr_db"):
            raise FrozenModelError(f"cannot set {name} on a frozen model")
        super().__setattr__(name, value)


def _require_frozen(model: TscModel):
    if not model.frozen:
        raise FrozenModelError("model must be frozen before use")


def build_networks(input_dim: int, num_classes: int, cfg: TrainConfig, rng: Rng) -> tuple[Network, Network]:
    enc_dims = [input_dim, *cfg.encoder_hidden, cfg.m]
    dec_dims = [cfg.m, *cfg.decoder_hidden, num_classes]
    enc = Network.init(NetworkSpec(tuple(enc_dims), "relu", "feature"), rng)
    dec = Network.init(NetworkSpec(tuple(dec_dims), "relu", "linear_logits"), rng)
    return enc, dec


def train(ds: Dataset, cfg: TrainConfig, num_classes: int | None = None) -> TscModel:
    """Jointly train encoder and decoder through AWGN at ``cfg.train_snr_db``.

    The channel noise std follows an exponential moving average of the batch
    feature power, so the SNR stays calibrated while the encoder scale drifts.
    """
    cfg.validate()
    num_classes = num_classes or ds.num_classes
    if len(ds) == 0:
        raise ConfigError("cannot train on an empty dataset")
    if ds.labels.max() >= num_classes:
        raise ConfigError("dataset labels exceed the decoder's class count")
    root = Rng(cfg.seed, stream_id=0x747278)
    enc, dec = build_networks(ds.dim, num_classes, cfg, root.spawn(0))
    shuffle_rng, noise_rng = root.spawn(1), root.spawn(2)
    ve, vd = Velocity.zeros_like(enc), Velocity.zeros_like(dec)
    snr_lin = 10.0 ** (-cfg.train_snr_db / 10.0)
    power = None
    n = len(ds)
    # overflow on a diverging run is reported through DivergenceError below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            perm = shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                xb, yb = ds.inputs[idx], ds.labels[idx]
                z, cache_e = forward(enc, xb)
                batch_power = float(np.mean(z * z))
                power = batch_power if power is None else cfg.power_ema * power + (1 - cfg.power_ema) * batch_power
                std = np.sqrt(max(power, 1e-12) * snr_lin)
                z_noisy = z + std * noise_rng.normal(z.shape)
                logits, cache_d = forward(dec, z_noisy)
                loss, dlogits = softmax_cross_entropy(logits, yb)
                batch_loss = float(np.mean(loss))
                if not np.isfinite(batch_loss):
                    raise DivergenceError(f"non-finite training loss at epoch {epoch}")
                total += batch_loss * len(idx)
                gd = backward(dec, cache_d, dlogits / len(idx))
                ge = backward(enc, cache_e, gd.input_grad)
                sgd_step(dec, gd, cfg.lr, cfg.momentum, vd)
                sgd_step(enc, ge, cfg.lr, cfg.momentum, ve)
            log.debug("epoch %d loss %.5f", epoch, total / n)
    z_all = forward(enc, ds.inputs)[0]
    signal_power = float(np.mean(z_all * z_all))
    if not np.isfinite(signal_power):
        raise DivergenceError(f"non-finite encoder output after epoch {cfg.epochs - 1}")
    if cfg.normalize_power and cfg.epochs > 0 and signal_power > 0:
        enc, dec = normalize_feature_power(enc, dec, signal_power)
        z_all = forward(enc, ds.inputs)[0]
        signal_power = float(np.mean(z_all * z_all))
    if signal_power <= 0:
        signal_power = 1e-12
    meta = {"seed": cfg.seed, "dataset": ds.name, "train_config": asdict(cfg)}
    return TscModel(enc, dec, float(cfg.train_snr_db), signal_power, frozen=True, metadata=meta)


def normalize_feature_power(enc: Network, dec: Network, power: float) -> tuple[Network, Network]:
    """Rescale features to unit mean power without changing the end-to-end map.

    The encoder's last layer is divided by ``sqrt(power)`` and the decoder's
    first weight matrix multiplied by it.  The artificial-noise search starts
    from a fixed absolute std (softplus(0)), so the feature scale must be pinned.
    """
    c = np.sqrt(power)
    ew = [w.copy() for w in enc.weights]
    eb = [b.copy() for b in enc.biases]
    ew[-1] /= c
    eb[-1] /= c
    dw = [w.copy() for w in dec.weights]
    dw[0] *= c
    return (Network(enc.spec, ew, eb),
            Network(dec.spec, dw, [b.copy() for b in dec.biases]))


def encode(model: TscModel, x) -> np.ndarray:
    _require_frozen(model)
    return forward(model.encoder, x)[0]


def decode(model: TscModel, z_hat) -> tuple[np.ndarray, np.ndarray | int]:
    """Logits and argmax prediction; ``np.argmax`` resolves ties to the lowest index."""
    _require_frozen(model)
    z_hat = np.asarray(z_hat, dtype=np.float64)
    if z_hat.shape[-1] != model.m:
        raise ShapeError(f"feature block length {z_hat.shape[-1]} != m = {model.m}")
    logits = forward(model.decoder, z_hat)[0]
    pred = np.argmax(logits, axis=-1)
    return logits, (int(pred) if logits.ndim == 1 else pred)


def evaluate_accuracy(model: TscModel, ds: Dataset, noise_std, rng: Rng | None = None,
                      features: np.ndarray | None = None) -> float:
    """Accuracy after adding per-unit Gaussian noise (scalar or length-m std) to the features."""
    _require_frozen(model)
    if len(ds) == 0:
        return float("nan")
    z = encode(model, ds.inputs) if features is None else features
    std = np.broadcast_to(np.asarray(noise_std, dtype=np.float64), (model.m,))
    if np.any(std < 0):
        raise ShapeError("noise std must be non-negative")
    if np.any(std > 0):
        if rng is None:
            raise ConfigError("an rng is required for noisy evaluation")
        z = z + std * rng.normal(z.shape)
    _, pred = decode(model, z)
    return float(np.mean(pred == ds.labels))


# --- serialization -------------------------------------------------------------

def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def model_to_bytes(model: TscModel) -> bytes:
    _require_frozen(model)
    header = {
        "format_version": FORMAT_VERSION,
        "m": model.m,
        "layer_dims": {"encoder": list(model.encoder.spec.layer_dims),
                       "decoder": list(model.decoder.spec.layer_dims)},
        "activations": {"encoder": list(model.encoder.spec.activation),
                        "decoder": list(model.decoder.spec.activation)},
        "train_snr_db": model.train_snr_db,
        "signal_power": model.signal_power,
        "seed": model.metadata.get("seed"),
        "metadata": model.metadata,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    params = [*model.encoder.parameters(), *model.decoder.parameters()]
    payload = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in params)
    body = MODEL_MAGIC + struct.pack("<II", FORMAT_VERSION, len(hbytes)) + hbytes + payload
    return body + _checksum(body)


def model_from_bytes(raw: bytes) -> TscModel:
    if len(raw) < len(MODEL_MAGIC) + 16:
        raise CorruptionError("model file is truncated")
    if raw[:8] != MODEL_MAGIC:
        raise FormatError("not a model file (bad magic)")
    body, trailer = raw[:-8], raw[-8:]
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != FORMAT_VERSION:
        raise VersionError(f"model format version {version}, this build reads {FORMAT_VERSION}")
    if _checksum(body) != trailer:
        raise CorruptionError("model checksum mismatch")
    try:
        header = json.loads(raw[16:16 + hlen])
    except ValueError as exc:
        raise CorruptionError(f"unreadable model header: {exc}") from None
    payload = np.frombuffer(body[16 + hlen:], dtype="<f8")
    nets = []
    offset = 0
    for part in ("encoder", "decoder"):
        dims = header["layer_dims"][part]
        head = "feature" if part == "encoder" else "linear_logits"
        spec = NetworkSpec(tuple(dims), tuple(header["activations"][part]), head)
        ws, bs = [], []
        for a, b in zip(dims[:-1], dims[1:]):
            if offset + a * b + b > payload.size:
                raise CorruptionError("parameter payload shorter than the header declares")
            ws.append(payload[offset:offset + a * b].reshape(a, b).copy())
            offset += a * b
            bs.append(payload[offset:offset + b].copy())
            offset += b
        nets.append(Network(spec, ws, bs))
    if offset != payload.size:
        raise CorruptionError("parameter payload longer than the header declares")
    return TscModel(nets[0], nets[1], float(header["train_snr_db"]), float(header["signal_power"]),
                    frozen=True, metadata=header.get("metadata", {}))


def save(model: TscModel, path) -> bytes:
    data = model_to_bytes(model)
    Path(path).write_bytes(data)
    return data


def load(path) -> TscModel:
    return model_from_bytes(Path(path).read_bytes())


def model_checksum(model: TscModel) -> str:
    return hashlib.sha256(model_to_bytes(model)).hexdigest()
