"""Fully-convolutional keypoint predictor with hand-derived backprop.

The reference network maps a normalized grayscale patch to a stack of
per-class heatmaps (sigmoid-squashed) and per-class offset channels at
1/R resolution:

    3x3 conv (1 -> w1) + ReLU, stride s1
    3x3 conv (w1 -> w2) + ReLU, stride s2
    ...
    1x1 conv (w_last -> 3C)     C heatmap channels + 2C offset channels

The product of the hidden strides must equal the down-sampling rate R.
Convolutions are computed by im2col + matrix product; gradients are
exact (checked against finite differences in the tests). Parameters
live in float32 so checkpoints round-trip bit-identically; a float64
predictor can be built for numeric verification.

Training re-encodes every target at the scheduled kernel width before
each epoch, so early epochs fit wide bumps and later epochs sharpen
toward the final narrow ones. Validation loss is measured against the
same epoch's targets.
"""

from __future__ import annotations

import json
import struct
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .codec import UNIT_PEAK, EncodedTarget, encode_target
from .primitives import Keypoint
from .rng import seed_stream
from .schedule import KernelSchedule, sigma_at, validate as validate_schedule
from .taxonomy import N_TYPES

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"CDSPCKPT"
CHECKPOINT_VERSION = 1

DEFAULT_HIDDEN = ((16, 1), (32, 2), (64, 2), (64, 1))


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, last_finite_loss: float | None):
        self.epoch = epoch
        self.last_finite_loss = last_finite_loss
        tail = (
            f"last finite loss {last_finite_loss:.6g}"
            if last_finite_loss is not None
            else "no finite loss recorded"
        )
        super().__init__(f"training diverged at epoch {epoch}: loss is not finite; {tail}")


class CheckpointError(RuntimeError):
    """Integrity failure while reading a checkpoint."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an unsupported format version."""


@dataclass(frozen=True)
class PredictorConfig:
    """Architecture and training hyperparameters.

    hidden lists the 3x3 stages as (width, stride) pairs; the strides
    must multiply to down_sample so the head emits one cell per R x R
    pixel block.
    """

    patch_size: int = 256
    down_sample: int = 4
    channels: int = N_TYPES
    hidden: tuple[tuple[int, int], ...] = DEFAULT_HIDDEN
    learning_rate: float = 1e-4
    lam: float = 0.1
    epochs: int = 200
    batch_size: int = 8
    rng_seed: int = 0
    predict_offsets: bool = True

    def __post_init__(self) -> None:
        if self.patch_size < 1:
            raise ValueError("patch_size must be positive")
        if self.down_sample < 1:
            raise ValueError("down_sample must be positive")
        if self.patch_size % self.down_sample != 0:
            raise ValueError("patch_size must be divisible by down_sample")
        if self.channels < 1:
            raise ValueError("channels must be positive")
        if not self.hidden:
            raise ValueError("hidden must contain at least one stage")
        stride_product = 1
        for width, stride in self.hidden:
            if width < 1 or stride < 1:
                raise ValueError("hidden widths and strides must be positive")
            stride_product *= stride
        if stride_product != self.down_sample:
            raise ValueError(
                f"hidden strides multiply to {stride_product}, expected down_sample "
                f"{self.down_sample}"
            )
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def cells(self) -> int:
        return self.patch_size // self.down_sample

    @property
    def head_channels(self) -> int:
        return 3 * self.channels


class _Conv:
    """One convolution stage: weight (out, in, k, k), optional ReLU."""

    __slots__ = ("weight", "bias", "stride", "pad", "relu")

    def __init__(self, weight: np.ndarray, bias: np.ndarray, stride: int, pad: int, relu: bool):
        self.weight = weight
        self.bias = bias
        self.stride = stride
        self.pad = pad
        self.relu = relu


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    """Unfold (B, C, H, W) into rows of receptive fields.

    Row order is (batch, out_row, out_col); column order is
    (in_channel, kernel_row, kernel_col), matching weight.reshape(out, -1).
    """
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo, _, _ = win.shape
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b * ho * wo, c * k * k)
    return cols, ho, wo


def _col2im(
    dcols: np.ndarray,
    x_shape: tuple[int, int, int, int],
    k: int,
    stride: int,
    pad: int,
    ho: int,
    wo: int,
) -> np.ndarray:
    """Scatter-add column gradients back to the input layout."""
    b, c, h, w = x_shape
    dxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d6 = dcols.reshape(b, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += d6[
                :, :, :, :, ki, kj
            ]
    if pad:
        return dxp[:, :, pad : pad + h, pad : pad + w]
    return dxp


class Predictor:
    """Parameter container plus forward/backward passes."""

    def __init__(self, config: PredictorConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.epoch = 0
        rng = seed_stream(config.rng_seed, "init")
        self.layers: list[_Conv] = []
        fan_in = 1
        for width, stride in config.hidden:
            std = np.sqrt(2.0 / (fan_in * 9))
            w = rng.normal(0.0, std, size=(width, fan_in, 3, 3)).astype(self.dtype)
            b = np.zeros(width, dtype=self.dtype)
            self.layers.append(_Conv(w, b, stride, 1, relu=True))
            fan_in = width
        # zero head: pre-training heatmaps sit at sigmoid(0) = 0.5 and
        # offsets at 0, a known reference state for the shape tests
        w = np.zeros((config.head_channels, fan_in, 1, 1), dtype=self.dtype)
        b = np.zeros(config.head_channels, dtype=self.dtype)
        self.layers.append(_Conv(w, b, 1, 0, relu=False))

    # ----------------------------------------------------------- params

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out: list[tuple[str, np.ndarray]] = []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            tag = "head" if i == last else f"conv{i}"
            out.append((f"{tag}.weight", layer.weight))
            out.append((f"{tag}.bias", layer.bias))
        return out

    def set_parameters(self, values: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError("parameter count mismatch")
        for (_, current), new in zip(params, values):
            if current.shape != new.shape:
                raise ValueError("parameter shape mismatch")
            current[...] = new.astype(self.dtype)

    @classmethod
    def from_parameters(
        cls,
        config: PredictorConfig,
        values: Sequence[np.ndarray],
        epoch: int = 0,
        dtype=np.float32,
    ) -> "Predictor":
        p = cls(config, dtype=dtype)
        p.set_parameters(values)
        p.epoch = epoch
        return p

    def astype(self, dtype) -> "Predictor":
        """Copy with parameters cast to another float dtype (used by the
        finite-difference checks, which need float64 headroom)."""
        clone = Predictor(self.config, dtype=dtype)
        clone.set_parameters([arr for _, arr in self.parameters()])
        clone.epoch = self.epoch
        return clone

    # ---------------------------------------------------------- forward

    def _forward_batch(self, x: np.ndarray, keep: bool) -> tuple[np.ndarray, list[dict]]:
        caches: list[dict] = []
        cur = x
        for layer in self.layers:
            k = layer.weight.shape[2]
            cols, ho, wo = _im2col(cur, k, layer.stride, layer.pad)
            wmat = layer.weight.reshape(layer.weight.shape[0], -1)
            out = cols @ wmat.T + layer.bias
            out = out.reshape(cur.shape[0], ho, wo, -1).transpose(0, 3, 1, 2)
            cache: dict = {}
            if keep:
                cache = {"cols": cols, "x_shape": cur.shape, "ho": ho, "wo": wo}
            if layer.relu:
                mask = out > 0
                out = out * mask
                if keep:
                    cache["relu_mask"] = mask
            if keep:
                caches.append(cache)
            cur = out
        return cur, caches

    def _backward_batch(self, draw: np.ndarray, caches: list[dict]) -> list[np.ndarray]:
        grads: list[np.ndarray | None] = [None] * (2 * len(self.layers))
        dout = draw
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            cache = caches[i]
            if layer.relu:
                dout = dout * cache["relu_mask"]
            b, cout, ho, wo = dout.shape
            dmat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, cout)
            wmat = layer.weight.reshape(cout, -1)
            grads[2 * i] = (dmat.T @ cache["cols"]).reshape(layer.weight.shape)
            grads[2 * i + 1] = dmat.sum(axis=0)
            if i > 0:
                dcols = dmat @ wmat
                k = layer.weight.shape[2]
                dout = _col2im(
                    dcols, cache["x_shape"], k, layer.stride, layer.pad, cache["ho"], cache["wo"]
                )
        return grads  # type: ignore[return-value]

    def predict_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raw, _ = self._forward_batch(np.asarray(x, dtype=self.dtype), keep=False)
        c = self.config.channels
        return expit(raw[:, :c]), raw[:, c:]


def normalize_patch(raster: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Map a grayscale raster (ink 0, background 255) to floats where
    ink is 1.0 and background 0.0."""
    arr = np.asarray(raster)
    if arr.ndim != 2:
        raise ValueError("raster must be 2-D")
    return ((255.0 - arr.astype(np.float64)) / 255.0).astype(dtype)


def forward(predictor: Predictor, patch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run one patch through the network.

    uint8 patches are normalized (ink 1, background 0); float patches
    are taken as already normalized. Returns (heatmaps (C, h, w),
    offsets (2C, h, w)).
    """
    arr = np.asarray(patch)
    if arr.ndim != 2:
        raise ValueError("patch must be a 2-D array")
    ps = predictor.config.patch_size
    if arr.shape != (ps, ps):
        raise ValueError(f"patch shape {arr.shape} does not match patch_size {ps}")
    if arr.dtype == np.uint8:
        arr = normalize_patch(arr, dtype=predictor.dtype)
    x = arr.astype(predictor.dtype)[None, None]
    heat, off = predictor.predict_batch(x)
    return heat[0], off[0]


# --------------------------------------------------------------- loss


@dataclass(frozen=True)
class LossParts:
    """total = heatmap + lam * offset; offset is the unweighted masked
    mean squared error (0 when the mask is empty)."""

    total: float
    heatmap: float
    offset: float


def _stack_targets(
    targets: Sequence[EncodedTarget], dtype
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    h = np.stack([t.heatmap.values for t in targets]).astype(dtype)
    o = np.stack([t.offsets.values for t in targets]).astype(dtype)
    m = np.stack([t.offsets.mask for t in targets]).astype(dtype)
    return h, o, m


def _batch_loss(
    heat_pred: np.ndarray,
    off_pred: np.ndarray,
    heat_true: np.ndarray,
    off_true: np.ndarray,
    mask: np.ndarray,
    lam: float,
    want_grad: bool,
) -> tuple[LossParts, np.ndarray | None]:
    """Loss over a batch (mean of per-sample losses) and, optionally,
    its gradient with respect to the raw head output."""
    b = heat_pred.shape[0]
    hdiff = heat_pred - heat_true
    heat_term = float(np.mean(hdiff * hdiff))

    # mask channel c supervises offset channels (2c, 2c+1)
    mexp = np.repeat(mask, 2, axis=1)
    odiff = (off_pred - off_true) * mexp
    counts = mask.sum(axis=(1, 2, 3))  # masked cells per sample
    per_sample = (odiff * odiff).sum(axis=(1, 2, 3))
    denom = np.maximum(2.0 * counts, 1.0)
    offset_term = float(np.mean(np.where(counts > 0, per_sample / denom, 0.0)))

    parts = LossParts(heat_term + lam * offset_term, heat_term, offset_term)
    if not want_grad:
        return parts, None

    dheat = (2.0 / hdiff.size) * hdiff
    dz = dheat * heat_pred * (1.0 - heat_pred)  # sigmoid backprop
    scale = np.where(counts > 0, lam * 2.0 / (denom * b), 0.0)
    doff = odiff * scale[:, None, None, None]
    draw = np.concatenate([dz, doff], axis=1).astype(heat_pred.dtype)
    return parts, draw


def loss(
    heat_pred: np.ndarray,
    off_pred: np.ndarray,
    target: EncodedTarget,
    lam: float = 0.1,
) -> LossParts:
    """Single-sample loss against an encoded target."""
    if heat_pred.shape != target.heatmap.values.shape:
        raise ValueError("heatmap shape mismatch")
    if off_pred.shape != target.offsets.values.shape:
        raise ValueError("offset shape mismatch")
    ht, ot, mt = _stack_targets([target], heat_pred.dtype)
    parts, _ = _batch_loss(
        heat_pred[None].astype(heat_pred.dtype),
        off_pred[None].astype(off_pred.dtype),
        ht,
        ot,
        mt,
        lam,
        want_grad=False,
    )
    return parts


def loss_and_gradients(
    predictor: Predictor,
    patches: np.ndarray,
    targets: Sequence[EncodedTarget],
    lam: float,
) -> tuple[LossParts, list[np.ndarray]]:
    """Batch loss plus the gradient for every parameter, in
    parameters() order. Exposed so the finite-difference checks can
    probe exactly what the training step uses."""
    x = np.asarray(patches, dtype=predictor.dtype)
    raw, caches = predictor._forward_batch(x, keep=True)
    c = predictor.config.channels
    heat_pred = expit(raw[:, :c])
    off_pred = raw[:, c:]
    ht, ot, mt = _stack_targets(targets, predictor.dtype)
    parts, draw = _batch_loss(heat_pred, off_pred, ht, ot, mt, lam, want_grad=True)
    grads = predictor._backward_batch(draw, caches)
    return parts, grads


# ------------------------------------------------------------ training


class TrainingSample(Protocol):
    raster: np.ndarray
    keypoints: Sequence[Keypoint]


@dataclass(eq=False)
class TrainReport:
    """Per-epoch trace of a training run.

    Equality ignores wall_clock (timings vary run to run); everything
    else is bit-reproducible for a fixed seed.
    """

    sigmas: tuple[float, ...]
    train_losses: tuple[float, ...]
    val_losses: tuple[float, ...]
    wall_clock: tuple[float, ...]
    checkpoint_id: str
    schedule_variant: str = ""

    def __post_init__(self) -> None:
        n = len(self.sigmas)
        if not (len(self.train_losses) == len(self.val_losses) == len(self.wall_clock) == n):
            raise ValueError("per-epoch fields must have equal lengths")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrainReport):
            return NotImplemented
        return (
            self.sigmas == other.sigmas
            and self.train_losses == other.train_losses
            and self.val_losses == other.val_losses
            and self.checkpoint_id == other.checkpoint_id
            and self.schedule_variant == other.schedule_variant
        )

    @property
    def epochs(self) -> int:
        return len(self.sigmas)


def parameter_digest(predictor: Predictor) -> str:
    """Hex id of the float32 parameter payload."""
    crc = 0
    for _, arr in predictor.parameters():
        crc = zlib.crc32(np.ascontiguousarray(arr, dtype="<f4").tobytes(), crc)
    return f"{crc:08x}"


def _prepare_inputs(
    samples: Sequence[TrainingSample], config: PredictorConfig, dtype
) -> tuple[np.ndarray, list[Sequence[Keypoint]]]:
    ps = config.patch_size
    rasters = []
    keypoints: list[Sequence[Keypoint]] = []
    for i, s in enumerate(samples):
        if s.raster.shape != (ps, ps):
            raise ValueError(
                f"sample {i} raster shape {s.raster.shape} does not match patch_size {ps}"
            )
        rasters.append(normalize_patch(s.raster, dtype=dtype))
        keypoints.append(s.keypoints)
    x = np.stack(rasters)[:, None]
    return x, keypoints


def _encode_epoch_targets(
    keypoints: list[Sequence[Keypoint]],
    sigma: float,
    config: PredictorConfig,
    dtype,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    shape = (config.channels, config.cells, config.cells)
    encoded = [
        encode_target(kps, sigma, shape, config.down_sample, amplitude=UNIT_PEAK, dtype=np.float64)
        for kps in keypoints
    ]
    return _stack_targets(encoded, dtype)


def train(
    predictor: Predictor,
    train_set: Sequence[TrainingSample],
    val_set: Sequence[TrainingSample],
    schedule: KernelSchedule,
    schedule_label: str | None = None,
) -> TrainReport:
    """Optimize the predictor for schedule.total_epochs epochs.

    Epoch t trains and validates against targets rendered at
    sigma_at(schedule, t). Shuffling and initialization draw from
    separate named substreams of config.rng_seed, so two runs with the
    same seed produce equal reports.
    """
    config = predictor.config
    if not train_set:
        raise ValueError("train_set must not be empty")
    if not val_set:
        raise ValueError("val_set must not be empty")
    validate_schedule(schedule)

    x_train, kps_train = _prepare_inputs(train_set, config, predictor.dtype)
    x_val, kps_val = _prepare_inputs(val_set, config, predictor.dtype)

    shuffle_rng = seed_stream(config.rng_seed, "shuffle")
    lam = config.lam if config.predict_offsets else 0.0
    lr = config.learning_rate
    params = [arr for _, arr in predictor.parameters()]
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    adam_t = 0

    n = len(train_set)
    bs = config.batch_size
    sigmas: list[float] = []
    train_losses: list[float] = []
    val_losses: list[float] = []
    clocks: list[float] = []
    last_finite: float | None = None

    for t in range(schedule.total_epochs):
        started = time.perf_counter()
        sigma = sigma_at(schedule, t)
        ht, ot, mt = _encode_epoch_targets(kps_train, sigma, config, predictor.dtype)
        hv, ov, mv = _encode_epoch_targets(kps_val, sigma, config, predictor.dtype)

        order = shuffle_rng.permutation(n)
        epoch_sum = 0.0
        for lo in range(0, n, bs):
            idx = order[lo : lo + bs]
            x = x_train[idx]
            raw, caches = predictor._forward_batch(x, keep=True)
            c = config.channels
            heat_pred = expit(raw[:, :c])
            parts, draw = _batch_loss(
                heat_pred, raw[:, c:], ht[idx], ot[idx], mt[idx], lam, want_grad=True
            )
            if not np.isfinite(parts.total):
                raise TrainingDivergedError(t, last_finite)
            last_finite = parts.total
            epoch_sum += parts.total * len(idx)
            grads = predictor._backward_batch(draw, caches)
            adam_t += 1
            bc1 = 1.0 - ADAM_BETA1**adam_t
            bc2 = 1.0 - ADAM_BETA2**adam_t
            for p, g, m, v in zip(params, grads, adam_m, adam_v):
                m *= ADAM_BETA1
                m += (1.0 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1.0 - ADAM_BETA2) * g * g
                p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)

        val_sum = 0.0
        for lo in range(0, len(val_set), bs):
            sl = slice(lo, min(lo + bs, len(val_set)))
            heat_pred, off_pred = predictor.predict_batch(x_val[sl])
            parts, _ = _batch_loss(
                heat_pred, off_pred, hv[sl], ov[sl], mv[sl], lam, want_grad=False
            )
            val_sum += parts.total * (sl.stop - sl.start)
        val_loss = val_sum / len(val_set)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(t, last_finite)

        predictor.epoch += 1
        sigmas.append(float(sigma))
        train_losses.append(float(epoch_sum / n))
        val_losses.append(float(val_loss))
        clocks.append(time.perf_counter() - started)

    return TrainReport(
        sigmas=tuple(sigmas),
        train_losses=tuple(train_losses),
        val_losses=tuple(val_losses),
        wall_clock=tuple(clocks),
        checkpoint_id=parameter_digest(predictor),
        schedule_variant=schedule_label if schedule_label is not None else schedule.variant,
    )


def write_train_report_csv(report: TrainReport, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        f.write("epoch,sigma,train_loss,val_loss,seconds\n")
        for i in range(report.epochs):
            f.write(
                f"{i},{report.sigmas[i]:.9f},{report.train_losses[i]:.9f},"
                f"{report.val_losses[i]:.9f},{report.wall_clock[i]:.4f}\n"
            )


# ---------------------------------------------------------- checkpoint


def _config_payload(predictor: Predictor) -> bytes:
    cfg = predictor.config
    doc = {
        "patch_size": cfg.patch_size,
        "down_sample": cfg.down_sample,
        "channels": cfg.channels,
        "hidden": [list(stage) for stage in cfg.hidden],
        "learning_rate": cfg.learning_rate,
        "lam": cfg.lam,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "rng_seed": cfg.rng_seed,
        "predict_offsets": cfg.predict_offsets,
        "epoch": predictor.epoch,
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def save_checkpoint(predictor: Predictor, path: str | Path) -> str:
    """Write magic, version, config echo, float32 little-endian
    parameter payload and a trailing CRC-32. Returns the parameter
    digest (the checkpoint id used in TrainReports)."""
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    cfg_bytes = _config_payload(predictor)
    blob += struct.pack("<I", len(cfg_bytes))
    blob += cfg_bytes
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in predictor.parameters()
    )
    blob += struct.pack("<Q", len(payload))
    blob += payload
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    Path(path).write_bytes(bytes(blob))
    return parameter_digest(predictor)


def load_checkpoint(path: str | Path, dtype=np.float32) -> Predictor:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("truncated checkpoint file")
        out = data[pos : pos + n]
        pos += n
        return out

    magic = take(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError("not a predictor checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )
    (cfg_len,) = struct.unpack("<I", take(4))
    cfg_bytes = take(cfg_len)
    (payload_len,) = struct.unpack("<Q", take(8))
    payload = take(payload_len)
    (crc_stored,) = struct.unpack("<I", take(4))
    if pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    if zlib.crc32(data[:-4]) != crc_stored:
        raise CheckpointError("checkpoint checksum mismatch")

    try:
        doc = json.loads(cfg_bytes.decode("utf-8"))
        config = PredictorConfig(
            patch_size=doc["patch_size"],
            down_sample=doc["down_sample"],
            channels=doc["channels"],
            hidden=tuple(tuple(stage) for stage in doc["hidden"]),
            learning_rate=doc["learning_rate"],
            lam=doc["lam"],
            epochs=doc["epochs"],
            batch_size=doc["batch_size"],
            rng_seed=doc["rng_seed"],
            predict_offsets=doc["predict_offsets"],
        )
        epoch = int(doc["epoch"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"invalid checkpoint config block: {exc}") from exc

    probe = Predictor(config, dtype=dtype)
    shapes = [arr.shape for _, arr in probe.parameters()]
    expected = sum(int(np.prod(s)) for s in shapes) * 4
    if payload_len != expected:
        raise CheckpointError(
            f"parameter payload holds {payload_len} bytes, architecture needs {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    values = []
    at = 0
    for shape in shapes:
        size = int(np.prod(shape))
        values.append(flat[at : at + size].reshape(shape))
        at += size
    return Predictor.from_parameters(config, values, epoch=epoch, dtype=dtype)
