"""Training loop, inference and checkpoints."""
from __future__ import annotations

import copy
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import labels as L
from ..errors import ConfigError, FormatError, TrainingError
from ..metrics import confusion, macro_f1
from .model import EchoClassifier, ModelConfig, build_model
from .optim import Adam, cosine_lr, focal_loss_torch, inverse_frequency_alpha, softmax

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr0: float = 1e-2
    lr_min: float = 0.0
    epochs: int = 30
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gamma: float = 2.0
    alpha: list | None = None  # None: inverse class frequency of the training split
    val_fraction: float = 0.1
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")


@dataclass
class EpochLog:
    epoch: int
    loss: float
    lr: float
    val_macro_f1: float | None
    n_batches: int


@dataclass
class TrainResult:
    model: EchoClassifier
    log: list = field(default_factory=list)
    best_epoch: int = 0
    alpha: list | None = None


@dataclass
class Prediction:
    start_time_s: float
    probs: np.ndarray
    label: str


def configure_torch(threads: int = 1, deterministic: bool = True) -> None:
    torch.set_num_threads(max(1, int(threads)))
    torch.use_deterministic_algorithms(deterministic)
    # Filling fresh buffers with NaN is a debugging aid, not needed for determinism.
    torch.utils.deterministic.fill_uninitialized_memory = False


def batches(n: int, batch_size: int) -> list[slice]:
    """Contiguous batch slices; the last partial batch is kept.

    A trailing batch of one sample is folded into its predecessor because
    batch normalisation cannot train on a single example.
    """
    edges = list(range(0, n, batch_size)) + [n]
    out = [slice(a, b) for a, b in zip(edges, edges[1:])]
    if len(out) > 1 and out[-1].stop - out[-1].start == 1:
        out[-2:] = [slice(out[-2].start, n)]
    return out


def validation_split(samples, fraction: float, seed: int):
    """Hold out one seeded contiguous block of windows per group.

    Contiguous blocks keep overlapping neighbours of a validation window out
    of the training side as far as possible.
    """
    if fraction <= 0:
        return list(samples), []
    by_group = {}
    for i, s in enumerate(samples):
        by_group.setdefault(s.group, []).append(i)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    val_idx = set()
    for g in sorted(by_group):
        idx = sorted(by_group[g], key=lambda i: samples[i].start_time_s)
        k = int(round(fraction * len(idx)))
        if k == 0 or k >= len(idx):
            continue
        lo = int(rng.integers(0, len(idx) - k + 1))
        val_idx.update(idx[lo:lo + k])
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val


def _stack(samples) -> torch.Tensor:
    x = torch.from_numpy(np.stack([np.asarray(s.tensor, dtype=np.float32) for s in samples]))
    return x.contiguous(memory_format=torch.channels_last)


def _check_shape(model: EchoClassifier, shape):
    expected = tuple(model.config.input_shape)
    if tuple(shape) != expected:
        raise ValueError(f"window shape {tuple(shape)} does not match model input {expected}")


def train(train_samples, model_cfg: ModelConfig | None = None, train_cfg: TrainConfig | None = None,
          val_samples=None, on_epoch=None) -> TrainResult:
    """Fit a classifier with focal loss, Adam and a per-epoch cosine schedule.

    When ``val_samples`` is None a validation block is carved out of the
    training windows. The returned model carries the weights of the epoch
    with the best validation macro-F1 (the last epoch without validation).
    """
    train_cfg = train_cfg or TrainConfig()
    train_samples = list(train_samples)
    if not train_samples:
        raise ValueError("training split is empty")
    if model_cfg is None:
        model_cfg = ModelConfig(input_shape=train_samples[0].tensor.shape)
    configure_torch(train_cfg.threads)
    torch.manual_seed(train_cfg.seed)

    if val_samples is None:
        train_samples, val_samples = validation_split(train_samples, train_cfg.val_fraction,
                                                      train_cfg.seed)
    model = build_model(model_cfg, train_cfg.seed)
    for s in train_samples[:1]:
        _check_shape(model, s.tensor.shape)

    x = _stack(train_samples)
    y = torch.tensor([s.label_index for s in train_samples], dtype=torch.int64)
    # Median magnitude sits near the noise floor, so asinh works in its
    # logarithmic regime for echoes and gain differences become offsets.
    scale = float(x.abs().flatten()[:: max(1, x.numel() // 2_000_000)].median())
    model.input_scale.fill_(scale if scale > 0 and math.isfinite(scale) else 1.0)
    alpha_np = (np.asarray(train_cfg.alpha, dtype=np.float64) if train_cfg.alpha is not None
                else inverse_frequency_alpha(y.numpy()))
    alpha = torch.tensor(alpha_np, dtype=torch.float32)

    model = model.to(memory_format=torch.channels_last)
    with torch.no_grad():
        # The input transform has no trainable parameters; apply it once.
        x = model.compress(x).contiguous(memory_format=torch.channels_last)
    opt = Adam(model.parameters(), train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
    rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 11]))
    history = []
    best_state, best_f1, best_epoch = None, -1.0, 0
    n = len(train_samples)
    for epoch in range(train_cfg.epochs):
        lr = cosine_lr(epoch, train_cfg.lr0, train_cfg.epochs, train_cfg.lr_min)
        order = torch.from_numpy(rng.permutation(n))
        model.train()
        total = 0.0
        parts = batches(n, train_cfg.batch_size)
        for sl in parts:
            idx = order[sl]
            logits = model.classify(x[idx])
            loss = focal_loss_torch(logits, y[idx], train_cfg.gamma, alpha)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
            total += loss.item() * len(idx)
        val_f1 = None
        if val_samples:
            preds = predict(model, val_samples)
            cm = confusion([s.label for s in val_samples], [p.label for p in preds])
            val_f1 = macro_f1(cm).macro_f1
        entry = EpochLog(epoch, total / n, lr, val_f1, len(parts))
        history.append(entry)
        log.info("epoch %d loss %.5f lr %.3g val_f1 %s", epoch, entry.loss, lr, val_f1)
        if on_epoch is not None:
            on_epoch(entry)
        score = val_f1 if val_f1 is not None else float(epoch)
        if score > best_f1:
            best_f1, best_epoch = score, epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, history, best_epoch, alpha_np.tolist())


@torch.no_grad()
def forward(model: EchoClassifier, window) -> np.ndarray:
    """Class probabilities for a single window (evaluation mode)."""
    window = np.asarray(window, dtype=np.float32)
    _check_shape(model, window.shape)
    model.eval()
    logits = model(torch.from_numpy(window)[None])
    return softmax(logits.double().numpy())[0]


@torch.no_grad()
def predict(model: EchoClassifier, samples, batch_size: int = 128) -> list[Prediction]:
    """Order-preserving batch inference over windows or labeled samples."""
    samples = list(samples)
    if not samples:
        return []
    for s in samples:
        _check_shape(model, np.shape(s.tensor))
    was_training = model.training
    model.eval()
    out = []
    for sl in batches(len(samples), batch_size):
        chunk = samples[sl]
        probs = softmax(model(_stack(chunk)).double().numpy())
        for s, p in zip(chunk, probs):
            out.append(Prediction(float(s.start_time_s), p, L.CLASSES[int(np.argmax(p))]))
    model.train(was_training)
    return out


def log_lines(history) -> str:
    return "".join(json.dumps(asdict(e), sort_keys=True) + "\n" for e in history)


# -- checkpoints -----------------------------------------------------------------

_CKPT = struct.Struct("<4sHxxI")
_DTYPES = {torch.float32: "<f4", torch.int64: "<i8"}


def save_checkpoint(path, model: EchoClassifier, extra: dict | None = None) -> None:
    """MSMD: magic, version, JSON block length, JSON block, raw tensors."""
    state = model.state_dict()
    tensors = []
    for name, t in state.items():
        if t.dtype not in _DTYPES:
            raise FormatError(f"cannot store tensor {name} of dtype {t.dtype}")
        tensors.append({"name": name, "dtype": _DTYPES[t.dtype], "shape": list(t.shape)})
    meta = json.dumps({"model": model.config.to_dict(), "tensors": tensors, "extra": extra or {}},
                      sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_CKPT.pack(b"MSMD", 1, len(meta)))
        f.write(meta)
        for t in state.values():
            arr = t.detach().contiguous().numpy()
            f.write(arr.astype(_DTYPES[t.dtype], copy=False).tobytes())


def load_checkpoint(path) -> tuple[EchoClassifier, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT.size:
        raise FormatError(f"{path}: file too short for a checkpoint")
    magic, version, meta_len = _CKPT.unpack_from(raw)
    if magic != b"MSMD" or version != 1:
        raise FormatError(f"{path}: not an MSMD v1 checkpoint")
    try:
        meta = json.loads(raw[_CKPT.size:_CKPT.size + meta_len])
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: corrupt checkpoint metadata") from e
    model = EchoClassifier(ModelConfig(**meta["model"]))
    pos = _CKPT.size + meta_len
    state = {}
    for spec in meta["tensors"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * dt.itemsize
        if pos + nbytes > len(raw):
            raise FormatError(f"{path}: truncated tensor {spec['name']}")
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=pos).reshape(spec["shape"])
        state[spec["name"]] = torch.from_numpy(arr.copy())
        pos += nbytes
    model.load_state_dict(state)
    model.eval()
    return model, meta.get("extra", {})
