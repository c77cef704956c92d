"""Training regimes and prediction for the window decoder.

Three regimes share one loop skeleton:

* ``train_singular`` — each record's final readout against its window
  label (plain per-window supervision).
* ``train_recurrent`` — every readout past the left buffer against the
  matching truncated-core label; the loss is the mean over the batch
  and all truncation sizes, so one forward pass supervises every core
  prefix at once.
* ``finetune_softxor`` — only the global label is used: the windows of
  a shot are decoded together and their outputs combined by the
  differentiable parity, so the gradient reaches every window through
  the product term.

All loops are deterministic for a fixed seed: shuffling comes from a
dedicated NumPy generator and the model runs on CPU tensors.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from .config import ModelConfig
from .data import WindowRecords
from .losses import bce, soft_xor
from .model import WindowDecoder


@dataclass
class TrainLog:
    """Per-step loss trace plus the settings that produced it."""

    mode: str
    settings: dict
    losses: list = field(default_factory=list)
    seconds: float = 0.0

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(f"mode={self.mode}\n")
            for k in sorted(self.settings):
                fh.write(f"{k}={self.settings[k]}\n")
            fh.write(f"seconds={self.seconds!r}\n")
            for step, loss in enumerate(self.losses):
                fh.write(f"step {step} {loss!r}\n")


def build_model(cfg: ModelConfig, distance: int, seed: int = 0,
                dtype=None) -> WindowDecoder:
    """Seeded construction so runs are reproducible end to end."""
    torch.manual_seed(seed)
    model = WindowDecoder(cfg, distance)
    if dtype is not None:
        model = model.to(dtype)
    return model


def _tensor_batches(n: int, batch_size: int, epochs: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            yield order[lo:lo + batch_size]


def _as_float(x: np.ndarray, model: WindowDecoder) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(x)).to(
        dtype=model.embed.pos.dtype)


def _run(model, mode, settings, batches, step_fn, lr, lr_final, total_steps):
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    log = TrainLog(mode=mode, settings=settings)
    t0 = time.perf_counter()
    model.train()
    for step, idx in enumerate(batches):
        if lr_final is not None and total_steps > 1:
            frac = step / (total_steps - 1)
            for group in opt.param_groups:
                group["lr"] = lr + (lr_final - lr) * min(frac, 1.0)
        opt.zero_grad()
        loss = step_fn(idx)
        loss.backward()
        opt.step()
        log.losses.append(float(loss.detach()))
    log.seconds = time.perf_counter() - t0
    return log


def _common_settings(cfg, distance, epochs, batch_size, lr, lr_final, seed, n):
    return {
        "d": distance, "epochs": epochs, "batch_size": batch_size,
        "lr": lr, "lr_final": lr_final, "seed": seed, "records": n,
        **{f"cfg.{k}": v for k, v in asdict(cfg).items()},
    }


def train_singular(model: WindowDecoder, records: WindowRecords, *,
                   epochs: int = 1, batch_size: int = 64, lr: float = 1e-3,
                   lr_final: float = None, seed: int = 0) -> TrainLog:
    """Final-readout supervision against each record's window label."""
    x = records.tensors
    y = records.label
    n = len(records)
    total = epochs * -(-n // batch_size)

    def step(idx):
        logits = model(_as_float(x[idx], model))
        return bce(torch.sigmoid(logits), torch.from_numpy(y[idx]))

    settings = _common_settings(model.cfg, model.distance, epochs,
                                batch_size, lr, lr_final, seed, n)
    return _run(model, "singular", settings,
                _tensor_batches(n, batch_size, epochs, seed), step,
                lr, lr_final, total)


def train_recurrent(model: WindowDecoder, records: WindowRecords, *,
                    epochs: int = 1, batch_size: int = 64, lr: float = 1e-3,
                    lr_final: float = None, seed: int = 0) -> TrainLog:
    """Supervise every readout past the left buffer with its truncated
    label; needs records loaded together with truncated-core labels."""
    if records.tau_labels is None:
        raise ValueError("recurrent training needs truncated-core labels "
                         "(load shards paired with .wdtl files)")
    x = records.tensors
    y = records.tau_labels
    depth = x.shape[1]
    steps_out = list(range(2 * records.buffer + 1, depth + 1))
    if len(steps_out) != records.core:
        raise ValueError(
            f"depth {depth} with buffer {records.buffer} exposes "
            f"{len(steps_out)} readouts, expected core={records.core}")
    n = len(records)
    total = epochs * -(-n // batch_size)

    def step(idx):
        logits = model(_as_float(x[idx], model), readout_steps=steps_out)
        return bce(torch.sigmoid(logits), torch.from_numpy(y[idx]))

    settings = _common_settings(model.cfg, model.distance, epochs,
                                batch_size, lr, lr_final, seed, n)
    return _run(model, "recurrent", settings,
                _tensor_batches(n, batch_size, epochs, seed), step,
                lr, lr_final, total)


def finetune_softxor(model: WindowDecoder, grouped: np.ndarray,
                     y_global: np.ndarray, *,
                     epochs: int = 1, batch_size: int = 64, lr: float = 1e-4,
                     lr_final: float = None, seed: int = 0) -> TrainLog:
    """End-to-end training from global labels only (per-shot windows
    combined by the differentiable parity)."""
    if grouped.ndim != 5:
        raise ValueError(
            f"expected (shots, m, depth, g, g), got {grouped.shape}")
    shots, m = grouped.shape[:2]
    if y_global.shape != (shots,):
        raise ValueError(
            f"global labels {y_global.shape} do not match {shots} shots")
    total = epochs * -(-shots // batch_size)

    def step(idx):
        x = _as_float(grouped[idx], model)
        b = x.shape[0]
        logits = model(x.reshape(b * m, *x.shape[2:]))
        probs = torch.sigmoid(logits).reshape(b, m)
        return bce(soft_xor(probs), torch.from_numpy(y_global[idx]))

    settings = _common_settings(model.cfg, model.distance, epochs,
                                batch_size, lr, lr_final, seed, shots)
    settings["m"] = m
    return _run(model, "softxor", settings,
                _tensor_batches(shots, batch_size, epochs, seed), step,
                lr, lr_final, total)


def predict(model: WindowDecoder, grouped: np.ndarray,
            batch_size: int = None) -> np.ndarray:
    """Per-window probabilities for grouped shots, shape (shots, m).

    Normalization statistics come from the evaluation batch itself, so
    the default decodes all shots as one batch; pass ``batch_size`` only
    when memory forces chunking (results then depend on the chunking).
    """
    if grouped.ndim != 5:
        raise ValueError(
            f"expected (shots, m, depth, g, g), got {grouped.shape}")
    shots, m = grouped.shape[:2]
    was_training = model.training
    model.eval()
    out = np.empty((shots, m), dtype=np.float64)
    step = shots if batch_size is None else batch_size
    with torch.no_grad():
        for lo in range(0, shots, step):
            x = _as_float(grouped[lo:lo + step], model)
            b = x.shape[0]
            logits = model(x.reshape(b * m, *x.shape[2:]))
            out[lo:lo + b] = torch.sigmoid(logits).reshape(b, m).numpy()
    if was_training:
        model.train()
    return out


def save_checkpoint(path: str, model: WindowDecoder) -> None:
    torch.save({
        "config": asdict(model.cfg),
        "distance": model.distance,
        "state_dict": model.state_dict(),
    }, path)


def load_checkpoint(path: str) -> WindowDecoder:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = WindowDecoder(ModelConfig(**blob["config"]), blob["distance"])
    model.load_state_dict(blob["state_dict"])
    return model
