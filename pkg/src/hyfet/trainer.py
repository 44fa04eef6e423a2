"""Adam optimization, the training loop, and deterministic checkpoints.

Checkpoints use a purpose-built binary layout instead of an archive
format so that two runs with the same seed produce byte-identical files
(zip containers embed timestamps):

``magic | u64 header length | header JSON | parameter blobs``

The header JSON is serialized with sorted keys and no whitespace; blobs
are raw little-endian float64 in sorted parameter-name order, each
parameter followed by its Adam first/second-moment buffers when optimizer
state is included. Training logs are CSV with one row per epoch and
floats rendered by ``repr``, so they are byte-identical across runs too.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from hyfet import autodiff as ad
from hyfet.typer import Metrics

CHECKPOINT_MAGIC = b"HYFETCK\x01"
LOG_HEADER = "epoch,loss,strict,macro_f1,micro_f1"


class TrainingError(RuntimeError):
    """Raised when optimization hits a non-finite loss or gradient."""


class Adam:
    """Adam with bias correction; parameters update in sorted-name order."""

    def __init__(
        self,
        params: dict[str, ad.Tensor],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(sorted(params.items()))
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient in parameter {name!r} at step {self.t}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    metrics: Metrics

    def csv_row(self) -> str:
        m = self.metrics
        return f"{self.epoch},{self.loss!r},{m.strict!r},{m.macro_f1!r},{m.micro_f1!r}"


class Trainer:
    """Epoch loop driving a loss closure over shuffled mention batches."""

    def __init__(self, adam: Adam, seed: int = 0):
        self.adam = adam
        self.rng = np.random.default_rng(seed)

    def fit(
        self,
        loss_fn: Callable[[np.ndarray], ad.Tensor],
        eval_fn: Callable[[], Metrics],
        n_train: int,
        epochs: int,
        batch_size: int,
        log_path=None,
        start_epoch: int = 0,
    ) -> list[EpochStats]:
        """Run `epochs` epochs; `loss_fn` maps train indices to a scalar loss.

        When `batch_size` covers the whole train split the epoch is one
        full-batch step over indices in natural order; otherwise indices
        are reshuffled every epoch. A per-epoch CSV row (dev metrics from
        `eval_fn`) goes to `log_path` as soon as the epoch ends.
        """
        history: list[EpochStats] = []
        log = open(log_path, "a" if start_epoch else "w", encoding="utf-8") if log_path else None
        try:
            if log and not start_epoch:
                log.write(LOG_HEADER + "\n")
                log.flush()
            for epoch in range(start_epoch + 1, start_epoch + epochs + 1):
                if batch_size >= n_train:
                    order = np.arange(n_train)
                else:
                    order = self.rng.permutation(n_train)
                total = 0.0
                for lo in range(0, n_train, batch_size):
                    idx = order[lo : lo + batch_size]
                    self.adam.zero_grad()
                    loss = loss_fn(idx)
                    value = float(loss.item())
                    if not np.isfinite(value):
                        raise TrainingError(f"non-finite loss at epoch {epoch}")
                    loss.backward()
                    self.adam.step()
                    total += value
                stats = EpochStats(epoch, total, eval_fn())
                history.append(stats)
                if log:
                    log.write(stats.csv_row() + "\n")
                    log.flush()
        finally:
            if log:
                log.close()
        return history


# -- checkpoints ---------------------------------------------------------------


@dataclass
class Checkpoint:
    meta: dict
    params: dict[str, np.ndarray]
    adam_t: int | None
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]


def save_checkpoint(path, params: dict[str, ad.Tensor], adam: Adam | None, meta: dict) -> None:
    names = sorted(params)
    header = {
        "version": 1,
        "meta": meta,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "adam_t": None if adam is None else adam.t,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params[n].data, dtype="<f8").tobytes())
            if adam is not None:
                fh.write(np.ascontiguousarray(adam.m[n], dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(adam.v[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise TrainingError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != 1:
            raise TrainingError(f"{path}: unsupported checkpoint version")
        adam_t = header["adam_t"]
        params: dict[str, np.ndarray] = {}
        adam_m: dict[str, np.ndarray] = {}
        adam_v: dict[str, np.ndarray] = {}
        for spec in header["params"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            nbytes = count * 8

            def read_block():
                buf = fh.read(nbytes)
                if len(buf) != nbytes:
                    raise TrainingError(f"{path}: truncated checkpoint")
                return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

            params[spec["name"]] = read_block()
            if adam_t is not None:
                adam_m[spec["name"]] = read_block()
                adam_v[spec["name"]] = read_block()
        trailing = fh.read(1)
        if trailing:
            raise TrainingError(f"{path}: trailing bytes after parameter blobs")
    return Checkpoint(header["meta"], params, adam_t, adam_m, adam_v)


def restore_params(params: dict[str, ad.Tensor], checkpoint: Checkpoint) -> None:
    """Copy checkpoint arrays into live tensors, shape-checked by name."""
    missing = sorted(set(params) ^ set(checkpoint.params))
    if missing:
        raise TrainingError(f"checkpoint/model parameter mismatch: {missing}")
    for name, p in params.items():
        arr = checkpoint.params[name]
        if arr.shape != p.shape:
            raise TrainingError(
                f"parameter {name!r}: checkpoint shape {arr.shape} != model shape {p.shape}"
            )
        p.data = arr.copy()


def restore_adam(adam: Adam, checkpoint: Checkpoint) -> None:
    if checkpoint.adam_t is None:
        raise TrainingError("checkpoint carries no optimizer state")
    adam.t = int(checkpoint.adam_t)
    for name in adam.params:
        adam.m[name] = checkpoint.adam_m[name].copy()
        adam.v[name] = checkpoint.adam_v[name].copy()
