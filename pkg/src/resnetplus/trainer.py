"""Training loop: SGD with momentum, per-epoch cosine schedule with warm
restarts, exponential moving average of weights, and best-checkpoint
selection on validation accuracy.

Determinism: two runs with the same TrainConfig, manifest, and model seed
produce byte-identical history CSVs and checkpoints.  Everything random is
keyed off explicit seeds; the loop itself never consults wall-clock state
except for latency reporting, which stays out of the deterministic outputs.
"""

from __future__ import annotations

import time
import warnings
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from math import cos, log, pi
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import cross_entropy  # noqa: F401  (canonical loss lives here too)
from .checkpoint import save_checkpoint
from .data import Dataset, Manifest, batch_iter
from .model import Model


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    lr0: float = 0.01
    t_max: int = 40
    eta_min: float = 1e-6
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 200
    ema_decay: float = 0.995
    seed: int = 0
    eval_with_ema: bool = True
    no_restart: bool = False
    workers: int | None = None

    def validate(self) -> None:
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if not 0 <= self.eta_min <= self.lr0:
            raise ValueError(f"eta_min must lie in [0, lr0], got {self.eta_min}")
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 <= self.ema_decay < 1:
            raise ValueError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    def to_dict(self) -> dict:
        return asdict(self)


def cosine_lr(epoch: int, lr0: float = 0.01, t_max: int = 40,
              eta_min: float = 1e-6, no_restart: bool = False) -> float:
    """Cosine annealing by epoch.  The schedule restarts every t_max epochs
    unless no_restart, in which case it parks at eta_min."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    if no_restart:
        if epoch >= t_max:
            return eta_min
        t = epoch
    else:
        t = epoch % t_max
    if t == 0:
        return lr0
    return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + cos(pi * t / t_max))


def sgd_step(named_params, velocities: dict, lr: float, momentum: float) -> None:
    """Momentum SGD: v <- momentum * v + g; w <- w - lr * v."""
    for name, p in named_params:
        if p.grad is None:
            continue
        v = velocities.get(name)
        if v is None:
            v = np.zeros_like(p.value)
        v = momentum * v + p.grad
        velocities[name] = v
        p.value = p.value - lr * v


class EmaState:
    """Per-step exponential moving average of the raw parameters.

    shadow <- decay * shadow + (1 - decay) * param, no bias correction.
    Batch-norm running statistics live on the model and are shared, so only
    true parameters are shadowed.
    """

    def __init__(self, named_params, decay: float):
        if not 0 <= decay < 1:
            raise ValueError(f"decay must lie in [0, 1), got {decay}")
        self.decay = decay
        self.shadows = {name: p.value.copy() for name, p in named_params}

    def update(self, named_params) -> None:
        d = self.decay
        for name, p in named_params:
            s = self.shadows[name]
            self.shadows[name] = d * s + (1.0 - d) * p.value

    @contextmanager
    def applied(self, model: Model):
        """Temporarily swap the model's parameters for the EMA shadows."""
        named = dict(model.named_parameters())
        saved = {name: named[name].value for name in self.shadows}
        for name, shadow in self.shadows.items():
            named[name].value = shadow
        try:
            yield model
        finally:
            for name, value in saved.items():
                named[name].value = value


@dataclass
class EvalResult:
    probs: np.ndarray          # (N, K) float64 softmax outputs
    labels: np.ndarray         # (N,) int64
    accuracy: float
    loss: float                # mean cross entropy
    latency_mean: float        # seconds per sample, forward only
    latency_std: float

    @property
    def predictions(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)


def _softmax64(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def evaluate(model: Model, dataset: Dataset, *, input_size: int,
             mean, std, batch_size: int = 16,
             workers: int | None = None) -> EvalResult:
    """Deterministic eval-mode pass; gradients are never recorded."""
    probs_parts, label_parts, per_sample_times = [], [], []
    for x, y in batch_iter(dataset, batch_size, input_size=input_size,
                           mean=mean, std=std, train=False, workers=workers):
        with ad.no_grad():
            t0 = time.perf_counter()
            logits = model.forward(ad.as_variable(x), training=False)
            elapsed = time.perf_counter() - t0
        per_sample_times.append(elapsed / x.shape[0])
        probs_parts.append(_softmax64(logits.value))
        label_parts.append(y)
    probs = np.concatenate(probs_parts, axis=0)
    labels = np.concatenate(label_parts, axis=0)
    picked = probs[np.arange(len(labels)), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    acc = float((np.argmax(probs, axis=1) == labels).mean())
    times = np.asarray(per_sample_times)
    return EvalResult(probs=probs, labels=labels, accuracy=acc, loss=loss,
                      latency_mean=float(times.mean()),
                      latency_std=float(times.std()))


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)   # (epoch, lr, train_loss, val_acc)
    train_accs: list = field(default_factory=list)
    first_loss: float = float("nan")
    num_classes: int = 0
    best_epoch: int = -1
    best_val_acc: float = -1.0
    final_train_acc: float = float("nan")
    checkpoint_path: str | None = None
    stopped_early: bool = False
    seconds: float = 0.0

    def history_csv(self) -> str:
        lines = ["epoch,lr,train_loss,val_acc"]
        for epoch, lr, loss, acc in self.rows:
            lines.append(f"{epoch},{lr!r},{loss!r},{acc!r}")
        return "\n".join(lines) + "\n"

    def sane_first_loss(self) -> bool:
        """Initial loss should sit near ln(K) for K balanced classes."""
        target = log(self.num_classes) if self.num_classes > 1 else 1.0
        return 0.8 * target <= self.first_loss <= 1.3 * target

    def summary_text(self, cfg: TrainConfig) -> str:
        lines = ["[result]"]
        lines.append(f"epochs_run = {len(self.rows)}")
        lines.append(f"best_epoch = {self.best_epoch}")
        lines.append(f"best_val_acc = {self.best_val_acc!r}")
        lines.append(f"final_train_acc = {self.final_train_acc!r}")
        lines.append(f"first_loss = {self.first_loss!r}")
        lines.append(f"first_loss_sane = {str(self.sane_first_loss()).lower()}")
        lines.append(f"stopped_early = {str(self.stopped_early).lower()}")
        if self.checkpoint_path:
            lines.append(f"checkpoint = {self.checkpoint_path}")
        lines.append("")
        lines.append("[train_config]")
        for key, value in cfg.to_dict().items():
            lines.append(f"{key} = {value}")
        lines.append("")
        lines.append("[timing]")
        lines.append(f"seconds = {self.seconds:.1f}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir, cfg: TrainConfig) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "history.csv").write_text(self.history_csv())
        (out_dir / "report.txt").write_text(self.summary_text(cfg))


def _pick_val_split(manifest: Manifest) -> Dataset:
    for name in ("val", "test"):
        if name in manifest.splits and len(manifest.splits[name]) > 0:
            return manifest.splits[name]
    warnings.warn("no val/test split found; validating on the train split")
    return manifest.split("train")


def train(model: Model, manifest: Manifest, cfg: TrainConfig,
          out_dir=None, *, track_train_acc: bool = True,
          early_stop_acc: float | None = None,
          progress=None) -> TrainReport:
    """Run the full loop and return a report.

    When out_dir is given, the best-validation checkpoint is written there
    as best.ckpt (raw weights plus EMA shadows plus enough metadata to
    preprocess new images identically), along with history.csv and
    report.txt.
    """
    cfg.validate()
    train_ds = manifest.train_dataset()
    if len(train_ds) == 0:
        raise ValueError("train split is empty")
    val_ds = _pick_val_split(manifest)
    named = model.named_parameters()
    velocities: dict[str, np.ndarray] = {}
    ema = EmaState(named, cfg.ema_decay)
    report = TrainReport(num_classes=len(manifest.class_names))
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    eval_kw = dict(input_size=manifest.input_size, mean=manifest.mean,
                   std=manifest.std, batch_size=cfg.batch_size,
                   workers=cfg.workers)
    started = time.perf_counter()

    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.lr0, cfg.t_max, cfg.eta_min, cfg.no_restart)
        loss_total, seen = 0.0, 0
        for step, (x, y) in enumerate(batch_iter(
                train_ds, cfg.batch_size, shuffle=True, seed=cfg.seed,
                epoch=epoch, input_size=manifest.input_size,
                mean=manifest.mean, std=manifest.std,
                policy=manifest.policy, train=True, workers=cfg.workers)):
            logits = model.forward(ad.as_variable(x), training=True)
            loss = ad.cross_entropy(logits, y)
            loss_value = float(loss.value)
            if not np.isfinite(loss_value):
                raise DivergenceError(
                    f"loss became {loss_value} at epoch {epoch} step {step}")
            if epoch == 0 and step == 0:
                report.first_loss = loss_value
            ad.backward(loss)
            sgd_step(named, velocities, lr, cfg.momentum)
            ema.update(named)
            ad.zero_grad(p for _, p in named)
            loss_total += loss_value * x.shape[0]
            seen += x.shape[0]
        train_loss = loss_total / seen

        if cfg.eval_with_ema:
            with ema.applied(model):
                val = evaluate(model, val_ds, **eval_kw)
        else:
            val = evaluate(model, val_ds, **eval_kw)
        report.rows.append((epoch, lr, train_loss, val.accuracy))

        train_acc = float("nan")
        if track_train_acc:
            if cfg.eval_with_ema:
                with ema.applied(model):
                    train_acc = evaluate(model, train_ds, **eval_kw).accuracy
            else:
                train_acc = evaluate(model, train_ds, **eval_kw).accuracy
            report.train_accs.append(train_acc)

        if val.accuracy > report.best_val_acc:
            report.best_val_acc = val.accuracy
            report.best_epoch = epoch
            if out_dir is not None:
                meta = {
                    "epoch": epoch,
                    "val_acc": val.accuracy,
                    "train_config": cfg.to_dict(),
                    "data": {
                        "class_names": list(manifest.class_names),
                        "input_size": manifest.input_size,
                        "mean": list(manifest.mean),
                        "std": list(manifest.std),
                    },
                }
                path = out_dir / "best.ckpt"
                save_checkpoint(path, model, ema_shadows=ema.shadows, meta=meta)
                report.checkpoint_path = str(path)

        if progress is not None:
            acc_note = "" if not track_train_acc else f" train_acc={train_acc:.4f}"
            progress(f"epoch {epoch:3d}  lr={lr:.6f}  loss={train_loss:.4f}"
                     f"  val_acc={val.accuracy:.4f}{acc_note}")
        if (early_stop_acc is not None and track_train_acc
                and train_acc >= early_stop_acc):
            report.stopped_early = True
            break

    report.final_train_acc = (report.train_accs[-1]
                              if report.train_accs else float("nan"))
    report.seconds = time.perf_counter() - started
    if out_dir is not None:
        report.write(out_dir, cfg)
    return report
