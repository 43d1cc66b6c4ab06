"""Loss, Adam optimizer, the training loop (plateau halving + early
stopping) and the evaluation battery (per-SNR accuracy, confusion
matrices, inference timing)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .model import Model
from .flops import count_flops

LOG_FLOOR = 1e-12


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def cce_loss(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean categorical cross-entropy, -sum y*log(p + 1e-12) over the batch."""
    t = np.asarray(targets)
    if probs.shape != t.shape:
        raise ValueError(f"probs {probs.shape} vs targets {t.shape}")
    rowsum = probs.data.sum(axis=-1)
    if np.any(np.abs(rowsum - 1.0) > 1e-5):
        raise ValueError("probability rows must sum to 1")
    if np.any((t != 0) & (t != 1)) or np.any(t.sum(axis=-1) != 1):
        raise ValueError("targets must be one-hot")
    b = t.shape[0]
    return ((probs + LOG_FLOOR).log() * Tensor(t)).sum() * (-1.0 / b)


class Adam:
    """Standard Adam with bias correction; fails fast on non-finite grads."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, named_params, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for name, p in named_params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in {name!r}")
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainHyper:
    batch_size: int = 64
    epochs: int = 200
    lr: float = 1e-3
    plateau_patience: int = 5
    early_stop_patience: int = 30
    min_delta: float = 1e-6
    seed: int = 0


@dataclass
class TrainState:
    lr: float
    best_val_loss: float = float("inf")
    plateau_counter: int = 0
    stop_counter: int = 0
    step: int = 0
    seed: int = 0
    history: list[dict] = field(default_factory=list)


def _snapshot(model: Model):
    params = {name: p.data.copy() for name, p in model.named_params()}
    buffers = {name: getattr(layer, attr).copy()
               for name, layer, attr in model.named_buffers()}
    return params, buffers


def _restore(model: Model, snap) -> None:
    params, buffers = snap
    for name, p in model.named_params():
        p.data = params[name].copy()
    for name, layer, attr in model.named_buffers():
        setattr(layer, attr, buffers[name].copy())


def batch_loss(model: Model, iq: np.ndarray, ap: np.ndarray,
               targets: np.ndarray, train: bool) -> Tensor:
    _, probs = model.forward(Tensor(iq), Tensor(ap), train=train)
    return cce_loss(probs, targets) + model.l2()


def dataset_loss(model: Model, data: dict, idx: np.ndarray, batch: int = 256) -> float:
    total, n = 0.0, 0
    with T.no_grad():
        for lo in range(0, len(idx), batch):
            sel = idx[lo:lo + batch]
            loss = batch_loss(model, data["iq"][sel], data["ap"][sel],
                              data["onehot"][sel], train=False)
            total += loss.item() * len(sel)
            n += len(sel)
    return total / n


def train(model: Model, data: dict, train_idx: np.ndarray, val_idx: np.ndarray,
          hyper: TrainHyper | None = None, log=None) -> TrainState:
    """Seeded shuffled minibatch training with plateau lr-halving (patience 5),
    early stop (patience 30) and best-weights restore.

    `data` holds iq [N,L,2], ap [N,L,2], onehot [N,C].
    """
    hyper = hyper or TrainHyper()
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("empty train or validation split")
    if hyper.batch_size > len(train_idx):
        raise ValueError("batch size exceeds training split size")
    rng = np.random.default_rng(hyper.seed)
    opt = Adam()
    state = TrainState(lr=hyper.lr, seed=hyper.seed)
    named = model.named_params()
    best = _snapshot(model)
    for epoch in range(1, hyper.epochs + 1):
        perm = train_idx[rng.permutation(len(train_idx))]
        total, n = 0.0, 0
        for lo in range(0, len(perm), hyper.batch_size):
            sel = perm[lo:lo + hyper.batch_size]
            if len(sel) < 2:
                continue  # batch statistics need at least two samples
            loss = batch_loss(model, data["iq"][sel], data["ap"][sel],
                              data["onehot"][sel], train=True)
            model.zero_grads()
            loss.backward()
            opt.step(named, state.lr)
            state.step += 1
            total += loss.item() * len(sel)
            n += len(sel)
        train_loss = total / n
        val_loss = dataset_loss(model, data, val_idx)
        state.history.append({"epoch": epoch, "train_loss": train_loss,
                              "val_loss": val_loss, "lr": state.lr})
        if log:
            log(f"epoch {epoch}: train_loss={train_loss:.4f} val_loss={val_loss:.4f} lr={state.lr:g}")
        if val_loss <= state.best_val_loss - hyper.min_delta:
            state.best_val_loss = val_loss
            best = _snapshot(model)
            state.plateau_counter = 0
            state.stop_counter = 0
        else:
            state.plateau_counter += 1
            state.stop_counter += 1
            if state.stop_counter >= hyper.early_stop_patience:
                break
            if state.plateau_counter >= hyper.plateau_patience:
                state.lr /= 2.0
                state.plateau_counter = 0
    _restore(model, best)
    return state


def prepare_data(reader, num_classes: int | None = None) -> dict:
    """Decode a SIGSET into model-ready arrays; A/P is precomputed once."""
    from .signals import iq_to_ap

    iq, labels, snrs, _ = reader.load_arrays()
    ap = np.empty_like(iq)
    for i in range(len(iq)):
        ap[i] = iq_to_ap(iq[i])
    c = num_classes if num_classes is not None else len(reader.classes)
    return {
        "iq": np.ascontiguousarray(iq.transpose(0, 2, 1)),
        "ap": np.ascontiguousarray(ap.transpose(0, 2, 1)),
        "labels": labels,
        "snrs": snrs,
        "onehot": one_hot(labels, c),
    }


# -- evaluation -----------------------------------------------------------------


@dataclass
class EvalReport:
    snr_levels: list[int]
    accuracy_by_snr: dict[int, float]
    counts_by_snr: dict[int, int]
    confusion_by_snr: dict[int, np.ndarray]  # rows=truth, cols=prediction
    average_accuracy: float
    max_accuracy: float
    param_count: int
    flop_count: int
    inference_ms_per_sample: float | None = None
    classes: list[str] | None = None


def predict(model: Model, data: dict, idx: np.ndarray, batch: int = 256) -> np.ndarray:
    preds = np.empty(len(idx), dtype=np.int64)
    with T.no_grad():
        for lo in range(0, len(idx), batch):
            sel = idx[lo:lo + batch]
            logits, _ = model.forward(Tensor(data["iq"][sel]), Tensor(data["ap"][sel]),
                                      train=False)
            preds[lo:lo + len(sel)] = logits.data.argmax(axis=-1)
    return preds


def time_inference(model: Model, data: dict, idx: np.ndarray,
                   n_timed: int = 1000, warmup: int = 50) -> float:
    """Median wall-clock milliseconds per single-sample forward."""
    pool = idx[np.arange(max(n_timed + warmup, 1)) % len(idx)]
    times = []
    with T.no_grad():
        for k, i in enumerate(pool):
            iq = Tensor(data["iq"][i])
            ap = Tensor(data["ap"][i])
            t0 = time.perf_counter()
            model.forward(iq, ap, train=False)
            dt = time.perf_counter() - t0
            if k >= warmup:
                times.append(dt)
    return float(np.median(times) * 1e3)


def evaluate(model: Model, data: dict, idx: np.ndarray,
             time_samples: int = 1000, classes=None) -> EvalReport:
    labels = data["labels"][idx]
    if labels.max() >= model.cfg.num_classes:
        raise ValueError("split contains class ids outside the model head")
    preds = predict(model, data, idx)
    snrs = data["snrs"][idx]
    levels = sorted(int(s) for s in np.unique(snrs))
    c = model.cfg.num_classes
    acc, counts, conf = {}, {}, {}
    for s in levels:
        m = snrs == s
        acc[s] = float(np.mean(preds[m] == labels[m]))
        counts[s] = int(m.sum())
        cm = np.zeros((c, c), dtype=np.int64)
        np.add.at(cm, (labels[m], preds[m]), 1)
        conf[s] = cm
    table, total_flops = count_flops(model.cfg, data["iq"].shape[1])
    ms = time_inference(model, data, idx, n_timed=time_samples) if time_samples else None
    return EvalReport(
        snr_levels=levels,
        accuracy_by_snr=acc,
        counts_by_snr=counts,
        confusion_by_snr=conf,
        average_accuracy=float(np.mean(preds == labels)),
        max_accuracy=max(acc.values()),
        param_count=model.count_params(),
        flop_count=total_flops,
        inference_ms_per_sample=ms,
        classes=classes,
    )
