"""Teacher/student distillation: soft targets, combined loss, training loop, T sweep."""

import copy
import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from ._accel import thread_cap
from .errors import ConfigError, DataError, DomainError
from .losses import cross_entropy, one_hot, softmax_t
from .metrics import evaluate, fmt_loss, fmt_pct
from .nn import Dense, Network
from .optim import MomentumSGD

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("T", "accuracy_pct", "loss", "specificity_pct", "sensitivity_pct")
DEFAULT_T_GRID = (1, 10, 20, 30, 40, 50)


@dataclass
class DistillConfig:
    temperature: int = 1
    soft_weight: float = 0.5
    epochs: int = 10
    teacher_lr: float = 5e-3
    student_lr: float = 2e-4
    lr_decay: float = 0.9
    decay_period_epochs: int = 7
    momentum: float = 0.9
    batch_size: int = 32
    seed: int = 0

    def validate(self):
        if not (isinstance(self.temperature, (int, np.integer)) or float(self.temperature).is_integer()):
            raise ConfigError(f"temperature must be an integer, got {self.temperature}")
        if self.temperature < 1:
            raise ConfigError(f"temperature must be >= 1, got {self.temperature}")
        if not 0.0 <= self.soft_weight <= 1.0:
            raise ConfigError(f"soft_weight must lie in [0, 1], got {self.soft_weight}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.teacher_lr <= 0 or self.student_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.decay_period_epochs < 1 or self.batch_size < 1:
            raise ConfigError("decay_period_epochs and batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        return self

    def lr_at(self, base_lr, epoch):
        return base_lr * self.lr_decay ** (epoch // self.decay_period_epochs)


@dataclass
class SweepRow:
    T: int
    accuracy: float
    loss: float
    specificity: float
    sensitivity: float


# -- stand-in architectures -------------------------------------------------


def teacher_layers(size=32, width=8):
    """Two conv/pool stages and a hidden dense layer."""
    s1 = (size - 2) // 2
    s2 = (s1 - 2) // 2
    return [
        {"type": "conv", "in_channels": 1, "out_channels": width, "kernel_size": 3, "stride": 1},
        {"type": "relu"},
        {"type": "maxpool", "kernel_size": 2, "stride": 2},
        {"type": "conv", "in_channels": width, "out_channels": 2 * width, "kernel_size": 3, "stride": 1},
        {"type": "relu"},
        {"type": "maxpool", "kernel_size": 2, "stride": 2},
        {"type": "flatten"},
        {"type": "dense", "in_features": 2 * width * s2 * s2, "out_features": 32},
        {"type": "relu"},
        {"type": "dense", "in_features": 32, "out_features": 2},
    ]


def student_layers(size=32, width=4):
    """A single strided conv followed by coarse max pooling and the classifier."""
    s1 = (size - 5) // 3 + 1
    pool = min(5, s1)
    s2 = (s1 - pool) // pool + 1
    return [
        {"type": "conv", "in_channels": 1, "out_channels": width, "kernel_size": 5, "stride": 3},
        {"type": "relu"},
        {"type": "maxpool", "kernel_size": pool, "stride": pool},
        {"type": "flatten"},
        {"type": "dense", "in_features": width * s2 * s2, "out_features": 2},
    ]


def build_network(layers, size, seed):
    return Network.from_spec(layers, (1, size, size), seed=seed)


def reinit_head(net, seed):
    """Re-draw the final dense layer, keeping every other parameter (transfer-learning init)."""
    net = copy.deepcopy(net)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if isinstance(layer, Dense):
            net.layers[i] = Dense(layer.in_features, layer.out_features, rng=np.random.default_rng(seed))
            return net
    raise ConfigError("network has no dense layer to reinitialise")


# -- losses -----------------------------------------------------------------


def soften(teacher_logits, T):
    """Row-wise temperature softmax of teacher logits (the soft targets)."""
    if not T > 0:
        raise DomainError(f"temperature must be > 0, got {T}")
    return softmax_t(np.atleast_2d(teacher_logits), T)


def distill_loss(student_logits, soft_targets, hard_labels, cfg):
    """Batch-mean of ``w T^2 CE(softmax(z/T), q) + (1 - w) CE(softmax(z), y)``.

    Returns ``(loss, d loss / d student_logits)``. The gradient is exact for
    this expression wherever no probability falls under the log clamp.
    """
    z = np.atleast_2d(np.asarray(student_logits, dtype=np.float64))
    n, c = z.shape
    labels = np.asarray(hard_labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DataError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise DataError(f"class index out of range [0, {c})")
    T = float(cfg.temperature)
    w = cfg.soft_weight
    y = one_hot(labels, c)
    p1 = softmax_t(z, 1.0)
    loss_rows = (1.0 - w) * cross_entropy(p1, y)
    grad = (1.0 - w) * (p1 - y)
    if w > 0:
        q = np.asarray(soft_targets, dtype=np.float64)
        if q.shape != z.shape:
            raise DataError(f"soft targets shape {q.shape} != logits shape {z.shape}")
        pT = softmax_t(z, T)
        loss_rows = loss_rows + w * T * T * cross_entropy(pT, q)
        grad = grad + w * T * (pT - q)
    return float(np.mean(loss_rows)), grad / n


# -- training ---------------------------------------------------------------


def train(net, dataset, cfg, teacher=None, lr=None, eval_data=None, name="model"):
    """Minibatch momentum-SGD training, optionally distilled from a frozen teacher.

    Returns ``(trained_copy, log)``; ``net`` itself is left untouched. Each log
    entry holds the epoch, learning rate, mean training loss and, when
    ``eval_data`` is given, the evaluation metrics after that epoch.
    """
    cfg.validate()
    if len(dataset) == 0:
        raise DataError("training dataset is empty")
    x = dataset.as_batch()
    y = np.asarray(dataset.labels, dtype=np.int64)
    n_classes = net.check_shapes(x.shape[1:])[0]
    if y.max() >= n_classes:
        raise ConfigError(f"labels reach class {y.max()} but the network has {n_classes} outputs")
    soft = None
    if teacher is not None:
        t_classes = teacher.check_shapes(x.shape[1:])[0]
        if t_classes != n_classes:
            raise ConfigError(f"teacher has {t_classes} classes, student has {n_classes}")
        soft = soften(teacher.predict_logits(x), cfg.temperature)
    base_lr = lr if lr is not None else (cfg.student_lr if teacher is not None else cfg.teacher_lr)
    step_cfg = cfg if teacher is not None else replace(cfg, soft_weight=0.0)

    net = copy.deepcopy(net)
    opt = MomentumSGD(base_lr, cfg.momentum)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr_at(base_lr, epoch)
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits = net.forward(x[idx])
            loss, g = distill_loss(logits, soft[idx] if soft is not None else None, y[idx], step_cfg)
            opt.step_network(net, net.backward(g))
            total += loss * len(idx)
        entry = {"epoch": epoch, "lr": opt.lr, "train_loss": total / len(y)}
        if eval_data is not None:
            entry.update(evaluate(net, eval_data, name).row())
            entry.pop("model")
        history.append(entry)
        log.info("%s epoch %d lr %.3g train_loss %.5f", name, epoch, opt.lr, entry["train_loss"])
    return net, history


def select_best(rows):
    """Highest accuracy; ties go to the lower loss, then to the earlier row."""
    if not rows:
        raise ConfigError("no sweep rows to select from")
    return min(rows, key=lambda r: (-(r.accuracy if r.accuracy is not None else -1.0), r.loss))


def temperature_sweep(teacher, student_template, dataset, T_values, cfg, eval_data, workers=None):
    """Distil a fresh copy of ``student_template`` at each temperature and evaluate it.

    Returns ``(rows, best_row)``.
    """
    T_values = list(T_values)
    if not T_values or any(t < 1 for t in T_values):
        raise ConfigError("T_values must be a non-empty list of integers >= 1")
    cfg.validate()

    def run(T):
        student, _ = train(student_template, dataset, replace(cfg, temperature=T), teacher=teacher,
                           name=f"student_T{T}")
        rep = evaluate(student, eval_data, f"T={T}")
        return SweepRow(int(T), rep.accuracy, rep.loss, rep.specificity, rep.sensitivity)

    workers = workers or thread_cap() or 1
    if workers > 1 and len(T_values) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, T_values))
    else:
        rows = [run(T) for T in T_values]
    return rows, select_best(rows)


def sweep_to_csv(rows, best=None):
    """Table-style CSV; a final ``best=<T>`` row repeats the selected row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    fmt = lambda t, r: [t, fmt_pct(r.accuracy), fmt_loss(r.loss), fmt_pct(r.specificity), fmt_pct(r.sensitivity)]
    for r in rows:
        w.writerow(fmt(r.T, r))
    if best is not None:
        w.writerow(fmt(f"best={best.T}", best))
    return buf.getvalue()


def sweep_to_json(rows, best=None):
    doc = {"columns": list(SWEEP_COLUMNS), "rows": [asdict(r) for r in rows],
           "best": asdict(best) if best is not None else None}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
