"""Binary confusion-matrix metrics and report tables.

The positive class is label 1 (pneumonia / stego). A metric whose denominator
class is absent from the evaluated data is reported as ``None`` ("NA").
"""

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DataError
from .losses import cross_entropy, softmax_t

EVAL_COLUMNS = ("model", "accuracy_pct", "specificity_pct", "sensitivity_pct", "loss")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @classmethod
    def from_predictions(cls, y_true, y_pred, positive=1):
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        if y_true.shape != y_pred.shape:
            raise DataError(f"label/prediction length mismatch: {y_true.shape} vs {y_pred.shape}")
        for arr, what in ((y_true, "labels"), (y_pred, "predictions")):
            if arr.size and not np.isin(arr, (0, 1)).all():
                raise DataError(f"{what} must be binary (0/1)")
        pos_t, pos_p = y_true == positive, y_pred == positive
        return cls(tp=int(np.sum(pos_t & pos_p)), fp=int(np.sum(~pos_t & pos_p)),
                   tn=int(np.sum(~pos_t & ~pos_p)), fn=int(np.sum(pos_t & ~pos_p)))

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def accuracy(self):
        return _ratio(self.tp + self.tn, self.total)

    def sensitivity(self):
        return _ratio(self.tp, self.tp + self.fn)

    def specificity(self):
        return _ratio(self.tn, self.tn + self.fp)

    def false_negative_rate(self):
        return _ratio(self.fn, self.tp + self.fn)

    def false_positive_rate(self):
        return _ratio(self.fp, self.tn + self.fp)


def _ratio(num, den):
    return num / den if den else None


def _pct(x):
    return None if x is None else 100.0 * x


@dataclass
class EvalReport:
    model: str
    accuracy: float
    specificity: float
    sensitivity: float
    loss: float
    confusion: ConfusionMatrix = None

    @classmethod
    def from_confusion(cls, model, cm, loss):
        return cls(model, _pct(cm.accuracy()), _pct(cm.specificity()), _pct(cm.sensitivity()), loss, cm)

    def row(self):
        return {"model": self.model, "accuracy_pct": self.accuracy, "specificity_pct": self.specificity,
                "sensitivity_pct": self.sensitivity, "loss": self.loss}

    def to_dict(self):
        d = self.row()
        if self.confusion is not None:
            d["confusion"] = asdict(self.confusion)
        return d


def evaluate(model, dataset, name="model", batch_size=256):
    """Forward the dataset, predict by argmax and summarise as an :class:`EvalReport`."""
    if len(dataset) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    labels = np.asarray(dataset.labels)
    if not np.isin(labels, (0, 1)).all():
        raise DataError("evaluate supports binary labels only")
    logits = model.predict_logits(dataset.as_batch(), batch_size)
    if logits.shape[1] != 2:
        raise DataError(f"binary evaluation needs 2 output classes, model has {logits.shape[1]}")
    probs = softmax_t(logits, 1.0)
    loss = float(np.mean(cross_entropy(probs, labels)))
    cm = ConfusionMatrix.from_predictions(labels, np.argmax(logits, axis=1))
    return EvalReport.from_confusion(name, cm, loss)


def compare(reports, baseline):
    """Signed percentage-point deltas of each report against the named baseline."""
    by_name = {r.model: r for r in reports}
    if baseline not in by_name:
        raise ConfigError(f"baseline {baseline!r} not among reports {sorted(by_name)}")
    base = by_name[baseline]
    rows = []
    for r in reports:
        row = {"model": r.model}
        for key in ("accuracy", "specificity", "sensitivity"):
            a, b = getattr(r, key), getattr(base, key)
            row[f"{key}_delta_pp"] = None if a is None or b is None else a - b
        rows.append(row)
    return rows


def implied_counts(sensitivity_pct, specificity_pct, n_pos, n_neg):
    """Nearest integer TP/TN for published percentages on a known split.

    Informational consistency check; returns the implied accuracy as well.
    """
    tp = int(round(sensitivity_pct / 100.0 * n_pos))
    tn = int(round(specificity_pct / 100.0 * n_neg))
    return {"tp": tp, "tn": tn, "accuracy_pct": 100.0 * (tp + tn) / (n_pos + n_neg)}


# -- formatting -------------------------------------------------------------


def fmt_pct(x):
    return "NA" if x is None else f"{x:.2f}"


def fmt_loss(x):
    return "NA" if x is None else f"{x:.4f}"


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_COLUMNS)
    for r in reports:
        w.writerow([r.model, fmt_pct(r.accuracy), fmt_pct(r.specificity), fmt_pct(r.sensitivity), fmt_loss(r.loss)])
    return buf.getvalue()


def reports_to_json(reports):
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"


def compare_to_markdown(rows):
    lines = ["| model | accuracy Δpp | specificity Δpp | sensitivity Δpp |", "|---|---:|---:|---:|"]
    for r in rows:
        cells = [("NA" if r[k] is None else f"{r[k]:+.2f}")
                 for k in ("accuracy_delta_pp", "specificity_delta_pp", "sensitivity_delta_pp")]
        lines.append(f"| {r['model']} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
