"""Precision-recall evaluation for type classification (T1) and part-of detection (T2)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .boxes import inclusion_ratio_batch
from .grounders import Predicate
from .scenes import Scene, all_boxes, grounding_vector
from .tasks import PART_OF


class NoPositivesError(ValueError):
    pass


@dataclass
class PrCurve:
    """One point per distinct score threshold, highest threshold first."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    auc: float
    n_positive: int
    n_total: int

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))

    @property
    def prevalence(self) -> float:
        return self.n_positive / self.n_total

    def at_threshold(self, th: float) -> tuple[float, float]:
        """(precision, recall) when predicting positive for scores > ``th``."""
        above = self.thresholds > th
        if not above.any():
            return 1.0, 0.0
        i = int(np.flatnonzero(above)[-1])
        return float(self.precision[i]), float(self.recall[i])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "precision", "recall"])
            for t, p, r in zip(self.thresholds, self.precision, self.recall):
                w.writerow([repr(float(t)), repr(float(p)), repr(float(r))])


def pr_curve(scores, labels=None) -> PrCurve:
    """PR curve over every distinct score; ``scores`` may be (score, label) pairs.

    AUC integrates precision over recall by the trapezoid rule, starting from
    an anchor at recall 0 carrying the precision of the highest threshold.
    """
    if labels is None:
        pairs = np.asarray(list(scores), dtype=np.float64).reshape(-1, 2)
        scores, labels = pairs[:, 0], pairs[:, 1]
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositivesError("precision-recall needs at least one positive label")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]  # end of each tie block
    tp, fp, thr = tp[last], fp[last], s[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    r = np.r_[0.0, recall]
    p = np.r_[precision[0], precision]
    auc = float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))
    return PrCurve(thr, precision, recall, min(max(auc, 0.0), 1.0), n_pos, int(s.size))


# -- task scoring --------------------------------------------------------------

def _predicates(model) -> Mapping[str, Predicate]:
    if hasattr(model, "predicates"):
        return model.predicates
    if hasattr(model, "predicate_map"):
        return model.predicate_map
    return model


@dataclass
class T1Result:
    curves: dict[str, PrCurve]
    skipped: list[str]
    th: float
    operating: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def macro_auc(self) -> float:
        return float(np.mean([c.auc for c in self.curves.values()])) if self.curves else float("nan")

    def aucs(self) -> dict[str, float]:
        return {k: c.auc for k, c in self.curves.items()}


def t1_scores(model, scenes: Sequence[Scene], class_names: Sequence[str]) -> dict[str, np.ndarray]:
    preds = _predicates(model)
    X = np.array([grounding_vector(b) for b in all_boxes(scenes)])
    return {name: np.asarray(preds[name](X), dtype=np.float64) for name in class_names if name in preds}


def eval_t1(model, scenes: Sequence[Scene], class_names: Sequence[str] | None = None,
            th: float = 0.7) -> T1Result:
    """Per-class PR curves from noiseless grounder outputs; absent classes are skipped."""
    names = list(class_names if class_names is not None else model.class_names)
    boxes = all_boxes(scenes)
    truth = np.array([b.true_class for b in boxes])
    scores = t1_scores(model, scenes, names)
    curves, skipped, operating = {}, [], {}
    for i, name in enumerate(names):
        if name not in scores or not (truth == i).any():
            skipped.append(name)
            continue
        curves[name] = pr_curve(scores[name], truth == i)
        operating[name] = curves[name].at_threshold(th)
    return T1Result(curves, skipped, th, operating)


def score_baseline_t1(scenes: Sequence[Scene], class_names: Sequence[str]) -> T1Result:
    """The raw synthetic detector scores used directly as T1 scores."""
    boxes = all_boxes(scenes)
    truth = np.array([b.true_class for b in boxes])
    S = np.array([b.scores for b in boxes])
    curves, skipped = {}, []
    for i, name in enumerate(class_names):
        if not (truth == i).any():
            skipped.append(name)
            continue
        curves[name] = pr_curve(S[:, i], truth == i)
    return T1Result(curves, skipped, 0.7)


def scene_pairs(scenes: Sequence[Scene]):
    """Ordered same-scene pairs of distinct boxes with their part-of labels."""
    left, right, labels = [], [], []
    for s in scenes:
        for b in s.boxes:
            for b2 in s.boxes:
                if b.id != b2.id:
                    left.append(b)
                    right.append(b2)
                    labels.append(b.parent == b2.id)
    return left, right, np.array(labels, dtype=bool)


def eval_t2(model, scenes: Sequence[Scene]) -> PrCurve:
    pred = _predicates(model)[PART_OF]
    left, right, labels = scene_pairs(scenes)
    X = np.array([np.concatenate([grounding_vector(a), grounding_vector(b)]) for a, b in zip(left, right)])
    return pr_curve(np.asarray(pred(X), dtype=np.float64), labels)


def ir_baseline(scenes: Sequence[Scene], th: float = 0.7) -> PrCurve:
    """Part-of scored by the inclusion ratio alone (``th`` only sets the operating point)."""
    left, right, labels = scene_pairs(scenes)
    ir = inclusion_ratio_batch(np.array([a.box for a in left]), np.array([b.box for b in right]))
    return pr_curve(ir, labels)


# -- multi-seed reports -----------------------------------------------------------

def mean_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float, float]:
    """Sample mean with a Student-t confidence interval (zero width for one sample)."""
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    if v.size < 2:
        return mean, mean, mean
    sd = float(v.std(ddof=1))
    half = float(stats.t.ppf(0.5 + level / 2.0, v.size - 1)) * sd / np.sqrt(v.size)
    return mean, mean - half, mean + half


@dataclass
class ReportRow:
    group: str
    task: str
    model: str
    values: list[float]

    def summary(self) -> dict:
        mean, lo, hi = mean_ci(self.values)
        return {"group": self.group, "task": self.task, "model": self.model,
                "values": [float(x) for x in self.values], "n": len(self.values),
                "mean": mean, "ci_low": lo, "ci_high": hi}


@dataclass
class ComparisonReport:
    rows: list[ReportRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, group: str, task: str, model: str, values: Sequence[float]) -> None:
        self.rows.append(ReportRow(group, task, model, list(values)))

    def get(self, task: str, model: str, group: str = "all") -> ReportRow:
        for r in self.rows:
            if (r.group, r.task, r.model) == (group, task, model):
                return r
        raise KeyError((group, task, model))

    def to_doc(self) -> dict:
        return {"meta": self.meta, "rows": [r.summary() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=1, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def table(self) -> str:
        models = list(dict.fromkeys(r.model for r in self.rows))
        keys = list(dict.fromkeys((r.group, r.task) for r in self.rows))
        lines = ["group\ttask\t" + "\t".join(models)]
        for g, t in keys:
            cells = []
            for m in models:
                try:
                    s = self.get(t, m, g).summary()
                except KeyError:
                    cells.append("-")
                    continue
                cells.append(f"{s['mean']:.3f} [{s['ci_low']:.3f}, {s['ci_high']:.3f}]")
            lines.append(f"{g}\t{t}\t" + "\t".join(cells))
        return "\n".join(lines)
