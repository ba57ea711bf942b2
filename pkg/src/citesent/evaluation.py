"""Classification metrics, k-fold cross-validation and cross-domain matrices."""

import logging
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import clone

from .corpus import make_folds
from .utils import derive_seed

logger = logging.getLogger(__name__)


# ------------------------------------------------------------------ metrics


@dataclass
class ConfusionMatrix:
    """Counts with gold labels on rows and predictions on columns."""

    counts: np.ndarray

    @property
    def k(self):
        return self.counts.shape[0]

    @property
    def tp(self):
        return np.diag(self.counts).copy()

    @property
    def fp(self):
        return self.counts.sum(axis=0) - self.tp

    @property
    def fn(self):
        return self.counts.sum(axis=1) - self.tp

    @property
    def total(self):
        return int(self.counts.sum())


def confusion(gold, pred, k):
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape or gold.ndim != 1:
        raise ValueError(f"gold and pred lengths differ: {gold.shape} vs {pred.shape}")
    for name, a in (("gold", gold), ("pred", pred)):
        if a.size and (a.min() < 0 or a.max() >= k):
            raise ValueError(f"{name} label out of range for {k} classes")
    counts = np.bincount(gold * k + pred, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts)


def per_class_accuracy(cm):
    """Per-class recall; ``None`` for classes with no gold samples."""
    support = cm.counts.sum(axis=1)
    tp = cm.tp
    return [None if s == 0 else tp[c] / s for c, s in enumerate(support)]


def per_class_f1(cm):
    tp, fp, fn = cm.tp, cm.fp, cm.fn
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def micro_macro_f1(cm):
    """``(micro_f1, macro_f1)``; both are exact rationals rounded once to float."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    tp, fp, fn = (a.tolist() for a in (cm.tp, cm.fp, cm.fn))
    per = [Fraction(2 * t, 2 * t + p + n) if 2 * t + p + n else Fraction(0) for t, p, n in zip(tp, fp, fn)]
    macro = sum(per) / len(per)
    micro = Fraction(2 * sum(tp), 2 * sum(tp) + sum(fp) + sum(fn))
    return float(micro), float(macro)


@dataclass
class EvalReport:
    classes: tuple
    per_class_accuracy: list
    micro_f1: float
    macro_f1: float
    confusion: ConfusionMatrix
    train_dataset_id: str = None
    test_dataset_id: str = None

    @property
    def accuracy(self):
        return self.confusion.tp.sum() / self.confusion.total

    def to_dict(self):
        return {
            "train_dataset_id": self.train_dataset_id,
            "test_dataset_id": self.test_dataset_id,
            "classes": list(self.classes),
            "per_class_accuracy": dict(zip(self.classes, self.per_class_accuracy)),
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "accuracy": float(self.accuracy),
            "confusion": self.confusion.counts.tolist(),
        }


def evaluate_labels(gold, pred, classes, train_dataset_id=None, test_dataset_id=None):
    """Build an :class:`EvalReport` from label sequences over ``classes``."""
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    cm = confusion([index[g] for g in gold], [index[p] for p in pred], len(classes))
    micro, macro = micro_macro_f1(cm)
    acc = [None if a is None else float(a) for a in per_class_accuracy(cm)]
    return EvalReport(classes, acc, micro, macro, cm, train_dataset_id, test_dataset_id)


def evaluate_model(model, records, task, train_dataset_id=None, test_dataset_id=None):
    records = list(records)
    pred = model.predict([r.text for r in records], task)
    return evaluate_labels([r.label for r in records], pred, model.config.tasks[task], train_dataset_id, test_dataset_id)


def mean_report(reports):
    """Unweighted mean of per-fold metrics; confusion counts are summed."""
    reports = list(reports)
    classes = reports[0].classes
    per_class = []
    for c in range(len(classes)):
        vals = [r.per_class_accuracy[c] for r in reports if r.per_class_accuracy[c] is not None]
        per_class.append(float(np.mean(vals)) if vals else None)
    cm = ConfusionMatrix(sum(r.confusion.counts for r in reports))
    return EvalReport(
        classes,
        per_class,
        float(np.mean([r.micro_f1 for r in reports])),
        float(np.mean([r.macro_f1 for r in reports])),
        cm,
        reports[0].train_dataset_id,
        reports[0].test_dataset_id,
    )


# ------------------------------------------------------------ cross-validation


@dataclass
class CrossValResult:
    mean: EvalReport
    folds: list
    test_indices: list = field(default_factory=list)

    def to_csv(self):
        classes = self.mean.classes
        head = "fold,micro_f1,macro_f1," + ",".join(f"recall_{c}" for c in classes)
        rows = [head]
        for i, r in enumerate(self.folds):
            rows.append(_report_row(str(i + 1), r))
        rows.append(_report_row("mean", self.mean))
        return "\n".join(rows) + "\n"

    def to_markdown(self):
        classes = self.mean.classes
        lines = [
            "| Fold | " + " | ".join(f"{c} [%]" for c in classes) + " | Micro-F1 | Macro-F1 |",
            "|---|" + "---:|" * (len(classes) + 2),
        ]
        for i, r in enumerate(self.folds + [self.mean]):
            name = "Mean" if i == len(self.folds) else str(i + 1)
            accs = " | ".join(_pct(a) for a in r.per_class_accuracy)
            lines.append(f"| {name} | {accs} | {_pct(r.micro_f1)} | {_pct(r.macro_f1)} |")
        return "\n".join(lines) + "\n"


def _report_row(name, r):
    accs = ",".join("" if a is None else repr(float(a)) for a in r.per_class_accuracy)
    return f"{name},{float(r.micro_f1)!r},{float(r.macro_f1)!r},{accs}"


def _pct(v):
    return "-" if v is None else f"{100 * v:.2f}"


def cross_validate(records, estimator, k=10, seed=0, stratified=True, classes=None):
    """k-fold cross-validation of an sklearn-style text classifier.

    Every fold trains a fresh clone of ``estimator`` on the other ``k - 1``
    folds and is evaluated on the held-out fold. When the estimator exposes
    ``random_state`` it is set to a fold-derived seed.
    """
    records = list(records)
    folds = make_folds(records, k, seed, stratified)
    texts = [r.text for r in records]
    labels = np.array([r.label for r in records], dtype=object)
    classes = tuple(classes) if classes is not None else tuple(sorted(set(labels)))
    reports = []
    for i in range(k):
        tr, te = folds.train_test(i)
        est = clone(estimator)
        if "random_state" in est.get_params():
            est.set_params(random_state=derive_seed(seed, "fold", i) % (2**32))
        est.fit([texts[j] for j in tr], labels[tr])
        pred = est.predict([texts[j] for j in te])
        reports.append(evaluate_labels(labels[te], pred, classes))
        logger.info("fold %d/%d macro-F1 %.4f", i + 1, k, reports[-1].macro_f1)
    return CrossValResult(mean_report(reports), reports, [f.tolist() for f in folds.folds])


# ------------------------------------------------------------- cross-domain


@dataclass
class CrossDomainMatrix:
    datasets: list
    macro_f1: list  # rows = train dataset, cols = test dataset; None marks a failed cell
    errors: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    def cell(self, train_id, test_id):
        return self.macro_f1[self.datasets.index(train_id)][self.datasets.index(test_id)]

    def to_csv(self):
        lines = ["train\\test," + ",".join(self.datasets)]
        for name, row in zip(self.datasets, self.macro_f1):
            lines.append(name + "," + ",".join("" if v is None else repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    def to_markdown(self):
        lines = [
            "| Train \\ Test | " + " | ".join(self.datasets) + " |",
            "|---|" + "---:|" * len(self.datasets),
        ]
        for i, (name, row) in enumerate(zip(self.datasets, self.macro_f1)):
            cells = []
            for j, v in enumerate(row):
                s = "n/a" if v is None else f"{100 * v:.2f}"
                cells.append(f"**{s}**" if i == j and v is not None else s)
            lines.append(f"| {name} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def cross_domain_matrix(splits, estimator, seed=0, jobs=1):
    """Train on each dataset and test on every dataset's test split.

    ``splits`` maps dataset id -> ``(train, val, test)`` record lists. The
    estimator's ``fit`` receives the validation split as ``eval_set``. A
    dataset whose training fails leaves its row empty (``None``); a failing
    evaluation leaves only that cell empty.
    """
    ids = list(splits)
    if len(ids) < 2:
        raise ValueError("a cross-domain matrix needs at least two datasets")

    def run_row(i, train_id):
        train, val, _ = splits[train_id]
        est = clone(estimator)
        if "random_state" in est.get_params():
            est.set_params(random_state=derive_seed(seed, "matrix", train_id) % (2**32))
        try:
            eval_set = ([r.text for r in val], [r.label for r in val]) if val else None
            est.fit([r.text for r in train], [r.label for r in train], eval_set=eval_set)
        except Exception as exc:  # recorded per row, the matrix carries on
            logger.warning("training on %s failed: %s", train_id, exc)
            return i, [None] * len(ids), {(train_id, None): repr(exc)}, {}
        row, errors, reports = [], {}, {}
        for test_id in ids:
            test = splits[test_id][2]
            try:
                pred = est.predict([r.text for r in test])
                gold = [r.label for r in test]
                classes = list(est.classes_) + sorted(set(gold) - set(est.classes_))
                rep = evaluate_labels(gold, pred, classes, train_id, test_id)
                row.append(rep.macro_f1)
                reports[(train_id, test_id)] = rep
            except Exception as exc:
                logger.warning("evaluating %s on %s failed: %s", train_id, test_id, exc)
                row.append(None)
                errors[(train_id, test_id)] = repr(exc)
        return i, row, errors, reports

    if jobs == 1:
        results = [run_row(i, t) for i, t in enumerate(ids)]
    else:
        results = Parallel(n_jobs=jobs)(delayed(run_row)(i, t) for i, t in enumerate(ids))
    matrix = [None] * len(ids)
    errors, reports = {}, {}
    for i, row, err, rep in sorted(results, key=lambda r: r[0]):
        matrix[i] = row
        errors.update(err)
        reports.update(rep)
    return CrossDomainMatrix(ids, matrix, errors, reports)
