"""Synthetic corpora shared by the test modules."""

import csv
import json
import os
from pathlib import Path

import numpy as np

from citesent.corpus import HarmonizedRecord


def toy_texts(labels, n_per_class, seed=0, markers=3, prefix="", filler_size=200, n_markers=20):
    """Linearly separable texts: random filler plus ``markers`` class-specific words.

    Marker vocabularies are disjoint across classes; ``prefix`` keeps
    vocabularies of different datasets disjoint too.
    """
    rng = np.random.default_rng(seed)
    filler = [f"{prefix}w{i}" for i in range(filler_size)]
    texts, ys = [], []
    for c, label in enumerate(labels):
        vocab = [f"{prefix}m{c}x{i}" for i in range(n_markers)]
        for _ in range(n_per_class):
            toks = list(rng.choice(filler, rng.integers(6, 16)))
            for _ in range(markers):
                toks.insert(int(rng.integers(0, len(toks) + 1)), str(rng.choice(vocab)))
            texts.append(" ".join(toks))
            ys.append(label)
    return texts, ys


def toy_records(labels=("Positive", "Negative"), n_per_class=100, seed=0, dataset_id="toy", domain="Movie",
                task="Sentiment", prefix="", markers=3):
    texts, ys = toy_texts(labels, n_per_class, seed, markers, prefix)
    return [HarmonizedRecord(t, y, dataset_id, domain, task) for t, y in zip(texts, ys)]


def write_csv_dataset(directory, name, rows, header=("text", "label")):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{name}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_dataset_manifest(directory, name, data_file, label_map, domain="Movie", task="Sentiment", fmt="csv", **extra):
    m = {
        "dataset_id": name,
        "file_path": os.path.relpath(data_file, directory),
        "file_format": fmt,
        "text_column": "text",
        "label_column": "label",
        "label_map": label_map,
        "domain_tag": domain,
        "task": task,
        **extra,
    }
    path = Path(directory) / f"{name}.json"
    path.write_text(json.dumps(m, indent=2))
    return path


def toy_dataset(directory, name, labels=("pos", "neg"), label_map=None, n_per_class=60, seed=0, prefix="",
                domain="Movie", task="Sentiment"):
    """CSV file + dataset manifest of a separable toy corpus; returns the manifest path."""
    texts, ys = toy_texts(labels, n_per_class, seed, prefix=prefix)
    data = write_csv_dataset(directory, name, zip(texts, ys))
    label_map = label_map or {"pos": "Positive", "neg": "Negative"}
    return write_dataset_manifest(directory, name, data, label_map, domain, task)


def write_run(directory, name, datasets, **blocks):
    m = {"name": name, "datasets": [str(d) for d in datasets], **blocks}
    path = Path(directory) / f"{name}.run.json"
    path.write_text(json.dumps(m, indent=2))
    return path


SMALL_MODEL = {"encoder": {"variant": "meanpool", "embed_dim": 16, "max_len": 24}}


# Per-class counts of the original citation sentiment corpus and the number of
# rows its cleaning removed (same-label repeats + conflicting groups).
CSC_ORIGINAL = {"Positive": 829, "Neutral": 280, "Negative": 7627}
CSC_REMOVED = {"Positive": 101, "Neutral": 27, "Negative": 629}
CSC_RAW = {"Positive": "p", "Neutral": "o", "Negative": "n"}


def csc_shaped_rows(seed=0, conflicts=10):
    """Rows ``(text, raw_label)`` with exactly CSC_ORIGINAL per class and
    planted duplicates removing exactly CSC_REMOVED.

    ``conflicts`` Positive/Negative pairs share a text (both rows go); the
    remaining removals are same-label repeats differing only in case and
    whitespace from an earlier row.
    """
    rng = np.random.default_rng(seed)
    rows = []
    uid = iter(range(10**6))
    for c in range(conflicts):
        t = f"conflict sentence {next(uid)}"
        rows += [(t, CSC_RAW["Positive"]), (t.upper(), CSC_RAW["Negative"])]
    for label, total in CSC_ORIGINAL.items():
        conflict_rows = conflicts if label in ("Positive", "Negative") else 0
        repeats = CSC_REMOVED[label] - conflict_rows
        uniques = total - conflict_rows - repeats
        texts = [f"{label.lower()} citation number {next(uid)} of the corpus" for _ in range(uniques)]
        rows += [(t, CSC_RAW[label]) for t in texts]
        for j in rng.integers(0, uniques, size=repeats):
            rows.append(("  " + texts[j].replace(" ", "   ").title(), CSC_RAW[label]))
    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


def grad_check(variant, spec, h=1e-4, seed=0, **enc_kw):
    """Worst relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, 1e-6)`` over every scalar of
    every parameter tensor, on a 2-sample batch with max_len 8 and dims <= 16.
    """
    from citesent.model import EncoderConfig, ModelConfig, backward, forward, init_params, loss

    rng = np.random.default_rng(seed)
    enc = EncoderConfig(variant=variant, embed_dim=8, max_len=8, layers=2, filters=6, widths=(3, 2), hidden=5,
                        model_dim=8, heads=2, ff_dim=12, **enc_kw)
    cfg = ModelConfig(enc, {"A": ("x", "y", "z"), "B": ("p", "q")})
    p = init_params(cfg, 12, rng)
    for k in p:
        p[k] = p[k] + rng.normal(0, 0.1, p[k].shape)
    tokens = np.array([[3, 4, 5, 6, 7, 2, 0, 0], [8, 9, 10, 11, 0, 0, 0, 0]])
    mask = tokens != 0
    labels = np.array([0, 2])
    _, grads = backward(p, cfg, tokens, mask, labels, "A", spec)
    worst = 0.0
    for k, v in p.items():
        for i in np.ndindex(v.shape):
            o = v[i]
            v[i] = o + h
            lp = loss(forward(p, cfg, tokens, mask, "A"), labels, spec)[0]
            v[i] = o - h
            lm = loss(forward(p, cfg, tokens, mask, "A"), labels, spec)[0]
            v[i] = o
            num = (lp - lm) / (2 * h)
            a = grads[k][i]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-6))
    return worst


def brute_force_metrics(gold, pred, k):
    """Independent tally: per-class TP/FP/FN by direct counting, no confusion matrix.

    Returns ``(micro_f1, macro_f1, recall)`` with ``recall[c] = None`` for a
    class absent from ``gold``; F1 of a class with no gold and no predicted
    rows counts as 0.
    """
    from fractions import Fraction

    tp = [0] * k
    fp = [0] * k
    fn = [0] * k
    for g, p in zip(gold, pred):
        if g == p:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    f1 = []
    recall = []
    for c in range(k):
        denom = 2 * tp[c] + fp[c] + fn[c]
        f1.append(Fraction(2 * tp[c], denom) if denom else Fraction(0))
        recall.append(Fraction(tp[c], tp[c] + fn[c]) if tp[c] + fn[c] else None)
    micro = Fraction(2 * sum(tp), 2 * sum(tp) + sum(fp) + sum(fn))
    macro = sum(f1) / k
    return micro, macro, recall
