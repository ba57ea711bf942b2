"""Dataset size normalization and data-feeding plans.

A plan references samples as ``(dataset_id, index)`` pairs into its
``datasets`` mapping. Epoch orders are derived from ``(seed, epoch)`` only,
so any epoch can be regenerated independently.
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import TASK_LABELS
from .model.vocab import pad_sequences, tokenize
from .utils import derive_seed

CATEGORY_LETTERS = {"S": "Scientific", "T": "Twitter", "P": "Product", "M": "Movie"}
# within-category listing order used when none is configured
DEFAULT_WITHIN_CATEGORY = {
    "Product": ("instruments",),
    "Movie": ("cornell", "imdb", "stanford"),
    "Scientific": ("csc_clean",),
    "Twitter": ("sentiment140", "us_airline"),
}
MIX_POLICIES = ("proportional", "alternating")


class ScheduleError(ValueError):
    pass


# ------------------------------------------------------------------ sampling


@dataclass
class SamplingSpec:
    """``mode`` is ``"none"``, ``"up"`` (to ``n`` samples) or ``"down"`` (to the smallest dataset)."""

    mode: str = "none"
    n: int = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "up", "down"):
            raise ScheduleError(f"unknown sampling mode {self.mode!r}")
        if self.mode == "up" and (self.n is None or self.n <= 0):
            raise ScheduleError("up-sampling needs a positive target size")

    @classmethod
    def parse(cls, text, seed=0):
        """Parse ``"up:3000"``, ``"down"`` or ``"none"``."""
        text = (text or "none").strip().lower()
        if text.startswith("up"):
            _, _, n = text.partition(":")
            try:
                return cls("up", int(n) if n else 3000, seed)
            except ValueError:
                raise ScheduleError(f"bad sampling spec {text!r}") from None
        if text in ("down", "none"):
            return cls(text, None, seed)
        raise ScheduleError(f"bad sampling spec {text!r}")

    def label(self):
        return {"up": "Up", "down": "Down", "none": ""}[self.mode]


def resample(records, spec, smallest_size=None):
    """Resize one dataset. Class balance is deliberately not preserved.

    ``up`` returns exactly ``n`` records: a subsample without replacement when
    the dataset is large enough, otherwise every original once plus uniform
    draws with replacement. ``down`` subsamples ``smallest_size`` records
    without replacement.
    """
    records = list(records)
    if not records:
        raise ScheduleError("cannot resample an empty dataset")
    rng = np.random.default_rng(spec.seed)
    n = len(records)
    if spec.mode == "none":
        return records
    if spec.mode == "up":
        target = spec.n
        if n >= target:
            idx = np.sort(rng.choice(n, size=target, replace=False))
        else:
            idx = np.concatenate([np.arange(n), rng.integers(0, n, size=target - n)])
        return [records[i] for i in idx]
    if smallest_size is None:
        raise ScheduleError("down-sampling needs the smallest dataset size")
    if smallest_size > n:
        raise ScheduleError(f"cannot down-sample {n} records to {smallest_size}")
    idx = np.sort(rng.choice(n, size=smallest_size, replace=False))
    return [records[i] for i in idx]


def normalize_sizes(datasets, spec):
    """Apply ``spec`` to every dataset in a ``{id: records}`` mapping.

    Each dataset gets its own seed stream so the result does not depend on
    which other datasets are present.
    """
    smallest = min(len(r) for r in datasets.values()) if datasets else None
    out = {}
    for ds_id, recs in datasets.items():
        sub = SamplingSpec(spec.mode, spec.n, derive_seed(spec.seed, ds_id))
        out[ds_id] = resample(recs, sub, smallest)
    return out


# ------------------------------------------------------------------ plans


@dataclass
class CategoryOrder:
    categories: tuple
    within: dict = field(default_factory=dict)

    def __post_init__(self):
        self.categories = tuple(self.categories)
        if len(set(self.categories)) != len(self.categories):
            raise ScheduleError(f"category order repeats a category: {self.categories}")
        unknown = [c for c in self.categories if c not in CATEGORY_LETTERS.values()]
        if unknown:
            raise ScheduleError(f"unknown categories {unknown}")

    @classmethod
    def parse(cls, text, within=None):
        """``"STPM"`` or ``"S T P M"`` -> Scientific, Twitter, Product, Movie."""
        letters = [ch for ch in text.upper() if not ch.isspace() and ch not in ",-"]
        try:
            cats = [CATEGORY_LETTERS[ch] for ch in letters]
        except KeyError as exc:
            raise ScheduleError(f"unknown category letter {exc.args[0]!r} in {text!r}") from None
        return cls(tuple(cats), dict(within or {}))

    def letters(self):
        inv = {v: k for k, v in CATEGORY_LETTERS.items()}
        return " ".join(inv[c] for c in self.categories)


@dataclass
class SchedulePlan:
    """Feeding plan over ``datasets`` (``{dataset_id: records}``).

    ``kind`` is ``"sequential"``, ``"shuffled"`` or ``"multitask"``.
    ``sequence`` lists dataset ids in feeding order for sequential plans.
    """

    kind: str
    datasets: dict
    seed: int = 0
    sequence: tuple = ()
    order: CategoryOrder = None
    epoch_reshuffle: bool = True
    mix_policy: str = None
    label: str = ""

    def __len__(self):
        return sum(len(r) for r in self.datasets.values())

    @property
    def tasks(self):
        return sorted({r.task for recs in self.datasets.values() for r in recs})

    def record(self, ref):
        ds, i = ref
        return self.datasets[ds][i]

    def _epoch_key(self, epoch):
        return epoch if self.epoch_reshuffle else 0

    def epoch_refs(self, epoch=0):
        """Sample references in feeding order for one epoch."""
        e = self._epoch_key(epoch)
        if self.kind == "sequential":
            refs = []
            for ds in self.sequence:
                rng = np.random.default_rng(derive_seed(self.seed, "within", ds, e))
                refs.extend((ds, int(i)) for i in rng.permutation(len(self.datasets[ds])))
            return refs
        if self.kind == "shuffled":
            refs = [(ds, i) for ds in self.datasets for i in range(len(self.datasets[ds]))]
            rng = np.random.default_rng(derive_seed(self.seed, "global", e))
            return [refs[i] for i in rng.permutation(len(refs))]
        if self.kind == "multitask":
            return [ref for _, chunk in self.task_batches(1, epoch) for ref in chunk]
        raise ScheduleError(f"unknown plan kind {self.kind!r}")

    def task_batches(self, batch_size, epoch=0):
        """``[(task, refs)]`` batches for one epoch; every batch holds one task."""
        if self.kind != "multitask":
            refs = self.epoch_refs(epoch)
            out = []
            for start in range(0, len(refs), batch_size):
                chunk = refs[start : start + batch_size]
                # sequential/shuffled plans are single-task; split defensively on task change
                for task, sub in _split_by_task(self, chunk):
                    out.append((task, sub))
            return out
        e = self._epoch_key(epoch)
        per_task = {}
        for task in self.tasks:
            refs = [(ds, i) for ds, recs in self.datasets.items() for i, r in enumerate(recs) if r.task == task]
            rng = np.random.default_rng(derive_seed(self.seed, "task", task, e))
            refs = [refs[i] for i in rng.permutation(len(refs))]
            per_task[task] = [refs[s : s + batch_size] for s in range(0, len(refs), batch_size)]
        tags = _mix_tags(
            {t: len(b) for t, b in per_task.items()},
            self.mix_policy,
            np.random.default_rng(derive_seed(self.seed, "mix", e)),
            self.tasks,
        )
        cursor = {t: 0 for t in per_task}
        out = []
        for t in tags:
            out.append((t, per_task[t][cursor[t]]))
            cursor[t] += 1
        return out


def _split_by_task(plan, chunk):
    groups = []
    for ref in chunk:
        task = plan.record(ref).task
        if groups and groups[-1][0] == task:
            groups[-1][1].append(ref)
        else:
            groups.append((task, [ref]))
    return groups


def _mix_tags(counts, policy, rng, order):
    if policy == "alternating":
        tags = []
        remaining = dict(counts)
        while any(remaining.values()):
            for t in order:
                if remaining[t]:
                    tags.append(t)
                    remaining[t] -= 1
        return tags
    tags = np.array([t for t in order for _ in range(counts[t])], dtype=object)
    return list(tags[rng.permutation(len(tags))])


def _category_of(ds_id, records):
    tags = {r.domain_tag for r in records}
    if len(tags) != 1:
        raise ScheduleError(f"dataset {ds_id!r} mixes domain tags {sorted(tags)}")
    return tags.pop()


def build_sequential(datasets, order, seed=0, sampling=None):
    """Feed whole categories one after another in ``order``.

    Inside a category, datasets follow ``order.within`` (falling back to the
    default listing, then input order); each dataset's samples are reshuffled
    per epoch but never mixed with other datasets.
    """
    datasets = dict(datasets)
    if not datasets:
        raise ScheduleError("no datasets to schedule")
    by_cat = {}
    for ds_id, recs in datasets.items():
        if not recs:
            raise ScheduleError(f"dataset {ds_id!r} is empty")
        cat = _category_of(ds_id, recs)
        if cat not in order.categories:
            raise ScheduleError(f"dataset {ds_id!r} has category {cat!r} missing from the order")
        by_cat.setdefault(cat, []).append(ds_id)
    sequence = []
    for cat in order.categories:
        members = by_cat.get(cat, [])
        pref = list(order.within.get(cat, DEFAULT_WITHIN_CATEGORY.get(cat, ())))
        rank = {d: (pref.index(d) if d in pref else len(pref) + i) for i, d in enumerate(members)}
        sequence.extend(sorted(members, key=rank.__getitem__))
    label = " ".join(x for x in ((sampling.label() if sampling else ""), order.letters()) if x)
    return SchedulePlan("sequential", datasets, seed, tuple(sequence), order, True, label=label)


def build_shuffled(datasets, seed=0, epoch_reshuffle=True, sampling=None):
    """One global permutation over all samples, regenerated every epoch by default."""
    datasets = dict(datasets)
    if not sum(len(r) for r in datasets.values()):
        raise ScheduleError("no samples to schedule")
    label = " ".join(x for x in ("Shuffled", sampling.label() if sampling else "") if x)
    return SchedulePlan("shuffled", datasets, seed, tuple(datasets), None, epoch_reshuffle, label=label)


def build_multitask(sentiment_datasets, intent_dataset, mix_policy="proportional", seed=0):
    """Task-homogeneous batches drawn from sentiment datasets and one intent dataset.

    ``proportional`` yields a seeded interleaving whose per-task batch counts
    follow the task sample counts; ``alternating`` is strict round-robin
    until one task runs out.
    """
    if mix_policy not in MIX_POLICIES:
        raise ScheduleError(f"unknown mix policy {mix_policy!r}")
    sentiment_datasets = dict(sentiment_datasets)
    if isinstance(intent_dataset, dict):
        intent = dict(intent_dataset)
    else:
        recs = list(intent_dataset)
        intent = {recs[0].dataset_id if recs else "intent": recs}
    if not sum(len(r) for r in sentiment_datasets.values()):
        raise ScheduleError("multi-task plan needs sentiment samples")
    if not sum(len(r) for r in intent.values()):
        raise ScheduleError("multi-task plan needs intent samples")
    for ds, recs in sentiment_datasets.items():
        bad = {r.label for r in recs} - set(TASK_LABELS["Sentiment"])
        if bad or any(r.task != "Sentiment" for r in recs):
            raise ScheduleError(f"{ds!r} is not a sentiment dataset")
    for ds, recs in intent.items():
        if any(r.task != "Intent" for r in recs):
            raise ScheduleError(f"{ds!r} is not an intent dataset")
    overlap = set(sentiment_datasets) & set(intent)
    if overlap:
        raise ScheduleError(f"dataset ids used for both tasks: {sorted(overlap)}")
    datasets = {**sentiment_datasets, **intent}
    return SchedulePlan("multitask", datasets, seed, tuple(datasets), None, True, mix_policy, label="Multi-task")


def single_dataset_plan(records, seed=0):
    """Shuffled plan over one dataset (the in-domain baseline)."""
    records = list(records)
    if not records:
        raise ScheduleError("no samples to schedule")
    return build_shuffled({records[0].dataset_id: records}, seed)


# ------------------------------------------------------------------ batches


@dataclass
class Batch:
    tokens: np.ndarray
    labels: np.ndarray
    task: str
    dataset_ids: list
    mask: np.ndarray

    def __len__(self):
        return len(self.labels)


def iterate_batches(plan, batch_size=24, max_len=128, vocab=None, epoch=0, classes=None):
    """Yield tokenized, padded :class:`Batch` objects for one epoch of ``plan``.

    ``classes`` maps task -> class label tuple (label index = position); it
    defaults to each task's canonical label set.
    """
    if batch_size < 1:
        raise ScheduleError("batch_size must be >= 1")
    classes = classes or {}
    for task, refs in plan.task_batches(batch_size, epoch):
        labels_for = classes.get(task, TASK_LABELS.get(task, ()))
        index = {l: i for i, l in enumerate(labels_for)}
        recs = [plan.record(r) for r in refs]
        try:
            labels = np.array([index[r.label] for r in recs], dtype=np.int64)
        except KeyError as exc:
            raise ScheduleError(f"label {exc.args[0]!r} is not a class of task {task!r}") from None
        seqs = [tokenize(r.text, vocab, max_len) for r in recs]
        tokens, mask = pad_sequences(seqs, max_len)
        yield Batch(tokens, labels, task, [r.dataset_id for r in recs], mask)
