"""Dataset ingestion, label harmonization, duplicate cleaning, splits and statistics."""

import csv
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SENTIMENT_LABELS = ("Positive", "Negative", "Neutral")
BINARY_SENTIMENT_LABELS = ("Positive", "Negative")
INTENT_LABELS = ("Result", "Method", "Background")
TASK_LABELS = {"Sentiment": SENTIMENT_LABELS, "Intent": INTENT_LABELS}
DROP = "Drop"
DOMAINS = ("Movie", "Product", "Twitter", "Scientific")
FORMATS = ("csv", "tsv", "jsonl")
SPLITS = ("train", "val", "test")

# 1-2 stars negative, 3 skipped as neutral, 4-5 positive
STAR_LABEL_MAP = {"1": "Negative", "2": "Negative", "3": DROP, "4": "Positive", "5": "Positive"}
LABEL_PRESETS = {"stars": STAR_LABEL_MAP}

_SPLIT_ALIASES = {
    "train": "train",
    "training": "train",
    "val": "val",
    "valid": "val",
    "validation": "val",
    "dev": "val",
    "test": "test",
    "testing": "test",
}
_WS = re.compile(r"\s+")


class DataError(ValueError):
    """Raised for unreadable files, malformed rows or unmapped labels."""


def normalize_key(text):
    """Duplicate identity: lowercased, whitespace runs collapsed, trimmed."""
    return _WS.sub(" ", text.lower()).strip()


@dataclass
class DatasetManifest:
    dataset_id: str
    file_path: str
    file_format: str
    text_column: object
    label_column: object
    label_map: dict
    domain_tag: str
    task: str = "Sentiment"
    split_column: object = None
    delimiter: str = None
    quotechar: str = '"'
    header: bool = True

    def __post_init__(self):
        if self.file_format not in FORMATS:
            raise DataError(f"{self.dataset_id}: unknown file format {self.file_format!r}")
        if self.domain_tag not in DOMAINS:
            raise DataError(f"{self.dataset_id}: unknown domain {self.domain_tag!r}")
        if self.task not in TASK_LABELS:
            raise DataError(f"{self.dataset_id}: unknown task {self.task!r}")
        if isinstance(self.label_map, str):
            if self.label_map not in LABEL_PRESETS:
                raise DataError(f"{self.dataset_id}: unknown label preset {self.label_map!r}")
            self.label_map = LABEL_PRESETS[self.label_map]
        self.label_map = {str(k): v for k, v in self.label_map.items()}
        allowed = set(TASK_LABELS[self.task]) | {DROP}
        bad = sorted(set(self.label_map.values()) - allowed)
        if bad:
            raise DataError(f"{self.dataset_id}: label_map targets {bad} are not {self.task} labels")

    @property
    def sep(self):
        if self.delimiter is not None:
            return self.delimiter
        return "\t" if self.file_format == "tsv" else ","

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = dict(d)
        cols = d.pop("column_map", None)
        if cols is not None:
            d["text_column"] = cols["text"]
            d["label_column"] = cols["label"]
            d["split_column"] = cols.get("split")
        path = Path(d["file_path"])
        if base_dir is not None and not path.is_absolute():
            path = (Path(base_dir) / path).resolve()
        d["file_path"] = str(path)
        try:
            return cls(**d)
        except TypeError as exc:
            raise DataError(f"bad dataset manifest: {exc}") from None

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise DataError(f"manifest not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"manifest {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self):
        return {
            "dataset_id": self.dataset_id,
            "file_path": self.file_path,
            "file_format": self.file_format,
            "column_map": {"text": self.text_column, "label": self.label_column, "split": self.split_column},
            "label_map": dict(self.label_map),
            "domain_tag": self.domain_tag,
            "task": self.task,
            "delimiter": self.delimiter,
            "quotechar": self.quotechar,
            "header": self.header,
        }


@dataclass
class RawRecord:
    text: str
    raw_label: str
    dataset_id: str
    split_hint: str = None
    row_number: int = 0
    # source line (jsonl) or (header, values) (csv/tsv), kept for rewriting
    row: object = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class HarmonizedRecord:
    text: str
    label: str
    dataset_id: str
    domain_tag: str
    task: str
    split_hint: str = None

    @property
    def normalized_key(self):
        return normalize_key(self.text)


# ----------------------------------------------------------------- ingest


def _read_rows(manifest):
    path = Path(manifest.file_path)
    if not path.is_file():
        raise DataError(f"{manifest.dataset_id}: data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        if manifest.file_format == "jsonl":
            for n, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{manifest.dataset_id}: malformed JSON on line {n}: {exc}") from None
                if not isinstance(obj, dict):
                    raise DataError(f"{manifest.dataset_id}: line {n} is not a JSON object")
                yield n, obj, line
            return
        reader = csv.reader(fh, delimiter=manifest.sep, quotechar=manifest.quotechar)
        header = None
        for row in reader:
            n = reader.line_num
            if manifest.header and header is None:
                header = row
                continue
            if not row:
                continue
            yield n, (header, row), None


def _field(manifest, n, row, column, required=True):
    if manifest.file_format == "jsonl":
        if column not in row:
            if not required:
                return None
            raise DataError(f"{manifest.dataset_id}: row {n} lacks field {column!r}")
        return row[column]
    header, values = row
    if isinstance(column, int):
        idx = column
    else:
        if header is None:
            raise DataError(f"{manifest.dataset_id}: named column {column!r} needs a header row")
        if column not in header:
            raise DataError(f"{manifest.dataset_id}: column {column!r} not in header {header}")
        idx = header.index(column)
    if idx >= len(values):
        raise DataError(f"{manifest.dataset_id}: row {n} has {len(values)} fields, needs column {idx}")
    return values[idx]


def ingest(manifest):
    """Read every data row of ``manifest``'s file into :class:`RawRecord` objects.

    Raises :class:`DataError` on a missing file, a malformed row (with its row
    number) or raw labels that ``label_map`` does not cover.
    """
    records = []
    for n, row, line in _read_rows(manifest):
        text = _field(manifest, n, row, manifest.text_column)
        label = _field(manifest, n, row, manifest.label_column)
        if not isinstance(text, str) or not text.strip():
            raise DataError(f"{manifest.dataset_id}: row {n} has an empty text field")
        split = None
        if manifest.split_column is not None:
            raw_split = _field(manifest, n, row, manifest.split_column, required=False)
            if raw_split is not None:
                split = _SPLIT_ALIASES.get(str(raw_split).strip().lower())
                if split is None:
                    raise DataError(f"{manifest.dataset_id}: row {n} has unknown split {raw_split!r}")
        source = line if manifest.file_format == "jsonl" else row
        records.append(RawRecord(text, str(label).strip(), manifest.dataset_id, split, n, source))
    unmapped = sorted({r.raw_label for r in records} - set(manifest.label_map))
    if unmapped:
        raise DataError(f"{manifest.dataset_id}: unmapped raw labels {unmapped}")
    return records


def harmonize(records, manifest, binary=False):
    """Map raw labels to the unified scheme, dropping ``Drop`` (and, when
    ``binary``, ``Neutral``) records. Order is preserved."""
    out = []
    for r in records:
        label = manifest.label_map[r.raw_label]
        if label == DROP or (binary and label == "Neutral"):
            continue
        out.append(HarmonizedRecord(r.text, label, r.dataset_id, manifest.domain_tag, manifest.task, r.split_hint))
    return out


# ------------------------------------------------------------------ cleaning


@dataclass
class CleaningReport:
    original: dict
    removed: dict

    @property
    def classes(self):
        return list(self.original)

    @property
    def remaining(self):
        return {c: self.original[c] - self.removed.get(c, 0) for c in self.original}

    @property
    def removed_percent(self):
        return {c: 100.0 * self.removed.get(c, 0) / n if n else 0.0 for c, n in self.original.items()}

    @property
    def remaining_percent(self):
        rem = self.remaining
        total = sum(rem.values())
        return {c: 100.0 * v / total if total else 0.0 for c, v in rem.items()}

    @property
    def total_original(self):
        return sum(self.original.values())

    @property
    def total_removed(self):
        return sum(self.removed.values())

    @property
    def total_removed_percent(self):
        return 100.0 * self.total_removed / self.total_original if self.total_original else 0.0

    def rows(self):
        rem, dist, pct = self.remaining, self.remaining_percent, self.removed_percent
        for c in self.classes:
            yield c, self.original[c], rem[c], dist[c], self.removed.get(c, 0), pct[c]

    def to_csv(self):
        lines = ["class,original,clean,clean_distribution_percent,removed,removed_percent"]
        for c, o, r, d, rm, p in self.rows():
            lines.append(f"{c},{o},{r},{d!r},{rm},{p!r}")
        lines.append(
            f"Total,{self.total_original},{self.total_original - self.total_removed},100.0,"
            f"{self.total_removed},{self.total_removed_percent!r}"
        )
        return "\n".join(lines) + "\n"

    def to_markdown(self):
        lines = [
            "| Class | Original | Clean | Clean Dist. | Removed [%] |",
            "|---|---:|---:|---:|---:|",
        ]
        for c, o, r, d, rm, p in self.rows():
            lines.append(f"| {c} | {o:,} | {r:,} | {d:.2f}% | {rm:,} ({p:.2f}) |")
        lines.append(
            f"| Total | {self.total_original:,} | {self.total_original - self.total_removed:,} | 100.00% "
            f"| {self.total_removed:,} ({self.total_removed_percent:.2f}) |"
        )
        return "\n".join(lines) + "\n"


def duplicate_groups(records):
    groups = defaultdict(list)
    for i, r in enumerate(records):
        groups[r.normalized_key].append(i)
    return groups


def drop_indices(records):
    """Positions removed by :func:`dedup_clean`."""
    if len({r.task for r in records}) > 1:
        raise DataError("dedup_clean expects records of a single task")
    drop = set()
    for idx in duplicate_groups(records).values():
        if len(idx) == 1:
            continue
        if len({records[i].label for i in idx}) > 1:
            drop.update(idx)
        else:
            drop.update(idx[1:])
    return drop


def dedup_clean(records):
    """Remove duplicate texts.

    Same-label duplicates keep their first occurrence; a duplicate group with
    conflicting labels is removed entirely. Returns ``(kept, CleaningReport)``.
    """
    records = list(records)
    drop = drop_indices(records)
    original = Counter(r.label for r in records)
    removed = Counter(records[i].label for i in drop)
    order = _label_order(original)
    report = CleaningReport({c: original[c] for c in order}, {c: removed.get(c, 0) for c in order})
    return [r for i, r in enumerate(records) if i not in drop], report


def _label_order(labels):
    """Canonical task order first, then anything else alphabetically."""
    known = [l for task in TASK_LABELS.values() for l in task]
    return sorted(labels, key=lambda l: (known.index(l) if l in known else len(known), l))


# ------------------------------------------------------------------ splitting


def _largest_remainder(n, ratios):
    exact = np.asarray(ratios, dtype=float) * n
    base = np.floor(exact + 1e-9).astype(int)
    frac = exact - base
    for i in np.argsort(-frac, kind="stable")[: n - base.sum()]:
        base[i] += 1
    return base


def _controlled_rounding(class_sizes, split_totals, ratios):
    """Integer class x split table with the given row and column sums where
    every cell is the floor or ceiling of ``class_size * ratio``."""
    sizes = np.asarray(class_sizes)
    exact = sizes[:, None] * np.asarray(ratios, dtype=float)[None, :]
    table = np.floor(exact + 1e-9).astype(int)
    row_need = sizes - table.sum(axis=1)
    col_need = np.asarray(split_totals) - table.sum(axis=0)
    frac = exact - table
    cells = sorted(np.ndindex(table.shape), key=lambda rc: -frac[rc])
    bumped = np.zeros(table.shape, dtype=bool)
    for r, c in cells:
        if row_need[r] > 0 and col_need[c] > 0 and frac[r, c] > 1e-9:
            bumped[r, c] = True
            row_need[r] -= 1
            col_need[c] -= 1
    # remaining units: augmenting paths over the bipartite class/split graph
    while row_need.sum() > 0:
        if not _augment(bumped, frac, row_need, col_need):
            raise DataError("cannot allocate stratified split")
    return table + bumped


def _augment(bumped, frac, row_need, col_need):
    n_rows, n_cols = bumped.shape
    for start in np.flatnonzero(row_need > 0):
        # BFS alternating: row -(unbumped cell)-> col -(bumped cell)-> row
        parent = {("r", start): None}
        queue = [("r", start)]
        while queue:
            kind, i = queue.pop(0)
            if kind == "r":
                for c in range(n_cols):
                    if not bumped[i, c] and ("c", c) not in parent:
                        parent[("c", c)] = ("r", i)
                        if col_need[c] > 0:
                            node = ("c", c)
                            while parent[node] is not None:
                                prev = parent[node]
                                r, cc = (prev[1], node[1]) if node[0] == "c" else (node[1], prev[1])
                                bumped[r, cc] = not bumped[r, cc]
                                node = prev
                            row_need[start] -= 1
                            col_need[c] -= 1
                            return True
                        queue.append(("c", c))
            else:
                for r in range(n_rows):
                    if bumped[r, i] and ("r", r) not in parent:
                        parent[("r", r)] = ("c", i)
                        queue.append(("r", r))
    return False


def _check_ratios(ratios):
    ratios = tuple(float(r) for r in ratios)
    if any(r < 0 for r in ratios) or not any(r > 0 for r in ratios):
        raise ValueError(f"split ratios must be non-negative with a positive entry: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1: {ratios}")
    return ratios


def split(records, ratios=(0.8, 0.1, 0.1), seed=0, stratified=False):
    """Partition records into ``(train, val, test)``.

    Sizes follow ``ratios`` by largest-remainder rounding. With
    ``stratified=True`` each class lands in each split within one record of
    its proportional share. Each split keeps the input order.
    """
    records = list(records)
    ratios = _check_ratios(ratios)
    n = len(records)
    totals = _largest_remainder(n, ratios)
    rng = np.random.default_rng(seed)
    assign = np.empty(n, dtype=int)
    if not stratified:
        perm = rng.permutation(n)
        assign[perm] = np.repeat(np.arange(len(ratios)), totals)
    else:
        by_class = defaultdict(list)
        for i, r in enumerate(records):
            by_class[r.label].append(i)
        labels = _label_order(by_class)
        nonempty = sum(1 for r in ratios if r > 0)
        small = [l for l in labels if len(by_class[l]) < nonempty]
        if small:
            raise DataError(f"classes {small} have fewer records than the {nonempty} non-empty splits")
        table = _controlled_rounding([len(by_class[l]) for l in labels], totals, ratios)
        for row, l in enumerate(labels):
            idx = np.asarray(by_class[l])[rng.permutation(len(by_class[l]))]
            assign[idx] = np.repeat(np.arange(len(ratios)), table[row])
    return tuple([r for i, r in enumerate(records) if assign[i] == s] for s in range(len(ratios)))


def provided_splits(records):
    """Group records by their ``split_hint``; ``None`` when any hint is missing."""
    if not records or any(r.split_hint is None for r in records):
        return None
    return tuple([r for r in records if r.split_hint == s] for s in SPLITS)


# ------------------------------------------------------------------ stats


@dataclass
class CorpusStats:
    split_counts: dict
    class_counts: dict  # task -> {label: count}
    split_class_counts: dict  # split -> task -> {label: count}

    @property
    def class_percent(self):
        out = {}
        for task, counts in self.class_counts.items():
            total = sum(counts.values())
            out[task] = {l: 100.0 * c / total for l, c in counts.items()}
        return out

    @property
    def total(self):
        return sum(self.split_counts.values())

    def to_markdown(self):
        lines = []
        for task, counts in self.class_counts.items():
            pct = self.class_percent[task]
            splits = list(self.split_counts)
            lines.append(f"### {task}")
            lines.append("| Class | " + " | ".join(s.capitalize() for s in splits) + " | Total | Percentage |")
            lines.append("|---|" + "---:|" * (len(splits) + 2))
            for label, c in counts.items():
                per = [self.split_class_counts[s].get(task, {}).get(label, 0) for s in splits]
                lines.append(f"| {label} | " + " | ".join(f"{v:,}" for v in per) + f" | {c:,} | {pct[label]:.2f} |")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "split_counts": self.split_counts,
            "class_counts": self.class_counts,
            "class_percent": self.class_percent,
            "split_class_counts": self.split_class_counts,
        }


def stats(data):
    """Counts per split and per-class percentages per task.

    ``data`` is a sequence of records (reported as one ``all`` split), a
    ``(train, val, test)`` tuple, or a ``{split_name: records}`` mapping.
    """
    if isinstance(data, dict):
        splits = dict(data)
    elif isinstance(data, tuple) and len(data) == 3 and all(isinstance(s, (list, tuple)) for s in data):
        splits = dict(zip(SPLITS, data))
    else:
        splits = {"all": list(data)}
    if not any(len(s) for s in splits.values()):
        raise ValueError("stats needs at least one record")
    per_split = {}
    totals = defaultdict(Counter)
    for name, recs in splits.items():
        c = defaultdict(Counter)
        for r in recs:
            c[r.task][r.label] += 1
            totals[r.task][r.label] += 1
        per_split[name] = {t: dict(v) for t, v in c.items()}
    class_counts = {t: {l: totals[t][l] for l in _label_order(totals[t])} for t in totals}
    return CorpusStats({n: len(r) for n, r in splits.items()}, class_counts, per_split)


# ------------------------------------------------------------------ folds


@dataclass
class FoldSet:
    k: int
    folds: list  # k sorted int arrays

    def train_test(self, i):
        test = self.folds[i]
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train, test


def make_folds(records, k=10, seed=0, stratified=False):
    """Partition record indices into ``k`` folds whose sizes differ by at most one.

    Stratified folds deal each class round-robin after a seeded shuffle, so
    every fold receives each class within one record of its share.
    """
    records = list(records)
    n = len(records)
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"k={k} is larger than the number of records ({n})")
    rng = np.random.default_rng(seed)
    if stratified:
        by_class = defaultdict(list)
        for i, r in enumerate(records):
            by_class[r.label].append(i)
        order = np.concatenate(
            [np.asarray(by_class[l])[rng.permutation(len(by_class[l]))] for l in _label_order(by_class)]
        )
    else:
        order = rng.permutation(n)
    slot = np.arange(n) % k
    return FoldSet(k, [np.sort(order[slot == i]) for i in range(k)])


# ------------------------------------------------------------------ writers


def write_records(path, records, manifest, header=None):
    """Write raw records back in the manifest's own file format.

    JSON-lines records are written back verbatim; delimited rows are
    re-serialized with the manifest's delimiter and quote character.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if manifest.file_format == "jsonl":
            for r in records:
                fh.write(r.row if r.row.endswith("\n") else r.row + "\n")
            return path
        writer = csv.writer(fh, delimiter=manifest.sep, quotechar=manifest.quotechar, lineterminator="\n")
        if manifest.header:
            if header is None and records:
                header = records[0].row[0]
            if header is not None:
                writer.writerow(header)
        for r in records:
            writer.writerow(r.row[1])
    return path


def read_header(manifest):
    """First row of a delimited file with a header, else ``None``."""
    if manifest.file_format == "jsonl" or not manifest.header:
        return None
    with open(manifest.file_path, newline="", encoding="utf-8") as fh:
        return next(csv.reader(fh, delimiter=manifest.sep, quotechar=manifest.quotechar), None)


def write_jsonl(path, records):
    """Serialize harmonized records, one JSON object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {"text": r.text, "label": r.label, "dataset_id": r.dataset_id, "domain": r.domain_tag, "task": r.task},
                    ensure_ascii=False,
                )
                + "\n"
            )
    return path


def read_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(HarmonizedRecord(d["text"], d["label"], d["dataset_id"], d["domain"], d["task"]))
    return out
