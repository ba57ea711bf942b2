"""Consolidated comparison tables built from run summaries."""

import json
import logging
from pathlib import Path

from .corpus import TASK_LABELS

logger = logging.getLogger(__name__)


def _fmt(v):
    return "-" if v is None else f"{100 * v:.2f}"


def load_summaries(run_dirs):
    out = []
    for d in run_dirs:
        path = Path(d) / "summary.json"
        if not path.is_file():
            logger.warning("no summary in %s, skipped", d)
            continue
        out.append(json.loads(path.read_text()))
    return out


def dataset_table(summaries):
    """Rows = runs, columns = test datasets, cells = macro-F1 (Tables 5/7 shape)."""
    rows = [s for s in summaries if s.get("test")]
    if not rows:
        return ""
    cols = []
    for s in rows:
        for ds in s.get("dataset_order") or s["test"]:
            if ds not in cols:
                cols.append(ds)
    lines = ["| Run | " + " | ".join(cols) + " |", "|---|" + "---:|" * len(cols)]
    for s in rows:
        cells = [_fmt(s["test"].get(ds, {}).get("macro_f1")) for ds in cols]
        lines.append(f"| {s.get('label') or s['name']} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def task_table(summaries):
    """Rows = runs, columns = tasks, cells = macro-F1 (Table 8 shape)."""
    rows = [s for s in summaries if s.get("tasks")]
    if not rows:
        return ""
    seen = {t for s in rows for t in s["tasks"]}
    tasks = [t for t in TASK_LABELS if t in seen] + sorted(seen - set(TASK_LABELS))
    lines = ["| Model | " + " | ".join(tasks) + " |", "|---|" + "---:|" * len(tasks)]
    for s in rows:
        cells = [_fmt(s["tasks"].get(t, {}).get("macro_f1")) for t in tasks]
        name = s.get("label") or s["name"]
        if s.get("command") != "multitask":
            name = f"Single task ({name})"
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def consolidated_report(run_dirs):
    summaries = load_summaries(run_dirs)
    parts = ["# Run comparison", ""]
    training = [s for s in summaries if s.get("command") in ("train", "finetune", "multitask")]
    table = dataset_table(training)
    if table:
        parts += ["## Macro-F1 [%] per test dataset", "", table]
    if any(s.get("command") == "multitask" for s in summaries):
        parts += ["## Multi-task vs single task (macro-F1 [%])", "", task_table(training)]
    for s in summaries:
        if s.get("command") == "matrix" and s.get("matrix_markdown"):
            parts += [f"## Cross-domain matrix: {s['name']}", "", s["matrix_markdown"]]
        if s.get("command") == "crossval" and s.get("folds_markdown"):
            parts += [f"## Cross-validation: {s['name']}", "", s["folds_markdown"]]
    return "\n".join(parts).rstrip() + "\n"
