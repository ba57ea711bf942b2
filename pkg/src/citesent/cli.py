"""Command-line entry point.

Usage::

    citesent [--seed N] [--jobs N] [--out DIR] <command> ...

Commands read a run manifest (see :mod:`citesent.manifest`); ``clean`` and
``stats`` also accept a single dataset manifest. Run outputs go to
``<out>/<run name>/`` where ``<out>`` is ``--out``, else ``$CITESENT_OUT``,
else the manifest's ``output`` entry, else ``./runs``.

Exit codes: 0 success, 1 validation error (nothing written), 2 runtime failure.
"""

import argparse
import datetime
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import corpus
from .corpus import DROP, DataError, HarmonizedRecord
from .evaluation import cross_domain_matrix, cross_validate, evaluate_model
from .manifest import SCHEMA, ManifestError, RunManifest, prepare_all
from .model import LossSpec, class_weights, load_checkpoint, save_checkpoint
from .reports import consolidated_report
from .schedule import ScheduleError, build_multitask, build_sequential, build_shuffled, normalize_sizes
from .train import TrainingDiverged, TrainLog, fine_tune, train, train_multitask
from .utils import derive_seed

logger = logging.getLogger("citesent")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
OUT_ENV = "CITESENT_OUT"
VALIDATION_ERRORS = (ManifestError, DataError, ScheduleError)


# ------------------------------------------------------------------ helpers


def _read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path} is not valid JSON: {exc}") from None


def load_run(path, seed=None):
    """Load a run manifest; a bare dataset manifest becomes a one-dataset run."""
    path = Path(path)
    raw = _read_json(path)
    if not isinstance(raw, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    if "datasets" not in raw:
        raw = {"name": path.stem, "datasets": [raw]}
    if seed is not None:
        raw = {**raw, "seed": seed}
    return RunManifest.from_dict(raw, base_dir=path.parent, default_name=path.stem)


def out_root(args, run=None):
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if run is not None and run.output:
        return Path(run.output)
    return Path("runs")


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _metrics(rep):
    return {
        "micro_f1": rep.micro_f1,
        "macro_f1": rep.macro_f1,
        "accuracy": float(rep.accuracy),
        "per_class_accuracy": dict(zip(rep.classes, rep.per_class_accuracy)),
    }


def _reports_csv(test, tasks):
    lines = ["scope,name,metric,value"]
    for scope, block in (("dataset", test), ("task", tasks)):
        for name, m in block.items():
            lines.append(f"{scope},{name},micro_f1,{m['micro_f1']!r}")
            lines.append(f"{scope},{name},macro_f1,{m['macro_f1']!r}")
            lines.append(f"{scope},{name},accuracy,{m['accuracy']!r}")
            for c, v in m["per_class_accuracy"].items():
                lines.append(f"{scope},{name},recall_{c},{'' if v is None else repr(v)}")
    return "\n".join(lines) + "\n"


def _concat(parts):
    return [r for p in parts for r in p]


class RunWriter:
    """Owns one run directory; created only once validation has passed."""

    def __init__(self, root, run, command, manifest_path):
        self.dir = Path(root) / run.name
        self.run = run
        self.command = command
        self.manifest_path = Path(manifest_path)
        self.started = datetime.datetime.now(datetime.timezone.utc)
        self.t0 = time.perf_counter()
        self.meta = {}

    def open(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        _write(self.dir / "manifest.json", self.run.to_json())
        raw = self.manifest_path.read_bytes()
        (self.dir / "manifest.original.json").write_bytes(raw)
        return self

    def summary(self, status="ok", error=None, filename="summary.json", **fields):
        s = {
            "name": self.run.name,
            "command": self.command,
            "label": self.run.label(),
            "seed": self.run.seed,
            "status": status,
            "error": error,
        }
        s.update(fields)
        _write(self.dir / filename, _dump(s))
        meta = {
            "started": self.started.isoformat(),
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "wall_seconds": time.perf_counter() - self.t0,
            "argv": sys.argv,
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
        meta.update(self.meta)
        _write(self.dir / "metadata.json", _dump(meta))
        return s


# ----------------------------------------------------------------- commands


def cmd_clean(args):
    run = load_run(args.manifest, args.seed)
    dest = Path(args.output) if args.output else out_root(args, run) / "clean"
    results = []
    for dm in run.datasets:
        raw = corpus.ingest(dm)
        keep = [i for i, r in enumerate(raw) if dm.label_map[r.raw_label] != DROP]
        recs = [HarmonizedRecord(raw[i].text, dm.label_map[raw[i].raw_label], dm.dataset_id, dm.domain_tag, dm.task) for i in keep]
        _, report = corpus.dedup_clean(recs)
        dropped = {keep[i] for i in corpus.drop_indices(recs)}
        results.append((dm, [r for i, r in enumerate(raw) if i not in dropped], report))
    for dm, kept, report in results:
        suffix = Path(dm.file_path).suffix or f".{dm.file_format}"
        target = dest / f"{dm.dataset_id}.clean{suffix}"
        corpus.write_records(target, kept, dm, header=corpus.read_header(dm))
        _write(dest / f"{dm.dataset_id}.audit.csv", report.to_csv())
        _write(dest / f"{dm.dataset_id}.audit.md", report.to_markdown())
        print(f"## {dm.dataset_id}\n\n{report.to_markdown()}")
        print(f"removed {report.total_removed} of {report.total_original} ({report.total_removed_percent:.2f}%) -> {target}")
    return EXIT_OK


def cmd_stats(args):
    run = load_run(args.manifest, args.seed)
    prepared = prepare_all(run)
    parts, data = [], {}
    for ds, p in prepared.items():
        st = corpus.stats(p.splits)
        data[ds] = st.to_dict()
        parts.append(f"## {ds}\n\n{st.to_markdown()}")
    text = "\n".join(parts)
    print(text, end="")
    if args.output:
        _write(Path(args.output) / "stats.md", text)
        _write(Path(args.output) / "stats.json", _dump(data))
    return EXIT_OK


def cmd_prepare(args):
    run = load_run(args.manifest, args.seed)
    prepared = prepare_all(run)
    w = RunWriter(out_root(args, run), run, "prepare", args.manifest).open()
    for ds, p in prepared.items():
        base = w.dir / "prepared" / ds
        for name, recs in zip(corpus.SPLITS, p.splits):
            corpus.write_jsonl(base / f"{name}.jsonl", recs)
        _write(base / "audit.csv", p.report.to_csv())
        _write(base / "audit.md", p.report.to_markdown())
        _write(base / "stats.md", corpus.stats(p.splits).to_markdown())
    w.summary(filename="prepare.json", datasets={ds: [len(s) for s in p.splits] for ds, p in prepared.items()})
    print(w.dir)
    return EXIT_OK


def _loss_specs(run, plan_records, model_cfg):
    specs = run.loss_specs()
    if not run.use_class_weights:
        return specs
    for task, classes in model_cfg.tasks.items():
        labels = [r.label for r in plan_records if r.task == task]
        counts = [labels.count(c) for c in classes]
        if 0 in counts:
            missing = [c for c, n in zip(classes, counts) if n == 0]
            raise DataError(f"class weights need every {task} class in training data; missing {missing}")
        specs[task] = LossSpec("weighted", tuple(class_weights(counts)))
    return specs


def _single_task_plan(run, prepared):
    wrong = {ds: p.task for ds, p in prepared.items() if p.task != run.task}
    if wrong:
        raise ManifestError(f"datasets {wrong} do not belong to task {run.task!r}")
    train_sets = {ds: p.splits[0] for ds, p in prepared.items()}
    empty = [ds for ds, recs in train_sets.items() if not recs]
    if empty:
        raise ManifestError(f"empty training split for {empty}")
    seed = run.schedule_seed
    kind = run.kind
    if kind == "multitask":
        raise ManifestError("schedule kind 'multitask' needs the multitask command")
    if kind == "single":
        return build_shuffled(train_sets, seed)
    sampling = run.sampling()
    sized = normalize_sizes(train_sets, sampling)
    if kind == "sequential":
        return build_sequential(sized, run.category_order(), seed, sampling)
    return build_shuffled(sized, seed, run.schedule.get("reshuffle", True), sampling)


def _plan_records(plan):
    return [plan.record(r) for r in plan.epoch_refs(0)]


def _test_metrics(model, prepared):
    test, tasks, by_task = {}, {}, {}
    for ds, p in prepared.items():
        recs = p.splits[2]
        if not recs or p.task not in model.config.tasks:
            continue
        test[ds] = _metrics(evaluate_model(model, recs, p.task, test_dataset_id=ds))
        by_task.setdefault(p.task, []).append(recs)
    for task, parts in by_task.items():
        tasks[task] = _metrics(evaluate_model(model, _concat(parts), task))
    return test, tasks


def _execute(w, fn, model_extra=None):
    """Run training ``fn`` inside an opened run directory and record the outcome."""
    try:
        model, log = fn()
    except TrainingDiverged as exc:
        log = exc.log or TrainLog()
        _write(w.dir / "train_log.csv", log.to_csv())
        w.summary("diverged", str(exc), best_epoch=None, stopped_early=False, test={}, tasks={})
        logger.error("%s", exc)
        return EXIT_FAILED
    except Exception as exc:
        logger.exception("training failed")
        w.summary("failed", repr(exc), best_epoch=None, stopped_early=False, test={}, tasks={})
        return EXIT_FAILED
    save_checkpoint(w.dir / "checkpoint.npz", model, extra={"log": log.to_dict(), "run": w.run.name, **(model_extra or {})})
    _write(w.dir / "train_log.csv", log.to_csv())
    w.meta["epoch_wall_times"] = log.wall_times()
    return model, log


def _finish(w, model, log, prepared):
    test, tasks = _test_metrics(model, prepared)
    _write(w.dir / "test_reports.csv", _reports_csv(test, tasks))
    w.summary(
        best_epoch=log.best_epoch,
        best_val_score=log.best_score,
        stopped_early=log.stopped_early,
        epochs_run=log.epochs_run,
        phases=log.phases,
        test=test,
        tasks=tasks,
        dataset_order=list(prepared),
    )
    print(w.dir)
    return EXIT_OK


def cmd_train(args):
    run = load_run(args.manifest, args.seed)
    prepared = prepare_all(run)
    plan = _single_task_plan(run, prepared)
    mcfg = run.model_config()
    cfg = run.train_config(_loss_specs(run, _plan_records(plan), mcfg))
    val = {run.task: _concat(p.splits[1] for p in prepared.values())}
    w = RunWriter(out_root(args, run), run, "train", args.manifest).open()
    out = _execute(w, lambda: train(mcfg, plan, val, cfg))
    if isinstance(out, int):
        return out
    return _finish(w, *out, prepared)


def _checkpoint_path(ref):
    path = Path(ref)
    if path.is_dir():
        path = path / "checkpoint.npz"
    if not path.is_file():
        raise ManifestError(f"checkpoint not found: {ref}")
    return path


def cmd_finetune(args):
    run = load_run(args.manifest, args.seed)
    ft = run.finetune
    if not ft.get("checkpoint"):
        raise ManifestError("finetune block needs a 'checkpoint' (file or run directory)")
    try:
        model, _, _, extra = load_checkpoint(_checkpoint_path(ft["checkpoint"]))
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(f"unreadable checkpoint {ft['checkpoint']}: {exc}") from None
    prepared = prepare_all(run)
    target = ft.get("target") or list(prepared)[-1]
    if target not in prepared:
        raise ManifestError(f"finetune target {target!r} is not among the datasets {list(prepared)}")
    p = prepared[target]
    if p.task not in model.config.tasks:
        raise ManifestError(f"checkpoint has no {p.task!r} head")
    extra_labels = {r.label for r in p.all_records()} - set(model.config.tasks[p.task])
    if extra_labels:
        raise ManifestError(f"labels {sorted(extra_labels)} are not classes of the checkpoint's {p.task!r} head")
    epochs = int(ft.get("epochs", run.train_config().epochs))
    if epochs < 0:
        raise ManifestError("finetune epochs must be >= 0")
    plan = build_shuffled({target: p.splits[0]}, run.schedule_seed)
    cfg = run.train_config(_loss_specs(run, p.splits[0], model.config))
    prior = TrainLog.from_dict(extra.get("log", {}))
    w = RunWriter(out_root(args, run), run, "finetune", args.manifest).open()
    out = _execute(
        w,
        lambda: fine_tune(model, plan, {p.task: p.splits[1]}, cfg, epochs=epochs, log=prior),
        {"base_checkpoint": str(ft["checkpoint"])},
    )
    if isinstance(out, int):
        return out
    return _finish(w, *out, prepared)


def cmd_multitask(args):
    run = load_run(args.manifest, args.seed)
    if run.kind != "multitask":
        run.schedule["kind"] = "multitask"
        run.source.setdefault("schedule", {})["kind"] = "multitask"
    prepared = prepare_all(run)
    by_task = {"Sentiment": {}, "Intent": {}}
    for ds, p in prepared.items():
        by_task[p.task][ds] = p.splits[0]
    for task, sets in by_task.items():
        if not sets:
            raise ManifestError(f"multi-task run needs at least one {task} dataset")
    plan = build_multitask(by_task["Sentiment"], by_task["Intent"], run.schedule.get("mix_policy", "proportional"), run.schedule_seed)
    mcfg = run.model_config()
    cfg = run.train_config(_loss_specs(run, _plan_records(plan), mcfg))
    val = {t: _concat(p.splits[1] for p in prepared.values() if p.task == t) for t in by_task}
    w = RunWriter(out_root(args, run), run, "multitask", args.manifest).open()
    out = _execute(w, lambda: train_multitask(mcfg, plan, val, cfg))
    if isinstance(out, int):
        return out
    return _finish(w, *out, prepared)


def cmd_matrix(args):
    run = load_run(args.manifest, args.seed)
    if len(run.datasets) < 2:
        raise ManifestError("a cross-domain matrix needs at least two datasets")
    tasks = {dm.task for dm in run.datasets}
    if len(tasks) > 1:
        raise ManifestError(f"matrix datasets mix tasks {sorted(tasks)}")
    est = run.estimator()
    prepared = prepare_all(run)
    w = RunWriter(out_root(args, run), run, "matrix", args.manifest).open()
    splits = {ds: p.splits for ds, p in prepared.items()}
    m = cross_domain_matrix(splits, est, derive_seed(run.seed, "matrix"), jobs=args.jobs)
    _write(w.dir / "matrix.csv", m.to_csv())
    _write(w.dir / "matrix.md", m.to_markdown())
    ok = any(v is not None for row in m.macro_f1 for v in row)
    errors = {f"{a}->{b if b else '*'}": e for (a, b), e in sorted(m.errors.items(), key=lambda kv: (kv[0][0], kv[0][1] or ""))}
    w.summary(
        "ok" if ok else "failed",
        None if ok else "every cell failed",
        datasets=m.datasets,
        macro_f1=m.macro_f1,
        cell_errors=errors,
        matrix_markdown=m.to_markdown(),
    )
    print(m.to_markdown(), end="")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_crossval(args):
    run = load_run(args.manifest, args.seed)
    if len(run.datasets) != 1:
        raise ManifestError("cross-validation takes exactly one dataset")
    k = int(run.crossval.get("k", 10))
    if k < 2:
        raise ManifestError("crossval k must be >= 2")
    stratified = bool(run.crossval.get("stratified", True))
    est = run.estimator()
    (ds, p), = prepare_all(run).items()
    records = p.all_records()
    present = {r.label for r in records}
    classes = [c for c in run.task_classes(p.task) if c in present]
    w = RunWriter(out_root(args, run), run, "crossval", args.manifest).open()
    try:
        res = cross_validate(records, est, k, derive_seed(run.seed, "folds"), stratified, classes)
    except Exception as exc:
        logger.exception("cross-validation failed")
        w.summary("failed", repr(exc))
        return EXIT_FAILED
    _write(w.dir / "folds.csv", res.to_csv())
    _write(w.dir / "folds.md", res.to_markdown())
    w.summary(
        k=k,
        stratified=stratified,
        mean=_metrics(res.mean),
        folds=[_metrics(r) for r in res.folds],
        folds_markdown=res.to_markdown(),
    )
    print(res.to_markdown(), end="")
    return EXIT_OK


def cmd_report(args):
    if not any((Path(d) / "summary.json").is_file() for d in args.run_dirs):
        raise ManifestError("none of the given directories holds a summary.json")
    text = consolidated_report(args.run_dirs)
    if args.output:
        _write(args.output, text)
    print(text, end="")
    return EXIT_OK


def cmd_schema(args):
    print(_dump(SCHEMA), end="")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the manifest's top-level seed")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="parallel workers (matrix rows)")
    common.add_argument("--out", default=argparse.SUPPRESS, help=f"output root (default: ${OUT_ENV} or ./runs)")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="citesent", description="Citation sentiment/intent training pipeline.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help, manifest=True):
        p = sub.add_parser(name, help=help, parents=[common])
        if manifest:
            p.add_argument("manifest", help="run manifest (or dataset manifest) JSON")
        p.set_defaults(func=fn)
        return p

    p = add("clean", cmd_clean, "deduplicate a dataset and write the cleaning audit")
    p.add_argument("-o", "--output", help="directory for the cleaned file and audit (default: <out>/clean)")
    p = add("stats", cmd_stats, "per-split class counts of the prepared datasets")
    p.add_argument("-o", "--output", help="also write stats.md / stats.json here")
    add("prepare", cmd_prepare, "ingest, harmonize, clean and split; write the splits")
    add("train", cmd_train, "train a single-task model over the manifest's schedule")
    add("finetune", cmd_finetune, "fine-tune a checkpoint on the target dataset")
    add("multitask", cmd_multitask, "joint sentiment + intent training")
    add("matrix", cmd_matrix, "cross-domain train/test macro-F1 matrix")
    add("crossval", cmd_crossval, "k-fold cross-validation on one dataset")
    p = add("report", cmd_report, "merge run summaries into comparison tables", manifest=False)
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("-o", "--output", help="also write the markdown here")
    add("schema", cmd_schema, "print the run manifest JSON schema", manifest=False)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("seed", None), ("jobs", 1), ("out", None), ("verbose", 0)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"citesent {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything past validation is a runtime failure
        logger.debug("unhandled", exc_info=True)
        print(f"citesent {args.command}: failed: {exc!r}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
