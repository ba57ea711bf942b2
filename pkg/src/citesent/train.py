"""Epoch loop with validation early stopping, fine-tuning and multi-task training."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .evaluation import evaluate_model
from .model import LossSpec, ModelConfig, OptState, TextModel, backward, build_vocab, init_params, opt_step
from .schedule import SchedulePlan, build_shuffled, iterate_batches
from .utils import derive_seed

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    """Non-finite loss; ``log`` holds the epochs completed before the abort."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 24
    patience: int = 5
    min_delta: float = 1e-4
    early_stopping: bool = True
    seed: int = 0
    losses: dict = field(default_factory=dict)  # task -> LossSpec; CE when absent
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.losses = {t: (s if isinstance(s, LossSpec) else LossSpec.from_dict(s)) for t, s in self.losses.items()}

    def loss_for(self, task):
        return self.losses.get(task) or LossSpec()

    def new_opt_state(self):
        return OptState(self.lr, self.beta1, self.beta2, self.eps)

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "patience": self.patience,
            "min_delta": self.min_delta,
            "early_stopping": self.early_stopping,
            "seed": self.seed,
            "losses": {t: s.to_dict() for t, s in self.losses.items()},
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }


class EarlyStopping:
    """Tracks the best score; signals a stop after ``patience`` epochs without
    an improvement larger than ``min_delta``."""

    def __init__(self, patience=5, min_delta=1e-4):
        self.patience = patience
        self.min_delta = min_delta
        self.best_score = -np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch, score):
        if score > self.best_score + self.min_delta:
            self.best_score = score
            self.best_epoch = epoch
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    train_loss: float
    val: dict  # task -> {"macro_f1": ..., "accuracy": ...}
    score: float
    wall_time: float = 0.0


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    phases: dict = field(default_factory=dict)  # phase -> {"best_epoch", "best_score", "stopped_early", "epochs"}

    @property
    def last_phase(self):
        return next(reversed(self.phases)) if self.phases else None

    @property
    def best_epoch(self):
        return self.phases[self.last_phase]["best_epoch"] if self.phases else 0

    @property
    def best_score(self):
        return self.phases[self.last_phase]["best_score"] if self.phases else None

    @property
    def stopped_early(self):
        return self.phases[self.last_phase]["stopped_early"] if self.phases else False

    @property
    def epochs_run(self):
        return len([r for r in self.records if r.phase == self.last_phase])

    def tasks(self):
        seen = []
        for r in self.records:
            for t in r.val:
                if t not in seen:
                    seen.append(t)
        return seen

    def to_csv(self):
        tasks = self.tasks()
        cols = ["phase", "epoch", "train_loss"]
        for t in tasks:
            cols += [f"val_{t}_macro_f1", f"val_{t}_accuracy"]
        cols.append("score")
        lines = [",".join(cols)]
        for r in self.records:
            vals = [r.phase, str(r.epoch), repr(float(r.train_loss))]
            for t in tasks:
                m = r.val.get(t)
                vals += ["", ""] if m is None else [repr(float(m["macro_f1"])), repr(float(m["accuracy"]))]
            vals.append("" if r.score is None else repr(float(r.score)))
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "phases": self.phases,
            "records": [
                {"epoch": r.epoch, "phase": r.phase, "train_loss": r.train_loss, "val": r.val, "score": r.score}
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, d):
        log = cls(phases={k: dict(v) for k, v in d.get("phases", {}).items()})
        for r in d.get("records", []):
            log.records.append(EpochRecord(r["epoch"], r["phase"], r["train_loss"], r["val"], r["score"]))
        return log

    def wall_times(self):
        return [{"phase": r.phase, "epoch": r.epoch, "seconds": r.wall_time} for r in self.records]


def validate(model, val_sets):
    """Per-task validation metrics and their unweighted mean macro-F1."""
    out = {}
    for task, recs in val_sets.items():
        if not recs:
            continue
        rep = evaluate_model(model, recs, task)
        out[task] = {"macro_f1": rep.macro_f1, "accuracy": float(rep.accuracy)}
    score = float(np.mean([m["macro_f1"] for m in out.values()])) if out else None
    return out, score


def _run(model, plan, val_sets, cfg, log, phase, epochs):
    if len(plan) == 0:
        raise TrainingError("empty plan")
    missing = set(plan.tasks) - set(model.config.tasks)
    if missing:
        raise TrainingError(f"plan tasks {sorted(missing)} have no registered head")
    val_sets = {t: list(v) for t, v in (val_sets or {}).items() if v}
    if val_sets and not set(plan.tasks) <= set(val_sets):
        raise TrainingError(f"validation sets needed for tasks {sorted(set(plan.tasks) - set(val_sets))}")
    opt = cfg.new_opt_state()
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    best_params = {k: v.copy() for k, v in model.params.items()}
    stopped = False
    log.phases[phase] = {"best_epoch": 0, "best_score": None, "stopped_early": False, "epochs": 0}
    enc = model.config.encoder
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        total, count = 0.0, 0
        batches = iterate_batches(plan, cfg.batch_size, enc.max_len, model.vocab, epoch - 1, model.config.tasks)
        for b_idx, batch in enumerate(batches):
            with np.errstate(over="ignore", invalid="ignore"):
                value, grads = backward(
                    model.params, model.config, batch.tokens, batch.mask, batch.labels, batch.task, cfg.loss_for(batch.task)
                )
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss in {phase} epoch {epoch}, batch {b_idx} ({batch.task})", log)
            # heads of other tasks sit out the update entirely
            grads = {k: g for k, g in grads.items() if not k.startswith("head.") or k.startswith(f"head.{batch.task}.")}
            opt_step(model.params, grads, opt)
            total += value * len(batch)
            count += len(batch)
        val, score = validate(model, val_sets)
        log.records.append(EpochRecord(epoch, phase, float(total / count), val, score, time.perf_counter() - t0))
        logger.info("%s epoch %d loss %.4f val %s", phase, epoch, total / count, score)
        if score is None or not cfg.early_stopping:
            best_params = model.params
            stopper.best_epoch, stopper.best_score = epoch, score
            continue
        improved_before = stopper.best_epoch
        stop = stopper.update(epoch, score)
        if stopper.best_epoch != improved_before or epoch == 1:
            best_params = {k: v.copy() for k, v in model.params.items()}
        if stop:
            stopped = True
            break
    model.params = {k: v.copy() for k, v in best_params.items()}
    log.phases[phase] = {
        "best_epoch": stopper.best_epoch,
        "best_score": None if stopper.best_score in (None, -np.inf) else float(stopper.best_score),
        "stopped_early": stopped,
        "epochs": len([r for r in log.records if r.phase == phase]),
    }
    return model, log


def _as_plan(data, seed):
    if isinstance(data, SchedulePlan):
        return data
    recs = list(data)
    if not recs:
        raise TrainingError("empty plan")
    return build_shuffled({recs[0].dataset_id: recs}, seed)


def train(model_cfg, plan, val_sets=None, cfg=None, params=None, vocab=None, phase="train"):
    """Train a shared-encoder model over ``plan``.

    Validation macro-F1 (mean over tasks) drives early stopping and the
    parameters of the best epoch are restored before returning.

    Parameters
    ----------
    model_cfg : ModelConfig
    plan : SchedulePlan or sequence of HarmonizedRecord
    val_sets : dict mapping task -> records, optional
        Without validation data every epoch runs and the last one is kept.
    cfg : TrainConfig
    params, vocab : optional warm start; built from ``plan`` when omitted.

    Returns
    -------
    (TextModel, TrainLog)
    """
    cfg = cfg or TrainConfig()
    plan = _as_plan(plan, derive_seed(cfg.seed, "schedule"))
    if vocab is None:
        vocab = build_vocab(plan.record(r).text for r in plan.epoch_refs(0))
    if params is None:
        rng = np.random.default_rng(derive_seed(cfg.seed, "init"))
        params = init_params(model_cfg, len(vocab), rng)
    model = TextModel(model_cfg, vocab, {k: v.copy() for k, v in params.items()})
    return _run(model, plan, val_sets, cfg, TrainLog(), phase, cfg.epochs)


def fine_tune(checkpoint, target, val_sets=None, cfg=None, epochs=None, log=None, phase="finetune"):
    """Continue training ``checkpoint`` (a TextModel) on ``target`` only.

    Weights are kept, optimizer moments start fresh. ``epochs=0`` returns the
    checkpoint parameters unchanged. When ``log`` is given the new phase is
    appended to it.
    """
    cfg = cfg or TrainConfig()
    model = checkpoint.copy()
    log = log if log is not None else TrainLog()
    plan = _as_plan(target, derive_seed(cfg.seed, "finetune"))
    for task in plan.tasks:
        if task not in model.config.tasks:
            raise TrainingError(f"checkpoint has no head for task {task!r}")
        labels = {plan.record(r).label for r in plan.epoch_refs(0) if plan.record(r).task == task}
        extra = labels - set(model.config.tasks[task])
        if extra:
            raise TrainingError(f"labels {sorted(extra)} are not classes of the checkpoint's {task!r} head")
    n = cfg.epochs if epochs is None else epochs
    if n == 0:
        return model, log
    return _run(model, plan, val_sets, cfg, log, phase, n)


def train_multitask(model_cfg, plan, val_sets=None, cfg=None, params=None, vocab=None):
    """Joint training of every task head over a multi-task plan."""
    if plan.kind != "multitask":
        raise TrainingError("train_multitask needs a plan from build_multitask")
    missing = {"Sentiment", "Intent"} - set(model_cfg.tasks)
    if missing:
        raise TrainingError(f"model has no head for {sorted(missing)}")
    return train(model_cfg, plan, val_sets, cfg, params, vocab, phase="multitask")


__all__ = [
    "EarlyStopping",
    "EpochRecord",
    "ModelConfig",
    "TrainConfig",
    "TrainLog",
    "TrainingDiverged",
    "TrainingError",
    "fine_tune",
    "train",
    "train_multitask",
    "validate",
]
