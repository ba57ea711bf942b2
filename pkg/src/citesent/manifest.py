"""Run manifests: the JSON document describing one experiment end to end.

Example::

    {
      "name": "up-stpm",
      "task": "Sentiment",
      "binary": true,
      "seed": 0,
      "datasets": ["data/imdb.json", "data/csc.json"],
      "split": {"ratios": [0.8, 0.1, 0.1], "stratified": null},
      "schedule": {"kind": "sequential", "order": "STPM", "sampling": "up:3000",
                   "batch_size": 24, "epochs": 40},
      "model": {"encoder": {"variant": "attention"}, "loss": {"kind": "focal", "gamma": 2.0}},
      "training": {"patience": 5, "min_delta": 0.0001, "lr": 0.001}
    }

Relative paths are resolved against the manifest's directory. ``stratified``
``null`` means "on for Scientific datasets, off elsewhere".

Seeds: every randomized component draws from ``derive_seed(seed, component,
...)`` with components ``corpus/<dataset>``, ``schedule``, ``sampling``,
``init`` (inside training), ``folds`` and ``matrix``.
"""

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import corpus
from .corpus import BINARY_SENTIMENT_LABELS, TASK_LABELS, DataError, DatasetManifest
from .estimator import TextClassifier
from .model import EncoderConfig, LossSpec, ModelConfig
from .schedule import CategoryOrder, SamplingSpec
from .train import TrainConfig
from .utils import derive_seed

KINDS = ("single", "sequential", "shuffled", "multitask")
SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "citesent run manifest",
    "type": "object",
    "required": ["datasets"],
    "properties": {
        "name": {"type": "string"},
        "task": {"enum": list(TASK_LABELS)},
        "binary": {"type": "boolean"},
        "seed": {"type": "integer"},
        "output": {"type": "string"},
        "datasets": {"type": "array", "minItems": 1, "items": {"type": ["string", "object"]}},
        "split": {
            "type": "object",
            "properties": {
                "ratios": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                "stratified": {"type": ["boolean", "null"]},
                "use_provided": {"type": "boolean"},
            },
        },
        "schedule": {
            "type": "object",
            "properties": {
                "kind": {"enum": list(KINDS)},
                "order": {"type": "string"},
                "within": {"type": "object"},
                "sampling": {"type": "string"},
                "seed": {"type": ["integer", "null"]},
                "batch_size": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 1},
                "reshuffle": {"type": "boolean"},
                "mix_policy": {"enum": ["proportional", "alternating"]},
            },
        },
        "model": {"type": "object"},
        "training": {"type": "object"},
        "finetune": {"type": "object"},
        "crossval": {"type": "object"},
    },
}


class ManifestError(ValueError):
    pass


@dataclass
class RunManifest:
    name: str
    datasets: list  # DatasetManifest
    task: str = "Sentiment"
    binary: bool = True
    seed: int = 0
    output: str = None
    split_ratios: tuple = (0.8, 0.1, 0.1)
    stratified: object = None
    use_provided_splits: bool = True
    schedule: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    finetune: dict = field(default_factory=dict)
    crossval: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, repr=False)

    # ---- construction

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ManifestError(f"run manifest not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw, base_dir=path.parent, default_name=path.stem)

    @classmethod
    def from_dict(cls, raw, base_dir=".", default_name="run"):
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ManifestError(f"invalid run manifest: {exc.message}") from None
        base_dir = Path(base_dir)
        datasets = []
        resolved = []
        for entry in raw["datasets"]:
            if isinstance(entry, str):
                dm = DatasetManifest.load(base_dir / entry)
            else:
                dm = DatasetManifest.from_dict(entry, base_dir=base_dir)
            datasets.append(dm)
            resolved.append(dm.to_dict())
        ids = [d.dataset_id for d in datasets]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ManifestError(f"duplicate dataset ids: {dupes}")
        split_block = raw.get("split", {})
        source = copy.deepcopy(raw)
        source["datasets"] = resolved
        ft = dict(raw.get("finetune", {}))
        if ft.get("checkpoint") and not Path(ft["checkpoint"]).is_absolute():
            ft["checkpoint"] = str((base_dir / ft["checkpoint"]).resolve())
            source["finetune"] = ft
        m = cls(
            name=raw.get("name", default_name),
            datasets=datasets,
            task=raw.get("task", "Sentiment"),
            binary=raw.get("binary", raw.get("task", "Sentiment") == "Sentiment"),
            seed=raw.get("seed", 0),
            output=raw.get("output"),
            split_ratios=tuple(split_block.get("ratios", (0.8, 0.1, 0.1))),
            stratified=split_block.get("stratified"),
            use_provided_splits=split_block.get("use_provided", True),
            schedule=dict(raw.get("schedule", {})),
            model=dict(raw.get("model", {})),
            training=dict(raw.get("training", {})),
            finetune=ft,
            crossval=dict(raw.get("crossval", {})),
            source=source,
        )
        m.validate()
        return m

    def validate(self):
        try:
            self.encoder_config()
            self.train_config()
            self.sampling()
            if self.kind == "sequential":
                self.category_order()
            corpus._check_ratios(self.split_ratios)
        except (ValueError, TypeError) as exc:
            raise ManifestError(str(exc)) from None

    def to_json(self):
        """Resolved, self-contained manifest (dataset entries inlined)."""
        return json.dumps(self.source, indent=2, sort_keys=True) + "\n"

    # ---- derived configuration

    @property
    def kind(self):
        return self.schedule.get("kind", "single")

    @property
    def schedule_seed(self):
        s = self.schedule.get("seed")
        return derive_seed(self.seed, "schedule") if s is None else s

    def sampling(self):
        return SamplingSpec.parse(self.schedule.get("sampling", "none"), derive_seed(self.seed, "sampling"))

    def category_order(self):
        return CategoryOrder.parse(self.schedule.get("order", "STPM"), self.schedule.get("within"))

    def encoder_config(self):
        return EncoderConfig(**self.model.get("encoder", {}))

    def task_classes(self, task=None):
        task = task or self.task
        if task == "Sentiment" and self.binary and self.kind != "multitask":
            return BINARY_SENTIMENT_LABELS
        return TASK_LABELS[task]

    def model_config(self):
        if self.kind == "multitask":
            tasks = {"Sentiment": TASK_LABELS["Sentiment"], "Intent": TASK_LABELS["Intent"]}
        else:
            tasks = {self.task: self.task_classes()}
        return ModelConfig(self.encoder_config(), tasks)

    def loss_specs(self):
        block = self.model.get("loss")
        if block is None:
            return {}
        if "kind" in block:
            return {t: LossSpec.from_dict(block) for t in self.model_config().tasks}
        return {t: LossSpec.from_dict(v) for t, v in block.items()}

    @property
    def use_class_weights(self):
        return bool(self.model.get("class_weights", False))

    def train_config(self, losses=None):
        t = dict(self.training)
        for key in ("epochs", "batch_size"):
            if key in self.schedule:
                t[key] = self.schedule[key]
        t.setdefault("seed", derive_seed(self.seed, "train") % (2**32))
        t["losses"] = losses if losses is not None else self.loss_specs()
        return TrainConfig(**t)

    def estimator(self):
        """:class:`~citesent.estimator.TextClassifier` configured from the model and training blocks."""
        enc = self.encoder_config()
        t = self.train_config()
        spec = t.loss_for(self.task)
        class_weight = "balanced" if self.use_class_weights else None
        kind = spec.kind
        if kind == "weighted":
            class_weight = dict(zip(self.task_classes(), spec.weights)) if spec.weights else "balanced"
            kind = "ce"
        return TextClassifier(
            encoder=enc.variant,
            embed_dim=enc.embed_dim,
            max_len=enc.max_len,
            layers=enc.layers,
            filters=enc.filters,
            widths=enc.widths,
            hidden=enc.hidden,
            bidirectional=enc.bidirectional,
            model_dim=enc.model_dim,
            heads=enc.heads,
            ff_dim=enc.ff_dim,
            loss=kind,
            focal_gamma=spec.gamma,
            class_weight=class_weight,
            resampling=self.model.get("resampling"),
            epochs=t.epochs,
            batch_size=t.batch_size,
            patience=t.patience,
            min_delta=t.min_delta,
            lr=t.lr,
            random_state=t.seed,
        )

    def stratify(self, dm):
        if self.stratified is None:
            return dm.domain_tag == "Scientific"
        return bool(self.stratified)

    def label(self):
        """Row label used in comparison tables, e.g. ``Up S T P M``."""
        if self.kind == "sequential":
            return " ".join(x for x in (self.sampling().label(), self.category_order().letters()) if x)
        if self.kind == "shuffled":
            return " ".join(x for x in ("Shuffled", self.sampling().label()) if x)
        if self.kind == "multitask":
            return "Multi-task"
        return self.name


@dataclass
class PreparedDataset:
    manifest: DatasetManifest
    splits: tuple  # (train, val, test)
    report: corpus.CleaningReport

    @property
    def dataset_id(self):
        return self.manifest.dataset_id

    @property
    def task(self):
        return self.manifest.task

    def all_records(self):
        return [r for s in self.splits for r in s]


def prepare_dataset(dm, run):
    """ingest -> harmonize -> clean (across all splits) -> provided or fresh splits."""
    raw = corpus.ingest(dm)
    binary = run.binary and dm.task == "Sentiment" and run.kind != "multitask"
    recs = corpus.harmonize(raw, dm, binary=binary)
    if not recs:
        raise DataError(f"{dm.dataset_id}: no records left after harmonization")
    clean, report = corpus.dedup_clean(recs)
    splits = corpus.provided_splits(clean) if run.use_provided_splits else None
    if splits is None:
        splits = corpus.split(
            clean, run.split_ratios, derive_seed(run.seed, "corpus", dm.dataset_id), stratified=run.stratify(dm)
        )
    return PreparedDataset(dm, splits, report)


def prepare_all(run):
    return {dm.dataset_id: prepare_dataset(dm, run) for dm in run.datasets}
