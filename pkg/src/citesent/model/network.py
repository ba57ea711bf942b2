"""Shared-encoder classifier: embedding -> encoder -> one dense head per task.

Parameters live in a flat ``{name: float64 array}`` dict:

* ``embedding`` -- (vocab, embed_dim)
* ``enc.*`` -- encoder tensors, see :mod:`citesent.model.encoders`
* ``head.<task>.W`` / ``head.<task>.b`` -- one classification head per task
"""

from dataclasses import dataclass, field

import numpy as np

from . import encoders
from .losses import LossSpec, loss as loss_fn
from .layers import softmax
from .vocab import PAD_INDEX, pad_sequences, tokenize


@dataclass
class ModelConfig:
    encoder: encoders.EncoderConfig = field(default_factory=encoders.EncoderConfig)
    tasks: dict = field(default_factory=dict)  # task tag -> tuple of class labels

    def __post_init__(self):
        self.tasks = {t: tuple(c) for t, c in self.tasks.items()}
        for t, classes in self.tasks.items():
            if len(classes) < 2:
                raise ValueError(f"task {t!r} needs at least two classes")
            if len(set(classes)) != len(classes):
                raise ValueError(f"task {t!r} has repeated class labels")

    def to_dict(self):
        return {"encoder": self.encoder.to_dict(), "tasks": {t: list(c) for t, c in self.tasks.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(encoders.EncoderConfig.from_dict(d["encoder"]), d["tasks"])


def head_names(task):
    return f"head.{task}.W", f"head.{task}.b"


def init_params(cfg, vocab_size, rng):
    enc = cfg.encoder
    params = {"embedding": rng.uniform(-0.05, 0.05, size=(vocab_size, enc.embed_dim))}
    params.update(encoders.init_encoder(enc, rng))
    for task, classes in cfg.tasks.items():
        W, b = head_names(task)
        params[W] = encoders.dense_init(rng, enc.output_dim, len(classes))
        params[b] = np.zeros(len(classes))
    return params


def _check_task(params, task):
    if f"head.{task}.W" not in params:
        raise KeyError(f"no head registered for task {task!r}")


def encode_batch(params, cfg, tokens, mask):
    """Pooled encoder output for a padded batch, shape (batch, output_dim)."""
    x = params["embedding"][tokens]
    pooled, _ = encoders.encode(params, cfg.encoder, x, mask)
    return pooled


def forward(params, cfg, tokens, mask, task):
    """Logits of shape (batch, n_classes(task))."""
    _check_task(params, task)
    W, b = head_names(task)
    return encode_batch(params, cfg, tokens, mask) @ params[W] + params[b]


def backward(params, cfg, tokens, mask, labels, task, spec=None):
    """Loss and exact gradients for every parameter tensor.

    Heads of other tasks get all-zero gradients.
    """
    _check_task(params, task)
    Wn, bn = head_names(task)
    x = params["embedding"][tokens]
    pooled, cache = encoders.encode(params, cfg.encoder, x, mask)
    logits = pooled @ params[Wn] + params[bn]
    value, dlogits = loss_fn(logits, labels, spec or LossSpec())

    grads = {name: np.zeros_like(p) for name, p in params.items()}
    grads[Wn] = pooled.T @ dlogits
    grads[bn] = dlogits.sum(axis=0)
    dpooled = dlogits @ params[Wn].T
    dx, enc_grads = encoders.encode_backward(params, cfg.encoder, dpooled, cache)
    grads.update(enc_grads)
    np.add.at(grads["embedding"], tokens, dx)
    return value, grads


@dataclass
class TextModel:
    """Config, vocabulary and parameters travelling together."""

    config: ModelConfig
    vocab: object
    params: dict

    def batches(self, texts, batch_size=256):
        max_len = self.config.encoder.max_len
        ids = [tokenize(t, self.vocab, max_len) for t in texts]
        for start in range(0, len(ids), batch_size):
            yield pad_sequences(ids[start : start + batch_size], max_len)

    def logits(self, texts, task, batch_size=256):
        n_classes = len(self.config.tasks[task])
        out = [forward(self.params, self.config, tok, m, task) for tok, m in self.batches(texts, batch_size)]
        return np.concatenate(out) if out else np.zeros((0, n_classes))

    def predict_proba(self, texts, task):
        return softmax(self.logits(texts, task))

    def predict_indices(self, texts, task):
        return self.logits(texts, task).argmax(axis=1)

    def predict(self, texts, task):
        classes = self.config.tasks[task]
        return [classes[i] for i in self.predict_indices(texts, task)]

    def embed(self, texts, batch_size=256):
        """Frozen pooled encoder features, one row per text."""
        out = [encode_batch(self.params, self.config, tok, m) for tok, m in self.batches(texts, batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.config.encoder.output_dim))

    def copy(self):
        return TextModel(self.config, self.vocab, {k: v.copy() for k, v in self.params.items()})


__all__ = [
    "ModelConfig",
    "TextModel",
    "backward",
    "encode_batch",
    "forward",
    "head_names",
    "init_params",
    "PAD_INDEX",
]
