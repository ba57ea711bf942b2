"""Classification losses returning the scalar loss and its gradient w.r.t. logits."""

from dataclasses import dataclass, field

import numpy as np

from .layers import log_softmax

LOSS_KINDS = ("ce", "weighted", "focal")
PROB_FLOOR = 1e-12


@dataclass
class LossSpec:
    """``kind`` is ``"ce"``, ``"weighted"`` (needs ``weights``) or ``"focal"``."""

    kind: str = "ce"
    weights: tuple = field(default_factory=tuple)
    gamma: float = 2.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        self.weights = tuple(float(w) for w in self.weights)
        if self.kind == "weighted":
            if not self.weights:
                raise ValueError("weighted loss needs per-class weights")
            if any(w <= 0 for w in self.weights):
                raise ValueError("class weights must be positive")
        if self.gamma < 0:
            raise ValueError("focal gamma must be >= 0")

    def to_dict(self):
        return {"kind": self.kind, "weights": list(self.weights), "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def loss(logits, labels, spec=None):
    """Mean loss over the batch and d(loss)/d(logits).

    Parameters
    ----------
    logits : ndarray of shape (n, K)
    labels : int ndarray of shape (n,)
    spec : LossSpec, default plain cross-entropy
    """
    spec = spec or LossSpec()
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, K = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels out of range for {K} classes")
    rows = np.arange(n)
    logp = log_softmax(logits)
    probs = np.exp(logp)
    onehot = np.zeros_like(logits)
    onehot[rows, labels] = 1.0
    logp_t = logp[rows, labels]

    if spec.kind == "focal":
        # log p_t comes from log-softmax and is always finite; the floor only
        # guards the modulating factor, so gamma=0 reduces to CE exactly
        p_t = np.maximum(probs[rows, labels], PROB_FLOOR)
        mod = (1.0 - p_t) ** spec.gamma
        per = -mod * logp_t
        if spec.gamma == 0:
            dmod = np.zeros_like(p_t)
        else:
            dmod = -spec.gamma * (1.0 - p_t) ** (spec.gamma - 1.0)
        # dL/dp_t * p_t, chained through p_t = softmax(z)[y]
        scale = -(dmod * logp_t * p_t + mod)
        grad = scale[:, None] * (onehot - probs)
        return per.mean(), grad / n

    per = -logp_t
    grad = probs - onehot
    if spec.kind == "weighted":
        w = np.asarray(spec.weights)
        if len(w) != K:
            raise ValueError(f"{len(w)} class weights for {K} classes")
        wy = w[labels]
        per = per * wy
        grad = grad * wy[:, None]
    return per.mean(), grad / n


def class_weights(class_counts):
    """Inverse-frequency weights ``N / (K * N_c)``.

    >>> class_weights([75, 25])
    array([0.66666667, 2.        ])
    """
    counts = np.asarray(class_counts, dtype=float)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("class_counts must be a non-empty 1-D sequence")
    if np.any(counts <= 0):
        raise ValueError("every class needs at least one sample to derive a weight")
    return counts.sum() / (counts.size * counts)
