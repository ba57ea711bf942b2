"""scikit-learn compatible wrappers around the numpy text classifier."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .corpus import HarmonizedRecord, split
from .model import EncoderConfig, LossSpec, ModelConfig, OptState, class_weights, loss, opt_step
from .model.layers import softmax
from .smote import SmoteSpec, smote_augment
from .train import TrainConfig, train
from .utils import check_texts, check_texts_labels, derive_seed

_TASK = "default"


class TextClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Neural text classifier trained from scratch.

    Parameters
    ----------
    encoder : {"meanpool", "cnn", "rnn", "lstm", "attention"}, default="attention"
    embed_dim, max_len, layers, filters, widths, hidden, bidirectional,
    model_dim, heads, ff_dim
        Encoder architecture, see :class:`citesent.model.EncoderConfig`.
        ``widths=None`` uses width 3 for every CNN layer.
    loss : {"ce", "weighted", "focal"}, default="ce"
    focal_gamma : float, default=2.0
    class_weight : None, "balanced" or dict
        ``"balanced"`` derives inverse-frequency weights from the training
        labels and switches the loss to weighted cross-entropy.
    resampling : None, "up" or "smote"
        ``"up"`` duplicates minority-class texts up to the majority count
        before training. ``"smote"`` trains normally, then refits the head on
        frozen pooled embeddings augmented with SMOTE samples.
    epochs, batch_size, patience, min_delta, lr
        Optimisation settings, see :class:`citesent.train.TrainConfig`.
    validation_fraction : float, default=0.1
        Held out (stratified) for early stopping when ``fit`` gets no
        ``eval_set``. 0 disables early stopping.
    random_state : int, default=0

    Attributes
    ----------
    classes_ : ndarray
    model_ : citesent.model.TextModel
    log_ : citesent.train.TrainLog
    """

    def __init__(
        self,
        encoder="attention",
        embed_dim=64,
        max_len=128,
        layers=2,
        filters=64,
        widths=None,
        hidden=64,
        bidirectional=False,
        model_dim=64,
        heads=4,
        ff_dim=128,
        loss="ce",
        focal_gamma=2.0,
        class_weight=None,
        resampling=None,
        epochs=40,
        batch_size=24,
        patience=5,
        min_delta=1e-4,
        lr=1e-3,
        validation_fraction=0.1,
        random_state=0,
    ):
        self.encoder = encoder
        self.embed_dim = embed_dim
        self.max_len = max_len
        self.layers = layers
        self.filters = filters
        self.widths = widths
        self.hidden = hidden
        self.bidirectional = bidirectional
        self.model_dim = model_dim
        self.heads = heads
        self.ff_dim = ff_dim
        self.loss = loss
        self.focal_gamma = focal_gamma
        self.class_weight = class_weight
        self.resampling = resampling
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.min_delta = min_delta
        self.lr = lr
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def encoder_config(self):
        widths = self.widths if self.widths is not None else (3,) * self.layers
        return EncoderConfig(
            variant=self.encoder,
            embed_dim=self.embed_dim,
            max_len=self.max_len,
            layers=self.layers,
            filters=self.filters,
            widths=tuple(widths),
            hidden=self.hidden,
            bidirectional=self.bidirectional,
            model_dim=self.model_dim,
            heads=self.heads,
            ff_dim=self.ff_dim,
        )

    def _loss_spec(self, y_idx):
        k = len(self.classes_)
        if self.class_weight is not None:
            if isinstance(self.class_weight, str):
                if self.class_weight != "balanced":
                    raise ValueError(f"unknown class_weight {self.class_weight!r}")
                w = class_weights(np.bincount(y_idx, minlength=k))
            else:
                w = [float(self.class_weight.get(c, 1.0)) for c in self.classes_]
            return LossSpec("weighted", tuple(w))
        if self.loss == "weighted":
            raise ValueError("loss='weighted' needs class_weight")
        return LossSpec(self.loss, (), self.focal_gamma)

    def _records(self, X, y_idx):
        return [HarmonizedRecord(x, str(i), "fit", "Scientific", _TASK) for x, i in zip(X, y_idx)]

    def _encode_labels(self, y):
        index = {c: i for i, c in enumerate(self.classes_)}
        try:
            return np.array([index[v] for v in y], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} not seen during fit") from None

    def fit(self, X, y, eval_set=None):
        X, y = check_texts_labels(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        y_idx = self._encode_labels(y)
        train_recs = self._records(X, y_idx)
        if eval_set is not None:
            Xv, yv = check_texts_labels(*eval_set)
            val_recs = self._records(Xv, self._encode_labels(yv))
        elif self.validation_fraction and self.validation_fraction > 0:
            f = float(self.validation_fraction)
            try:
                train_recs, _, val_recs = split(train_recs, (1 - f, 0.0, f), self.random_state, stratified=True)
            except ValueError:
                train_recs, _, val_recs = split(train_recs, (1 - f, 0.0, f), self.random_state)
        else:
            val_recs = []
        if self.resampling == "up":
            train_recs = _random_oversample(train_recs, derive_seed(self.random_state, "upsample"))
        elif self.resampling not in (None, "smote"):
            raise ValueError(f"unknown resampling {self.resampling!r}")

        fit_idx = np.array([int(r.label) for r in train_recs])
        spec = self._loss_spec(fit_idx)
        mcfg = ModelConfig(self.encoder_config(), {_TASK: tuple(str(i) for i in range(len(self.classes_)))})
        tcfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            min_delta=self.min_delta,
            seed=self.random_state,
            losses={_TASK: spec},
            lr=self.lr,
        )
        self.model_, self.log_ = train(mcfg, train_recs, {_TASK: val_recs} if val_recs else None, tcfg)
        if self.resampling == "smote":
            self._refit_head_with_smote(train_recs, spec)
        return self

    def _refit_head_with_smote(self, records, spec):
        feats = self.model_.embed([r.text for r in records])
        y_idx = np.array([int(r.label) for r in records])
        counts = np.bincount(y_idx, minlength=len(self.classes_))
        X_aug, y_aug = feats, y_idx
        for c in range(len(counts)):
            need = counts.max() - counts[c]
            if need <= 0 or counts[c] < 2:
                continue
            k = int(min(5, counts[c] - 1))
            X_new, y_new = smote_augment(
                feats, y_idx, SmoteSpec(k, int(need), (0.0, 1.0), derive_seed(self.random_state, "smote", c)), c
            )
            X_aug = np.vstack([X_aug, X_new[len(feats) :]])
            y_aug = np.concatenate([y_aug, y_new[len(feats) :]])
        W, b = f"head.{_TASK}.W", f"head.{_TASK}.b"
        head = DenseHeadClassifier(epochs=self.epochs, lr=self.lr, batch_size=self.batch_size, random_state=self.random_state)
        head._fit_indices(X_aug, y_aug, len(self.classes_), spec, self.model_.params[W], self.model_.params[b])
        self.model_.params[W] = head.coef_
        self.model_.params[b] = head.intercept_

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return softmax(self.model_.logits(check_texts(X), _TASK))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]

    def transform(self, X):
        """Pooled encoder features, shape (n_texts, encoder output dim)."""
        check_is_fitted(self, "model_")
        return self.model_.embed(check_texts(X))


def _random_oversample(records, seed):
    rng = np.random.default_rng(seed)
    by = {}
    for r in records:
        by.setdefault(r.label, []).append(r)
    top = max(len(v) for v in by.values())
    out = list(records)
    for label in sorted(by):
        group = by[label]
        extra = top - len(group)
        if extra > 0:
            out.extend(group[i] for i in rng.integers(0, len(group), size=extra))
    return out


class DenseHeadClassifier(ClassifierMixin, BaseEstimator):
    """Softmax layer over continuous features, trained with Adam.

    Used for the SMOTE path, where synthetic samples exist only as vectors.
    """

    def __init__(self, loss="ce", focal_gamma=2.0, epochs=40, batch_size=24, lr=1e-3, random_state=0):
        self.loss = loss
        self.focal_gamma = focal_gamma
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        index = {c: i for i, c in enumerate(self.classes_)}
        y_idx = np.array([index[v] for v in y])
        return self._fit_indices(X, y_idx, len(self.classes_), LossSpec(self.loss, (), self.focal_gamma))

    def _fit_indices(self, X, y_idx, k, spec, W0=None, b0=None):
        if not hasattr(self, "classes_"):
            self.classes_ = np.arange(k)
        rng = np.random.default_rng(self.random_state)
        d = X.shape[1]
        params = {
            "W": W0.copy() if W0 is not None else rng.uniform(-1, 1, (d, k)) / np.sqrt(d),
            "b": b0.copy() if b0 is not None else np.zeros(k),
        }
        opt = OptState(self.lr)
        for _ in range(self.epochs):
            perm = rng.permutation(len(X))
            for s in range(0, len(X), self.batch_size):
                idx = perm[s : s + self.batch_size]
                _, dlogits = loss(X[idx] @ params["W"] + params["b"], y_idx[idx], spec)
                opt_step(params, {"W": X[idx].T @ dlogits, "b": dlogits.sum(axis=0)}, opt)
        self.coef_, self.intercept_ = params["W"], params["b"]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        return softmax(check_array(X, dtype=np.float64) @ self.coef_ + self.intercept_)

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
