"""SMOTE over fixed-dimension feature vectors (e.g. frozen pooled text embeddings)."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.neighbors import NearestNeighbors
from sklearn.utils.validation import check_array


@dataclass
class SmoteSpec:
    k_neighbors: int = 5
    n_synthetic: int = 0
    lambda_range: tuple = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.lambda_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"lambda_range must lie within [0, 1]: {self.lambda_range}")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be positive")
        if self.n_synthetic < 0:
            raise ValueError("n_synthetic must be >= 0")


def smote_augment(X, y, spec, minority_label=None, return_parents=False):
    """Append ``spec.n_synthetic`` interpolated minority samples.

    Each synthetic vector is ``x_i + lam * (x_j - x_i)`` where ``x_j`` is one
    of the ``k`` nearest same-class neighbours of a randomly chosen ``x_i``
    and ``lam ~ U(lambda_range)``.

    Parameters
    ----------
    X : array-like of shape (n_samples, n_features)
    y : array-like of shape (n_samples,)
    spec : SmoteSpec
    minority_label : label to oversample; the least frequent class by default.
    return_parents : bool
        Also return an ``(n_synthetic, 2)`` array of parent row indices and
        the ``lam`` values.

    Returns
    -------
    X_out, y_out[, parents, lambdas]
        Originals first, synthetics appended.
    """
    X = check_array(X, dtype=np.float64)
    y = np.asarray(y)
    if len(y) != len(X):
        raise ValueError("X and y lengths differ")
    if minority_label is None:
        labels, counts = np.unique(y, return_counts=True)
        minority_label = labels[np.argmin(counts)]
    idx = np.flatnonzero(y == minority_label)
    if len(idx) < spec.k_neighbors + 1:
        raise ValueError(
            f"minority class {minority_label!r} has {len(idx)} samples; needs more than k_neighbors={spec.k_neighbors}"
        )
    rng = np.random.default_rng(spec.seed)
    Xm = X[idx]
    nn = NearestNeighbors(n_neighbors=spec.k_neighbors + 1).fit(Xm)
    neigh = nn.kneighbors(Xm, return_distance=False)
    n = spec.n_synthetic
    base = rng.integers(0, len(idx), size=n)
    pick = rng.integers(1, spec.k_neighbors + 1, size=n)
    other = neigh[base, pick]
    lo, hi = spec.lambda_range
    lam = rng.uniform(lo, hi, size=n)
    synth = Xm[base] + lam[:, None] * (Xm[other] - Xm[base])
    X_out = np.vstack([X, synth])
    y_out = np.concatenate([y, np.full(n, minority_label, dtype=y.dtype)])
    if return_parents:
        return X_out, y_out, np.stack([idx[base], idx[other]], axis=1), lam
    return X_out, y_out


class SmoteSampler(BaseEstimator):
    """Oversample every minority class up to the majority count.

    Parameters
    ----------
    k_neighbors : int, default=5
    n_synthetic : int or None, default=None
        Synthetic samples per minority class; ``None`` balances against the
        largest class.
    lambda_range : tuple, default=(0.0, 1.0)
    random_state : int, default=0
    """

    def __init__(self, k_neighbors=5, n_synthetic=None, lambda_range=(0.0, 1.0), random_state=0):
        self.k_neighbors = k_neighbors
        self.n_synthetic = n_synthetic
        self.lambda_range = lambda_range
        self.random_state = random_state

    def fit_resample(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        labels, counts = np.unique(y, return_counts=True)
        top = counts.max()
        X_out, y_out = X, y
        for i, (label, c) in enumerate(zip(labels, counts)):
            n = (top - c) if self.n_synthetic is None else self.n_synthetic
            if n <= 0 or c == top and self.n_synthetic is None:
                continue
            spec = SmoteSpec(self.k_neighbors, int(n), tuple(self.lambda_range), self.random_state + i)
            X_new, y_new = smote_augment(X, y, spec, minority_label=label)
            X_out = np.vstack([X_out, X_new[len(X) :]])
            y_out = np.concatenate([y_out, y_new[len(y) :]])
        return X_out, y_out
