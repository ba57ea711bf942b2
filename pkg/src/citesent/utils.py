"""Seed derivation and input checks shared across modules."""

import hashlib

import numpy as np


def derive_seed(seed, *parts):
    """Deterministic 63-bit seed for a named component of a run.

    The top-level seed and every part are joined with ``/`` and hashed with
    SHA-256; the first eight bytes (big endian, top bit cleared) form the
    seed. ``derive_seed(7, "init")`` is stable across platforms and Python
    versions, unlike ``hash()``.
    """
    key = "/".join(str(p) for p in (seed, *parts)).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") & ((1 << 63) - 1)


def check_texts(X):
    if isinstance(X, str):
        raise TypeError("expected a sequence of texts, got a single string")
    X = list(X)
    for i, x in enumerate(X):
        if not isinstance(x, str):
            raise TypeError(f"text {i} is {type(x).__name__}, not str")
    return X


def check_texts_labels(X, y):
    X = check_texts(X)
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("y must be one-dimensional")
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} texts but y has {len(y)} labels")
    if len(X) == 0:
        raise ValueError("empty training set")
    return X, y
