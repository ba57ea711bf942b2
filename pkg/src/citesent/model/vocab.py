import unicodedata
from collections import Counter
from dataclasses import dataclass

import numpy as np

PAD = "<pad>"
UNK = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1


def _is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def _strip_punct(token):
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def words(text):
    """Lowercase, split on unicode whitespace, strip edge punctuation per token."""
    out = []
    for tok in text.lower().split():
        tok = _strip_punct(tok)
        if tok:
            out.append(tok)
    return out


@dataclass
class Vocab:
    itos: list
    min_freq: int = 1
    max_size: int = None

    def __post_init__(self):
        if self.itos[:2] != [PAD, UNK]:
            raise ValueError("vocabulary must start with the padding and unknown tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def index(self, token):
        return self.stoi.get(token, UNK_INDEX)

    def to_dict(self):
        return {"itos": list(self.itos), "min_freq": self.min_freq, "max_size": self.max_size}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["itos"]), d.get("min_freq", 1), d.get("max_size"))


def build_vocab(texts, min_freq=1, max_size=None):
    """Frequency-ordered vocabulary; ``max_size`` counts the two special tokens.

    Ties are broken by first appearance so the result is deterministic.
    """
    texts = list(texts)
    if not texts:
        raise ValueError("cannot build a vocabulary from no texts")
    counts = Counter()
    first_seen = {}
    for text in texts:
        for tok in words(text):
            counts[tok] += 1
            first_seen.setdefault(tok, len(first_seen))
    kept = [t for t, c in counts.items() if c >= min_freq]
    kept.sort(key=lambda t: (-counts[t], first_seen[t]))
    itos = [PAD, UNK] + kept
    if max_size is not None:
        itos = itos[: max(max_size, 2)]
    return Vocab(itos, min_freq, max_size)


def tokenize(text, vocab, max_len=None):
    ids = [vocab.index(t) for t in words(text)]
    return ids if max_len is None else ids[:max_len]


def pad_sequences(seqs, max_len):
    """Right-pad index sequences into ``(tokens, mask)`` arrays.

    Width is the longest sequence capped at ``max_len`` (at least 1 so that a
    batch of empty texts still has a well-formed, all-padding matrix).
    """
    seqs = [list(s)[:max_len] for s in seqs]
    width = max([len(s) for s in seqs] + [1])
    tokens = np.full((len(seqs), width), PAD_INDEX, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for r, s in enumerate(seqs):
        tokens[r, : len(s)] = s
        mask[r, : len(s)] = True
    return tokens, mask
