"""Sequence encoders mapping embedded tokens to one pooled vector per row.

All encoders share the same functional surface::

    params = init_encoder(cfg, rng)
    pooled, cache = encode(params, cfg, x, mask)
    dx, grads = encode_backward(params, cfg, dpooled, cache)

``x`` is ``(batch, time, embed_dim)`` and ``mask`` a boolean ``(batch, time)``
marking real tokens. Batches are right-padded.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import layers as L

VARIANTS = ("meanpool", "cnn", "rnn", "lstm", "attention")


@dataclass
class EncoderConfig:
    """Encoder architecture.

    Only the fields relevant to ``variant`` are read. For ``cnn``, ``widths``
    lists one convolution width per layer, so ``len(widths) == layers``.
    """

    variant: str = "attention"
    embed_dim: int = 64
    max_len: int = 128
    layers: int = 2
    # cnn
    filters: int = 64
    widths: tuple = (3, 3)
    # rnn / lstm
    hidden: int = 64
    bidirectional: bool = False
    # attention
    model_dim: int = 64
    heads: int = 4
    ff_dim: int = 128

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown encoder variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("embed_dim", "max_len", "layers", "filters", "hidden", "model_dim", "heads", "ff_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        self.widths = tuple(int(w) for w in self.widths)
        if self.variant == "cnn" and len(self.widths) != self.layers:
            raise ValueError(f"cnn needs one width per layer: {len(self.widths)} widths for {self.layers} layers")
        if self.variant == "attention" and self.model_dim % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide model_dim ({self.model_dim})")

    @property
    def output_dim(self):
        if self.variant == "meanpool":
            return self.embed_dim
        if self.variant == "cnn":
            return self.filters
        if self.variant == "rnn":
            return self.hidden
        if self.variant == "lstm":
            return self.hidden * (2 if self.bidirectional else 1)
        return self.model_dim

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def dense_init(rng, fan_in, fan_out):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder(cfg, rng):
    """Return a flat ``{name: array}`` dict of encoder tensors (prefix ``enc.``)."""
    p = {}
    v = cfg.variant
    if v == "cnn":
        c_in = cfg.embed_dim
        for l, w in enumerate(cfg.widths):
            p[f"enc.conv{l}.W"] = dense_init(rng, w * c_in, cfg.filters).reshape(w, c_in, cfg.filters)
            p[f"enc.conv{l}.b"] = np.zeros(cfg.filters)
            c_in = cfg.filters
    elif v in ("rnn", "lstm"):
        gates = 4 if v == "lstm" else 1
        dirs = ("fwd", "bwd") if (v == "lstm" and cfg.bidirectional) else ("fwd",)
        n_in = cfg.embed_dim
        for l in range(cfg.layers):
            for d in dirs:
                pre = f"enc.{v}{l}.{d}"
                p[pre + ".Wx"] = dense_init(rng, n_in, gates * cfg.hidden)
                p[pre + ".Wh"] = dense_init(rng, cfg.hidden, gates * cfg.hidden)
                b = np.zeros(gates * cfg.hidden)
                if v == "lstm":
                    b[cfg.hidden : 2 * cfg.hidden] = 1.0
                p[pre + ".b"] = b
            n_in = cfg.hidden * len(dirs)
    elif v == "attention":
        D = cfg.model_dim
        if cfg.embed_dim != D:
            p["enc.proj.W"] = dense_init(rng, cfg.embed_dim, D)
            p["enc.proj.b"] = np.zeros(D)
        for l in range(cfg.layers):
            pre = f"enc.att{l}."
            for n in ("q", "k", "v", "o"):
                p[pre + "W" + n] = dense_init(rng, D, D)
                p[pre + "b" + n] = np.zeros(D)
            p[pre + "ln1.g"] = np.ones(D)
            p[pre + "ln1.b"] = np.zeros(D)
            p[pre + "ff1.W"] = dense_init(rng, D, cfg.ff_dim)
            p[pre + "ff1.b"] = np.zeros(cfg.ff_dim)
            p[pre + "ff2.W"] = dense_init(rng, cfg.ff_dim, D)
            p[pre + "ff2.b"] = np.zeros(D)
            p[pre + "ln2.g"] = np.ones(D)
            p[pre + "ln2.b"] = np.zeros(D)
    return p


# --------------------------------------------------------------------- pooling


def _mean_pool(h, mask):
    m = mask[..., None].astype(float)
    n = np.maximum(m.sum(axis=1), 1.0)
    return (h * m).sum(axis=1) / n, (m, n)


def _mean_pool_backward(dpooled, cache):
    m, n = cache
    return (dpooled / n)[:, None, :] * m


def _max_pool(h, mask):
    """Max over real positions; rows without any real token pool to zero."""
    masked = np.where(mask[..., None], h, -np.inf)
    idx = masked.argmax(axis=1)
    has = mask.any(axis=1)
    pooled = np.take_along_axis(h, idx[:, None, :], axis=1)[:, 0] * has[:, None]
    return pooled, (idx, has, h.shape)


def _max_pool_backward(dpooled, cache):
    idx, has, shape = cache
    dh = np.zeros(shape)
    np.put_along_axis(dh, idx[:, None, :], (dpooled * has[:, None])[:, None, :], axis=1)
    return dh


# ---------------------------------------------------------------- dispatch


def encode(p, cfg, x, mask):
    return _FORWARD[cfg.variant](p, cfg, x, mask)


def encode_backward(p, cfg, dpooled, cache):
    return _BACKWARD[cfg.variant](p, cfg, dpooled, cache)


def _meanpool_fwd(p, cfg, x, mask):
    pooled, c = _mean_pool(x, mask)
    return pooled, c


def _meanpool_bwd(p, cfg, dpooled, cache):
    return _mean_pool_backward(dpooled, cache), {}


def _cnn_fwd(p, cfg, x, mask):
    m = mask[..., None].astype(float)
    h = x * m
    caches = []
    for l in range(cfg.layers):
        z, cc = L.conv1d_forward(h, p[f"enc.conv{l}.W"], p[f"enc.conv{l}.b"])
        a = np.tanh(z)
        caches.append((cc, a))
        h = a * m
    pooled, pc = _max_pool(h, mask)
    return pooled, (caches, pc, m)


def _cnn_bwd(p, cfg, dpooled, cache):
    caches, pc, m = cache
    g = {}
    dh = _max_pool_backward(dpooled, pc)
    for l in reversed(range(cfg.layers)):
        cc, a = caches[l]
        dz = dh * m * (1.0 - a**2)
        dh, g[f"enc.conv{l}.W"], g[f"enc.conv{l}.b"] = L.conv1d_backward(dz, cc)
    return dh * m, g


def _recurrent_fwd(p, cfg, x, mask):
    v = cfg.variant
    step = L.lstm_forward if v == "lstm" else L.rnn_forward
    dirs = ("fwd", "bwd") if (v == "lstm" and cfg.bidirectional) else ("fwd",)
    h = x
    caches = []
    for l in range(cfg.layers):
        outs, finals, layer_cache = [], [], []
        for d in dirs:
            pre = f"enc.{v}{l}.{d}"
            o, fin, c = step(h, mask, p[pre + ".Wx"], p[pre + ".Wh"], p[pre + ".b"], reverse=(d == "bwd"))
            outs.append(o)
            finals.append(fin)
            layer_cache.append(c)
        caches.append(layer_cache)
        h = np.concatenate(outs, axis=-1)
    return np.concatenate(finals, axis=-1), (caches, dirs, x.shape)


def _recurrent_bwd(p, cfg, dpooled, cache):
    caches, dirs, xshape = cache
    v = cfg.variant
    back = L.lstm_backward if v == "lstm" else L.rnn_backward
    B, T, _ = xshape
    H = cfg.hidden
    g = {}
    dseq = np.zeros((B, T, H * len(dirs)))
    for l in reversed(range(cfg.layers)):
        dx_total = None
        for k, d in enumerate(dirs):
            douts = dseq[..., k * H : (k + 1) * H].copy()
            if l == cfg.layers - 1:
                # the final state is the output at the last processed step
                t_last = 0 if d == "bwd" else T - 1
                if T:
                    douts[:, t_last] += dpooled[:, k * H : (k + 1) * H]
            pre = f"enc.{v}{l}.{d}"
            dx, g[pre + ".Wx"], g[pre + ".Wh"], g[pre + ".b"] = back(douts, caches[l][k])
            dx_total = dx if dx_total is None else dx_total + dx
        dseq = dx_total
    return dseq, g


def _attention_fwd(p, cfg, x, mask):
    caches = {}
    h = x
    if "enc.proj.W" in p:
        h, caches["proj"] = L.linear_forward(h, p["enc.proj.W"], p["enc.proj.b"])
    T = x.shape[1]
    h = h + L.sinusoidal_positions(T, cfg.model_dim)[None]
    layer_caches = []
    for l in range(cfg.layers):
        pre = f"enc.att{l}."
        ap = {n: p[pre + n] for n in ("Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo")}
        a, ac = L.attention_forward(h, mask, ap, cfg.heads)
        h1, n1 = L.layernorm_forward(h + a, p[pre + "ln1.g"], p[pre + "ln1.b"])
        f1, c1 = L.linear_forward(h1, p[pre + "ff1.W"], p[pre + "ff1.b"])
        gl, gc = L.gelu_forward(f1)
        f2, c2 = L.linear_forward(gl, p[pre + "ff2.W"], p[pre + "ff2.b"])
        h, n2 = L.layernorm_forward(h1 + f2, p[pre + "ln2.g"], p[pre + "ln2.b"])
        layer_caches.append((ap, ac, n1, c1, gc, c2, n2))
    pooled, pc = _mean_pool(h, mask)
    caches["layers"] = layer_caches
    caches["pool"] = pc
    return pooled, caches


def _attention_bwd(p, cfg, dpooled, cache):
    g = {}
    dh = _mean_pool_backward(dpooled, cache["pool"])
    for l in reversed(range(cfg.layers)):
        pre = f"enc.att{l}."
        ap, ac, n1, c1, gc, c2, n2 = cache["layers"][l]
        dsum2, g[pre + "ln2.g"], g[pre + "ln2.b"] = L.layernorm_backward(dh, n2)
        dgl, g[pre + "ff2.W"], g[pre + "ff2.b"] = L.linear_backward(dsum2, c2)
        df1 = L.gelu_backward(dgl, gc)
        dh1, g[pre + "ff1.W"], g[pre + "ff1.b"] = L.linear_backward(df1, c1)
        dh1 = dh1 + dsum2
        dsum1, g[pre + "ln1.g"], g[pre + "ln1.b"] = L.layernorm_backward(dh1, n1)
        dx_att, ag = L.attention_backward(dsum1, ac, ap)
        for n, v in ag.items():
            g[pre + n] = v
        dh = dsum1 + dx_att
    if "proj" in cache:
        dh, g["enc.proj.W"], g["enc.proj.b"] = L.linear_backward(dh, cache["proj"])
    return dh, g


_FORWARD = {
    "meanpool": _meanpool_fwd,
    "cnn": _cnn_fwd,
    "rnn": _recurrent_fwd,
    "lstm": _recurrent_fwd,
    "attention": _attention_fwd,
}
_BACKWARD = {
    "meanpool": _meanpool_bwd,
    "cnn": _cnn_bwd,
    "rnn": _recurrent_bwd,
    "lstm": _recurrent_bwd,
    "attention": _attention_bwd,
}
