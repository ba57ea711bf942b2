"""Differentiable numpy primitives.

Each ``*_forward`` returns ``(output, cache)`` and the matching ``*_backward``
consumes the upstream gradient plus that cache. Arrays are float64 and
batch-major: ``(batch, time, features)`` for sequences.
"""

import numpy as np

NEG_INF = -1e30
_GELU_C = np.sqrt(2.0 / np.pi)


def linear_forward(x, W, b):
    return x @ W + b, (x, W)


def linear_backward(dout, cache):
    x, W = cache
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return dout @ W.T, x2.T @ d2, d2.sum(axis=0)


def layernorm_forward(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layernorm_backward(dout, cache):
    xhat, inv, gamma = cache
    n = xhat.shape[-1]
    lead = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=lead)
    dbeta = dout.sum(axis=lead)
    dxhat = dout * gamma
    dx = inv / n * (
        n * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def gelu_forward(x):
    # tanh approximation; smooth everywhere, unlike relu
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_backward(dout, cache):
    x, t = cache
    dt = (1.0 - t**2) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return dout * (0.5 * (1.0 + t) + 0.5 * x * dt)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def sinusoidal_positions(length, dim):
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


# ---------------------------------------------------------------- attention


def attention_forward(x, mask, p, heads):
    """Multi-head self-attention with padding keys masked out.

    ``p`` holds ``Wq, bq, Wk, bk, Wv, bv, Wo, bo``.
    """
    B, T, D = x.shape
    dk = D // heads

    def split(h):
        return h.reshape(B, T, heads, dk).transpose(0, 2, 1, 3)

    q = split(x @ p["Wq"] + p["bq"])
    k = split(x @ p["Wk"] + p["bk"])
    v = split(x @ p["Wv"] + p["bv"])
    scale = 1.0 / np.sqrt(dk)
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    scores = np.where(mask[:, None, None, :], scores, NEG_INF)
    a = softmax(scores)
    ctx = (a @ v).transpose(0, 2, 1, 3).reshape(B, T, D)
    out = ctx @ p["Wo"] + p["bo"]
    return out, (x, q, k, v, a, ctx, scale, heads)


def attention_backward(dout, cache, p):
    x, q, k, v, a, ctx, scale, heads = cache
    B, T, D = x.shape
    dk = D // heads
    g = {}
    dctx, g["Wo"], g["bo"] = linear_backward(dout, (ctx, p["Wo"]))
    dctx = dctx.reshape(B, T, heads, dk).transpose(0, 2, 1, 3)
    da = dctx @ v.transpose(0, 1, 3, 2)
    dv = a.transpose(0, 1, 3, 2) @ dctx
    ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) * scale
    dq = ds @ k
    dkk = ds.transpose(0, 1, 3, 2) @ q

    def merge(h):
        return h.transpose(0, 2, 1, 3).reshape(B, T, D)

    dx = np.zeros_like(x)
    for name, dh in (("q", dq), ("k", dkk), ("v", dv)):
        dx_part, g["W" + name], g["b" + name] = linear_backward(
            merge(dh), (x, p["W" + name])
        )
        dx += dx_part
    return dx, g


# --------------------------------------------------------------- convolution


def conv1d_forward(x, W, b):
    """'Same'-padded 1-D convolution; ``W`` has shape (width, in, out)."""
    B, T, C = x.shape
    w = W.shape[0]
    left = (w - 1) // 2
    xp = np.zeros((B, T + w - 1, C))
    xp[:, left : left + T] = x
    cols = np.concatenate([xp[:, j : j + T] for j in range(w)], axis=-1)
    out = cols @ W.reshape(w * C, -1) + b
    return out, (cols, W, T, left)


def conv1d_backward(dout, cache):
    cols, W, T, left = cache
    w, C, F = W.shape
    dW = (cols.reshape(-1, w * C).T @ dout.reshape(-1, F)).reshape(W.shape)
    db = dout.sum(axis=(0, 1))
    dcols = dout @ W.reshape(w * C, F).T
    B = dout.shape[0]
    dxp = np.zeros((B, T + w - 1, C))
    for j in range(w):
        dxp[:, j : j + T] += dcols[..., j * C : (j + 1) * C]
    return dxp[:, left : left + T], dW, db


# ----------------------------------------------------------------- recurrent
# Padding positions carry the previous state through unchanged, so the final
# state equals the state after the last real token (right-padded batches).


def rnn_forward(x, mask, Wx, Wh, b, reverse=False):
    B, T, _ = x.shape
    H = Wh.shape[0]
    h = np.zeros((B, H))
    outs = np.zeros((B, T, H))
    steps = []
    xw = x @ Wx + b
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        m = mask[:, t, None]
        hn = np.tanh(xw[:, t] + h @ Wh)
        steps.append((t, h, hn, m))
        h = m * hn + (1.0 - m) * h
        outs[:, t] = h
    return outs, h, (x, Wx, Wh, steps)


def rnn_backward(douts, cache):
    x, Wx, Wh, steps = cache
    dx = np.zeros_like(x)
    dWx, dWh = np.zeros_like(Wx), np.zeros_like(Wh)
    db = np.zeros(Wh.shape[0])
    dh = np.zeros((x.shape[0], Wh.shape[0]))
    for t, h_prev, hn, m in reversed(steps):
        dh = dh + douts[:, t]
        dz = m * dh * (1.0 - hn**2)
        dWx += x[:, t].T @ dz
        dWh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ Wx.T
        dh = (1.0 - m) * dh + dz @ Wh.T
    return dx, dWx, dWh, db


def lstm_forward(x, mask, Wx, Wh, b, reverse=False):
    """Gate layout in the 4H axis: input, forget, cell, output."""
    B, T, _ = x.shape
    H = Wh.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    outs = np.zeros((B, T, H))
    steps = []
    xw = x @ Wx + b
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        m = mask[:, t, None]
        z = xw[:, t] + h @ Wh
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = sigmoid(z[:, 3 * H :])
        cn = f * c + i * g
        tc = np.tanh(cn)
        hn = o * tc
        steps.append((t, h, c, i, f, g, o, tc, m))
        h = m * hn + (1.0 - m) * h
        c = m * cn + (1.0 - m) * c
        outs[:, t] = h
    return outs, h, (x, Wx, Wh, steps)


def lstm_backward(douts, cache):
    x, Wx, Wh, steps = cache
    B = x.shape[0]
    H = Wh.shape[0]
    dx = np.zeros_like(x)
    dWx, dWh = np.zeros_like(Wx), np.zeros_like(Wh)
    db = np.zeros(4 * H)
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t, h_prev, c_prev, i, f, g, o, tc, m in reversed(steps):
        dh = dh + douts[:, t]
        dhn = m * dh
        dcn = m * dc + dhn * o * (1.0 - tc**2)
        dz = np.concatenate(
            [
                dcn * g * i * (1.0 - i),
                dcn * c_prev * f * (1.0 - f),
                dcn * i * (1.0 - g**2),
                dhn * tc * o * (1.0 - o),
            ],
            axis=1,
        )
        dWx += x[:, t].T @ dz
        dWh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ Wx.T
        dh = (1.0 - m) * dh + dz @ Wh.T
        dc = (1.0 - m) * dc + dcn * f
    return dx, dWx, dWh, db
