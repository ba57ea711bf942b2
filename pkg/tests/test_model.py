import numpy as np
import pytest
from helpers import grad_check

from citesent.model import (
    VARIANTS,
    EncoderConfig,
    LossSpec,
    ModelConfig,
    OptState,
    TextModel,
    build_vocab,
    class_weights,
    forward,
    init_params,
    load_checkpoint,
    loss,
    opt_step,
    pad_sequences,
    save_checkpoint,
    tokenize,
)
from citesent.model.vocab import words

SMALL = dict(embed_dim=8, max_len=10, layers=2, filters=6, widths=(3, 2), hidden=5, model_dim=8, heads=2, ff_dim=12)
CONFIGS = [(v, {}) for v in VARIANTS] + [("lstm", {"bidirectional": True}), ("rnn", {"bidirectional": True})]


def _model(variant, seed=0, **kw):
    cfg = ModelConfig(EncoderConfig(variant=variant, **{**SMALL, **kw}), {"A": ("x", "y", "z"), "B": ("p", "q")})
    return cfg, init_params(cfg, 20, np.random.default_rng(seed))


# ---------------------------------------------------------------- vocab


def test_words_and_tokenize():
    assert words("Hello, World!  (it's) -- fine.") == ["hello", "world", "it's", "fine"]
    v = build_vocab(["b a", "a c", "a"])
    assert v.itos == ["<pad>", "<unk>", "a", "b", "c"]
    assert tokenize("A d c", v) == [2, 1, 4]
    assert tokenize("a a a a", v, max_len=2) == [2, 2]
    assert build_vocab(["b a", "a c"], max_size=3).itos == ["<pad>", "<unk>", "a"]
    assert build_vocab(["b a", "a c"], min_freq=2).itos == ["<pad>", "<unk>", "a"]


def test_pad_sequences():
    tok, mask = pad_sequences([[5, 6, 7], [], [8]], max_len=2)
    assert tok.tolist() == [[5, 6], [0, 0], [8, 0]]
    assert mask.tolist() == [[True, True], [False, False], [True, False]]
    tok, mask = pad_sequences([[], []], 4)
    assert tok.shape == (2, 1) and not mask.any()


# ---------------------------------------------------------------- losses


def _ce_oracle(z, y):
    return float(np.mean([np.log(np.sum(np.exp(r))) - r[t] for r, t in zip(z, y)]))


def test_losses_against_formulas():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(6, 3))
    y = np.array([0, 1, 2, 2, 1, 0])
    assert loss(z, y)[0] == pytest.approx(_ce_oracle(z, y), abs=1e-12)
    w = (0.5, 2.0, 1.5)
    per = [np.log(np.sum(np.exp(r))) - r[t] for r, t in zip(z, y)]
    assert loss(z, y, LossSpec("weighted", w))[0] == pytest.approx(np.mean([w[t] * p for p, t in zip(per, y)]), abs=1e-12)
    p = np.exp(-np.array(per))
    assert loss(z, y, LossSpec("focal", gamma=2.0))[0] == pytest.approx(np.mean(-(1 - p) ** 2 * np.log(p)), abs=1e-12)


@pytest.mark.parametrize("spec", [LossSpec(), LossSpec("weighted", (0.3, 1.0, 4.0)), LossSpec("focal", gamma=2.0),
                                  LossSpec("focal", gamma=0.5)])
def test_loss_gradient_wrt_logits(spec):
    rng = np.random.default_rng(2)
    z = rng.normal(size=(4, 3))
    y = np.array([0, 2, 1, 2])
    _, g = loss(z, y, spec)
    num = np.zeros_like(z)
    for i in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[i] += 1e-6
        zm[i] -= 1e-6
        num[i] = (loss(zp, y, spec)[0] - loss(zm, y, spec)[0]) / 2e-6
    np.testing.assert_allclose(g, num, atol=1e-8)


def test_focal_extreme_logits_stay_finite():
    z = np.array([[1000.0, -1000.0], [-1000.0, 1000.0]])
    val, g = loss(z, np.array([1, 1]), LossSpec("focal", gamma=2.0))
    assert np.isfinite(val) and np.all(np.isfinite(g))


def test_class_weights():
    np.testing.assert_allclose(class_weights([75, 25]), [2 / 3, 2.0])
    np.testing.assert_allclose(class_weights([10, 10, 10]), [1, 1, 1])
    with pytest.raises(ValueError):
        class_weights([3, 0])
    with pytest.raises(ValueError):
        LossSpec("weighted")
    with pytest.raises(ValueError):
        LossSpec("hinge")


# ---------------------------------------------------------------- gradients


@pytest.mark.parametrize("variant,kw", CONFIGS, ids=[f"{v}{'-bi' if k else ''}" for v, k in CONFIGS])
def test_gradient_check_ce(variant, kw):
    assert grad_check(variant, LossSpec(), **kw) < 1e-4


@pytest.mark.parametrize("spec", [LossSpec("weighted", (0.5, 2.0, 1.5)), LossSpec("focal", gamma=2.0)])
def test_gradient_check_other_losses(spec):
    assert grad_check("cnn", spec) < 1e-4


def test_encoder_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(variant="cnn", layers=2, widths=(3,))
    with pytest.raises(ValueError):
        EncoderConfig(variant="attention", model_dim=10, heads=4)
    with pytest.raises(ValueError):
        EncoderConfig(variant="gru")
    c = EncoderConfig(variant="lstm", bidirectional=True, hidden=7)
    assert c.output_dim == 14 and EncoderConfig.from_dict(c.to_dict()) == c


# ---------------------------------------------------------------- masking


@pytest.mark.parametrize("variant,kw", CONFIGS, ids=[f"{v}{'-bi' if k else ''}" for v, k in CONFIGS])
def test_padding_does_not_change_logits(variant, kw):
    cfg, p = _model(variant, **kw)
    seqs = [[3, 4, 5], [6, 7, 8, 9, 10, 11]]
    tok, m = pad_sequences(seqs, 10)
    base = forward(p, cfg, tok, m, "A")
    wide = np.zeros((2, 10), dtype=np.int64)
    wide[:, : tok.shape[1]] = tok
    np.testing.assert_allclose(forward(p, cfg, wide, wide != 0, "A"), base, atol=1e-12)
    alone = forward(p, cfg, *pad_sequences(seqs[:1], 10), "A")
    np.testing.assert_allclose(alone, base[:1], atol=1e-12)


@pytest.mark.parametrize("variant", ["meanpool", "attention"])
def test_all_padding_row_gives_head_bias(variant):
    cfg, p = _model(variant)
    p["head.A.b"] = np.array([0.1, -0.2, 0.3])
    tok, m = pad_sequences([[], [3, 4]], 10)
    out = forward(p, cfg, tok, m, "A")
    np.testing.assert_allclose(out[0], p["head.A.b"], atol=1e-12)
    assert np.all(np.isfinite(out))


# ---------------------------------------------------------------- optimizer


def test_adam_first_step_and_untouched_keys():
    p = {"w": np.array([1.0, -2.0]), "u": np.array([5.0])}
    st = OptState(lr=0.1)
    opt_step(p, {"w": np.array([0.5, -3.0])}, st)
    # bias-corrected first step moves each coordinate by lr * sign(g)
    np.testing.assert_allclose(p["w"], [0.9, -1.9], atol=1e-6)
    assert p["u"].tolist() == [5.0] and "u" not in st.m
    with pytest.raises((KeyError, ValueError)):
        opt_step(p, {"zz": np.zeros(1)}, st)
    with pytest.raises(ValueError):
        opt_step(p, {"w": np.zeros(3)}, st)


def test_adam_matches_reference_recursion():
    rng = np.random.default_rng(0)
    g_seq = rng.normal(size=(5, 3))
    p = {"w": np.zeros(3)}
    st = OptState(lr=0.01)
    m = v = np.zeros(3)
    ref = np.zeros(3)
    for t, g in enumerate(g_seq, 1):
        opt_step(p, {"w": g}, st)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"], ref, atol=1e-12)


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_roundtrip(tmp_path):
    cfg, p = _model("lstm", bidirectional=True)
    vocab = build_vocab(["alpha beta gamma", "delta"])
    model = TextModel(cfg, vocab, p)
    st = OptState(lr=0.02)
    opt_step(model.params, {"embedding": np.ones_like(p["embedding"])}, st)
    rng = np.random.default_rng(9)
    rng.random(3)
    save_checkpoint(tmp_path / "c.npz", model, st, rng, extra={"note": [1, 2]})
    m2, st2, rng2, extra = load_checkpoint(tmp_path / "c.npz")
    assert m2.config.to_dict() == cfg.to_dict() and m2.vocab.itos == vocab.itos
    assert all(np.array_equal(m2.params[k], v) for k, v in model.params.items())
    assert st2.step == 1 and st2.lr == 0.02 and np.array_equal(st2.m["embedding"], st.m["embedding"])
    assert rng2.random() == rng.random()
    assert extra == {"note": [1, 2]}
    texts = ["alpha delta", "zeta"]
    assert m2.predict(texts, "A") == model.predict(texts, "A")
