"""Checkpoint files: one ``.npz`` holding every array plus a JSON header.

The header (stored as a uint8 array under ``__meta__``) carries the format
version, model config, vocabulary, optimizer hyperparameters/step and the
numpy bit-generator state. Arrays are stored losslessly, so a save/load round
trip is bit-exact.
"""

import json
from pathlib import Path

import numpy as np

from .network import ModelConfig, TextModel
from .optim import OptState
from .vocab import Vocab

FORMAT_VERSION = 1


def save_checkpoint(path, model, opt_state=None, rng=None, extra=None):
    path = Path(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "vocab": model.vocab.to_dict(),
        "params": list(model.params),
        "opt": None,
        "rng": rng.bit_generator.state if rng is not None else None,
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    if opt_state is not None:
        meta["opt"] = {**opt_state.hyperparams(), "step": opt_state.step, "slots": list(opt_state.m)}
        arrays.update({f"m/{k}": v for k, v in opt_state.m.items()})
        arrays.update({f"v/{k}": v for k, v in opt_state.v.items()})
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path):
    """Return ``(model, opt_state_or_None, rng_or_None, extra)``."""
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(z["__meta__"].tobytes().decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('format_version')!r}")
        params = {k: z[f"param/{k}"].copy() for k in meta["params"]}
        opt = None
        if meta["opt"] is not None:
            o = meta["opt"]
            opt = OptState(o["lr"], o["beta1"], o["beta2"], o["eps"], o["step"])
            for k in o["slots"]:
                opt.m[k] = z[f"m/{k}"].copy()
                opt.v[k] = z[f"v/{k}"].copy()
    model = TextModel(ModelConfig.from_dict(meta["config"]), Vocab.from_dict(meta["vocab"]), params)
    rng = None
    if meta["rng"] is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng"]
    return model, opt, rng, meta["extra"]
