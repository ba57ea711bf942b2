from .checkpoint import load_checkpoint, save_checkpoint
from .encoders import VARIANTS, EncoderConfig
from .losses import LossSpec, class_weights, loss
from .network import ModelConfig, TextModel, backward, forward, init_params
from .optim import OptState, opt_step
from .vocab import PAD_INDEX, UNK_INDEX, Vocab, build_vocab, pad_sequences, tokenize

__all__ = [
    "EncoderConfig",
    "LossSpec",
    "ModelConfig",
    "OptState",
    "PAD_INDEX",
    "TextModel",
    "UNK_INDEX",
    "VARIANTS",
    "Vocab",
    "backward",
    "build_vocab",
    "class_weights",
    "forward",
    "init_params",
    "load_checkpoint",
    "loss",
    "opt_step",
    "pad_sequences",
    "save_checkpoint",
    "tokenize",
]
