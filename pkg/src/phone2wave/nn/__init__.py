from .base import Layer, LayerSpec, init_weight
from .blocks import DBlock, UBlock
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .conv import Conv1d, conv1d_backward, conv1d_forward
from .film import FiLM
from .functional import film_modulate, film_modulate_backward, noise_embedding
from .norm import BatchNorm1d, Dropout, Embedding
from .params import GradStore, ParamStore
from .recurrent import LSTM, BiLSTM

__all__ = [
    "BatchNorm1d",
    "BiLSTM",
    "Checkpoint",
    "Conv1d",
    "DBlock",
    "Dropout",
    "Embedding",
    "FiLM",
    "GradStore",
    "LSTM",
    "Layer",
    "LayerSpec",
    "ParamStore",
    "UBlock",
    "conv1d_backward",
    "conv1d_forward",
    "film_modulate",
    "film_modulate_backward",
    "init_weight",
    "load_checkpoint",
    "noise_embedding",
    "save_checkpoint",
]
