#!/usr/bin/env python3
"""Token encoder and the duration/range predictor."""

from typing import List, Optional, Tuple

import numpy as np

from .config import ModelConfig
from .nn import BatchNorm1d, BiLSTM, Conv1d, Dropout, Embedding, LayerSpec, ParamStore
from .nn.functional import relu, relu_backward, softplus, softplus_backward


class Encoder:
    """Embedding -> conv stack (conv, batch norm, ReLU, dropout) -> bidirectional LSTM.

    Produces one hidden vector of width 2 * lstm_units per token.
    """

    def __init__(self, config: ModelConfig, store: ParamStore, rng: np.random.Generator, verbose=False):
        self.config = config
        self.verbose = verbose
        self.embedding = Embedding("encoder.embedding", store, config.vocab_size, config.embedding_dim, rng)
        self.convs: List[Conv1d] = []
        self.norms: List[BatchNorm1d] = []
        self.dropouts: List[Dropout] = []
        in_ch = config.embedding_dim
        for i, ch in enumerate(config.encoder_channels):
            self.convs.append(Conv1d(f"encoder.conv{i}", store, in_ch, ch, config.encoder_kernel, rng))
            self.norms.append(BatchNorm1d(f"encoder.bn{i}", store, ch, momentum=config.bn_momentum))
            self.dropouts.append(Dropout(f"encoder.dropout{i}", store, ch, config.dropout))
            in_ch = ch
        self.lstm = BiLSTM("encoder.lstm", store, in_ch, config.lstm_units, rng, zoneout=config.zoneout)
        self._pre_acts: List[np.ndarray] = []

    def forward(self, tokens: np.ndarray, train: bool = False, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        h = self.embedding.forward(tokens)
        self._pre_acts = []
        for conv, norm, drop in zip(self.convs, self.norms, self.dropouts):
            pre = norm.forward(conv.forward(h), train)
            self._pre_acts.append(pre)
            h = drop.forward(relu(pre), train, rng)
        out = self.lstm.forward(h, train, rng)
        if self.verbose:
            print(f"[DEBUG] Encoded {len(tokens)} tokens (train={train})")
        return out

    def backward(self, dout: np.ndarray) -> None:
        dh = self.lstm.backward(dout)
        for conv, norm, drop, pre in zip(
            reversed(self.convs), reversed(self.norms), reversed(self.dropouts), reversed(self._pre_acts)
        ):
            dh = conv.backward(norm.backward(relu_backward(drop.backward(dh), pre)))
        self.embedding.backward(dh)

    def specs(self) -> List[LayerSpec]:
        specs = self.embedding.specs()
        for conv, norm, drop in zip(self.convs, self.norms, self.dropouts):
            specs += conv.specs() + norm.specs() + drop.specs()
        return specs + self.lstm.specs()


class DurationPredictor:
    """Two ReLU convolutions and a 1-wide projection to (duration, range) per token.

    Both outputs go through softplus; ranges get an additional floor.
    """

    def __init__(self, config: ModelConfig, store: ParamStore, rng: np.random.Generator, verbose=False):
        self.verbose = verbose
        self.range_floor = config.range_floor
        self.convs: List[Conv1d] = []
        in_ch = config.hidden_dim
        for i, ch in enumerate(config.duration_channels):
            self.convs.append(Conv1d(f"duration.conv{i}", store, in_ch, ch, config.duration_kernel, rng))
            in_ch = ch
        self.projection = Conv1d("duration.projection", store, in_ch, 2, 1, rng)
        self._cache = None

    def forward(self, hiddens: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        h = hiddens
        pre_acts = []
        for conv in self.convs:
            pre = conv.forward(h)
            pre_acts.append(pre)
            h = relu(pre)
        raw = self.projection.forward(h)
        self._cache = (pre_acts, raw)
        durations = softplus(raw[:, 0])
        ranges = softplus(raw[:, 1]) + self.range_floor
        return durations, ranges

    def backward(self, ddurations: np.ndarray, dranges: np.ndarray) -> np.ndarray:
        pre_acts, raw = self._cache
        self._cache = None
        draw = np.stack(
            [softplus_backward(ddurations, raw[:, 0]), softplus_backward(dranges, raw[:, 1])], axis=1
        ).astype(raw.dtype, copy=False)
        dh = self.projection.backward(draw)
        for conv, pre in zip(reversed(self.convs), reversed(pre_acts)):
            dh = conv.backward(relu_backward(dh, pre))
        return dh

    def specs(self) -> List[LayerSpec]:
        return [s for c in self.convs for s in c.specs()] + self.projection.specs()
