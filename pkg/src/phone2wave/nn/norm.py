#!/usr/bin/env python3

from typing import List, Optional

import numpy as np

from ..exceptions import ShapeError, UnknownTokenError
from .base import Layer, LayerSpec
from .params import ParamStore


class Embedding(Layer):
    kind = "embedding"

    def __init__(self, name: str, store: ParamStore, vocab_size: int, dim: int, rng, verbose=False):
        super().__init__(name, store, verbose)
        self.vocab_size = vocab_size
        self.dim = dim
        self._register("table", rng.standard_normal((vocab_size, dim)) * 0.3)

    def forward(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ShapeError(f"token ids must be 1-D, got shape {ids.shape}")
        bad = ids[(ids < 0) | (ids >= self.vocab_size)]
        if bad.size:
            raise UnknownTokenError(
                f"Token id {int(bad[0])} outside vocabulary of size {self.vocab_size}"
            )
        self._cache = ids
        return self.p("table")[ids]

    def backward(self, dout: np.ndarray) -> None:
        ids = self._pop_cache()
        dtable = np.zeros_like(self.p("table"))
        np.add.at(dtable, ids, dout)
        self.accumulate("table", dtable)
        return None

    def specs(self) -> List[LayerSpec]:
        return [LayerSpec(name=self.name, kind="embedding", in_channels=self.vocab_size, out_channels=self.dim)]


class BatchNorm1d(Layer):
    """Normalizes each channel over the time axis.

    Running statistics follow ``running = momentum·running + (1−momentum)·batch``
    in training and are used unchanged in evaluation.
    """

    kind = "batchnorm"

    def __init__(
        self, name: str, store: ParamStore, channels: int, momentum: float = 0.99, eps: float = 1e-5, verbose=False
    ):
        super().__init__(name, store, verbose)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self._register("gamma", np.ones(channels))
        self._register("beta", np.zeros(channels))
        self._register_buffer("running_mean", np.zeros(channels))
        self._register_buffer("running_var", np.ones(channels))

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.shape[-1] != self.channels:
            raise ShapeError(f"{self.name}: expected {self.channels} channels, got {x.shape[-1]}")
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            rm, rv = self.buffer("running_mean"), self.buffer("running_var")
            rm *= self.momentum
            rm += (1.0 - self.momentum) * mean
            rv *= self.momentum
            rv += (1.0 - self.momentum) * var
        else:
            mean = self.buffer("running_mean")
            var = self.buffer("running_var")
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train)
        return self.p("gamma") * xhat + self.p("beta")

    def backward(self, dout: np.ndarray) -> np.ndarray:
        xhat, inv_std, train = self._pop_cache()
        self.accumulate("gamma", (dout * xhat).sum(axis=0))
        self.accumulate("beta", dout.sum(axis=0))
        dxhat = dout * self.p("gamma")
        if not train:
            return dxhat * inv_std
        n = dout.shape[0]
        return (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )

    def specs(self) -> List[LayerSpec]:
        return [LayerSpec(name=self.name, kind="batchnorm", in_channels=self.channels, out_channels=self.channels)]


class Dropout(Layer):
    """Inverted dropout; identity in evaluation"""

    kind = "dropout"

    def __init__(self, name: str, store: ParamStore, channels: int, rate: float, verbose=False):
        super().__init__(name, store, verbose)
        self.channels = channels
        self.rate = rate

    def forward(
        self,
        x: np.ndarray,
        train: bool,
        rng: Optional[np.random.Generator] = None,
        keep_mask: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        if not train or self.rate == 0.0:
            self._cache = None
            return x
        if keep_mask is None:
            keep_mask = rng.random(x.shape) >= self.rate
        scale = (keep_mask / (1.0 - self.rate)).astype(x.dtype)
        self._cache = scale
        return x * scale

    def backward(self, dout: np.ndarray) -> np.ndarray:
        scale, self._cache = self._cache, None
        return dout if scale is None else dout * scale

    def specs(self) -> List[LayerSpec]:
        return [LayerSpec(name=self.name, kind="dropout", in_channels=self.channels, out_channels=self.channels)]
