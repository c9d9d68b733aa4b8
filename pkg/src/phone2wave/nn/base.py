#!/usr/bin/env python3

from abc import ABC, abstractmethod
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from .params import ParamStore

LayerKind = Literal[
    "conv1d",
    "upsample",
    "birnn",
    "embedding",
    "batchnorm",
    "dropout",
    "film",
    "ublock",
    "dblock",
]


class LayerSpec(BaseModel):
    """Manifest entry describing one layer of a checkpointed model"""

    name: str
    kind: LayerKind
    in_channels: int = Field(ge=1)
    out_channels: int = Field(ge=1)
    kernel_width: int = Field(1, ge=1)
    stride: int = Field(1, ge=1)
    dilation: int = Field(1, ge=1)
    activation: Optional[str] = None


class Layer(ABC):
    """Differentiable operator with explicit forward/backward.

    ``forward`` caches what ``backward`` needs; ``backward`` receives the
    gradient of a scalar loss with respect to the output, accumulates
    parameter gradients into the store and returns the input gradient.
    """

    kind: LayerKind

    def __init__(self, name: str, store: ParamStore, verbose=False):
        self.name = name
        self.store = store
        self.verbose = verbose
        self._cache = None

    def _register(self, key: str, value: np.ndarray) -> None:
        self.store.add(f"{self.name}.{key}", value)

    def _register_buffer(self, key: str, value: np.ndarray) -> None:
        self.store.add_buffer(f"{self.name}.{key}", value)

    def p(self, key: str) -> np.ndarray:
        return self.store[f"{self.name}.{key}"]

    def buffer(self, key: str) -> np.ndarray:
        return self.store.buffers[f"{self.name}.{key}"]

    def accumulate(self, key: str, grad: np.ndarray) -> None:
        self.store.accumulate(f"{self.name}.{key}", grad)

    def _pop_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        cache, self._cache = self._cache, None
        return cache

    @abstractmethod
    def forward(self, *args, **kwargs):
        pass

    @abstractmethod
    def backward(self, dout):
        pass

    @abstractmethod
    def specs(self) -> List[LayerSpec]:
        pass


def init_weight(rng: np.random.Generator, shape, fan_in: int, gain: float = 1.0) -> np.ndarray:
    """Normal init with std gain/√fan_in"""
    return rng.standard_normal(shape) * (gain / np.sqrt(max(fan_in, 1)))
