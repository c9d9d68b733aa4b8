#!/usr/bin/env python3

from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from ..exceptions import ShapeError
from .base import Layer, LayerSpec, init_weight
from .params import ParamStore


class ConvCache(NamedTuple):
    padded: np.ndarray
    weight: np.ndarray
    stride: int
    dilation: int
    pad_left: int
    input_length: int
    output_length: int


def same_padding(kernel_width: int, dilation: int = 1) -> Tuple[int, int]:
    total = dilation * (kernel_width - 1)
    return total // 2, total - total // 2


def conv1d_forward(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    dilation: int = 1,
    padding: Optional[Tuple[int, int]] = None,
) -> Tuple[np.ndarray, ConvCache]:
    """Cross-correlation of a time-major (T, C_in) input with a (K, C_in, C_out) kernel.

    ``padding=None`` means same-padding (output length T for stride 1).
    """
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"conv1d input {x.shape} does not match kernel with {weight.shape[1]} input channels"
        )
    width = weight.shape[0]
    pad_left, pad_right = padding if padding is not None else same_padding(width, dilation)
    padded = np.pad(x, ((pad_left, pad_right), (0, 0)))
    span = dilation * (width - 1) + 1
    out_len = (padded.shape[0] - span) // stride + 1
    if out_len < 1:
        raise ShapeError(f"conv1d input of length {x.shape[0]} is shorter than the kernel span {span}")
    out = np.broadcast_to(bias, (out_len, weight.shape[2])).copy()
    stop = stride * (out_len - 1) + 1
    for k in range(width):
        start = k * dilation
        out += padded[start:start + stop:stride] @ weight[k]
    cache = ConvCache(padded, weight, stride, dilation, pad_left, x.shape[0], out_len)
    return out, cache


def conv1d_backward(
    dout: np.ndarray, cache: ConvCache
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (d input, d weight, d bias)"""
    padded, weight, stride, dilation, pad_left, in_len, out_len = cache
    if dout.shape != (out_len, weight.shape[2]):
        raise ShapeError(f"conv1d upstream gradient {dout.shape} != {(out_len, weight.shape[2])}")
    dpadded = np.zeros_like(padded)
    dweight = np.empty_like(weight)
    stop = stride * (out_len - 1) + 1
    for k in range(weight.shape[0]):
        start = k * dilation
        window = slice(start, start + stop, stride)
        dweight[k] = padded[window].T @ dout
        dpadded[window] += dout @ weight[k].T
    dbias = dout.sum(axis=0)
    return dpadded[pad_left:pad_left + in_len], dweight, dbias


class Conv1d(Layer):
    kind = "conv1d"

    def __init__(
        self,
        name: str,
        store: ParamStore,
        in_channels: int,
        out_channels: int,
        kernel_width: int,
        rng: np.random.Generator,
        stride: int = 1,
        dilation: int = 1,
        padding: Optional[Tuple[int, int]] = None,
        gain: float = 1.0,
        verbose=False,
    ):
        super().__init__(name, store, verbose)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_width = kernel_width
        self.stride = stride
        self.dilation = dilation
        self.padding = padding
        fan_in = in_channels * kernel_width
        self._register(
            "weight", init_weight(rng, (kernel_width, in_channels, out_channels), fan_in, gain)
        )
        self._register("bias", np.zeros(out_channels))

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, self._cache = conv1d_forward(
            x, self.p("weight"), self.p("bias"), self.stride, self.dilation, self.padding
        )
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        dx, dweight, dbias = conv1d_backward(dout, self._pop_cache())
        self.accumulate("weight", dweight)
        self.accumulate("bias", dbias)
        return dx

    def specs(self) -> List[LayerSpec]:
        return [
            LayerSpec(
                name=self.name,
                kind="conv1d",
                in_channels=self.in_channels,
                out_channels=self.out_channels,
                kernel_width=self.kernel_width,
                stride=self.stride,
                dilation=self.dilation,
            )
        ]
