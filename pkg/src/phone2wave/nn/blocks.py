#!/usr/bin/env python3

from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ResolutionError
from .base import Layer, LayerSpec
from .conv import Conv1d
from .functional import (
    film_modulate,
    film_modulate_backward,
    leaky_relu,
    leaky_relu_backward,
    nearest_upsample,
    nearest_upsample_backward,
)
from .params import ParamStore


class UBlock(Layer):
    """Upsampling residual block.

    Residual path: nearest upsample -> 1-wide conv. Main path: two dilated
    3-wide conv pairs, with FiLM applied after the upsampling stage. Without
    a FiLM input the modulation is the identity.
    """

    kind = "ublock"

    def __init__(
        self,
        name: str,
        store: ParamStore,
        in_channels: int,
        out_channels: int,
        factor: int,
        rng: np.random.Generator,
        dilations: Sequence[int] = (1, 2, 4, 8),
        slope: float = 0.2,
        verbose=False,
    ):
        super().__init__(name, store, verbose)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.factor = factor
        self.slope = slope
        self.residual = Conv1d(f"{name}.residual", store, in_channels, out_channels, 1, rng)
        d = list(dilations)
        self.convs = [
            Conv1d(f"{name}.conv0", store, in_channels, out_channels, 3, rng, dilation=d[0]),
            Conv1d(f"{name}.conv1", store, out_channels, out_channels, 3, rng, dilation=d[1]),
            Conv1d(f"{name}.conv2", store, out_channels, out_channels, 3, rng, dilation=d[2]),
            Conv1d(f"{name}.conv3", store, out_channels, out_channels, 3, rng, dilation=d[3]),
        ]

    def _modulate(self, a, scale, shift):
        if scale is None:
            return a
        if scale.shape != a.shape or shift.shape != a.shape:
            raise ResolutionError(f"{self.name} FiLM", a.shape[0], scale.shape[0])
        return film_modulate(a, scale, shift)

    def forward(
        self,
        x: np.ndarray,
        scale: Optional[np.ndarray] = None,
        shift: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        f, slope = self.factor, self.slope
        c0, c1, c2, c3 = self.convs
        r = self.residual.forward(nearest_upsample(x, f))

        a2 = c0.forward(nearest_upsample(leaky_relu(x, slope), f))
        a3 = self._modulate(a2, scale, shift)
        main = c1.forward(leaky_relu(a3, slope))
        s = r + main

        b0 = self._modulate(s, scale, shift)
        b2 = c2.forward(leaky_relu(b0, slope))
        b3 = self._modulate(b2, scale, shift)
        b5 = c3.forward(leaky_relu(b3, slope))
        self._cache = (x, a2, a3, s, b0, b2, b3, scale)
        return s + b5

    def backward(self, dout: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
        """Returns (d input, d scale, d shift); the FiLM gradients are None without FiLM"""
        x, a2, a3, s, b0, b2, b3, scale = self._pop_cache()
        f, slope = self.factor, self.slope
        c0, c1, c2, c3 = self.convs
        dscale = dshift = None

        def unmodulate(dmod, activation):
            nonlocal dscale, dshift
            if scale is None:
                return dmod
            da, dsc, dsh = film_modulate_backward(dmod, activation, scale)
            dscale = dsc if dscale is None else dscale + dsc
            dshift = dsh if dshift is None else dshift + dsh
            return da

        ds = dout.copy()
        db3 = leaky_relu_backward(c3.backward(dout), b3, slope)
        db2 = unmodulate(db3, b2)
        db0 = leaky_relu_backward(c2.backward(db2), b0, slope)
        ds += unmodulate(db0, s)

        da3 = leaky_relu_backward(c1.backward(ds), a3, slope)
        da2 = unmodulate(da3, a2)
        dx = leaky_relu_backward(nearest_upsample_backward(c0.backward(da2), f), x, slope)
        dx += nearest_upsample_backward(self.residual.backward(ds), f)
        return dx, dscale, dshift

    def specs(self) -> List[LayerSpec]:
        own = LayerSpec(
            name=self.name,
            kind="ublock",
            in_channels=self.in_channels,
            out_channels=self.out_channels,
            stride=self.factor,
            activation="leaky_relu",
        )
        return [own] + self.residual.specs() + [s for c in self.convs for s in c.specs()]


class DBlock(Layer):
    """Downsampling residual block built on strided convolutions.

    Output length is ceil(L / factor); inputs that are not a multiple of the
    factor are zero-padded on the right.
    """

    kind = "dblock"

    def __init__(
        self,
        name: str,
        store: ParamStore,
        in_channels: int,
        out_channels: int,
        factor: int,
        rng: np.random.Generator,
        dilations: Sequence[int] = (1, 2, 4),
        slope: float = 0.2,
        verbose=False,
    ):
        super().__init__(name, store, verbose)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.factor = factor
        self.slope = slope
        self._warned_padding = False
        pad = (0, 0)
        self.residual = Conv1d(
            f"{name}.residual", store, in_channels, out_channels, factor, rng, stride=factor, padding=pad
        )
        self.down = Conv1d(
            f"{name}.down", store, in_channels, out_channels, factor, rng, stride=factor, padding=pad
        )
        self.convs = [
            Conv1d(f"{name}.conv{i}", store, out_channels, out_channels, 3, rng, dilation=d)
            for i, d in enumerate(list(dilations)[:3])
        ]

    def forward(self, x: np.ndarray) -> np.ndarray:
        length = x.shape[0]
        pad = (-length) % self.factor
        if pad:
            if not self._warned_padding:
                print(
                    f"Warning: {self.name} input length {length} is not a multiple of "
                    f"{self.factor}; zero-padding {pad} steps on the right"
                )
                self._warned_padding = True
            x = np.pad(x, ((0, pad), (0, 0)))
        r = self.residual.forward(x)
        a = self.down.forward(x)
        pre_acts = []
        for conv in self.convs:
            pre_acts.append(a)
            a = conv.forward(leaky_relu(a, self.slope))
        self._cache = (length, pre_acts)
        return a + r

    def backward(self, dout: np.ndarray) -> np.ndarray:
        length, pre_acts = self._pop_cache()
        da = dout
        for conv, pre in zip(reversed(self.convs), reversed(pre_acts)):
            da = leaky_relu_backward(conv.backward(da), pre, self.slope)
        dx = self.down.backward(da) + self.residual.backward(dout)
        return dx[:length]

    def specs(self) -> List[LayerSpec]:
        own = LayerSpec(
            name=self.name,
            kind="dblock",
            in_channels=self.in_channels,
            out_channels=self.out_channels,
            stride=self.factor,
            activation="leaky_relu",
        )
        children = self.residual.specs() + self.down.specs()
        return [own] + children + [s for c in self.convs for s in c.specs()]
