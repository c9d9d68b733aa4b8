#!/usr/bin/env python3

from typing import List, Optional, Tuple

import numpy as np

from ..exceptions import ContractError, ShapeError
from .base import Layer, LayerSpec, init_weight
from .functional import sigmoid
from .params import ParamStore


class LSTM(Layer):
    """Unidirectional LSTM with ZoneOut on cell and hidden state.

    Gate order in the fused weights is (input, forget, candidate, output).
    In training each unit keeps its previous state with probability
    ``zoneout``; evaluation blends with ``zoneout`` as the mixing weight.
    """

    kind = "birnn"

    def __init__(
        self,
        name: str,
        store: ParamStore,
        input_dim: int,
        units: int,
        rng: np.random.Generator,
        zoneout: float = 0.0,
        verbose=False,
    ):
        super().__init__(name, store, verbose)
        if not 0.0 <= zoneout < 1.0:
            raise ContractError(f"zoneout rate must lie in [0, 1), got {zoneout}")
        self.input_dim = input_dim
        self.units = units
        self.zoneout = zoneout
        self._register("W", init_weight(rng, (input_dim, 4 * units), input_dim))
        self._register("U", init_weight(rng, (units, 4 * units), units))
        bias = np.zeros(4 * units)
        bias[units:2 * units] = 1.0
        self._register("b", bias)

    def _keep(self, length: int, train: bool, rng, keep_mask) -> np.ndarray:
        dtype = self.store.dtype
        if keep_mask is not None:
            keep_mask = np.asarray(keep_mask, dtype=dtype)
            if keep_mask.shape != (length, self.units):
                raise ShapeError(
                    f"{self.name}: keep mask {keep_mask.shape} != {(length, self.units)}"
                )
            return keep_mask
        if train and self.zoneout > 0.0:
            return (rng.random((length, self.units)) < self.zoneout).astype(dtype)
        return np.full((length, self.units), self.zoneout if not train else 0.0, dtype=dtype)

    def forward(
        self,
        x: np.ndarray,
        train: bool,
        rng: Optional[np.random.Generator] = None,
        keep_mask: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        length = x.shape[0]
        if length == 0:
            raise ContractError(f"{self.name}: empty sequence")
        H = self.units
        W, U, b = self.p("W"), self.p("U"), self.p("b")
        keep = self._keep(length, train, rng, keep_mask)
        dtype = self.store.dtype
        h = np.zeros(H, dtype=dtype)
        c = np.zeros(H, dtype=dtype)
        xw = x @ W + b
        steps = []
        out = np.empty((length, H), dtype=dtype)
        for t in range(length):
            z = xw[t] + h @ U
            i = sigmoid(z[:H])
            f = sigmoid(z[H:2 * H])
            g = np.tanh(z[2 * H:3 * H])
            o = sigmoid(z[3 * H:])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            m = keep[t]
            steps.append((h, c, i, f, g, o, tanh_c))
            c = m * c + (1.0 - m) * c_new
            h = m * h + (1.0 - m) * h_new
            out[t] = h
        self._cache = (x, keep, steps)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, keep, steps = self._pop_cache()
        H = self.units
        W, U = self.p("W"), self.p("U")
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros_like(self.p("b"))
        dx = np.zeros_like(x, dtype=np.result_type(x, W))
        dh_next = np.zeros(H, dtype=W.dtype)
        dc_next = np.zeros(H, dtype=W.dtype)
        for t in range(x.shape[0] - 1, -1, -1):
            h_prev, c_prev, i, f, g, o, tanh_c = steps[t]
            m = keep[t]
            dh = dout[t] + dh_next
            dc = dc_next
            dh_new = (1.0 - m) * dh
            dc_new = (1.0 - m) * dc + dh_new * o * (1.0 - tanh_c ** 2)
            dz = np.concatenate(
                [
                    dc_new * g * i * (1.0 - i),
                    dc_new * c_prev * f * (1.0 - f),
                    dc_new * i * (1.0 - g ** 2),
                    dh_new * tanh_c * o * (1.0 - o),
                ]
            )
            dW += np.outer(x[t], dz)
            dU += np.outer(h_prev, dz)
            db += dz
            dx[t] = W @ dz
            dh_next = m * dh + U @ dz
            dc_next = m * dc + dc_new * f
        self.accumulate("W", dW)
        self.accumulate("U", dU)
        self.accumulate("b", db)
        return dx

    def specs(self) -> List[LayerSpec]:
        return [
            LayerSpec(
                name=self.name,
                kind="birnn",
                in_channels=self.input_dim,
                out_channels=self.units,
                activation="tanh",
            )
        ]


class BiLSTM(Layer):
    """Forward and time-reversed LSTMs, outputs concatenated per step"""

    kind = "birnn"

    def __init__(
        self,
        name: str,
        store: ParamStore,
        input_dim: int,
        units: int,
        rng: np.random.Generator,
        zoneout: float = 0.0,
        verbose=False,
    ):
        super().__init__(name, store, verbose)
        self.units = units
        self.forward_cell = LSTM(f"{name}.fwd", store, input_dim, units, rng, zoneout, verbose)
        self.backward_cell = LSTM(f"{name}.bwd", store, input_dim, units, rng, zoneout, verbose)

    def forward(
        self,
        x: np.ndarray,
        train: bool,
        rng: Optional[np.random.Generator] = None,
        keep_masks: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    ) -> np.ndarray:
        fwd_mask, bwd_mask = keep_masks if keep_masks is not None else (None, None)
        h_fwd = self.forward_cell.forward(x, train, rng, fwd_mask)
        h_bwd = self.backward_cell.forward(x[::-1], train, rng, bwd_mask)[::-1]
        return np.concatenate([h_fwd, h_bwd], axis=1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        H = self.units
        dx = self.forward_cell.backward(dout[:, :H])
        dx = dx + self.backward_cell.backward(dout[::-1, H:])[::-1]
        return dx

    def specs(self) -> List[LayerSpec]:
        return self.forward_cell.specs() + self.backward_cell.specs()
