#!/usr/bin/env python3

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..exceptions import ShapeError


class GradStore(dict):
    """Gradients co-indexed with a ParamStore; every shape equals its parameter's"""

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in self.values())))

    def scale(self, factor: float) -> None:
        for g in self.values():
            g *= factor

    def first_non_finite(self) -> Optional[str]:
        for name, g in self.items():
            if not np.all(np.isfinite(g)):
                return name
        return None


class ParamStore:
    """Flat, insertion-ordered collection of named trainable arrays.

    Non-trainable state (batch-norm running statistics) lives in ``buffers``
    and travels with the parameters through checkpoints.
    """

    def __init__(self, dtype=np.float64, verbose=False):
        self.dtype = np.dtype(dtype)
        self.verbose = verbose
        self.params: Dict[str, np.ndarray] = {}
        self.grads = GradStore()
        self.buffers: Dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise KeyError(f"Duplicate parameter name: {name}")
        value = np.array(value, dtype=self.dtype)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        if self.verbose:
            print(f"[DEBUG] Registered parameter {name} {value.shape}")
        return value

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.buffers:
            raise KeyError(f"Duplicate buffer name: {name}")
        self.buffers[name] = np.array(value, dtype=self.dtype)
        return self.buffers[name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.params.items())

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        target = self.grads[name]
        if target.shape != np.shape(grad):
            raise ShapeError(
                f"Gradient for {name} has shape {np.shape(grad)}, expected {target.shape}"
            )
        target += grad

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def num_parameters(self, prefix: Optional[str] = None) -> int:
        return int(
            sum(
                p.size
                for name, p in self.params.items()
                if prefix is None or name.startswith(prefix)
            )
        )

    def names(self, prefix: Optional[str] = None) -> List[str]:
        return [n for n in self.params if prefix is None or n.startswith(prefix)]

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter and buffer; buffers keyed with a 'buffer:' prefix"""
        state = {name: p.copy() for name, p in self.params.items()}
        state.update({f"buffer:{name}": b.copy() for name, b in self.buffers.items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Overwrite values in place; names and shapes must match exactly"""
        expected = set(self.params) | {f"buffer:{n}" for n in self.buffers}
        missing = expected - set(state)
        unexpected = set(state) - expected
        if missing or unexpected:
            raise KeyError(
                f"State mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(unexpected)[:5]}"
            )
        for key, value in state.items():
            if key.startswith("buffer:"):
                target = self.buffers[key[len("buffer:"):]]
            else:
                target = self.params[key]
            if target.shape != value.shape:
                raise ShapeError(f"{key}: stored shape {value.shape}, model shape {target.shape}")
            target[...] = value

    def copy(self) -> "ParamStore":
        other = ParamStore(self.dtype, verbose=self.verbose)
        for name, p in self.params.items():
            other.params[name] = p.copy()
            other.grads[name] = self.grads[name].copy()
        other.buffers = {name: b.copy() for name, b in self.buffers.items()}
        return other
