"""Trainable parameters and init helpers."""

from __future__ import annotations

import numpy as np


class Parameter:
    """A named value tensor with a same-shaped gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform in +-sqrt(1/fan_in); the default for LSTM and linear weights."""
    bound = float(np.sqrt(1.0 / max(1, fan_in)))
    return rng.uniform(-bound, bound, size=shape)


def state_dict(params: list[Parameter]) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for p in params:
        if p.name in out:
            raise ValueError(f"duplicate parameter name {p.name!r}")
        out[p.name] = p.value
    return out


def load_state_dict(params: list[Parameter], state: dict[str, np.ndarray]) -> None:
    by_name = {p.name: p for p in params}
    missing = set(by_name) - set(state)
    unexpected = set(state) - set(by_name)
    if missing or unexpected:
        raise ValueError(
            f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}"
        )
    for name, value in state.items():
        p = by_name[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != p.value.shape:
            raise ValueError(
                f"shape mismatch for {name}: {value.shape} vs {p.value.shape}"
            )
        p.value = value.copy()
        p.grad = np.zeros_like(p.value)
