"""Layer primitives: dense affine layers and a frozen random Fourier feature map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class Dense:
    weight: np.ndarray  # d_in x d_out
    bias: np.ndarray  # 1 x d_out
    activation: str = "tanh"

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def init(cls, d_in: int, d_out: int, rng: np.random.Generator, activation: str = "tanh") -> "Dense":
        # Glorot-uniform weights, zero bias
        bound = np.sqrt(6.0 / (d_in + d_out))
        return cls(rng.uniform(-bound, bound, (d_in, d_out)), np.zeros((1, d_out)), activation)


def dense_forward(x, weight, bias, activation: str = "identity"):
    """Affine map followed by ``activation``; works on arrays and Vars alike."""
    return ad.ACTIVATIONS[activation](ad.add(ad.matmul(x, weight), bias))


def mlp_forward(layers: list[Dense], x):
    """Compose dense layers; the last layer is affine regardless of its tag."""
    h = x
    for i, layer in enumerate(layers):
        if ad._value(h).shape[1] != layer.d_in:
            raise ValueError(
                f"layer {i} expects {layer.d_in} inputs, got {ad._value(h).shape[1]}"
            )
        act = "identity" if i == len(layers) - 1 else layer.activation
        h = dense_forward(h, layer.weight, layer.bias, act)
    return h


@dataclass(frozen=True)
class RffLayer:
    """Random Fourier features ``sqrt(2/D) cos(x W^T + phase)``; never trained."""

    weight: np.ndarray  # d_rff x d_in, entries N(0, sigma^-2)
    phase: np.ndarray  # d_rff, Uniform[0, 2pi)
    bandwidth: float

    @classmethod
    def init(cls, d_in: int, d_rff: int, bandwidth: float, rng: np.random.Generator) -> "RffLayer":
        if bandwidth <= 0:
            raise ValueError("RFF bandwidth must be positive")
        weight = rng.normal(0.0, 1.0 / bandwidth, (d_rff, d_in))
        phase = rng.uniform(0.0, 2.0 * np.pi, d_rff)
        return cls(weight, phase, float(bandwidth))

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_rff(self) -> int:
        return self.weight.shape[0]

    @property
    def scale(self) -> float:
        return float(np.sqrt(2.0 / self.d_rff))


def rff_forward(layer: RffLayer, x):
    if ad._value(x).shape[1] != layer.d_in:
        raise ValueError(f"RFF layer expects {layer.d_in} inputs, got {ad._value(x).shape[1]}")
    pre = ad.add(ad.matmul(x, layer.weight.T), layer.phase[None, :])
    return ad.scale(ad.cos(pre), layer.scale)
