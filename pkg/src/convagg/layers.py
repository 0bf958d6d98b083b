"""The five layer operations: convolution+ReLU, LRN, max-pool, dense, softmax.

All operations are pure functions of their inputs (inputs are never
mutated), so they are safe to call concurrently on distinct outputs.
Convolution is cross-correlation (no kernel flip), matching how publicly
distributed pretrained weights are laid out. Output spatial sizes use the
floor rule: fractional window positions at the border are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ShapeMismatchError
from .tensor import Tensor3

__all__ = [
    "ConvKernelBank",
    "LrnSpec",
    "conv_forward",
    "lrn_forward",
    "maxpool_forward",
    "dense_forward",
    "softmax",
    "conv_output_size",
    "pool_output_size",
]


def conv_output_size(dim: int, kernel: int, stride: int, pad: int) -> int:
    return (dim + 2 * pad - kernel) // stride + 1


def pool_output_size(dim: int, size: int, stride: int) -> int:
    return (dim - size) // stride + 1


@dataclass(frozen=True)
class ConvKernelBank:
    """A bank of out_channels square kernels for grouped cross-correlation.

    Weight layout is (out_channels, kernel_size, kernel_size,
    in_channels // groups), channel-last like the activations it consumes.
    """

    kernel_size: int
    in_channels: int
    out_channels: int
    weights: np.ndarray
    biases: np.ndarray
    groups: int = 1
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if self.kernel_size < 1 or self.stride < 1:
            raise ValueError("kernel_size and stride must be >= 1")
        if self.pad < 0:
            raise ValueError("pad must be >= 0")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeMismatchError(
                f"groups={self.groups} must divide in_channels={self.in_channels} "
                f"and out_channels={self.out_channels}"
            )
        cpg = self.in_channels // self.groups
        wanted = (self.out_channels, self.kernel_size, self.kernel_size, cpg)
        w = np.asarray(self.weights, dtype=np.float32)
        if w.size != int(np.prod(wanted)):
            raise ShapeMismatchError(
                f"weights have {w.size} values, expected {wanted} = {int(np.prod(wanted))}"
            )
        w = np.ascontiguousarray(w.reshape(wanted))
        b = np.ascontiguousarray(np.asarray(self.biases, dtype=np.float32).ravel())
        if b.size != self.out_channels:
            raise ShapeMismatchError(
                f"biases have {b.size} values, expected {self.out_channels}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)


@dataclass(frozen=True)
class LrnSpec:
    """Constants of the channel-window response normalization.

    window is the size of the sliding index set over channels, clipped at
    fiber ends. Defaults follow the pretrained-weight ecosystem.
    """

    window: int = 5
    k: float = 2.0
    alpha: float = 1e-4
    beta: float = 0.75

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be a positive odd integer, got {self.window}")
        if self.k <= 0:
            raise ValueError("k must be positive")


def conv_forward(input: Tensor3, bank: ConvKernelBank, apply_relu: bool = True) -> Tensor3:
    """Grouped cross-correlation plus bias, optionally rectified."""
    if input.channels != bank.in_channels:
        raise ShapeMismatchError(
            f"input has {input.channels} channels, kernel bank expects {bank.in_channels}"
        )
    ro = conv_output_size(input.rows, bank.kernel_size, bank.stride, bank.pad)
    co = conv_output_size(input.cols, bank.kernel_size, bank.stride, bank.pad)
    if ro < 1 or co < 1:
        raise ShapeMismatchError(
            f"convolution output size {ro}x{co} is not positive for input "
            f"{input.rows}x{input.cols}, kernel {bank.kernel_size}, "
            f"stride {bank.stride}, pad {bank.pad}"
        )
    out = kernels.conv2d(
        input.array, bank.weights, bank.biases,
        bank.stride, bank.pad, bank.groups, bool(apply_relu),
    )
    return Tensor3(out)


def lrn_forward(input: Tensor3, spec: LrnSpec) -> Tensor3:
    """Divide each entry by a windowed power of neighboring channel energy.

    Entry x_m becomes x_m / (k + alpha * sum of x_n^2 over the window
    centered at m)^beta. Shape is unchanged; zero maps to zero and signs
    are preserved.
    """
    if not input.is_finite():
        raise ValueError("lrn_forward requires finite input")
    out = kernels.lrn(input.array, spec.window, spec.k, spec.alpha, spec.beta)
    return Tensor3(out)


def maxpool_forward(input: Tensor3, size: int, stride: int) -> Tensor3:
    """Per-channel max over size x size spatial bins stepped by stride."""
    if size < 1 or stride < 1:
        raise ValueError("size and stride must be >= 1")
    if input.rows < size or input.cols < size:
        raise ShapeMismatchError(
            f"input {input.rows}x{input.cols} is smaller than the {size}x{size} window"
        )
    out = kernels.maxpool(input.array, size, stride)
    return Tensor3(out)


def dense_forward(
    input: Tensor3, weights: np.ndarray, biases: np.ndarray, apply_relu: bool = True
) -> Tensor3:
    """Fully connected layer on the canonically flattened input.

    weights is (out_units, rows*cols*channels); the column order is the
    Tensor3 layout (row, col, channel).
    """
    w = np.ascontiguousarray(np.asarray(weights, dtype=np.float32))
    if w.ndim != 2:
        raise ShapeMismatchError(f"dense weights must be a matrix, got rank {w.ndim}")
    flat = input.data
    if w.shape[1] != flat.size:
        raise ShapeMismatchError(
            f"dense weights have {w.shape[1]} columns, flattened input has {flat.size}"
        )
    b = np.ascontiguousarray(np.asarray(biases, dtype=np.float32).ravel())
    if b.size != w.shape[0]:
        raise ShapeMismatchError(f"{b.size} biases for {w.shape[0]} output units")
    out = kernels.dense(flat, w, b, bool(apply_relu))
    return Tensor3(out.reshape(1, 1, -1))


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax: exp(x - max) normalized to sum 1."""
    v = np.asarray(logits, dtype=np.float64).ravel()
    e = np.exp(v - v.max())
    return e / e.sum()
