"""Sequential network assembly: descriptor parsing, weight binding, forward.

A network is declared in a small text format (see ``parse_arch``), bound to
a weight container, and run as a single forward pass with a set of tapped
layer indices whose outputs are returned. Layer indices are 1-based in
declaration order. A bound ``NetworkModel`` is immutable; concurrent
forward passes on different images are independent.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

from .container import WeightContainer
from .errors import ShapeMismatchError
from .layers import (
    ConvKernelBank,
    LrnSpec,
    conv_forward,
    conv_output_size,
    dense_forward,
    lrn_forward,
    maxpool_forward,
    pool_output_size,
    softmax,
)
from .tensor import Tensor3

__all__ = [
    "Conv",
    "Lrn",
    "MaxPool",
    "Dense",
    "Softmax",
    "ArchitectureDescriptor",
    "NetworkModel",
    "parse_arch",
    "load_arch",
    "reference_descriptor",
    "reference_arch_text",
    "validate_and_bind",
    "forward",
    "receptive_field",
]


@dataclass(frozen=True)
class Conv:
    n: int
    stride: int
    pad: int
    out_channels: int
    groups: int = 1
    relu: bool = True

    kind = "conv"


@dataclass(frozen=True)
class Lrn:
    window: int = 5
    k: float = 2.0
    alpha: float = 1e-4
    beta: float = 0.75

    kind = "lrn"

    def spec(self) -> LrnSpec:
        return LrnSpec(self.window, self.k, self.alpha, self.beta)


@dataclass(frozen=True)
class MaxPool:
    size: int
    stride: int

    kind = "pool"


@dataclass(frozen=True)
class Dense:
    out_units: int
    activation: str = "none"  # none | relu | softmax

    kind = "dense"

    def __post_init__(self):
        if self.activation not in ("none", "relu", "softmax"):
            raise ValueError(f"unknown dense activation {self.activation!r}")


@dataclass(frozen=True)
class Softmax:
    kind = "softmax"


LayerSpec = Conv | Lrn | MaxPool | Dense | Softmax


@dataclass(frozen=True)
class ArchitectureDescriptor:
    """Ordered layer list plus the declared input shape."""

    input_rows: int
    input_cols: int
    input_channels: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if min(self.input_rows, self.input_cols, self.input_channels) < 1:
            raise ShapeMismatchError("input dimensions must be positive")
        if not self.layers:
            raise ValueError("descriptor declares no layers")
        self.shape_chain()  # validates every inferred shape

    def num_layers(self) -> int:
        return len(self.layers)

    def layer(self, index: int) -> LayerSpec:
        if not 1 <= index <= len(self.layers):
            raise IndexError(f"layer index {index} outside 1..{len(self.layers)}")
        return self.layers[index - 1]

    def is_dense_layer(self, index: int) -> bool:
        return self.layer(index).kind in ("dense", "softmax")

    def non_dense_indices(self) -> tuple[int, ...]:
        return tuple(
            l for l in range(1, len(self.layers) + 1) if not self.is_dense_layer(l)
        )

    def dense_indices(self) -> tuple[int, ...]:
        return tuple(l for l in range(1, len(self.layers) + 1) if self.is_dense_layer(l))

    def shape_chain(self) -> tuple[tuple[int, int, int], ...]:
        """Inferred (rows, cols, channels) per layer; entry 0 is the input."""
        chain = [(self.input_rows, self.input_cols, self.input_channels)]
        for idx, spec in enumerate(self.layers, start=1):
            r, c, k = chain[-1]
            if spec.kind == "conv":
                if k % spec.groups or spec.out_channels % spec.groups:
                    raise ShapeMismatchError(
                        f"layer {idx}: groups={spec.groups} must divide "
                        f"in_channels={k} and out_channels={spec.out_channels}"
                    )
                ro = conv_output_size(r, spec.n, spec.stride, spec.pad)
                co = conv_output_size(c, spec.n, spec.stride, spec.pad)
                if ro < 1 or co < 1:
                    raise ShapeMismatchError(
                        f"layer {idx}: conv output {ro}x{co} not positive"
                    )
                chain.append((ro, co, spec.out_channels))
            elif spec.kind == "lrn":
                chain.append((r, c, k))
            elif spec.kind == "pool":
                if r < spec.size or c < spec.size:
                    raise ShapeMismatchError(
                        f"layer {idx}: pool window {spec.size} exceeds input {r}x{c}"
                    )
                chain.append(
                    (pool_output_size(r, spec.size, spec.stride),
                     pool_output_size(c, spec.size, spec.stride), k)
                )
            elif spec.kind == "dense":
                chain.append((1, 1, spec.out_units))
            elif spec.kind == "softmax":
                chain.append((r, c, k))
            else:  # pragma: no cover
                raise ValueError(f"unknown layer kind {spec.kind!r}")
        return tuple(chain)

    def describe(self) -> str:
        lines = [f"input {self.input_rows}x{self.input_cols}x{self.input_channels}"]
        chain = self.shape_chain()
        for idx, spec in enumerate(self.layers, start=1):
            r, c, k = chain[idx]
            lines.append(f"layer {idx:>2} {spec.kind:<7} -> {r}x{c}x{k}")
        return "\n".join(lines)


def _parse_kv(parts, line_no):
    kv = {}
    for part in parts:
        if "=" not in part:
            raise ValueError(f"line {line_no}: expected key=value, got {part!r}")
        key, val = part.split("=", 1)
        kv[key] = val
    return kv


def parse_arch(text: str) -> ArchitectureDescriptor:
    """Parse the architecture text format.

    One layer per line, in order. Grammar (``#`` starts a comment line)::

        input <rows> <cols> <channels>
        conv n=<k> stride=<s> pad=<p> out=<channels> [groups=<g>] [relu=0|1]
        lrn [window=<w>] [k=<k>] [alpha=<a>] [beta=<b>]
        pool size=<k> stride=<s>
        dense out=<units> [relu=0|1 | act=none|relu|softmax]
        softmax
    """
    input_shape = None
    layers: list[LayerSpec] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        head, rest = parts[0].lower(), parts[1:]
        if head == "input":
            if len(rest) != 3:
                raise ValueError(f"line {line_no}: input needs 3 integers")
            input_shape = tuple(int(v) for v in rest)
        elif head == "conv":
            kv = _parse_kv(rest, line_no)
            layers.append(Conv(
                n=int(kv["n"]), stride=int(kv.get("stride", 1)),
                pad=int(kv.get("pad", 0)), out_channels=int(kv["out"]),
                groups=int(kv.get("groups", 1)),
                relu=bool(int(kv.get("relu", 1))),
            ))
        elif head == "lrn":
            kv = _parse_kv(rest, line_no)
            layers.append(Lrn(
                window=int(kv.get("window", 5)), k=float(kv.get("k", 2.0)),
                alpha=float(kv.get("alpha", 1e-4)), beta=float(kv.get("beta", 0.75)),
            ))
        elif head == "pool":
            kv = _parse_kv(rest, line_no)
            layers.append(MaxPool(size=int(kv["size"]), stride=int(kv["stride"])))
        elif head == "dense":
            kv = _parse_kv(rest, line_no)
            if "act" in kv:
                act = kv["act"].lower()
            else:
                act = "relu" if int(kv.get("relu", 0)) else "none"
            layers.append(Dense(out_units=int(kv["out"]), activation=act))
        elif head == "softmax":
            layers.append(Softmax())
        else:
            raise ValueError(f"line {line_no}: unknown layer kind {head!r}")
    if input_shape is None:
        raise ValueError("architecture text declares no 'input' line")
    return ArchitectureDescriptor(*input_shape, tuple(layers))


def load_arch(path) -> ArchitectureDescriptor:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_arch(fh.read())


def reference_arch_text() -> str:
    """Text of the bundled 13-layer reference architecture."""
    return (
        importlib.resources.files("convagg.data")
        .joinpath("reference.arch")
        .read_text(encoding="utf-8")
    )


def reference_descriptor() -> ArchitectureDescriptor:
    return parse_arch(reference_arch_text())


@dataclass(frozen=True)
class NetworkModel:
    """Descriptor plus bound per-layer parameters, immutable after binding."""

    descriptor: ArchitectureDescriptor
    conv_banks: dict[int, ConvKernelBank]
    dense_params: dict[int, tuple[np.ndarray, np.ndarray]]

    def shape_chain(self):
        return self.descriptor.shape_chain()


def weights_name(layer: int) -> str:
    return f"layer{layer}.weights"


def biases_name(layer: int) -> str:
    return f"layer{layer}.biases"


def validate_and_bind(
    descriptor: ArchitectureDescriptor, container: WeightContainer
) -> NetworkModel:
    """Shape-check every parameterized layer against the container and bind.

    Tensor naming convention: ``layer<l>.weights`` / ``layer<l>.biases``
    keyed to 1-based descriptor indices. Raises ShapeMismatchError naming
    the offending layer on any missing tensor or shape mismatch.
    """
    chain = descriptor.shape_chain()
    conv_banks: dict[int, ConvKernelBank] = {}
    dense_params: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for idx, spec in enumerate(descriptor.layers, start=1):
        if spec.kind not in ("conv", "dense"):
            continue
        wname, bname = weights_name(idx), biases_name(idx)
        if wname not in container or bname not in container:
            missing = wname if wname not in container else bname
            raise ShapeMismatchError(f"layer {idx}: container is missing {missing!r}")
        w = container.get(wname)
        b = container.get(bname)
        r, c, k = chain[idx - 1]
        if spec.kind == "conv":
            want = (spec.out_channels, spec.n, spec.n, k // spec.groups)
            if tuple(w.shape) != want:
                raise ShapeMismatchError(
                    f"layer {idx}: conv weights shape {tuple(w.shape)}, expected {want}"
                )
            if b.ravel().size != spec.out_channels:
                raise ShapeMismatchError(
                    f"layer {idx}: {b.size} biases for {spec.out_channels} kernels"
                )
            conv_banks[idx] = ConvKernelBank(
                kernel_size=spec.n, in_channels=k, out_channels=spec.out_channels,
                weights=w, biases=b, groups=spec.groups,
                stride=spec.stride, pad=spec.pad,
            )
        else:
            want = (spec.out_units, r * c * k)
            if tuple(w.shape) != want:
                raise ShapeMismatchError(
                    f"layer {idx}: dense weights shape {tuple(w.shape)}, expected {want}"
                )
            if b.ravel().size != spec.out_units:
                raise ShapeMismatchError(
                    f"layer {idx}: {b.size} biases for {spec.out_units} units"
                )
            dense_params[idx] = (
                np.ascontiguousarray(w, dtype=np.float32),
                np.ascontiguousarray(b.ravel(), dtype=np.float32),
            )
    return NetworkModel(descriptor, conv_banks, dense_params)


def forward(model: NetworkModel, image: Tensor3, taps) -> dict[int, Tensor3]:
    """Single forward pass; returns the output tensor of every tapped layer.

    Taps capture a layer's output as defined by the chain: post-ReLU for
    conv, post-normalization for LRN, post-max for pooling, post-activation
    for dense. Deterministic: repeated calls give bitwise-identical output.
    """
    desc = model.descriptor
    want = (desc.input_rows, desc.input_cols, desc.input_channels)
    if image.shape != want:
        raise ShapeMismatchError(f"image shape {image.shape}, descriptor expects {want}")
    tapset = set(int(t) for t in taps)
    for t in tapset:
        if not 1 <= t <= desc.num_layers():
            raise IndexError(f"tap {t} outside layer range 1..{desc.num_layers()}")

    out: dict[int, Tensor3] = {}
    cur = image
    last_wanted = max(tapset) if tapset else 0
    for idx, spec in enumerate(desc.layers, start=1):
        if idx > last_wanted:
            break
        if spec.kind == "conv":
            cur = conv_forward(cur, model.conv_banks[idx], apply_relu=spec.relu)
        elif spec.kind == "lrn":
            cur = lrn_forward(cur, spec.spec())
        elif spec.kind == "pool":
            cur = maxpool_forward(cur, spec.size, spec.stride)
        elif spec.kind == "dense":
            w, b = model.dense_params[idx]
            cur = dense_forward(cur, w, b, apply_relu=(spec.activation == "relu"))
            if spec.activation == "softmax":
                cur = Tensor3(softmax(cur.data).astype(np.float32).reshape(1, 1, -1))
        elif spec.kind == "softmax":
            cur = Tensor3(
                softmax(cur.data).astype(np.float32).reshape(cur.shape)
            )
        if idx in tapset:
            out[idx] = cur
    return out


def receptive_field(descriptor: ArchitectureDescriptor, layer: int) -> int:
    """Side length, in input pixels, of the support behind one output location.

    Accounting: the support equals the first layer's window size, grown by
    G*(n_a - 1) for every later convolution layer a <= layer, where the
    grid step G is stride(layer 1) times the stride of the first pooling
    layer (1 if there is none). Pooling and normalization layers do not
    grow the support under this accounting.
    """
    spec = descriptor.layer(layer)
    if spec.kind in ("dense", "softmax"):
        raise ValueError(f"layer {layer} is {spec.kind}; support is undefined")

    first = descriptor.layers[0]
    if first.kind == "conv":
        support = first.n
        first_stride = first.stride
    elif first.kind == "pool":
        support = first.size
        first_stride = first.stride
    else:
        support = 1
        first_stride = 1

    pool_stride = 1
    for sp in descriptor.layers[1:layer]:
        if sp.kind == "pool":
            pool_stride = sp.stride
            break
    grid = first_stride * pool_stride

    for idx in range(2, layer + 1):
        sp = descriptor.layer(idx)
        if sp.kind == "conv":
            support += grid * (sp.n - 1)
    return support
