"""Multi-scale convolutional feature pyramid.

Each level is two bias-free 3x3 convolutions (the first with stride 2), each
followed by leaky ReLU(0.1), so level ``n`` sits at ``1 / 2**n`` of the input
resolution. The same class backs the garment (source) extractor, the
person+pose (reference) extractor and the frozen feature network used by the
perceptual and style losses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tnsr
from .rng import SeededRng
from .tensor import Tensor, ValidationError, concat, conv2d, leaky_relu

DEFAULT_CHANNELS = (64, 128, 256, 256, 256)
NEG_SLOPE = 0.1


@dataclass
class PyramidParams:
    kernels: list[tuple[Tensor, Tensor]]
    channels: tuple[int, ...] = DEFAULT_CHANNELS
    stream: str = "source"
    frozen: bool = False
    in_channels: int = 3

    @property
    def levels(self) -> int:
        return len(self.channels)


@dataclass
class FeaturePyramid:
    levels: list[Tensor] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, n: int) -> Tensor:
        """Level ``n`` counted from 1 (finest) as in the level shapes."""
        return self.levels[n - 1]

    def shapes(self) -> list[tuple[int, ...]]:
        return [t.shape for t in self.levels]


def uniform_kernel(rng: SeededRng, c_out: int, c_in: int, k: int, dtype="f64",
                   requires_grad: bool = True, gain: float = 1.0) -> Tensor:
    """Kernel drawn uniformly from [-a, a] with a = gain * sqrt(1 / fan_in)."""
    bound = gain * np.sqrt(1.0 / (c_in * k * k))
    data = rng.uniform((c_out, c_in, k, k), -bound, bound)
    return Tensor(data, dtype=dtype, requires_grad=requires_grad)


def init_pyramid(in_channels: int, rng: SeededRng, channels: Sequence[int] = DEFAULT_CHANNELS,
                 stream: str = "source", frozen: bool = False, dtype="f64") -> PyramidParams:
    if stream not in ("source", "reference"):
        raise ValidationError(f"stream must be 'source' or 'reference', got {stream!r}")
    kernels = []
    c_prev = in_channels
    for c in channels:
        k1 = uniform_kernel(rng, c, c_prev, 3, dtype, requires_grad=not frozen)
        k2 = uniform_kernel(rng, c, c, 3, dtype, requires_grad=not frozen)
        kernels.append((k1, k2))
        c_prev = c
    return PyramidParams(kernels, tuple(channels), stream, frozen, in_channels)


def pyramid_features(x: Tensor, params: PyramidParams) -> FeaturePyramid:
    """Run the pyramid without the divisibility check (any spatial size >= 1)."""
    if x.ndim != 3 or x.shape[0] != params.in_channels:
        raise ValidationError(
            f"{params.stream} pyramid expects {params.in_channels} input channels, got shape {x.shape}")
    levels = []
    h = x
    for k1, k2 in params.kernels:
        h = leaky_relu(conv2d(h, k1, stride=2, pad=1), NEG_SLOPE)
        h = leaky_relu(conv2d(h, k2, stride=1, pad=1), NEG_SLOPE)
        levels.append(h)
    return FeaturePyramid(levels)


def extract(x: Tensor, params: PyramidParams) -> FeaturePyramid:
    """Feature pyramid of a C x H x W input; H and W must be multiples of 2**levels."""
    multiple = 2 ** params.levels
    if x.ndim != 3 or x.shape[1] % multiple or x.shape[2] % multiple:
        raise ValidationError(
            f"pyramid input spatial dims must be multiples of {multiple}, got shape {x.shape}")
    return pyramid_features(x, params)


def build_reference_input(agnostic: Tensor, pose: Tensor) -> Tensor:
    """Channel concatenation of the cloth-agnostic person and the pose heatmaps."""
    if agnostic.ndim != 3 or pose.ndim != 3 or agnostic.shape[1:] != pose.shape[1:]:
        raise ValidationError(
            f"agnostic {agnostic.shape} and pose {pose.shape} must share spatial dims")
    return concat([agnostic, pose], axis=0)


def named_kernels(params: PyramidParams) -> list[tuple[str, Tensor]]:
    out = []
    for n, (k1, k2) in enumerate(params.kernels, start=1):
        out.append((f"level{n}.conv1", k1))
        out.append((f"level{n}.conv2", k2))
    return out


def save_params(params: PyramidParams, directory) -> None:
    """Write one TNSR file per kernel plus ``manifest.txt`` (name and shape per line)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"# stream={params.stream} frozen={int(params.frozen)} in_channels={params.in_channels}"]
    for name, kernel in named_kernels(params):
        tnsr.save(directory / f"{name}.tnsr", kernel)
        lines.append(f"{name}\t{'x'.join(str(s) for s in kernel.shape)}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_params(directory) -> PyramidParams:
    directory = Path(directory)
    lines = (directory / "manifest.txt").read_text().splitlines()
    meta = dict(item.split("=") for item in lines[0].lstrip("# ").split())
    frozen = meta["frozen"] == "1"
    tensors = {}
    for line in lines[1:]:
        name, shape = line.split("\t")
        data = tnsr.load(directory / f"{name}.tnsr")
        if "x".join(str(s) for s in data.shape) != shape:
            raise ValidationError(f"kernel {name} has shape {data.shape}, manifest says {shape}")
        tensors[name] = Tensor(data, requires_grad=not frozen)
    count = len(tensors) // 2
    kernels = [(tensors[f"level{n}.conv1"], tensors[f"level{n}.conv2"]) for n in range(1, count + 1)]
    channels = tuple(k1.shape[0] for k1, _ in kernels)
    return PyramidParams(kernels, channels, meta["stream"], frozen, int(meta["in_channels"]))
