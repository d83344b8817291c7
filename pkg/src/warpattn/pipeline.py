"""Single-stage try-on forward pass, joint objective and training loop.

Dataflow: garment and person+pose pyramids; coarse-to-fine flow stacks from
the attention flow block; the finest stack warps the garment features
(half resolution) and, upsampled once more, the garment image itself; the
fusion attention and shallow decoder produce the try-on image.

Multi-scale supervision: scale ``n`` (1 = coarsest) uses the flow stack of
pyramid level ``N + 1 - n``, and its predictions are averaged down to
``H / 2**(N - n)``; the finest scale is the full-resolution output.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .laf import (FlowHeadParams, LinearAttentionParams, estimate_flow_at_scale, init_flow_head,
                  init_linear_attention)
from .losses import LossReport, LossWeights, ScalePrediction, ScaleTarget, total_loss
from .optim import Adam, named_tensors
from .pyramid import PyramidParams, build_reference_input, extract, init_pyramid, pyramid_features, uniform_kernel
from .rng import SeededRng
from .scfa import SCFAParams, init_scfa, scfa_fuse_and_decode, sum_fuse_and_decode
from .synth import JOINTS, PipelineSample
from .tensor import NonFiniteError, Tensor, ValidationError, backward, concat, conv2d
from .warp import FlowStack, area_downsample, fuse_warps, upsample_flowstack

MODES = ("baseline", "+laf", "+scfa", "+warp_loss")


@dataclass
class PipelineConfig:
    scales: int = 5
    candidates: int = 6
    filters: tuple[int, ...] = (64, 128, 256, 256, 256)
    proj_dim: int = 64
    heads: int = 1
    height: int = 64
    width: int = 64
    learning_rate: float = 3.5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_schedule: str = "constant"  # constant | cosine
    schedule_steps: int = 0        # cosine horizon
    lr_floor: float = 0.05         # cosine end point as a fraction of learning_rate
    warmup_steps: int = 0          # linear ramp before the schedule
    seed: int = 42
    dtype: str = "f64"
    attention: str = "linear"      # linear | dense
    fusion: str = "scfa"           # scfa | sum
    warp_loss: bool = True
    combine: str = "concat"        # concat | product (fusion features into the decoder)
    scfa_residual: bool = True     # add each attention read-out to its input features
    flow_head_init: str = "small"  # small | zero
    flow_hidden: int = 32
    scfa_embed: int = 32
    decoder_hidden: int = 64
    lambda_l1: float = 1.0
    lambda_prec: float = 1.0
    lambda_style: float = 100.0

    def __post_init__(self) -> None:
        self.filters = tuple(int(f) for f in self.filters)
        if self.scales != len(self.filters):
            raise ValidationError(f"{self.scales} scales but {len(self.filters)} filter counts")
        if self.candidates < 1:
            raise ValidationError("need at least one flow candidate")
        if self.height % 2 ** self.scales or self.width % 2 ** self.scales:
            raise ValidationError(f"image size must be a multiple of {2 ** self.scales}")
        if self.attention not in ("linear", "dense") or self.fusion not in ("scfa", "sum"):
            raise ValidationError(f"unknown attention/fusion setting {self.attention}/{self.fusion}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValidationError(f"unknown learning-rate schedule {self.lr_schedule!r}")

    def lr_at(self, step: int) -> float:
        """Learning rate for the 0-based ``step``."""
        ramp = min(1.0, (step + 1) / self.warmup_steps) if self.warmup_steps > 0 else 1.0
        if self.lr_schedule == "constant" or self.schedule_steps <= 0:
            return self.learning_rate * ramp
        progress = min(step, self.schedule_steps) / self.schedule_steps
        decay = 0.5 * (1 + math.cos(math.pi * progress))
        return ramp * self.learning_rate * (self.lr_floor + (1 - self.lr_floor) * decay)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_l1, self.lambda_prec, self.lambda_style)

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "PipelineConfig":
        """Configuration for one ablation row; each row adds one mechanism to the previous."""
        if mode not in MODES:
            raise ValidationError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
        rows = {
            "baseline": dict(attention="dense", candidates=1, fusion="sum", warp_loss=False),
            "+laf": dict(attention="linear", candidates=6, fusion="sum", warp_loss=False),
            "+scfa": dict(attention="linear", candidates=6, fusion="scfa", warp_loss=False),
            "+warp_loss": dict(attention="linear", candidates=6, fusion="scfa", warp_loss=True),
        }
        return cls(**{**rows[mode], **overrides})

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        return cls(**cls.parse_overrides(text))

    @classmethod
    def parse_overrides(cls, text: str) -> dict:
        """Typed values of the ``key=value`` lines present in ``text``."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in types:
                raise ValidationError(f"unknown config key {key!r}")
            kind = str(types[key])
            if "tuple" in kind:
                kwargs[key] = tuple(int(v) for v in value.split(","))
            elif kind == "bool":
                kwargs[key] = value.lower() in ("1", "true", "yes")
            elif kind == "int":
                kwargs[key] = int(value)
            elif kind == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        return kwargs


@dataclass
class PipelineParams:
    source: PyramidParams
    reference: PyramidParams
    attention: list[LinearAttentionParams]   # index 0 = pyramid level 1 (finest)
    flow_heads: list[FlowHeadParams]
    person_proj: Tensor
    scfa: SCFAParams
    phi: PyramidParams


@dataclass
class PipelineOutput:
    tryon: Tensor
    warped: Tensor
    flow_stacks: list[FlowStack]          # coarse to fine, pyramid resolution
    predictions: list[ScalePrediction]   # coarse to fine


def init_params(config: PipelineConfig, seed: int | None = None) -> PipelineParams:
    """Seeded parameters; each component draws from its own stream so ablation rows share weights."""
    root = SeededRng(config.seed if seed is None else seed)
    dt = config.dtype
    source = init_pyramid(3, root.spawn(1), config.filters, "source", dtype=dt)
    reference = init_pyramid(3 + JOINTS, root.spawn(2), config.filters, "reference", dtype=dt)
    attention, heads = [], []
    for level, c in enumerate(config.filters, start=1):
        n = (config.height >> level) * (config.width >> level)
        attention.append(init_linear_attention(root.spawn(10 + level), n, c, min(config.proj_dim, n),
                                               config.heads, dt))
        heads.append(init_flow_head(root.spawn(20 + level), c, config.candidates, config.flow_hidden, dt,
                                    out_init=config.flow_head_init))
    c1 = config.filters[0]
    person_proj = uniform_kernel(root.spawn(3), c1, c1, 1, dt)
    scfa = init_scfa(root.spawn(4), c1, config.scfa_embed, config.decoder_hidden, skip_channels=6,
                     fusion="concat" if config.fusion == "scfa" and config.combine == "concat" else "sum",
                     dtype=dt)
    phi = init_pyramid(3, SeededRng(config.seed, seq=999), config.filters, "source", frozen=True, dtype=dt)
    return PipelineParams(source, reference, attention, heads, person_proj, scfa, phi)


def _as_tensor(array: np.ndarray, dtype: str) -> Tensor:
    return Tensor(np.asarray(array), dtype=dtype)


def forward(sample: PipelineSample, params: PipelineParams, config: PipelineConfig) -> PipelineOutput:
    dt = config.dtype
    garment = _as_tensor(sample.garment, dt)
    agnostic = _as_tensor(sample.agnostic, dt)
    pose = _as_tensor(sample.pose, dt)
    src = extract(garment, params.source)
    ref = extract(build_reference_input(agnostic, pose), params.reference)

    stacks: list[FlowStack] = []
    prev = None
    for level in range(config.scales, 0, -1):
        try:
            stack = estimate_flow_at_scale(src[level], ref[level], prev, params.attention[level - 1],
                                           params.flow_heads[level - 1], config.attention)
        except ValidationError as err:
            raise ValidationError(f"pyramid level {level}: {err}") from err
        stacks.append(stack)
        prev = upsample_flowstack(stack) if level > 1 else None

    # each scale warps the full-resolution garment with its own stack, then is
    # averaged down to the scale's size; warping an already-downsampled garment
    # aliases the texture and leaves an error no flow can remove
    predictions_warp = []
    for i, stack in enumerate(stacks):
        level = config.scales - i
        full = stack
        for _ in range(level):
            full = upsample_flowstack(full)
        predictions_warp.append(area_downsample(fuse_warps(garment, full), 2 ** (level - 1)))
    warped = predictions_warp[-1]

    finest = stacks[-1]
    f_garment = fuse_warps(src[1], finest)
    f_person = conv2d(ref[1], params.person_proj)
    skip = concat([warped, agnostic], axis=0)
    if config.fusion == "scfa":
        tryon = scfa_fuse_and_decode(f_garment, f_person, params.scfa, skip=skip, combine=config.combine,
                                     residual=config.scfa_residual)
    else:
        tryon = sum_fuse_and_decode(f_garment, f_person, params.scfa, skip=skip)

    predictions = []
    for i, w in enumerate(predictions_warp):
        level = config.scales - i
        predictions.append(ScalePrediction(area_downsample(tryon, 2 ** (level - 1)), w))
    return PipelineOutput(tryon, warped, stacks, predictions)


def scale_targets(sample: PipelineSample, params: PipelineParams, config: PipelineConfig) -> list[ScaleTarget]:
    """Area-downsampled ground truth per scale, with frozen features of the person image."""
    person = _as_tensor(sample.person, config.dtype)
    wgt = _as_tensor(sample.warped_garment, config.dtype)
    targets = []
    for level in range(config.scales, 0, -1):
        factor = 2 ** (level - 1)
        p = area_downsample(person, factor)
        targets.append(ScaleTarget(p, area_downsample(wgt, factor), pyramid_features(p, params.phi)))
    return targets


def compute_loss(output: PipelineOutput, targets: list[ScaleTarget], params: PipelineParams,
                 config: PipelineConfig) -> LossReport:
    report = total_loss(output.predictions, targets, config.loss_weights, params.phi,
                        use_warp_loss=config.warp_loss, scales=config.scales)
    for record in report.records:
        for term in ("l1", "warp", "perceptual", "style"):
            if not np.isfinite(getattr(record, term)):
                raise NonFiniteError("total_loss", f"non-finite {term} loss at scale {record.scale}")
    return report


@dataclass
class Trainer:
    """Owns parameters and optimizer state for one pipeline instance."""

    config: PipelineConfig
    params: PipelineParams
    optimizer: Adam = field(default=None)
    _targets: tuple = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.optimizer is None:
            c = self.config
            self.optimizer = Adam(c.learning_rate, c.beta1, c.beta2, c.eps)

    def targets(self, sample: PipelineSample) -> list[ScaleTarget]:
        if self._targets is None or self._targets[0] is not sample:
            self._targets = (sample, scale_targets(sample, self.params, self.config))
        return self._targets[1]

    def step(self, sample: PipelineSample) -> LossReport:
        self.optimizer.lr = self.config.lr_at(self.optimizer.t)
        report, self.params = train_step(sample, self.params, self.config, self.optimizer, self.targets(sample))
        return report

    def evaluate(self, sample: PipelineSample) -> tuple[PipelineOutput, LossReport]:
        out = forward(sample, self.params, self.config)
        return out, compute_loss(out, self.targets(sample), self.params, self.config)


def train_step(sample: PipelineSample, params: PipelineParams, config: PipelineConfig,
               optimizer: Adam | None = None, targets: list[ScaleTarget] | None = None
               ) -> tuple[LossReport, PipelineParams]:
    """Forward, joint loss, backward and one Adam update; returns the pre-update report."""
    optimizer = optimizer or Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    targets = targets or scale_targets(sample, params, config)
    out = forward(sample, params, config)
    report = compute_loss(out, targets, params, config)
    grads = backward(report.total)
    return report, optimizer.step(params, grads)


def trainable_names(params: PipelineParams, grads: dict[int, Tensor]) -> set[str]:
    return {name for name, t in named_tensors(params) if t.requires_grad and t.node_id in grads}


OVERFIT_LR = 1e-3
OVERFIT_FILTERS = (32, 64, 128, 128, 128)   # half width: one-sample fits do not need the full pyramid


@dataclass
class AblationRecord:
    mode: str
    seed: int
    steps: int
    losses: list[float]          # total before each step, then the final evaluation
    ssim_tryon: float
    psnr_tryon: float
    ssim_warp: float
    sample: PipelineSample = field(repr=False, default=None)
    output: PipelineOutput = field(repr=False, default=None)

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    @property
    def ratio(self) -> float:
        return self.final_loss / self.initial_loss

    def summary(self) -> str:
        return (f"mode={self.mode} seed={self.seed} steps={self.steps} initial={self.initial_loss:.6f} "
                f"final={self.final_loss:.6f} ratio={self.ratio:.4f} ssim={self.ssim_tryon:.4f} "
                f"psnr={self.psnr_tryon:.2f} ssim_warp={self.ssim_warp:.4f}")


def overfit_config(mode: str, seed: int = 42, steps: int = 500, height: int = 64, width: int = 64,
                   **overrides) -> PipelineConfig:
    """Single-sample overfit setting: float32, half-width pyramids, raised learning rate with cosine decay."""
    settings = dict(dtype="f32", filters=OVERFIT_FILTERS, learning_rate=OVERFIT_LR, lr_schedule="cosine",
                    schedule_steps=steps, seed=seed, height=height, width=width)
    settings.update(overrides)
    return PipelineConfig.for_mode(mode, **settings)


def ablation_run(mode: str, steps: int = 500, seed: int = 42, height: int = 64, width: int = 64,
                 on_step=None, **overrides) -> AblationRecord:
    """Overfit one seeded synthetic sample in ``mode`` and report final try-on metrics."""
    from .metrics import psnr, ssim
    from .synth import synth_sample

    if steps < 0:
        raise ValidationError(f"steps must be non-negative, got {steps}")
    config = overfit_config(mode, seed, steps, height, width, **overrides)
    sample = synth_sample(seed, height, width)
    trainer = Trainer(config, init_params(config))
    losses = []
    for i in range(steps):
        report = trainer.step(sample)
        losses.append(report.total_value)
        if on_step is not None:
            on_step(i, report)
    output, report = trainer.evaluate(sample)
    losses.append(report.total_value)
    return AblationRecord(mode, seed, steps, losses,
                          ssim(output.tryon.data, sample.person), psnr(output.tryon.data, sample.person),
                          ssim(output.warped.data, sample.warped_garment), sample, output)


DUMP_IMAGES = ("garment", "person", "warped", "warped_gt", "tryon")


def write_overfit_artifacts(record: AblationRecord, dump_dir) -> list[Path]:
    """Loss-curve TSV plus the five images of the run, all free of timing data."""
    from .imageio import write_ppm

    out = Path(dump_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["step\ttotal"] + [f"{i}\t{v:.9g}" for i, v in enumerate(record.losses)]
    paths = [out / "loss.tsv"]
    paths[0].write_text("\n".join(rows) + "\n")
    images = (record.sample.garment, record.sample.person, record.output.warped.data,
              record.sample.warped_garment, record.output.tryon.data)
    for name, image in zip(DUMP_IMAGES, images):
        path = out / f"{name}.ppm"
        write_ppm(path, image)
        paths.append(path)
    return paths
