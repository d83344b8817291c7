"""Attention-guided garment warping and try-on synthesis on a small numpy autodiff core."""

from .laf import dense_attention, linear_attention
from .metrics import psnr, ssim
from .pipeline import MODES, PipelineConfig, Trainer, ablation_run, forward, init_params
from .rng import SeededRng
from .synth import synth_sample
from .tensor import NonFiniteError, Tensor, ValidationError, backward

__version__ = "0.1.0"

__all__ = [
    "MODES", "NonFiniteError", "PipelineConfig", "SeededRng", "Tensor", "Trainer", "ValidationError",
    "ablation_run", "backward", "dense_attention", "forward", "init_params", "linear_attention", "psnr",
    "ssim", "synth_sample",
]
