"""Full-reference image quality: SSIM and PSNR on C x H x W images in [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, ValidationError

PSNR_CAP = 99.0


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self) -> None:
        if self.window % 2 == 0 or self.window < 1:
            raise ValidationError(f"SSIM window must be odd and positive, got {self.window}")
        if min(self.sigma, self.k1, self.k2, self.data_range) <= 0:
            raise ValidationError("SSIM constants must be positive")


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x * x / (2 * sigma * sigma))
    return g / g.sum()


def _as_array(x) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    arr = arr.astype(np.float64)
    return arr[None] if arr.ndim == 2 else arr


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' filtering of every channel."""
    k = g.size
    h, w = img.shape[-2:]
    rows = sum(g[i] * img[..., i:h - k + 1 + i, :] for i in range(k))
    return sum(g[j] * rows[..., :, j:w - k + 1 + j] for j in range(k))


def ssim_map(a, b, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ValidationError(f"ssim: shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape[-2:]) < cfg.window:
        raise ValidationError(f"ssim: image {x.shape[-2:]} is smaller than the {cfg.window}px window")
    g = gaussian_window(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(a, b, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean structural similarity over channels and window positions."""
    return float(ssim_map(a, b, cfg).mean())


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range, capped at 99 dB."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ValidationError(f"psnr: shape mismatch {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, float(10.0 * np.log10(1.0 / mse)))
