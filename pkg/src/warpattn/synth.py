"""Procedural try-on samples with a known garment warp.

A sample is a gray backdrop with a capsule-shaped body, a textured garment
rectangle (checkerboard times a colour gradient) on a black in-shop canvas,
and a smooth displacement field ``D`` (affine plus one sinusoid, at most
H/8 pixels). The ground-truth warped garment is the garment canvas sampled at
``p + D(p)`` and cut to the warped rectangle's support, which also serves as
the garment segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SeededRng
from .tensor import Tensor, ValidationError
from .warp import bilinear_sample

JOINTS = 18
POSE_SIGMA = 2.0
BACKGROUND = 0.5
SKIN = (0.80, 0.64, 0.52)

# (x, y) as fractions of width/height, OpenPose-18 order
_JOINT_LAYOUT = [
    (0.50, 0.14), (0.50, 0.27), (0.34, 0.31), (0.24, 0.48), (0.20, 0.64),
    (0.66, 0.31), (0.76, 0.48), (0.80, 0.64), (0.42, 0.72), (0.42, 0.90),
    (0.42, 1.05), (0.58, 0.72), (0.58, 0.90), (0.58, 1.05), (0.47, 0.11),
    (0.53, 0.11), (0.44, 0.13), (0.56, 0.13),
]


@dataclass
class PipelineSample:
    garment: np.ndarray        # I_g, 3 x H x W
    agnostic: np.ndarray       # 3 x H x W
    pose: np.ndarray           # J x H x W
    person: np.ndarray         # I_p, 3 x H x W
    warped_garment: np.ndarray  # I_wgt, 3 x H x W
    garment_mask: np.ndarray   # 1 x H x W, {0, 1}
    displacement: np.ndarray   # D, 2 x H x W

    @property
    def size(self) -> tuple[int, int]:
        return self.person.shape[1:]

    def mask_coverage(self) -> float:
        return float(self.garment_mask.mean())


def _capsule(h: int, w: int, p0, p1, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    (x0, y0), (x1, y1) = p0, p1
    dx, dy = x1 - x0, y1 - y0
    t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / max(dx * dx + dy * dy, 1e-12), 0.0, 1.0)
    dist = np.hypot(xx - (x0 + t * dx), yy - (y0 + t * dy))
    return dist <= radius


def render_pose(h: int, w: int, sigma: float = POSE_SIGMA) -> np.ndarray:
    """One Gaussian heatmap per joint (peak 1.0); joints off-canvas still leave their tails."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    maps = np.empty((JOINTS, h, w))
    for j, (fx, fy) in enumerate(_JOINT_LAYOUT):
        cx, cy = fx * (w - 1), fy * (h - 1)
        maps[j] = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma * sigma))
    return maps


def _body_mask(h: int, w: int) -> np.ndarray:
    torso = _capsule(h, w, (0.5 * w, 0.34 * h), (0.5 * w, 0.95 * h), 0.21 * w)
    arms = _capsule(h, w, (0.22 * w, 0.33 * h), (0.78 * w, 0.33 * h), 0.07 * h)
    head = _capsule(h, w, (0.5 * w, 0.15 * h), (0.5 * w, 0.15 * h), 0.10 * h)
    return torso | arms | head


def _displacement(rng: SeededRng, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    u = (xx - w / 2) / w
    v = (yy - h / 2) / h
    a = rng.uniform((2, 2), -0.5, 0.5)
    t = rng.uniform((2,), -0.5, 0.5)
    freq = rng.uniform((2,), 0.5, 1.5)
    phase = rng.uniform((2,), 0.0, 2 * np.pi)
    amp = rng.uniform((2,), -0.4, 0.4)
    d = np.stack([
        a[0, 0] * u + a[0, 1] * v + t[0] + amp[0] * np.sin(2 * np.pi * freq[0] * v + phase[0]),
        a[1, 0] * u + a[1, 1] * v + t[1] + amp[1] * np.sin(2 * np.pi * freq[1] * u + phase[1]),
    ])
    limit = h / 8.0
    peak = np.abs(d).max()
    return d * (rng.uniform((1,), 0.5, 1.0)[0] * limit / peak)


def _garment_canvas(rng: SeededRng, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    rect = (yy >= 0.32 * h) & (yy < 0.78 * h) & (xx >= 0.30 * w) & (xx < 0.70 * w)
    cell = int(rng.uniform((1,), 6, 10)[0])
    checker = ((np.floor(xx / cell) + np.floor(yy / cell)) % 2).astype(np.float64)
    base = rng.uniform((3,), 0.25, 0.75)
    contrast = rng.uniform((3,), 0.10, 0.18)
    angle = rng.uniform((1,), 0, 2 * np.pi)[0]
    ramp = (np.cos(angle) * (xx / w - 0.5) + np.sin(angle) * (yy / h - 0.5))
    colour = base[:, None, None] + contrast[:, None, None] * (2 * checker - 1) + 0.12 * ramp
    colour = np.clip(colour, 0.1, 0.9)
    return colour * rect, rect.astype(np.float64)


def synth_sample(seed: int, h: int = 64, w: int = 64, zero_warp: bool = False) -> PipelineSample:
    if h % 32 or w % 32:
        raise ValidationError(f"sample size must be a multiple of 32, got {h}x{w}")
    rng = SeededRng(seed)
    garment, rect = _garment_canvas(rng, h, w)
    disp = np.zeros((2, h, w)) if zero_warp else _displacement(rng, h, w)
    flow = Tensor(disp)
    warped = bilinear_sample(Tensor(garment), flow).data
    mask = (bilinear_sample(Tensor(rect[None]), flow).data > 0.5).astype(np.float64)
    wgt = warped * mask

    body = _body_mask(h, w)
    person = np.full((3, h, w), BACKGROUND)
    person[:, body] = np.asarray(SKIN)[:, None]
    person = person * (1 - mask) + wgt
    agnostic = person * (1 - mask) + BACKGROUND * mask
    return PipelineSample(garment=garment, agnostic=agnostic, pose=render_pose(h, w), person=person,
                          warped_garment=wgt, garment_mask=mask, displacement=disp)
