"""The multi-scale training objective and the image-quality metrics.

Run: python demos/05_losses_and_metrics.py
"""

import numpy as np

from warpattn.losses import LossWeights, ScalePrediction, ScaleTarget, total_loss
from warpattn.metrics import psnr, ssim
from warpattn.pyramid import init_pyramid
from warpattn.rng import SeededRng
from warpattn.synth import synth_sample
from warpattn.tensor import Tensor
from warpattn.warp import area_downsample

rng = SeededRng(5)
sample = synth_sample(5)
phi = init_pyramid(3, SeededRng(99), channels=(8, 8, 8), frozen=True)

noisy = np.clip(sample.person + rng.uniform(sample.person.shape, -0.15, 0.15), 0, 1)
preds, targets = [], []
for factor in (4, 2, 1):
    down = lambda a: area_downsample(Tensor(a), factor)
    preds.append(ScalePrediction(down(noisy), down(sample.warped_garment)))
    targets.append(ScaleTarget(down(sample.person), down(sample.warped_garment)))

report = total_loss(preds, targets, LossWeights(1.0, 1.0, 100.0), phi)
print("per-scale loss terms (scale, term, value):")
for line in report.lines():
    print("  " + line)

print(f"\nSSIM noisy vs clean  {ssim(noisy, sample.person):.4f}")
print(f"PSNR noisy vs clean  {psnr(noisy, sample.person):.2f} dB")
print(f"PSNR of identical images is capped at {psnr(noisy, noisy)}")
