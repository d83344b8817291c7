"""Overfit the full try-on pipeline to one synthetic sample and dump the results.

The acceptance run uses 500 steps in about two minutes; pass a smaller count
for a quicker look.

Run: python demos/06_overfit_tryon.py [steps] [mode] [out_dir]
"""

import sys

from warpattn.pipeline import ablation_run, write_overfit_artifacts

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 60
mode = sys.argv[2] if len(sys.argv) > 2 else "+warp_loss"
out = sys.argv[3] if len(sys.argv) > 3 else "demo_out/overfit"


def progress(i, report):
    if i % 20 == 0:
        print(f"step {i:4d}  total loss {report.total_value:.4f}")


record = ablation_run(mode, steps=steps, seed=42, on_step=progress)
print(record.summary())
paths = write_overfit_artifacts(record, out)
print("wrote", ", ".join(p.name for p in paths), "to", out)
