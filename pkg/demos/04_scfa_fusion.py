"""Cross attention between garment and person features, followed by the shallow decoder.

Run: python demos/04_scfa_fusion.py
"""

import numpy as np

from warpattn.rng import SeededRng
from warpattn.scfa import init_scfa, scfa_attend, scfa_attention_weights, scfa_fuse, scfa_fuse_and_decode
from warpattn.tensor import Tensor

rng = SeededRng(11)
c, h, w = 8, 4, 4
f_garment = Tensor(rng.uniform((c, h, w), -1, 1))
f_person = Tensor(rng.uniform((c, h, w), -1, 1))
params = init_scfa(rng, c, embed=4, hidden=16)

weights = scfa_attention_weights(f_garment, f_person)
print("weight matrix", weights.shape, "row sums in", weights.data.sum(axis=1).min(), weights.data.sum(axis=1).max())

# Attended features are convex combinations of positions, so every channel
# stays inside its input range.
attended = scfa_attend(weights, f_person).data
lo, hi = f_person.data.min(axis=(1, 2)), f_person.data.max(axis=(1, 2))
print("attended features inside the per-channel hull:",
      bool(np.all((attended >= lo[:, None, None]) & (attended <= hi[:, None, None]))))

fused, a_g, a_p = scfa_fuse(f_garment, f_person, params)
print("fused features", fused.shape, "(garment read-out, person read-out)")
image = scfa_fuse_and_decode(f_garment, f_person, params)
print("decoded image", image.shape, "range", float(image.data.min()), float(image.data.max()))
