"""Reverse-mode gradients on a tiny graph, then the finite-difference audit that guards every op.

Run: python demos/01_autodiff_and_gradcheck.py
"""

import numpy as np

import warpattn.tensor as T
from warpattn.audits import run_audits
from warpattn.gradcheck import gradcheck_report
from warpattn.rng import SeededRng

rng = SeededRng(0)

# y = sum(tanh(x @ w)); the analytic gradient w.r.t. w is x^T (1 - tanh^2)
x = T.Tensor(rng.uniform((4, 3), -1, 1))
w = T.Tensor(rng.uniform((3, 2), -1, 1), requires_grad=True)
y = T.sum(T.tanh(T.matmul(x, w)))
grads = T.backward(y)
by_hand = x.data.T @ (1 - np.tanh(x.data @ w.data) ** 2)
print("autodiff vs closed form, max diff:", np.abs(grads[w.node_id].data - by_hand).max())

# The same function audited against central differences.
rep = gradcheck_report(lambda a: T.sum(T.tanh(T.matmul(x, a))), w)
print(f"gradcheck worst relative error {rep.max_rel_error:.2e} at input {rep.input_index}, "
      f"coordinate {rep.coordinate}")

# Every registered audit for the attention-flow module.
for audit, report in run_audits("laf"):
    print(f"  {audit.module}.{audit.name:<20} {report.max_rel_error:.2e}")

# A deliberately broken backward rule is caught immediately.
good = T.BACKWARD_RULES["tanh"]
T.BACKWARD_RULES["tanh"] = lambda node, g: [2 * d for d in good(node, g)]
try:
    bad = gradcheck_report(lambda a: T.sum(T.tanh(T.matmul(x, a))), w)
    print(f"with a doubled tanh gradient the audit reports {bad.max_rel_error:.2f}")
finally:
    T.BACKWARD_RULES["tanh"] = good
