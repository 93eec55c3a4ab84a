"""The reverse-mode engine under the model, and how it is verified.

Builds a few graphs by hand, then runs the finite-difference check on the
full two-layer encoder in float64: every sampled analytic derivative must
match (f(t+e) - f(t-e)) / 2e.
"""

import numpy as np

from hapticauth import ModelConfig, build_model, cross_entropy, forward
from hapticauth import autodiff as ad
from hapticauth.autodiff import Tensor, backward, grad_check
from hapticauth.model import draw_kink_free_batch

# --- a tiny graph by hand ---------------------------------------------------
x = Tensor(np.array([1.0, -2.0, 3.0], dtype=np.float32), requires_grad=True)
y = ad.tsum(ad.mul(x, x))          # sum of squares
backward(y)
print(f"d(sum x^2)/dx = {x.grad}   (expected 2x = {2 * x.data})")

x.zero_grad()
z = ad.add(x, x)                   # fan-out: gradient accumulates
backward(ad.tsum(z))
print(f"d(sum(x+x))/dx = {x.grad}   (expected 2 everywhere)")

probs = ad.softmax(Tensor(np.array([[0.0, np.log(2.0)]], dtype=np.float64), dtype=np.float64))
print(f"softmax([0, ln 2]) = {probs.data.round(4)}   (expected [1/3, 2/3])")

# --- the model is one big graph ----------------------------------------------
cfg = ModelConfig(d_model=64, num_heads=8, ffn_dim=64, num_layers=2,
                  num_classes=5, seq_len=16)
params = build_model(cfg, seed=3)
batch = np.random.default_rng(0).standard_normal((4, 16, 13)).astype(np.float32)
logits = forward(params, batch)
loss = cross_entropy(logits, np.array([0, 1, 2, 3]))
backward(loss)
grads = {k: t.grad for k, t in params.trainable().items()}
print(f"\nforward+backward: loss {float(loss.data):.4f}, "
      f"{sum(g.size for g in grads.values())} gradient entries populated")

# --- finite-difference verification in float64 -------------------------------
params64 = build_model(cfg, seed=3).astype(np.float64)
check_batch, check_labels = draw_kink_free_batch(params64, 2, seed=1)
err = grad_check(lambda: cross_entropy(forward(params64, check_batch), check_labels),
                 params64.trainable(), eps=1e-5, num_samples=200, seed=1,
                 min_magnitude=1e-6)
print(f"gradcheck on the 2-layer encoder: max relative error {err:.2e} "
      f"({'OK' if err < 1e-4 else 'BROKEN'})")
