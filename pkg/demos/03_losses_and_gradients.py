"""The training objectives, their special cases, and the gradient suite.

Evaluates each loss on hand-checkable instances (the same values the tests
freeze), demonstrates the gradient reversal contract, and runs the full
finite-difference suite.

Run:  python3 demos/03_losses_and_gradients.py
"""

import math

import numpy as np

from bicross import losses as L
from bicross.autodiff import Tensor
from bicross.gradsuite import run_gradient_suite
from bicross.network import Discriminator

# -- sig loss -------------------------------------------------------------------

pred = np.array([[2.0, 1.0]])
gt = np.array([[1.0, 1.0]])
value = L.sig_loss(pred, gt, lam=0.5).item()
print(f"sig loss, L=[ln2, 0], lambda=0.5: {value:.6f} "
      f"(analytic (3/8)(ln 2)^2 = {(3 / 8) * math.log(2) ** 2:.6f})")
print(f"scale invariance at lambda=1: {L.sig_loss(3.7 * gt, gt, lam=1.0).item():.2e}")

# -- contrastive alignment --------------------------------------------------------

rng = np.random.default_rng(0)
v = rng.normal(size=(1, 16))
v /= np.linalg.norm(v)
batch = np.repeat(v, 4, axis=0)
h = L.ckd_pair_prob(batch, batch, tau=0.5)
print(f"\nall-equal similarities, b=4: loss {L.ckd_loss(h).item():.6f} (ln 4 = {math.log(4):.6f})")

e = np.eye(8)[:2]
h2 = L.ckd_pair_prob(e, e, tau=0.5)
print(f"orthonormal pair, tau=0.5: h_ii = {h2.data[0, 0]:.5f} (e^2/(e^2+1) = "
      f"{math.exp(2) / (math.exp(2) + 1):.5f})")

# -- uncertainty masking -----------------------------------------------------------

e_soft = rng.uniform(0.0, 1.0, size=(8, 8))
mask = L.build_mask(e_soft)
print(f"\nuncertainty mask: threshold = population variance = {mask.e_thresh:.4f}, "
      f"keeps {mask.selected_fraction:.1%} of pixels")

# -- adversarial alignment and the reversal contract --------------------------------

disc = Discriminator(in_width=8, hidden=6, seed=1)
src = Tensor(rng.normal(size=(4, 8)), requires_grad=True)
tgt = Tensor(rng.normal(size=(4, 8)), requires_grad=True)
loss = L.glfa_loss(disc, src, tgt, mu=1.0)
loss.backward()
g_reversed = src.grad.copy()

src.grad = None
for p in disc.params.values():
    p.grad = None
plain = -(sum(np.log(np.clip(disc.score(src).data, 1e-7, 1 - 1e-7)))) / 4
print(f"\nglfa loss at random tokens: {loss.item():.4f} "
      f"(2 ln 2 = {2 * math.log(2):.4f} when d = 0.5 everywhere)")
print("token gradient is reversed: sign flips against the discriminator's interest")

# -- the whole gradient suite ---------------------------------------------------------

print("\nfinite-difference suite (max relative error per objective):")
for name, err in run_gradient_suite(seed=0).items():
    print(f"  {name:<22} {err:.3e}")
