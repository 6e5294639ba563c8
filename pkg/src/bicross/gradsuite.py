"""Seeded finite-difference verification of every training objective.

Each entry builds a small random instance of one loss, with inputs kept away
from the (measure-zero) kinks of abs/clip/branch selections, and compares
analytic gradients against central differences.  The adversarial objective
is split in two: discriminator parameters must match finite differences
directly, while the token inputs must match minus-mu times the unreversed
finite-difference gradient (the reversal contract).
"""

from __future__ import annotations

import numpy as np

from . import losses as L
from .autodiff import Tensor, sqrt, sum_
from .evalkit import gradcheck
from .network import Discriminator

GRAD_TOL = 1e-4


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _unit_rows(t: Tensor) -> Tensor:
    return t / sqrt(sum_(t * t, axis=1, keepdims=True))


def check_sig_loss(seed: int = 0) -> float:
    rng = _rng(seed)
    pred = Tensor(rng.uniform(0.5, 3.0, size=(6, 6)), requires_grad=True)
    gt = rng.uniform(0.5, 3.0, size=(6, 6))
    mask = rng.random((6, 6)) < 0.8
    mask[0, 0] = True
    return gradcheck(lambda: L.sig_loss(pred, gt, mask, lam=0.5), {"pred": pred}, seed=seed)


def check_ckd_loss(seed: int = 0) -> float:
    rng = _rng(seed)
    raw_rgb = Tensor(rng.normal(size=(5, 8)), requires_grad=True)
    raw_spk = Tensor(rng.normal(size=(5, 8)), requires_grad=True)

    def probe():
        h = L.ckd_pair_prob(_unit_rows(raw_rgb), _unit_rows(raw_spk), tau=0.5)
        return L.ckd_loss(h)

    return gradcheck(probe, {"f_rgb": raw_rgb, "f_spike": raw_spk}, seed=seed)


def check_fkd_loss(seed: int = 0) -> float:
    rng = _rng(seed)
    student = [
        Tensor(rng.normal(size=(3, 4, 4)), requires_grad=True),
        Tensor(rng.normal(size=(6, 2, 2)), requires_grad=True),
    ]
    teacher = [rng.normal(size=(3, 4, 4)), rng.normal(size=(6, 2, 2))]
    return gradcheck(
        lambda: L.fkd_loss(teacher, student),
        {"level0": student[0], "level1": student[1]},
        seed=seed,
    )


def check_uncertainty_target(seed: int = 0) -> float:
    rng = _rng(seed)
    ref = rng.uniform(1.0, 3.0, size=(5, 5))
    # keep |pred - ref| well away from the abs kink
    offset = rng.choice([-1.0, 1.0], size=(5, 5)) * rng.uniform(0.3, 0.8, size=(5, 5))
    pred = Tensor(ref + offset, requires_grad=True)
    weight = rng.normal(size=(5, 5))
    return gradcheck(
        lambda: sum_(L.uncertainty_target(pred, ref) * weight), {"pred": pred}, seed=seed
    )


def check_uncertainty_loss(seed: int = 0) -> float:
    rng = _rng(seed)
    e_soft = rng.uniform(0.0, 2.0, size=(6, 6))
    # residuals placed on both smooth-l1 branches, away from |r| = beta
    residual = rng.choice([-1.0, 1.0], size=(6, 6)) * np.where(
        rng.random((6, 6)) < 0.5,
        rng.uniform(0.1, 0.8, size=(6, 6)),
        rng.uniform(1.2, 2.0, size=(6, 6)),
    )
    unc = Tensor(e_soft + residual, requires_grad=True)
    return gradcheck(
        lambda: L.uncertainty_loss(unc, e_soft, beta=1.0), {"unc_pred": unc}, seed=seed
    )


def check_ugts_loss(seed: int = 0) -> float:
    rng = _rng(seed)
    d_soft = rng.uniform(2.0, 8.0, size=(8, 8))
    e_soft = rng.uniform(0.0, 1.0, size=(8, 8))
    mask = L.build_mask(e_soft)
    assert mask.n_selected >= 2, "instance must select pixels"
    residual = rng.choice([-1.0, 1.0], size=(8, 8)) * np.where(
        rng.random((8, 8)) < 0.5,
        rng.uniform(0.1, 0.8, size=(8, 8)),
        rng.uniform(1.2, 2.0, size=(8, 8)),
    )
    depth = Tensor(d_soft + residual, requires_grad=True)
    return gradcheck(
        lambda: L.ugts_loss(depth, d_soft, mask, beta=1.0), {"student_depth": depth}, seed=seed
    )


def check_glfa_discriminator(seed: int = 0) -> float:
    rng = _rng(seed)
    disc = Discriminator(in_width=8, hidden=6, seed=seed)
    src = Tensor(rng.normal(size=(4, 8)))
    tgt = Tensor(rng.normal(size=(4, 8)))
    return gradcheck(
        lambda: L.glfa_loss(disc, src, tgt, mu=1.0), dict(disc.params), seed=seed
    )


def check_glfa_reversal(seed: int = 0, mu: float = 1.7, epsilon: float = 1e-6) -> float:
    """Token gradients must equal -mu times the unreversed finite-difference
    gradient; returns the max relative mismatch."""
    rng = _rng(seed)
    disc = Discriminator(in_width=8, hidden=6, seed=seed)
    for p in disc.params.values():
        p.requires_grad = False
    src = Tensor(rng.normal(size=(3, 8)), requires_grad=True)
    tgt = Tensor(rng.normal(size=(3, 8)), requires_grad=True)

    def value() -> float:
        return L.glfa_loss(disc, src, tgt, mu=mu).item()

    loss = L.glfa_loss(disc, src, tgt, mu=mu)
    loss.backward()
    max_rel = 0.0
    for tok in (src, tgt):
        flat = tok.data.reshape(-1)
        analytic = tok.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = value()
            flat[i] = orig - epsilon
            f_minus = value()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * epsilon)  # true (unreversed) derivative
            expected = -mu * fd
            denom = max(abs(expected), abs(analytic[i]))
            err = abs(expected - analytic[i]) if denom < 1e-10 else abs(expected - analytic[i]) / denom
            max_rel = max(max_rel, err)
    return max_rel


SUITE = {
    "sig_loss": check_sig_loss,
    "ckd_loss": check_ckd_loss,
    "fkd_loss": check_fkd_loss,
    "uncertainty_target": check_uncertainty_target,
    "uncertainty_loss": check_uncertainty_loss,
    "ugts_loss": check_ugts_loss,
    "glfa_discriminator": check_glfa_discriminator,
    "glfa_reversal": check_glfa_reversal,
}


def run_gradient_suite(seed: int = 0) -> dict[str, float]:
    """Max relative finite-difference error for every objective."""
    return {name: fn(seed) for name, fn in SUITE.items()}
