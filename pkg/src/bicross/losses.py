"""Training objectives: scale-sensitive log-depth loss, contrastive global
alignment, feature mimicry, uncertainty regression and masking, masked
pseudo-label supervision, and adversarial global alignment with gradient
reversal.

Every function returns an autodiff scalar; targets (ground truth, soft
labels, pseudo labels) are always treated as constants.  Sign conventions:
the contrastive and adversarial objectives are implemented as minimized
negative log-likelihoods, so "smaller is better" holds for every loss here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    DegenerateInputError,
    InvalidInputError,
    NonFiniteLoss,
    SkipSample,
)
from .network import Discriminator

_LOG_FLOOR = 1e-12
_SIGMOID_CLAMP = 1e-7
_REF_CLAMP = 1e-3


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.5  # contrastive temperature
    lambda_sig: float = 0.5  # variance-of-log weight in the sig loss
    w_distill: float = 0.1  # weight on CKD + FKD in the modality objective
    w_glfa: float = 0.1  # weight on adversarial alignment in the domain objective
    smooth_l1_beta: float = 1.0
    grl_scale: float = 1.0  # mu of the gradient reversal
    unc_in_domain: bool = True  # keep the uncertainty loss in the domain objective

    def __post_init__(self):
        if self.tau <= 0:
            raise InvalidInputError(f"tau must be positive, got {self.tau}")
        if not (0.0 <= self.lambda_sig <= 1.0):
            raise InvalidInputError(f"lambda_sig must be in [0, 1], got {self.lambda_sig}")
        if min(self.w_distill, self.w_glfa) < 0:
            raise InvalidInputError("loss weights must be nonnegative")


@dataclass(frozen=True)
class UncertaintyMask:
    mask: np.ndarray  # binary, same shape as the uncertainty map
    e_thresh: float
    selected_fraction: float

    @property
    def n_selected(self) -> int:
        return int(self.mask.sum())


def _as_constant(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _full_mask(shape) -> np.ndarray:
    return np.ones(shape, dtype=bool)


def sig_loss(pred, gt, valid_mask=None, lam: float = 0.5) -> Tensor:
    """(1/n) sum L_i^2 - (lam/n^2) (sum L_i)^2 with L_i = log pred_i - log gt_i.

    Averages run over valid pixels only; ``gt`` is a constant.
    """
    pred = ad.as_tensor(pred)
    gt = _as_constant(gt)
    mask = _full_mask(gt.shape) if valid_mask is None else np.asarray(valid_mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise DegenerateInputError("sig_loss: empty valid mask")
    if np.any(pred.data[mask] <= 0) or np.any(gt[mask] <= 0):
        raise InvalidInputError("sig_loss: nonpositive depth on a valid pixel")
    diff = ad.log(pred[mask]) - np.log(gt[mask])
    sq_term = ad.sum_(diff * diff) * (1.0 / n)
    lin = ad.sum_(diff)
    return sq_term - (lin * lin) * (lam / (n * n))


def ckd_pair_prob(f_g_rgb, f_g_spike, tau: float = 0.5) -> Tensor:
    """Row-stochastic pairing probabilities: softmax over similarities / tau.

    Entry (i, j) is the probability that RGB global vector i pairs with spike
    global vector j among the batch; rows sum to one.
    """
    f_g_rgb = ad.as_tensor(f_g_rgb)
    f_g_spike = ad.as_tensor(f_g_spike)
    if f_g_rgb.ndim != 2 or f_g_spike.ndim != 2 or f_g_rgb.shape != f_g_spike.shape:
        raise InvalidInputError(
            f"expected matching (b, G) batches, got {f_g_rgb.shape} and {f_g_spike.shape}"
        )
    b = f_g_rgb.shape[0]
    if b == 0:
        raise DegenerateInputError("ckd_pair_prob: empty batch")
    for batch in (f_g_rgb, f_g_spike):
        norms = np.linalg.norm(batch.data, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidInputError("ckd_pair_prob: global vectors must be unit-norm")
    sims = ad.matmul(f_g_rgb, ad.transpose(f_g_spike, (1, 0)))
    return ad.softmax(sims * (1.0 / tau), axis=1)


def ckd_loss(h) -> Tensor:
    """Negative log-likelihood of the matched (diagonal) pairs of ``h``."""
    h = ad.as_tensor(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidInputError(f"h must be square, got {h.shape}")
    b = h.shape[0]
    idx = np.arange(b)
    diag = ad.clip(h[idx, idx], _LOG_FLOOR, np.inf)
    return -ad.mean(ad.log(diag))


def fkd_loss(teacher_feats, student_feats) -> Tensor:
    """Per level: spatial mean of squared channel distances; summed over levels.

    Teacher features are constants (no gradient reaches the teacher).
    """
    if len(teacher_feats) != len(student_feats):
        raise InvalidInputError("fkd_loss: level count mismatch")
    total = None
    for t_f, s_f in zip(teacher_feats, student_feats):
        t_arr = _as_constant(t_f)
        s_t = ad.as_tensor(s_f)
        if t_arr.shape != s_t.shape:
            raise InvalidInputError(f"fkd_loss: shape mismatch {t_arr.shape} vs {s_t.shape}")
        if s_t.ndim == 3:  # (C, H', W') -> batch of one
            s_t = ad.reshape(s_t, (1,) + s_t.shape)
            t_arr = t_arr[None]
        n, _, h, w = s_t.shape
        diff = s_t - t_arr
        level = ad.sum_(diff * diff) * (1.0 / (n * h * w))
        total = level if total is None else total + level
    if total is None:
        raise DegenerateInputError("fkd_loss: no levels")
    return total


def uncertainty_target(pred, ref) -> Tensor:
    """Relative-error soft label |pred - ref| / ref, with ref clamped at 1e-3."""
    pred = ad.as_tensor(pred)
    ref = np.maximum(_as_constant(ref), _REF_CLAMP)
    return ad.abs_(pred - ref) / ref


def smooth_l1(residual: Tensor, beta: float = 1.0) -> Tensor:
    """0.5 x^2 / beta inside |x| < beta, |x| - 0.5 beta outside."""
    absr = ad.abs_(residual)
    quad = (residual * residual) * (0.5 / beta)
    lin = absr - 0.5 * beta
    return ad.where(absr.data < beta, quad, lin)


def uncertainty_loss(unc_pred, e_soft, valid_mask=None, beta: float = 1.0) -> Tensor:
    """Smooth-L1 between the uncertainty head and its soft label, over valid pixels."""
    unc_pred = ad.as_tensor(unc_pred)
    e_soft = _as_constant(e_soft)
    if unc_pred.shape != e_soft.shape:
        raise InvalidInputError(f"shape mismatch {unc_pred.shape} vs {e_soft.shape}")
    mask = _full_mask(e_soft.shape) if valid_mask is None else np.asarray(valid_mask, dtype=bool)
    if not mask.any():
        raise DegenerateInputError("uncertainty_loss: empty valid mask")
    return ad.mean(smooth_l1(unc_pred[mask] - e_soft[mask], beta))


def build_mask(e_soft) -> UncertaintyMask:
    """Select pixels whose uncertainty sits at or below the population variance."""
    e = _as_constant(e_soft)
    if not np.all(np.isfinite(e)):
        raise InvalidInputError("build_mask: non-finite uncertainty values")
    e_thresh = float(np.mean((e - e.mean()) ** 2))
    mask = e <= e_thresh
    return UncertaintyMask(
        mask=mask, e_thresh=e_thresh, selected_fraction=float(mask.mean())
    )


def ugts_loss(student_depth, d_soft, mask: UncertaintyMask, beta: float = 1.0) -> Tensor:
    """Smooth-L1 to the pseudo label, averaged over mask-selected pixels only."""
    student_depth = ad.as_tensor(student_depth)
    d_soft = _as_constant(d_soft)
    if mask.n_selected == 0:
        raise SkipSample("ugts_loss: uncertainty mask selected no pixels")
    sel = mask.mask.astype(bool)
    return ad.mean(smooth_l1(student_depth[sel] - d_soft[sel], beta))


def glfa_loss(disc: Discriminator, f_src_token, f_tgt_token, mu: float = 1.0) -> Tensor:
    """Adversarial global alignment with a gradient reversal of scale ``mu``.

    Minimized form: -[log d(f_src) + log(1 - d(f_tgt))], batch-averaged per
    domain.  The discriminator receives the true gradient; whatever produced
    the tokens receives it multiplied by -mu.
    """
    src = ad.grad_reverse(ad.as_tensor(f_src_token), mu)
    tgt = ad.grad_reverse(ad.as_tensor(f_tgt_token), mu)
    d_src = ad.clip(disc.score(src), _SIGMOID_CLAMP, 1.0 - _SIGMOID_CLAMP)
    d_tgt = ad.clip(disc.score(tgt), _SIGMOID_CLAMP, 1.0 - _SIGMOID_CLAMP)
    return -(ad.mean(ad.log(d_src)) + ad.mean(ad.log(1.0 - d_tgt)))


def _check_finite(name: str, value) -> Tensor:
    t = ad.as_tensor(value)
    if not np.all(np.isfinite(t.data)):
        raise NonFiniteLoss(f"loss component {name!r} is non-finite")
    return t


def mod_loss(ls_rgb, ls_spike, l_unc, l_ckd, l_fkd, w_distill: float = 0.1) -> Tensor:
    """Cross-modality objective: Ls_rgb + Ls_spike + L_unc + w * (L_CKD + L_FKD)."""
    parts = {
        "ls_rgb": ls_rgb,
        "ls_spike": ls_spike,
        "l_unc": l_unc,
        "l_ckd": l_ckd,
        "l_fkd": l_fkd,
    }
    t = {name: _check_finite(name, v) for name, v in parts.items()}
    return t["ls_rgb"] + t["ls_spike"] + t["l_unc"] + (t["l_ckd"] + t["l_fkd"]) * w_distill


def dom_loss(l_ugts, l_glfa, l_unc=0.0, w_glfa: float = 0.1) -> Tensor:
    """Cross-domain objective: L_UGTS + w * L_GLFA, plus L_unc when enabled."""
    t_ugts = _check_finite("l_ugts", l_ugts)
    t_glfa = _check_finite("l_glfa", l_glfa)
    t_unc = _check_finite("l_unc", l_unc)
    return t_ugts + t_glfa * w_glfa + t_unc
