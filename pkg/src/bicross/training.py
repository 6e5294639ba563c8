"""Three-stage training orchestration.

Stage 1 pretrains the RGB branch on labeled source RGB.  Stage 2 distills
cross-modality knowledge into the spike student while both models keep their
supervised losses.  Stage 3 adapts to the unlabeled target domain with an
EMA teacher producing uncertainty-masked pseudo labels (UGDS epochs) and an
adversarial global-token alignment (GLFA epochs), alternating one epoch of
each.  A source-only spike baseline (the no-transfer reference) reuses the
supervised loop.

Everything is seeded and single-threaded: two runs with one config produce
bit-identical checkpoints, and resuming from a per-epoch state checkpoint
reproduces the uninterrupted run exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .autodiff import Tensor
from .checkpoint import load_archive, save_archive
from .errors import CheckpointError, InvalidParameterError, NonFiniteLoss, SkipSample
from .evalkit import Metrics, compute_metrics, mean_metrics, report
from .fileio import read_depth, read_ppm
from .losses import LossConfig
from .network import (
    DepthNet,
    Discriminator,
    NetworkConfig,
    ParameterSnapshot,
    ema_update,
    parameter_group,
)
from .optim import Adam
from .scenes import load_manifest
from .spike import bin_stream, read_spk

RUNSTATE_VERSION = 1

_STAGE_RNG_OFFSET = {
    "pretrain": 11,
    "baseline": 23,
    "modality": 37,
    "warmup": 41,
    "domain": 53,
}


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    batch_size: int = 8
    lr_backbone: float = 1e-5
    lr_decoder: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epochs_pretrain: int = 30
    epochs_modality: int = 10
    epochs_glfa: int = 10
    epochs_ugds: int = 10
    alpha_ema: float = 0.999
    warmup_steps: int = 100
    modality_lr_scale: float = 1.0  # lr multiplier for the distillation stage
    glfa_student_lr_scale: float = 1.0  # student lr multiplier in adversarial epochs
    domain_lr_scale: float = 1.0  # student lr multiplier in the whole domain stage
    heldback_fraction: float = 0.1
    combined_domain_steps: bool = False  # per-step GLFA+UGDS mixing; unstable, off by default
    eval_d_min: float = 1e-3
    eval_d_max: float = 20.0
    t_model: int = 32
    base_channels: int = 16
    encoder_depth: int = 3
    fusion_levels: int = 3
    global_width: int = 64
    token_width: int = 128
    d_init: float = 5.0
    loss: LossConfig = field(default_factory=LossConfig)
    data_dir: str = ""
    eval_data_dir: str = ""
    out_dir: str = ""

    def __post_init__(self):
        if not (0.0 <= self.alpha_ema <= 1.0):
            raise InvalidParameterError(f"alpha_ema must be in [0, 1], got {self.alpha_ema}")
        for name in ("epochs_pretrain", "epochs_modality", "epochs_glfa", "epochs_ugds"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")

    def net_config(self, input_kind: str) -> NetworkConfig:
        return NetworkConfig(
            input_kind=input_kind,
            t_model=self.t_model,
            base_channels=self.base_channels,
            encoder_depth=self.encoder_depth,
            fusion_levels=self.fusion_levels,
            global_width=self.global_width,
            token_width=self.token_width,
            d_init=self.d_init,
        )

    @staticmethod
    def desk(data_dir: str, eval_data_dir: str, out_dir: str, seed: int = 0) -> "TrainConfig":
        """Desk profile: small epoch counts and learning rates sized for a
        from-scratch toy network, to fit the CPU time budget."""
        return TrainConfig(
            seed=seed,
            batch_size=4,
            epochs_pretrain=10,
            epochs_modality=5,
            epochs_glfa=5,
            epochs_ugds=5,
            lr_backbone=1e-3,
            lr_decoder=1e-3,
            warmup_steps=500,
            modality_lr_scale=3.0,
            glfa_student_lr_scale=0.05,
            domain_lr_scale=0.3,
            loss=LossConfig(unc_in_domain=False),
            data_dir=data_dir,
            eval_data_dir=eval_data_dir,
            out_dir=out_dir,
        )

    # -- flat JSON view (the CLI config file format) -----------------------

    def to_flat(self) -> dict:
        flat = dataclasses.asdict(self)
        loss = flat.pop("loss")
        flat.update(loss)
        return flat

    @staticmethod
    def from_flat(flat: dict) -> "TrainConfig":
        flat = dict(flat)
        loss_names = {f.name for f in dataclasses.fields(LossConfig)}
        cfg_names = {f.name for f in dataclasses.fields(TrainConfig)} - {"loss"}
        unknown = set(flat) - loss_names - cfg_names
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        loss = LossConfig(**{k: flat.pop(k) for k in list(flat) if k in loss_names})
        return TrainConfig(loss=loss, **flat)


@dataclass
class RunState:
    stage: str
    epoch: int
    step: int
    student: ParameterSnapshot
    teacher: ParameterSnapshot | None = None
    disc: ParameterSnapshot | None = None
    opt_arrays: dict[str, np.ndarray] = field(default_factory=dict)
    opt_steps: dict[str, int] = field(default_factory=dict)
    rng_state: dict | None = None
    history: list[dict] = field(default_factory=list)


def checkpoint_save(state: RunState, path: str | os.PathLike) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, arr in state.student.items():
        arrays[f"student.{name}"] = arr
    if state.teacher is not None:
        for name, arr in state.teacher.items():
            arrays[f"teacher.{name}"] = arr
    if state.disc is not None:
        for name, arr in state.disc.items():
            arrays[f"disc.{name}"] = arr
    arrays.update(state.opt_arrays)
    meta = {
        "state_version": RUNSTATE_VERSION,
        "stage": state.stage,
        "epoch": state.epoch,
        "step": state.step,
        "opt_steps": state.opt_steps,
        "rng_state": state.rng_state,
        "history": state.history,
        "has_teacher": state.teacher is not None,
        "has_disc": state.disc is not None,
    }
    save_archive(path, arrays, meta)


def checkpoint_load(path: str | os.PathLike) -> RunState:
    arrays, meta = load_archive(path)
    if meta.get("state_version") != RUNSTATE_VERSION:
        raise CheckpointError(
            f"run-state version {meta.get('state_version')} != {RUNSTATE_VERSION} in {path}"
        )
    student = {}
    teacher = {} if meta["has_teacher"] else None
    disc = {} if meta["has_disc"] else None
    opt_arrays = {}
    for name, arr in arrays.items():
        if name.startswith("student."):
            student[name[len("student.") :]] = arr
        elif name.startswith("teacher.") and teacher is not None:
            teacher[name[len("teacher.") :]] = arr
        elif name.startswith("disc.") and disc is not None:
            disc[name[len("disc.") :]] = arr
        else:
            opt_arrays[name] = arr
    return RunState(
        stage=meta["stage"],
        epoch=meta["epoch"],
        step=meta["step"],
        student=student,
        teacher=teacher,
        disc=disc,
        opt_arrays=opt_arrays,
        opt_steps={k: int(v) for k, v in meta["opt_steps"].items()},
        rng_state=meta["rng_state"],
        history=meta["history"],
    )


def save_model_ckpt(path, snapshot: ParameterSnapshot, net_cfg: NetworkConfig, rng_state=None):
    save_archive(
        path,
        dict(snapshot),
        {"net_config": dataclasses.asdict(net_cfg), "rng_state": rng_state},
    )


def load_model_ckpt(path) -> tuple[ParameterSnapshot, NetworkConfig]:
    arrays, meta = load_archive(path)
    return arrays, NetworkConfig(**meta["net_config"])


# -- data ------------------------------------------------------------------


@dataclass
class LoadedDataset:
    ids: list[str]
    rgb: np.ndarray  # (N, 3, H, W) float64
    spike: np.ndarray  # (N, T_model, H, W) uint8
    depth: np.ndarray  # (N, H, W) float64
    freq: float = 32.0  # acquisition metadata of the spike streams
    theta: float = 0.1


def load_records(manifest_path: str, domain: str, t_model: int) -> LoadedDataset:
    manifest, base = load_manifest(manifest_path)
    records = manifest.records(domain)
    if not records:
        raise FileNotFoundError(f"manifest {manifest_path} has no {domain!r} records")
    ids, rgbs, spikes, depths = [], [], [], []
    freq, theta = 32.0, 0.1
    for rec in records:
        ids.append(rec["id"])
        rgb = read_ppm(os.path.join(base, rec["rgb"])).astype(np.float64) / 255.0
        rgbs.append(rgb.transpose(2, 0, 1))
        stream = read_spk(os.path.join(base, rec["spk"]))
        freq, theta = stream.freq, stream.theta
        spikes.append(bin_stream(stream, 0, t_model).planes)
        depths.append(read_depth(os.path.join(base, rec["depth"])))
    return LoadedDataset(
        ids=ids,
        rgb=np.stack(rgbs),
        spike=np.stack(spikes),
        depth=np.stack(depths),
        freq=freq,
        theta=theta,
    )


def split_heldback(data: LoadedDataset, fraction: float) -> tuple[LoadedDataset, LoadedDataset]:
    """Reserve the trailing fraction (at least one sample) for teacher warm-up."""
    n = len(data.ids)
    k = max(int(round(n * fraction)), 1)
    cut = n - k
    if cut < 1:
        raise InvalidParameterError("heldback fraction leaves no training samples")
    head = LoadedDataset(
        data.ids[:cut], data.rgb[:cut], data.spike[:cut], data.depth[:cut], data.freq, data.theta
    )
    tail = LoadedDataset(
        data.ids[cut:], data.rgb[cut:], data.spike[cut:], data.depth[cut:], data.freq, data.theta
    )
    return head, tail


def _batch_indices(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


class _MetricLog:
    def __init__(self, run_dir: str):
        os.makedirs(run_dir, exist_ok=True)
        self.path = os.path.join(run_dir, "metrics.jsonl")

    def append(self, row: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def _mean_scalars(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def _supervised_terms(outs, depth_gt: np.ndarray, loss_cfg: LossConfig) -> tuple[Tensor, Tensor]:
    """Per-sample sig loss and uncertainty loss, averaged over the batch."""
    sig_terms, unc_terms = [], []
    for i in range(depth_gt.shape[0]):
        pred_i = outs.depth[i]
        sig_terms.append(L.sig_loss(pred_i, depth_gt[i], lam=loss_cfg.lambda_sig))
        e_soft = L.uncertainty_target(outs.depth.data[i], depth_gt[i])  # detached soft label
        unc_terms.append(
            L.uncertainty_loss(outs.uncertainty[i], e_soft, beta=loss_cfg.smooth_l1_beta)
        )
    return _mean_scalars(sig_terms), _mean_scalars(unc_terms)


def _make_optimizer(net: DepthNet, cfg: TrainConfig) -> Adam:
    return Adam(
        net.params,
        lr={"backbone": cfg.lr_backbone, "decoder": cfg.lr_decoder},
        group_of=parameter_group,
        betas=(cfg.beta1, cfg.beta2),
    )


def _stage_rng(cfg: TrainConfig, stage: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(cfg.seed + _STAGE_RNG_OFFSET[stage]))


# -- supervised stages -------------------------------------------------------


def _train_supervised(
    cfg: TrainConfig,
    stage: str,
    input_kind: str,
    epochs: int,
    out_name: str,
    resume: str | None = None,
) -> str:
    """Shared loop for RGB pretraining and the source-only spike baseline."""
    run_dir = cfg.out_dir
    log = _MetricLog(run_dir)
    data = load_records(cfg.data_dir, "source", cfg.t_model)
    train, _held = split_heldback(data, cfg.heldback_fraction)
    inputs = train.rgb if input_kind == "rgb" else train.spike

    net = DepthNet(cfg.net_config(input_kind), seed=cfg.seed)
    opt = _make_optimizer(net, cfg)
    rng = _stage_rng(cfg, stage)
    start_epoch, step = 0, 0
    history: list[dict] = []
    if resume is not None:
        state = checkpoint_load(resume)
        if state.stage != stage:
            raise CheckpointError(f"resume checkpoint is for stage {state.stage!r}, not {stage!r}")
        net.load_snapshot(state.student)
        opt.load_state_arrays("opt_student", state.opt_arrays, state.opt_steps["opt_student"])
        rng.bit_generator.state = state.rng_state
        start_epoch, step, history = state.epoch, state.step, list(state.history)

    state_path = os.path.join(run_dir, f"{stage}_state.bck")
    for epoch in range(start_epoch, epochs):
        epoch_losses = []
        for idx in _batch_indices(len(train.ids), cfg.batch_size, rng):
            outs = net.forward(inputs[idx].astype(np.float64))
            sig, unc = _supervised_terms(outs, train.depth[idx], cfg.loss)
            loss = sig + unc
            net.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            epoch_losses.append(loss.item())
        row = {
            "kind": "train",
            "stage": stage,
            "epoch": epoch,
            "step": step,
            "loss": float(np.mean(epoch_losses)),
        }
        history.append(row)
        log.append(row)
        checkpoint_save(
            RunState(
                stage=stage,
                epoch=epoch + 1,
                step=step,
                student=net.snapshot(),
                opt_arrays=opt.state_arrays("opt_student"),
                opt_steps={"opt_student": opt.t},
                rng_state=rng.bit_generator.state,
                history=history,
            ),
            state_path,
        )

    out_path = os.path.join(run_dir, out_name)
    save_model_ckpt(out_path, net.snapshot(), net.cfg, rng.bit_generator.state)
    return out_path


def pretrain_rgb(cfg: TrainConfig, resume: str | None = None) -> str:
    """Stage 1: supervised RGB training on the source split."""
    return _train_supervised(cfg, "pretrain", "rgb", cfg.epochs_pretrain, "pretrain.ckpt", resume)


def train_source_spike(cfg: TrainConfig, resume: str | None = None) -> str:
    """Source-only spike reference model (the no-transfer baseline).

    Gets the same total supervised epoch budget as the pretrain+modality
    path, so the comparison is compute-fair."""
    epochs = cfg.epochs_pretrain + cfg.epochs_modality
    return _train_supervised(cfg, "baseline", "spike", epochs, "baseline.ckpt", resume)


# -- stage 2: cross-modality distillation ------------------------------------


def _inflate_temporal_from_stem(student: DepthNet, rgb_snap, rate_scale: float) -> None:
    """Initialize the temporal module so it mimics the RGB stem at step 0.

    The temporal convolution averages the spike planes (the firing rate) and
    pushes rate_scale * rate through the channel-summed RGB stem kernel, so
    the shared trunk sees a familiar feature distribution immediately.  The
    channel gate starts nearly open and the residual block at identity.
    """
    t_model = student.cfg.t_model
    stem_w = rgb_snap["stem.conv.w"]  # (C, 3, k, k)
    summed = stem_w.sum(axis=1, keepdims=True)  # gray response of the stem
    student.params["temporal.conv.w"].data = np.repeat(summed, t_model, axis=1) * (
        rate_scale / t_model
    )
    student.params["temporal.conv.b"].data = rgb_snap["stem.conv.b"].copy()
    student.params["temporal.se.fc2.w"].data[...] = 0.0
    student.params["temporal.se.fc2.b"].data[...] = 4.0  # sigmoid(4): gate ~ 0.982
    student.params["temporal.res.conv2.w"].data[...] = 0.0
    student.params["temporal.res.conv2.b"].data[...] = 0.0


def train_cross_modality(cfg: TrainConfig, rgb_ckpt: str, resume: str | None = None) -> str:
    if not os.path.exists(rgb_ckpt):
        raise FileNotFoundError(f"missing pretrain checkpoint: {rgb_ckpt}")
    run_dir = cfg.out_dir
    log = _MetricLog(run_dir)
    data = load_records(cfg.data_dir, "source", cfg.t_model)
    train, _held = split_heldback(data, cfg.heldback_fraction)

    rgb_snap, rgb_cfg = load_model_ckpt(rgb_ckpt)
    teacher = DepthNet(rgb_cfg, params=rgb_snap)
    student = DepthNet(cfg.net_config("spike"), seed=cfg.seed + 1)
    student.load_compatible(rgb_snap)  # shared-shape weights start from the RGB model
    # luminance ~ rate * theta * freq: inflate the RGB stem into the temporal module
    _inflate_temporal_from_stem(student, rgb_snap, rate_scale=data.theta * data.freq)

    m = cfg.modality_lr_scale
    opt_t = _make_optimizer(teacher, cfg)
    opt_s = Adam(
        student.params,
        lr={"backbone": m * cfg.lr_backbone, "decoder": m * cfg.lr_decoder},
        group_of=parameter_group,
        betas=(cfg.beta1, cfg.beta2),
    )
    rng = _stage_rng(cfg, "modality")
    start_epoch, step = 0, 0
    history: list[dict] = []
    skipped_steps = 0
    if resume is not None:
        state = checkpoint_load(resume)
        if state.stage != "modality":
            raise CheckpointError(f"resume checkpoint is for stage {state.stage!r}")
        student.load_snapshot(state.student)
        teacher.load_snapshot(state.teacher)
        opt_s.load_state_arrays("opt_student", state.opt_arrays, state.opt_steps["opt_student"])
        opt_t.load_state_arrays("opt_teacher", state.opt_arrays, state.opt_steps["opt_teacher"])
        rng.bit_generator.state = state.rng_state
        start_epoch, step, history = state.epoch, state.step, list(state.history)

    state_path = os.path.join(run_dir, "modality_state.bck")
    loss_cfg = cfg.loss
    for epoch in range(start_epoch, cfg.epochs_modality):
        comps = {"loss": [], "sig_rgb": [], "sig_spike": [], "unc": [], "ckd": [], "fkd": []}
        for idx in _batch_indices(len(train.ids), cfg.batch_size, rng):
            outs_t = teacher.forward(train.rgb[idx])
            outs_s = student.forward(train.spike[idx].astype(np.float64))
            sig_rgb, unc_rgb = _supervised_terms(outs_t, train.depth[idx], loss_cfg)
            sig_spk, unc_spk = _supervised_terms(outs_s, train.depth[idx], loss_cfg)
            # distillation targets are constants: the teacher only learns from
            # its own supervised terms
            h = L.ckd_pair_prob(outs_t.f_g.detach(), outs_s.f_g, tau=loss_cfg.tau)
            l_ckd = L.ckd_loss(h)
            l_fkd = L.fkd_loss([f.data for f in outs_t.decoder_feats], outs_s.decoder_feats)
            try:
                total = L.mod_loss(
                    sig_rgb, sig_spk, unc_rgb + unc_spk, l_ckd, l_fkd, w_distill=loss_cfg.w_distill
                )
            except NonFiniteLoss:
                skipped_steps += 1
                continue
            teacher.zero_grad()
            student.zero_grad()
            total.backward()
            opt_t.step()
            opt_s.step()
            step += 1
            comps["loss"].append(total.item())
            comps["sig_rgb"].append(sig_rgb.item())
            comps["sig_spike"].append(sig_spk.item())
            comps["unc"].append(unc_rgb.item() + unc_spk.item())
            comps["ckd"].append(l_ckd.item())
            comps["fkd"].append(l_fkd.item())
        row = {
            "kind": "train",
            "stage": "modality",
            "epoch": epoch,
            "step": step,
            "skipped_steps": skipped_steps,
            **{k: float(np.mean(v)) if v else 0.0 for k, v in comps.items()},
        }
        history.append(row)
        log.append(row)
        opt_arrays = opt_s.state_arrays("opt_student")
        opt_arrays.update(opt_t.state_arrays("opt_teacher"))
        checkpoint_save(
            RunState(
                stage="modality",
                epoch=epoch + 1,
                step=step,
                student=student.snapshot(),
                teacher=teacher.snapshot(),
                opt_arrays=opt_arrays,
                opt_steps={"opt_student": opt_s.t, "opt_teacher": opt_t.t},
                rng_state=rng.bit_generator.state,
                history=history,
            ),
            state_path,
        )

    out_path = os.path.join(run_dir, "modality.ckpt")
    save_model_ckpt(out_path, student.snapshot(), student.cfg, rng.bit_generator.state)
    return out_path


# -- stage 3: cross-domain adaptation -----------------------------------------


def warmup_teacher(teacher: DepthNet, held: LoadedDataset, k: int, cfg: TrainConfig,
                   rng: np.random.Generator) -> None:
    """Displace the teacher from the student with k gradient steps on the
    held-back source spike slice; a no-op when k = 0.

    Only the uncertainty head updates, against error targets recomputed per
    view from the frozen depth path.  Three quarters of the views are dimmed
    by binomial thinning under a random linear shading field (the spike
    domain analogue of a sensor gain drop), so the head sees the heavy error
    tails the depth model develops on degraded inputs.  A head that maps
    degradation to high uncertainty and familiar structure to low is what
    makes the variance-threshold pixel selection of the cross-domain stage
    both non-empty and accurate.
    """
    if k == 0:
        return
    for name, p in teacher.params.items():
        p.requires_grad = name.startswith("head.unc.")
    unc_params = {n: p for n, p in teacher.params.items() if n.startswith("head.unc.")}
    opt = Adam(
        unc_params,
        lr={"backbone": cfg.lr_backbone, "decoder": cfg.lr_decoder},
        group_of=parameter_group,
        betas=(cfg.beta1, cfg.beta2),
    )
    n = len(held.ids)
    t_planes, hh, ww = held.spike.shape[1:]
    ys, xs = np.mgrid[0:hh, 0:ww].astype(np.float64)
    done = 0
    while done < k:
        for idx in _batch_indices(n, cfg.batch_size, rng):
            batch = held.spike[idx].astype(np.float64)
            for i in range(batch.shape[0]):
                if rng.random() < 0.75:
                    keep = rng.uniform(0.25, 1.0)
                    angle = rng.uniform(0.0, 2.0 * np.pi)
                    slope = rng.uniform(0.0, 0.6)
                    ramp = (np.cos(angle) * xs / ww + np.sin(angle) * ys / hh) - 0.5
                    keep_map = np.clip(keep * (1.0 - slope * ramp), 0.05, 1.0)
                    batch[i] *= rng.random(batch[i].shape) < keep_map
            outs = teacher.forward(batch)
            unc_terms = []
            for i in range(len(idx)):
                e_soft = L.uncertainty_target(outs.depth.data[i], held.depth[idx][i])
                unc_terms.append(
                    L.uncertainty_loss(outs.uncertainty[i], e_soft, beta=cfg.loss.smooth_l1_beta)
                )
            loss = _mean_scalars(unc_terms)
            teacher.zero_grad()
            loss.backward()
            opt.step()
            done += 1
            if done >= k:
                break
    teacher.set_trainable(True)


def train_cross_domain(cfg: TrainConfig, modality_ckpt: str, resume: str | None = None) -> str:
    if not os.path.exists(modality_ckpt):
        raise FileNotFoundError(f"missing modality checkpoint: {modality_ckpt}")
    run_dir = cfg.out_dir
    log = _MetricLog(run_dir)
    source = load_records(cfg.data_dir, "source", cfg.t_model)
    src_train, held = split_heldback(source, cfg.heldback_fraction)
    target = load_records(cfg.data_dir, "target", cfg.t_model)

    snap, net_cfg = load_model_ckpt(modality_ckpt)
    student = DepthNet(net_cfg, params=snap)
    teacher = DepthNet(net_cfg, params=snap)
    disc = Discriminator(cfg.token_width, seed=cfg.seed + 7)

    rng = _stage_rng(cfg, "domain")
    loss_cfg = cfg.loss
    d = cfg.domain_lr_scale
    opt_s = Adam(
        student.params,
        lr={"backbone": d * cfg.lr_backbone, "decoder": d * cfg.lr_decoder},
        group_of=parameter_group,
        betas=(cfg.beta1, cfg.beta2),
    )
    # adversarial epochs run the student on a heavily scaled-down rate: Adam
    # normalizes step sizes, so a whole epoch of pure reversed gradients at
    # the supervised rate would tear the encoder apart
    s = cfg.glfa_student_lr_scale
    opt_s_glfa = Adam(
        student.params,
        lr={"backbone": s * cfg.lr_backbone, "decoder": s * cfg.lr_decoder},
        group_of=parameter_group,
        betas=(cfg.beta1, cfg.beta2),
    )
    # the discriminator also learns slowly: a runaway discriminator saturates
    # the adversarial loss and the reversed gradients stop being informative
    opt_d = Adam(disc.params, lr=0.1 * cfg.lr_decoder, betas=(cfg.beta1, cfg.beta2))

    start_epoch, step = 0, 0
    history: list[dict] = []
    if resume is not None:
        state = checkpoint_load(resume)
        if state.stage != "domain":
            raise CheckpointError(f"resume checkpoint is for stage {state.stage!r}")
        student.load_snapshot(state.student)
        teacher.load_snapshot(state.teacher)
        disc.load_snapshot(state.disc)
        opt_s.load_state_arrays("opt_student", state.opt_arrays, state.opt_steps["opt_student"])
        opt_s_glfa.load_state_arrays(
            "opt_student_glfa", state.opt_arrays, state.opt_steps["opt_student_glfa"]
        )
        opt_d.load_state_arrays("opt_disc", state.opt_arrays, state.opt_steps["opt_disc"])
        rng.bit_generator.state = state.rng_state
        start_epoch, step, history = state.epoch, state.step, list(state.history)
    else:
        warmup_teacher(teacher, held, cfg.warmup_steps, cfg, _stage_rng(cfg, "warmup"))
    teacher.set_trainable(False)  # after warm-up only the EMA touches the teacher

    schedule = _domain_schedule(cfg.epochs_glfa, cfg.epochs_ugds)
    state_path = os.path.join(run_dir, "domain_state.bck")
    for epoch in range(start_epoch, len(schedule)):
        kind = schedule[epoch]
        if kind == "glfa":
            row, step = _glfa_epoch(
                cfg, student, teacher, disc, opt_s_glfa, opt_d, src_train, target, rng, step
            )
        else:
            row, step = _ugds_epoch(cfg, student, teacher, opt_s, target, rng, step)
        row.update({"kind": "train", "stage": "domain", "epoch": epoch, "mode": kind})
        history.append(row)
        log.append(row)
        opt_arrays = opt_s.state_arrays("opt_student")
        opt_arrays.update(opt_s_glfa.state_arrays("opt_student_glfa"))
        opt_arrays.update(opt_d.state_arrays("opt_disc"))
        checkpoint_save(
            RunState(
                stage="domain",
                epoch=epoch + 1,
                step=step,
                student=student.snapshot(),
                teacher=teacher.snapshot(),
                disc=disc.snapshot(),
                opt_arrays=opt_arrays,
                opt_steps={
                    "opt_student": opt_s.t,
                    "opt_student_glfa": opt_s_glfa.t,
                    "opt_disc": opt_d.t,
                },
                rng_state=rng.bit_generator.state,
                history=history,
            ),
            state_path,
        )

    out_path = os.path.join(run_dir, "domain.ckpt")
    save_model_ckpt(out_path, student.snapshot(), student.cfg, rng.bit_generator.state)
    return out_path


def _domain_schedule(n_glfa: int, n_ugds: int) -> list[str]:
    """Alternate whole epochs 1:1, GLFA first: with equal counts the stage
    then closes on a pseudo-label epoch."""
    schedule = []
    g, u = n_glfa, n_ugds
    while g > 0 or u > 0:
        if g > 0:
            schedule.append("glfa")
            g -= 1
        if u > 0:
            schedule.append("ugds")
            u -= 1
    return schedule


def _after_student_step(teacher: DepthNet, student: DepthNet, alpha: float) -> None:
    teacher.load_snapshot(ema_update(teacher.snapshot(), student.snapshot(), alpha))
    teacher.set_trainable(False)


def _glfa_epoch(cfg, student, teacher, disc, opt_s, opt_d, src, tgt, rng, step):
    losses = []
    n = min(len(src.ids), len(tgt.ids))
    src_batches = list(_batch_indices(len(src.ids), cfg.batch_size, rng))
    tgt_batches = list(_batch_indices(len(tgt.ids), cfg.batch_size, rng))
    for idx_s, idx_t in zip(src_batches, tgt_batches):
        outs_src = student.forward(src.spike[idx_s].astype(np.float64))
        outs_tgt = student.forward(tgt.spike[idx_t].astype(np.float64))
        l_glfa = L.glfa_loss(disc, outs_src.token, outs_tgt.token, mu=cfg.loss.grl_scale)
        try:
            total = L.dom_loss(0.0, l_glfa, 0.0, w_glfa=cfg.loss.w_glfa)
        except NonFiniteLoss:
            continue
        student.zero_grad()
        disc.zero_grad()
        total.backward()
        opt_s.step()
        opt_d.step()
        _after_student_step(teacher, student, cfg.alpha_ema)
        step += 1
        losses.append(l_glfa.item())
    return {"glfa": float(np.mean(losses)) if losses else 0.0, "step": step}, step


def _ugds_epoch(cfg, student, teacher, opt_s, tgt, rng, step):
    loss_cfg = cfg.loss
    losses, fractions = [], []
    samples_total = 0
    samples_skipped = 0
    for idx in _batch_indices(len(tgt.ids), cfg.batch_size, rng):
        outs_teacher = teacher.forward(tgt.spike[idx].astype(np.float64))
        d_soft = outs_teacher.depth.data  # pseudo labels carry no gradient
        e_soft_teacher = outs_teacher.uncertainty.data
        outs_s = student.forward(tgt.spike[idx].astype(np.float64))

        ugts_terms, unc_terms = [], []
        for i in range(len(idx)):
            samples_total += 1
            mask = L.build_mask(e_soft_teacher[i])
            fractions.append(mask.selected_fraction)
            try:
                ugts_terms.append(
                    L.ugts_loss(outs_s.depth[i], d_soft[i], mask, beta=loss_cfg.smooth_l1_beta)
                )
            except SkipSample:
                samples_skipped += 1
                continue
            if loss_cfg.unc_in_domain:
                e_soft_student = L.uncertainty_target(outs_s.depth.data[i], d_soft[i])
                unc_terms.append(
                    L.uncertainty_loss(
                        outs_s.uncertainty[i], e_soft_student, beta=loss_cfg.smooth_l1_beta
                    )
                )
        if not ugts_terms:
            continue
        l_ugts = _mean_scalars(ugts_terms)
        l_unc = _mean_scalars(unc_terms) if unc_terms else 0.0
        try:
            total = L.dom_loss(l_ugts, 0.0, l_unc, w_glfa=loss_cfg.w_glfa)
        except NonFiniteLoss:
            continue
        student.zero_grad()
        total.backward()
        opt_s.step()
        _after_student_step(teacher, student, cfg.alpha_ema)
        step += 1
        losses.append(total.item())
    if samples_total and samples_skipped / samples_total > 0.5:
        raise RuntimeError(
            f"cross-domain epoch skipped {samples_skipped}/{samples_total} samples "
            "(empty uncertainty masks); aborting"
        )
    return {
        "ugds": float(np.mean(losses)) if losses else 0.0,
        "mask_fraction": float(np.mean(fractions)) if fractions else 0.0,
        "samples_skipped": samples_skipped,
        "samples_total": samples_total,
        "step": step,
    }, step


# -- evaluation and the full pipeline ------------------------------------------


def predict_maps(net: DepthNet, inputs: np.ndarray, batch: int = 16):
    """Depth and uncertainty maps for a stack of inputs, without gradients."""
    net.set_trainable(False)
    depths, uncs = [], []
    for start in range(0, inputs.shape[0], batch):
        outs = net.forward(inputs[start : start + batch].astype(np.float64))
        depths.append(outs.depth.data)
        uncs.append(outs.uncertainty.data)
    net.set_trainable(True)
    return np.concatenate(depths), np.concatenate(uncs)


def evaluate_checkpoint(
    cfg: TrainConfig, ckpt_path: str, manifest_path: str, domain: str, stage: str, split: str
) -> Metrics:
    snap, net_cfg = load_model_ckpt(ckpt_path)
    net = DepthNet(net_cfg, params=snap)
    data = load_records(manifest_path, domain, cfg.t_model)
    inputs = data.rgb if net_cfg.input_kind == "rgb" else data.spike
    pred, _ = predict_maps(net, inputs)
    per_sample = [
        compute_metrics(pred[i], data.depth[i], cfg.eval_d_min, cfg.eval_d_max)
        for i in range(pred.shape[0])
    ]
    metrics = mean_metrics(per_sample)
    log = _MetricLog(cfg.out_dir)
    log.append({"kind": "eval", "stage": stage, "split": split, **metrics.as_dict()})
    return metrics


def run_pipeline(cfg: TrainConfig) -> dict:
    """Full desk run: baseline, three BiCross stages, evaluations, report."""
    t0 = time.time()
    os.makedirs(cfg.out_dir, exist_ok=True)
    log = _MetricLog(cfg.out_dir)
    log.append({"kind": "config", "config": cfg.to_flat()})

    baseline_ckpt = train_source_spike(cfg)
    base_metrics = evaluate_checkpoint(
        cfg, baseline_ckpt, cfg.eval_data_dir, "target", "baseline", "target_test"
    )

    pretrain_ckpt = pretrain_rgb(cfg)
    modality_ckpt = train_cross_modality(cfg, pretrain_ckpt)
    evaluate_checkpoint(cfg, modality_ckpt, cfg.eval_data_dir, "target", "modality", "target_test")
    domain_ckpt = train_cross_domain(cfg, modality_ckpt)
    ours_metrics = evaluate_checkpoint(
        cfg, domain_ckpt, cfg.eval_data_dir, "target", "domain", "target_test"
    )

    text = report(cfg.out_dir)
    return {
        "baseline_ckpt": baseline_ckpt,
        "pretrain_ckpt": pretrain_ckpt,
        "modality_ckpt": modality_ckpt,
        "domain_ckpt": domain_ckpt,
        "baseline_metrics": base_metrics,
        "domain_metrics": ours_metrics,
        "abs_rel_improvement": (base_metrics.abs_rel - ours_metrics.abs_rel) / base_metrics.abs_rel,
        "runtime_s": time.time() - t0,
        "report": text,
    }
