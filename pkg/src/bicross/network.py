"""Dual-branch depth estimation network at desk scale.

Both branches share one encoder/decoder topology: an input-specific stem
(a temporal aggregation module for spike volumes, a plain convolution for
RGB), a stack of downsampling encoder stages, a learned global token that
attends over pooled stage descriptors, a decoder that fuses encoder skips
over L levels, and two prediction heads of three convolutions each, one for
depth (strictly positive) and one for uncertainty (nonnegative).

All activations are smooth (SiLU / sigmoid / softplus), which keeps the
network finite-difference checkable to tight tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInputError, InvalidParameterError

ParameterSnapshot = dict[str, np.ndarray]


@dataclass(frozen=True)
class NetworkConfig:
    input_kind: str = "rgb"  # "rgb" | "spike"
    t_model: int = 32
    base_channels: int = 16
    encoder_depth: int = 3  # downsampling stages
    fusion_levels: int = 3  # decoder levels L, 2 <= L <= encoder_depth
    global_width: int = 64  # G (paper scale 256)
    token_width: int = 128  # D (paper scale 768)
    d_init: float = 5.0
    depth_min: float = 1e-3
    depth_max: float = 100.0
    unc_gain: float = 8.0  # pre-activation gain of the uncertainty softplus

    def __post_init__(self):
        if self.input_kind not in ("rgb", "spike"):
            raise InvalidParameterError(f"input_kind must be rgb|spike, got {self.input_kind!r}")
        if self.fusion_levels < 2:
            raise InvalidParameterError("fusion_levels must be >= 2")
        if self.fusion_levels > self.encoder_depth:
            raise InvalidParameterError("fusion_levels cannot exceed encoder_depth")
        if min(self.base_channels, self.global_width, self.token_width, self.t_model) < 1:
            raise InvalidParameterError("all widths must be >= 1")

    @property
    def in_channels(self) -> int:
        return 3 if self.input_kind == "rgb" else self.t_model

    def stage_channels(self) -> list[int]:
        return [self.base_channels * (2**i) for i in range(1, self.encoder_depth + 1)]


@dataclass
class NetworkOutputs:
    decoder_feats: list[Tensor]  # L grids, deepest first
    token: Tensor  # (N, D)
    f_g: Tensor  # (N, G), unit rows
    depth: Tensor  # (N, H, W), strictly positive
    uncertainty: Tensor  # (N, H, W), nonnegative


# variance-preserving init gain for SiLU chains: 1 / sqrt(E[silu(N(0,1))^2])
_SILU_GAIN = 1.6776


def _he_conv(rng: np.random.Generator, out_c: int, in_c: int, k: int) -> np.ndarray:
    fan_in = in_c * k * k
    return rng.normal(0.0, _SILU_GAIN * math.sqrt(1.0 / fan_in), size=(out_c, in_c, k, k))


def _he_linear(rng: np.random.Generator, out_d: int, in_d: int) -> np.ndarray:
    return rng.normal(0.0, _SILU_GAIN * math.sqrt(1.0 / in_d), size=(in_d, out_d))


def init_params(cfg: NetworkConfig, seed: int = 0) -> ParameterSnapshot:
    """Build the named parameter arrays for a configuration.

    Final head convolutions start at zero so the depth map begins as the
    constant ``d_init`` and the uncertainty map as softplus(0).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    c = cfg.base_channels
    p: ParameterSnapshot = {}

    def conv(name: str, out_c: int, in_c: int, k: int, zero: bool = False):
        p[f"{name}.w"] = np.zeros((out_c, in_c, k, k)) if zero else _he_conv(rng, out_c, in_c, k)
        p[f"{name}.b"] = np.zeros(out_c)

    def linear(name: str, out_d: int, in_d: int):
        p[f"{name}.w"] = _he_linear(rng, out_d, in_d)
        p[f"{name}.b"] = np.zeros(out_d)

    if cfg.input_kind == "spike":
        conv("temporal.conv", c, cfg.t_model, 3)
        se_mid = max(c // 2, 1)
        linear("temporal.se.fc1", se_mid, c)
        linear("temporal.se.fc2", c, se_mid)
        conv("temporal.res.conv1", c, c, 3)
        conv("temporal.res.conv2", c, c, 3)
    else:
        conv("stem.conv", c, 3, 3)

    chans = [c] + cfg.stage_channels()
    for i in range(cfg.encoder_depth):
        conv(f"enc{i}.down", chans[i + 1], chans[i], 3)
        conv(f"enc{i}.res.conv1", chans[i + 1], chans[i + 1], 3)
        conv(f"enc{i}.res.conv2", chans[i + 1], chans[i + 1], 3)

    # global token: learned query attending over per-stage pooled descriptors
    p["token.query"] = rng.normal(0.0, 0.02, size=cfg.token_width)
    for i in range(cfg.encoder_depth):
        linear(f"token.key{i}", cfg.token_width, chans[i + 1])
        linear(f"token.value{i}", cfg.token_width, chans[i + 1])

    linear("global.proj", cfg.global_width, chans[-1])

    dec_c = c
    taps = list(range(cfg.encoder_depth - 1, cfg.encoder_depth - 1 - cfg.fusion_levels, -1))
    for lvl, stage in enumerate(taps):
        conv(f"dec{lvl}.proj", dec_c, chans[stage + 1], 1)
        conv(f"dec{lvl}.res.conv1", dec_c, dec_c, 3)
        conv(f"dec{lvl}.res.conv2", dec_c, dec_c, 3)

    for head in ("depth", "unc"):
        conv(f"head.{head}.conv1", dec_c, dec_c, 3)
        conv(f"head.{head}.conv2", max(dec_c // 2, 1), dec_c, 3)
        conv(f"head.{head}.conv3", 1, max(dec_c // 2, 1), 1, zero=True)
    return p


def parameter_group(name: str) -> str:
    """Optimizer group: input stems, encoder and token are 'backbone'; the rest 'decoder'."""
    prefix = name.split(".", 1)[0]
    if prefix in ("temporal", "stem", "token") or prefix.startswith("enc"):
        return "backbone"
    return "decoder"


class DepthNet:
    """Forward graph builder over a flat parameter dictionary."""

    def __init__(self, cfg: NetworkConfig, seed: int = 0, params: ParameterSnapshot | None = None):
        self.cfg = cfg
        snapshot = init_params(cfg, seed) if params is None else params
        self.params: dict[str, Tensor] = {
            name: Tensor(arr.copy(), requires_grad=True) for name, arr in snapshot.items()
        }

    # -- parameter plumbing -------------------------------------------------

    def snapshot(self) -> ParameterSnapshot:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_snapshot(self, snap: ParameterSnapshot) -> None:
        _check_same_structure(self.snapshot(), snap)
        for name, arr in snap.items():
            self.params[name].data = arr.astype(np.float64).copy()

    def load_compatible(self, snap: ParameterSnapshot) -> list[str]:
        """Copy every entry whose name and shape match; returns the copied names."""
        copied = []
        for name, arr in snap.items():
            if name in self.params and self.params[name].data.shape == arr.shape:
                self.params[name].data = arr.astype(np.float64).copy()
                copied.append(name)
        return copied

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def set_trainable(self, trainable: bool) -> None:
        for t in self.params.values():
            t.requires_grad = trainable

    # -- building blocks ----------------------------------------------------

    def _conv(self, name: str, x: Tensor, stride: int = 1, pad: int = 1) -> Tensor:
        return ad.conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"], stride=stride, pad=pad)

    def _linear(self, name: str, x: Tensor) -> Tensor:
        return ad.matmul(x, self.params[f"{name}.w"]) + self.params[f"{name}.b"]

    def _res_block(self, name: str, x: Tensor) -> Tensor:
        y = ad.silu(self._conv(f"{name}.conv1", x))
        y = self._conv(f"{name}.conv2", y)
        return ad.silu(x + y)

    def _temporal_module(self, x: Tensor) -> Tensor:
        # channel attention over the aggregated planes, then a residual block
        y = ad.silu(self._conv("temporal.conv", x))
        pooled = ad.spatial_mean(y)
        gate = ad.sigmoid(self._linear("temporal.se.fc2", ad.silu(self._linear("temporal.se.fc1", pooled))))
        n, c = gate.shape
        y = y * ad.reshape(gate, (n, c, 1, 1))
        return self._res_block("temporal.res", y)

    def _token(self, stage_pools: list[Tensor]) -> Tensor:
        n = stage_pools[0].shape[0]
        d = self.cfg.token_width
        query = self.params["token.query"]
        keys = [self._linear(f"token.key{i}", pool) for i, pool in enumerate(stage_pools)]
        values = [self._linear(f"token.value{i}", pool) for i, pool in enumerate(stage_pools)]
        scores = [
            ad.reshape(ad.matmul(k, ad.reshape(query, (d, 1))), (n, 1)) * (1.0 / math.sqrt(d))
            for k in keys
        ]
        attn = ad.softmax(ad.concat(scores, axis=1), axis=1)
        mix = None
        for i, v in enumerate(values):
            term = v * attn[:, i : i + 1]
            mix = term if mix is None else mix + term
        return ad.reshape(query, (1, d)) + mix

    def extract_global(self, high_level: Tensor) -> Tensor:
        """Pool the deepest feature, project to width G, normalize rows to unit norm."""
        pooled = ad.spatial_mean(high_level)
        proj = self._linear("global.proj", pooled)
        norm = ad.sqrt(ad.sum_(proj * proj, axis=1, keepdims=True) + 1e-12)
        return proj / norm

    # -- forward --------------------------------------------------------------

    def forward(self, x: np.ndarray | Tensor) -> NetworkOutputs:
        cfg = self.cfg
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=np.float64))
        if x.ndim == 3:
            x = ad.reshape(x, (1,) + x.shape)
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise InvalidInputError(
                f"{cfg.input_kind} branch expects (N, {cfg.in_channels}, H, W), got {x.shape}"
            )
        n, _, h, w = x.shape
        scale = 2**cfg.encoder_depth
        if h % scale or w % scale:
            raise InvalidInputError(f"spatial dims must be divisible by {scale}, got {h}x{w}")

        stem = self._temporal_module(x) if cfg.input_kind == "spike" else ad.silu(self._conv("stem.conv", x))

        feats = []
        y = stem
        for i in range(cfg.encoder_depth):
            y = ad.silu(self._conv(f"enc{i}.down", y, stride=2))
            y = self._res_block(f"enc{i}.res", y)
            feats.append(y)

        token = self._token([ad.spatial_mean(f) for f in feats])
        f_g = self.extract_global(feats[-1])

        decoder_feats: list[Tensor] = []
        taps = list(range(cfg.encoder_depth - 1, cfg.encoder_depth - 1 - cfg.fusion_levels, -1))
        d = None
        for lvl, stage in enumerate(taps):
            skip = self._conv(f"dec{lvl}.proj", feats[stage], pad=0)
            d = skip if d is None else ad.upsample2x(d) + skip
            d = self._res_block(f"dec{lvl}.res", d)
            decoder_feats.append(d)

        def run_head(name: str) -> Tensor:
            # heads run at the finest decoder resolution; the single-channel
            # pre-activation is upsampled to input size afterwards
            y = ad.silu(self._conv(f"head.{name}.conv1", d))
            y = ad.silu(self._conv(f"head.{name}.conv2", y))
            y = self._conv(f"head.{name}.conv3", y, pad=0)
            for _ in range(cfg.encoder_depth - cfg.fusion_levels + 1):
                y = ad.upsample2x(y)
            return ad.reshape(y, (n, h, w))

        # clamp in log space: equivalent to clamping exp(.), but overflow-free
        depth = ad.exp(
            ad.clip(
                run_head("depth") + math.log(cfg.d_init),
                math.log(cfg.depth_min),
                math.log(cfg.depth_max),
            )
        )
        uncertainty = ad.softplus(run_head("unc") * cfg.unc_gain)
        return NetworkOutputs(
            decoder_feats=decoder_feats, token=token, f_g=f_g, depth=depth, uncertainty=uncertainty
        )


class Discriminator:
    """Two-layer perceptron with sigmoid output, scoring global tokens."""

    def __init__(self, in_width: int, hidden: int = 64, seed: int = 0):
        rng = np.random.Generator(np.random.PCG64(seed))
        self.params = {
            "fc1.w": Tensor(_he_linear(rng, hidden, in_width), requires_grad=True),
            "fc1.b": Tensor(np.zeros(hidden), requires_grad=True),
            "fc2.w": Tensor(_he_linear(rng, 1, hidden), requires_grad=True),
            "fc2.b": Tensor(np.zeros(1), requires_grad=True),
        }

    def score(self, token: Tensor) -> Tensor:
        h = ad.silu(ad.matmul(token, self.params["fc1.w"]) + self.params["fc1.b"])
        logit = ad.matmul(h, self.params["fc2.w"]) + self.params["fc2.b"]
        return ad.sigmoid(ad.reshape(logit, (token.shape[0],)))

    def snapshot(self) -> ParameterSnapshot:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_snapshot(self, snap: ParameterSnapshot) -> None:
        _check_same_structure(self.snapshot(), snap)
        for name, arr in snap.items():
            self.params[name].data = arr.astype(np.float64).copy()

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None


def _check_same_structure(a: ParameterSnapshot, b: ParameterSnapshot) -> None:
    if list(a.keys()) != list(b.keys()):
        raise InvalidParameterError("parameter snapshots name sets differ")
    for name in a:
        if a[name].shape != b[name].shape:
            raise InvalidParameterError(f"parameter {name!r} shape mismatch: {a[name].shape} vs {b[name].shape}")


def ema_update(teacher: ParameterSnapshot, student: ParameterSnapshot, alpha: float) -> ParameterSnapshot:
    """new_teacher = alpha * teacher + (1 - alpha) * student, per parameter.

    Pure array arithmetic on snapshots: no gradient can flow through it.
    """
    if not (0.0 <= alpha <= 1.0):
        raise InvalidParameterError(f"alpha must lie in [0, 1], got {alpha}")
    _check_same_structure(teacher, student)
    if alpha == 1.0:
        return {name: arr.copy() for name, arr in teacher.items()}
    if alpha == 0.0:
        return {name: arr.copy() for name, arr in student.items()}
    return {name: alpha * teacher[name] + (1.0 - alpha) * student[name] for name in teacher}
