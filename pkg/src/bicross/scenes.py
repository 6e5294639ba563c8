"""Procedural paired (RGB, luminance sequence, ground-truth depth) scenes.

Scenes are textured rectangles and ellipses floating in front of a ground
plane whose depth is a vertical ramp.  A small horizontal camera translation
produces per-frame parallax (nearer surfaces sweep faster), so the luminance
sequence carries depth cues the spike branch can learn from.  Depth maps are
analytic: the renderer and the ground truth share one geometry source.

Domain shift comes in three kinds: ``fog`` multiplies luminance by
``exp(-strength * depth / d_max)`` per pixel (and mixes RGB toward an
airlight of 0.8 with the same factor), ``rain_noise`` salts the luminance
with seeded full-on pixels, and ``layout`` re-places every object using a
disjoint seed stream.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .fileio import write_depth, write_ppm
from .spike import LuminanceSequence, interpolate_frames, simulate_spikes, write_spk

AIRLIGHT = 0.8
SALT_RATE_PER_STRENGTH = 0.05
# ITU-R 601 luma weights fix the RGB -> luminance map.
_LUMA = np.array([0.299, 0.587, 0.114])

_TARGET_SEED_OFFSET = 100_003
_LAYOUT_SEED_OFFSET = 900_001
_RAIN_SEED_OFFSET = 700_001


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 64
    t_lum: int = 32
    n_objects_range: tuple[int, int] = (3, 6)
    depth_range: tuple[float, float] = (1.0, 20.0)
    parallax_px: float = 8.0  # horizontal sweep, in pixels, of a surface at d_min
    theta: float = 0.1
    freq_hz: float = 32.0
    interp_factor: int = 1

    def __post_init__(self):
        d_min, d_max = self.depth_range
        if d_min <= 0:
            raise InvalidParameterError(f"depth range must be positive, got d_min={d_min}")
        if d_max <= d_min:
            raise InvalidParameterError("depth range must satisfy d_min < d_max")
        lo, hi = self.n_objects_range
        if lo < 0 or hi < lo:
            raise InvalidParameterError(f"bad object-count range {self.n_objects_range}")


@dataclass(frozen=True)
class _Primitive:
    kind: str  # "rect" | "ellipse"
    cx: float
    cy: float
    half_w: float
    half_h: float
    depth: float
    albedo: np.ndarray  # (3,) in [0, 1]
    tex_freq: float
    tex_phase: float
    tex_angle: float


@dataclass(frozen=True)
class _Geometry:
    plane_near: float
    plane_far: float
    plane_tilt: float  # ramp direction, radians off vertical
    plane_albedo: np.ndarray
    plane_tex_freq: float
    plane_tex_phase: float
    objects: tuple[_Primitive, ...]


@dataclass(frozen=True)
class Scene:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    lum_seq: LuminanceSequence
    depth_gt: np.ndarray  # (H, W), strictly positive meters
    domain_tag: str  # "source" | "target"
    shift_kind: str  # "none" | "fog" | "rain_noise" | "layout"
    seed: int
    config: SceneConfig
    geometry: _Geometry


def _sample_geometry(rng: np.random.Generator, cfg: SceneConfig) -> _Geometry:
    d_min, d_max = cfg.depth_range
    plane_near = d_min + 0.5 * (d_max - d_min)
    plane_far = d_max
    plane_tilt = 0.0
    objects = []
    n = int(rng.integers(cfg.n_objects_range[0], cfg.n_objects_range[1] + 1))
    for _ in range(n):
        kind = "rect" if rng.random() < 0.5 else "ellipse"
        objects.append(
            _Primitive(
                kind=kind,
                cx=float(rng.uniform(0.1, 0.9) * cfg.width),
                cy=float(rng.uniform(0.1, 0.9) * cfg.height),
                half_w=float(rng.uniform(0.06, 0.18) * cfg.width),
                half_h=float(rng.uniform(0.06, 0.18) * cfg.height),
                depth=float(rng.uniform(d_min, plane_near)),
                albedo=rng.uniform(0.15, 0.95, size=3),
                tex_freq=float(rng.uniform(0.05, 0.25)),
                tex_phase=float(rng.uniform(0.0, 2.0 * np.pi)),
                tex_angle=float(rng.uniform(0.0, np.pi)),
            )
        )
    return _Geometry(
        plane_near=plane_near,
        plane_far=plane_far,
        plane_tilt=plane_tilt,
        plane_albedo=rng.uniform(0.3, 0.7, size=3),
        plane_tex_freq=float(rng.uniform(0.08, 0.2)),
        plane_tex_phase=float(rng.uniform(0.0, 2.0 * np.pi)),
        objects=tuple(objects),
    )


def _plane_depth(geom: _Geometry, cfg: SceneConfig) -> np.ndarray:
    # Tilted ramp: far at the top edge, near at the bottom, direction rotated
    # by plane_tilt so the layout varies scene to scene.
    ys, xs = np.mgrid[0 : cfg.height, 0 : cfg.width].astype(np.float64)
    u = np.cos(geom.plane_tilt) * ys / max(cfg.height - 1, 1) + np.sin(geom.plane_tilt) * (
        xs / max(cfg.width - 1, 1) - 0.5
    )
    frac = np.clip(u, 0.0, 1.0)
    return geom.plane_far + (geom.plane_near - geom.plane_far) * frac


def _coverage(prim: _Primitive, xs: np.ndarray, ys: np.ndarray, x_shift: float) -> np.ndarray:
    """Antialiased occupancy in [0, 1]; edges ramp over one pixel."""
    dx = np.abs(xs - (prim.cx + x_shift))
    dy = np.abs(ys - prim.cy)
    if prim.kind == "rect":
        cov_x = np.clip(prim.half_w - dx + 0.5, 0.0, 1.0)
        cov_y = np.clip(prim.half_h - dy + 0.5, 0.0, 1.0)
        return cov_x * cov_y
    r = np.sqrt((dx / prim.half_w) ** 2 + (dy / prim.half_h) ** 2)
    edge = min(prim.half_w, prim.half_h)
    return np.clip((1.0 - r) * edge + 0.5, 0.0, 1.0)


def _texture(prim: _Primitive, xs: np.ndarray, ys: np.ndarray, x_shift: float) -> np.ndarray:
    # Texture rides on object-local coordinates so it moves with the parallax.
    u = (xs - (prim.cx + x_shift)) * np.cos(prim.tex_angle) + (ys - prim.cy) * np.sin(prim.tex_angle)
    return 0.85 + 0.15 * np.sin(2.0 * np.pi * prim.tex_freq * u + prim.tex_phase)


def _render(geom: _Geometry, cfg: SceneConfig, x_travel: float, want_rgb: bool):
    """Painter's-algorithm render at a given horizontal camera travel (pixels at d_min)."""
    h, w = cfg.height, cfg.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    d_min = cfg.depth_range[0]

    depth = _plane_depth(geom, cfg)
    plane_shift = x_travel * d_min / depth  # per-row parallax of the ramp
    plane_tex = 0.85 + 0.15 * np.sin(
        2.0 * np.pi * geom.plane_tex_freq * (xs - plane_shift + 0.31 * ys) + geom.plane_tex_phase
    )
    rgb = geom.plane_albedo[None, None, :] * plane_tex[:, :, None] if want_rgb else None
    lum = float(_LUMA @ geom.plane_albedo) * plane_tex
    depth = depth.copy()

    for prim in sorted(geom.objects, key=lambda p: -p.depth):  # far to near
        x_shift = x_travel * d_min / prim.depth
        cov = _coverage(prim, xs, ys, x_shift)
        if not np.any(cov > 0):
            continue
        tex = _texture(prim, xs, ys, x_shift)
        lum = lum * (1.0 - cov) + float(_LUMA @ prim.albedo) * tex * cov
        if want_rgb:
            obj_rgb = prim.albedo[None, None, :] * tex[:, :, None]
            rgb = rgb * (1.0 - cov[:, :, None]) + obj_rgb * cov[:, :, None]
        depth[cov > 0.5] = prim.depth

    lum = np.clip(lum, 0.0, 1.0)
    if want_rgb:
        rgb = np.clip(rgb, 0.0, 1.0)
    return lum, rgb, depth


def _render_scene(geom: _Geometry, cfg: SceneConfig):
    frames = np.empty((cfg.t_lum, cfg.height, cfg.width), dtype=np.float64)
    rgb = None
    depth = None
    denom = max(cfg.t_lum - 1, 1)
    for t in range(cfg.t_lum):
        travel = cfg.parallax_px * t / denom
        want_rgb = t == 0
        lum_t, rgb_t, depth_t = _render(geom, cfg, travel, want_rgb)
        frames[t] = lum_t
        if want_rgb:
            rgb, depth = rgb_t, depth_t
    lum_seq = LuminanceSequence(frames, dt=1.0 / cfg.freq_hz)
    return rgb, lum_seq, depth


def generate_scene(seed: int, cfg: SceneConfig) -> Scene:
    """Build a scene fully determined by (seed, cfg)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    geom = _sample_geometry(rng, cfg)
    rgb, lum_seq, depth = _render_scene(geom, cfg)
    return Scene(
        rgb=rgb,
        lum_seq=lum_seq,
        depth_gt=depth,
        domain_tag="source",
        shift_kind="none",
        seed=seed,
        config=cfg,
        geometry=geom,
    )


def apply_domain_shift(scene: Scene, kind: str, strength: float) -> Scene:
    """Return a shifted copy of the scene; strength 0 is the identity."""
    if kind not in ("none", "fog", "rain_noise", "layout"):
        raise InvalidParameterError(f"unknown shift kind {kind!r}")
    if not (0.0 <= strength <= 1.0):
        raise InvalidParameterError(f"strength must be in [0, 1], got {strength}")
    if kind == "none" or strength == 0.0:
        return scene

    cfg = scene.config
    if kind == "fog":
        d_max = cfg.depth_range[1]
        f = np.exp(-strength * scene.depth_gt / d_max)
        frames = scene.lum_seq.frames * f[None, :, :]
        rgb = scene.rgb * f[:, :, None] + AIRLIGHT * (1.0 - f[:, :, None])
        return dataclasses.replace(
            scene,
            rgb=rgb,
            lum_seq=LuminanceSequence(frames, scene.lum_seq.dt),
            shift_kind="fog",
        )

    if kind == "rain_noise":
        rng = np.random.Generator(np.random.PCG64(scene.seed + _RAIN_SEED_OFFSET))
        rate = strength * SALT_RATE_PER_STRENGTH
        frames = scene.lum_seq.frames.copy()
        salt = rng.random(frames.shape) < rate
        frames[salt] = 1.0
        return dataclasses.replace(
            scene,
            lum_seq=LuminanceSequence(frames, scene.lum_seq.dt),
            shift_kind="rain_noise",
        )

    # layout: re-place every object from a disjoint stream, keep sizes/depths/albedos
    rng = np.random.Generator(np.random.PCG64(scene.seed + _LAYOUT_SEED_OFFSET))
    moved = tuple(
        dataclasses.replace(
            prim,
            cx=float(rng.uniform(0.1, 0.9) * cfg.width),
            cy=float(rng.uniform(0.1, 0.9) * cfg.height),
        )
        for prim in scene.geometry.objects
    )
    geom = dataclasses.replace(scene.geometry, objects=moved)
    rgb, lum_seq, depth = _render_scene(geom, cfg)
    return dataclasses.replace(
        scene, rgb=rgb, lum_seq=lum_seq, depth_gt=depth, geometry=geom, shift_kind="layout"
    )


@dataclass(frozen=True)
class DatasetConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    n_source: int = 200
    n_target: int = 200
    shift_kind: str = "fog"
    shift_strength: float = 0.7
    seed: int = 0


@dataclass(frozen=True)
class DatasetManifest:
    samples: tuple[dict, ...]
    seed: int
    config: dict

    def to_json(self) -> str:
        payload = {"samples": list(self.samples), "seed": self.seed, "config": self.config}
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "DatasetManifest":
        payload = json.loads(text)
        return DatasetManifest(
            samples=tuple(payload["samples"]), seed=payload["seed"], config=payload["config"]
        )

    def records(self, domain: str | None = None) -> list[dict]:
        return [s for s in self.samples if domain is None or s["domain"] == domain]


def _config_snapshot(cfg: DatasetConfig) -> dict:
    snap = dataclasses.asdict(cfg)
    # tuples are not JSON-stable; normalize to lists
    return json.loads(json.dumps(snap))


def scene_seed(cfg: DatasetConfig, domain: str, index: int) -> int:
    base = cfg.seed if domain == "source" else cfg.seed + _TARGET_SEED_OFFSET
    return base + index


def build_scene(cfg: DatasetConfig, domain: str, index: int) -> Scene:
    """Generate (and for targets, shift) the canonical scene for one record."""
    scene = generate_scene(scene_seed(cfg, domain, index), cfg.scene)
    if domain == "target":
        scene = apply_domain_shift(scene, cfg.shift_kind, cfg.shift_strength)
    return dataclasses.replace(scene, domain_tag=domain)


def encode_scene_stream(scene: Scene):
    """Reference spike encode of a scene's luminance: interpolate, then simulate."""
    cfg = scene.config
    lum = interpolate_frames(scene.lum_seq, cfg.interp_factor)
    return simulate_spikes(lum, theta=cfg.theta)


def make_dataset(cfg: DatasetConfig, out_dir: str | os.PathLike) -> DatasetManifest:
    """Write a full dataset (PPM + .spk + raw depth per record) and its manifest."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    samples: list[dict] = []
    try:
        for domain, count in (("source", cfg.n_source), ("target", cfg.n_target)):
            for i in range(count):
                scene = build_scene(cfg, domain, i)
                sid = f"{domain}_{i:04d}"
                rel = {
                    "rgb": f"{sid}_rgb.ppm",
                    "spk": f"{sid}.spk",
                    "depth": f"{sid}_depth.f32",
                }
                write_ppm(
                    np.clip(np.floor(scene.rgb * 255.0 + 0.5), 0, 255).astype(np.uint8),
                    os.path.join(out_dir, rel["rgb"]),
                )
                written.append(rel["rgb"])
                write_spk(encode_scene_stream(scene), os.path.join(out_dir, rel["spk"]))
                written.append(rel["spk"])
                write_depth(scene.depth_gt, os.path.join(out_dir, rel["depth"]))
                written.append(rel["depth"])
                samples.append(
                    {
                        "id": sid,
                        "rgb": rel["rgb"],
                        "spk": rel["spk"],
                        "depth": rel["depth"],
                        "domain": domain,
                        "shift": scene.shift_kind,
                    }
                )
        manifest = DatasetManifest(
            samples=tuple(samples), seed=cfg.seed, config=_config_snapshot(cfg)
        )
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
            f.write(manifest.to_json())
        return manifest
    except OSError:
        for rel in written:
            path = os.path.join(out_dir, rel)
            if os.path.exists(path):
                os.remove(path)
        raise


def load_manifest(path: str | os.PathLike) -> tuple[DatasetManifest, str]:
    """Read a manifest; returns (manifest, directory holding the referenced files)."""
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    with open(path, "r", encoding="utf-8") as f:
        manifest = DatasetManifest.from_json(f.read())
    return manifest, os.path.dirname(os.path.abspath(path))
