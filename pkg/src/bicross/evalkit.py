"""Depth metrics, the finite-difference gradient checker, map rendering,
and run reports."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .autodiff import Tensor
from .errors import DegenerateInputError, InvalidInputError
from .fileio import write_pgm

DESK_EVAL_D_MIN = 1e-3
DESK_EVAL_D_MAX = 20.0


@dataclass(frozen=True)
class Metrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    delta1: float
    delta2: float
    delta3: float
    n_valid: int

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(
    pred: np.ndarray,
    gt: np.ndarray,
    d_min: float = DESK_EVAL_D_MIN,
    d_max: float = DESK_EVAL_D_MAX,
) -> Metrics:
    """Standard depth metrics over the region where gt lies in [d_min, d_max].

    Predictions are clamped to the same range before scoring.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {gt.shape}")
    valid = (gt >= d_min) & (gt <= d_max)
    n = int(valid.sum())
    if n == 0:
        raise DegenerateInputError("compute_metrics: no valid pixels")
    p = np.clip(pred[valid], d_min, d_max)
    g = gt[valid]
    err = p - g
    ratio = np.maximum(p / g, g / p)
    return Metrics(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err**2 / g)),
        rmse=float(np.sqrt(np.mean(err**2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        n_valid=n,
    )


def mean_metrics(per_sample: list[Metrics]) -> Metrics:
    """Average per-sample metrics (each sample weighted equally)."""
    if not per_sample:
        raise DegenerateInputError("mean_metrics: no samples")
    return Metrics(
        abs_rel=float(np.mean([m.abs_rel for m in per_sample])),
        sq_rel=float(np.mean([m.sq_rel for m in per_sample])),
        rmse=float(np.mean([m.rmse for m in per_sample])),
        delta1=float(np.mean([m.delta1 for m in per_sample])),
        delta2=float(np.mean([m.delta2 for m in per_sample])),
        delta3=float(np.mean([m.delta3 for m in per_sample])),
        n_valid=int(sum(m.n_valid for m in per_sample)),
    )


def gradcheck(
    loss_probe,
    params: dict[str, Tensor],
    epsilon: float = 1e-5,
    samples_per_param: int = 64,
    seed: int = 0,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``loss_probe`` rebuilds the scalar loss from the current values of
    ``params`` on every call.  Returns the max relative error over a seeded
    sample of coordinates (at least ``samples_per_param`` per parameter, the
    whole parameter when it is smaller).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    for p in params.values():
        p.requires_grad = True
        p.grad = None
    loss = loss_probe()
    if not np.isfinite(loss.item()):
        raise InvalidInputError("gradcheck: probe value is non-finite")
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    max_rel = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        k = min(samples_per_param, flat.size)
        idxs = rng.choice(flat.size, size=k, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = loss_probe().item()
            flat[i] = orig - epsilon
            f_minus = loss_probe().item()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise InvalidInputError(f"gradcheck: non-finite probe while perturbing {name!r}")
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            an = analytic[name].reshape(-1)[i]
            denom = max(abs(fd), abs(an))
            err = abs(fd - an) if denom < 1e-10 else abs(fd - an) / denom
            max_rel = max(max_rel, err)
    return max_rel


def render_map(values: np.ndarray, path: str | os.PathLike) -> None:
    """Min-max normalize a map to 8-bit grayscale; constant maps become mid-gray."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("render_map: non-finite values")
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        img = np.floor((values - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)
    else:
        img = np.full(values.shape, 128, dtype=np.uint8)
    write_pgm(img, path)


def rank_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation between two flattened arrays."""
    rho = stats.spearmanr(np.ravel(a), np.ravel(b)).statistic
    return float(rho)


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True).encode("utf-8")
    return hashlib.sha256(canonical).hexdigest()[:16]


_METRIC_COLS = ("abs_rel", "sq_rel", "rmse", "delta1", "delta2", "delta3")


def read_metric_log(run_dir: str | os.PathLike) -> list[dict]:
    path = os.path.join(os.fspath(run_dir), "metrics.jsonl")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing metric log: expected {path}")
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def report(run_dir: str | os.PathLike) -> str:
    """Render the per-stage evaluation table and the baseline-vs-adapted comparison.

    Writes ``report.txt`` and ``summary.json`` into the run directory and
    returns the text.
    """
    run_dir = os.fspath(run_dir)
    rows = read_metric_log(run_dir)
    eval_rows = [r for r in rows if r.get("kind") == "eval"]
    warnings = []
    if not eval_rows:
        warnings.append("no evaluation rows found in metrics.jsonl")

    lines = ["stage/split            abs_rel   sq_rel     rmse   delta1   delta2   delta3"]
    for r in eval_rows:
        label = f"{r['stage']}/{r.get('split', '?')}"
        lines.append(
            f"{label:<20} {r['abs_rel']:>8.4f} {r['sq_rel']:>8.4f} {r['rmse']:>8.4f}"
            f" {r['delta1']:>8.4f} {r['delta2']:>8.4f} {r['delta3']:>8.4f}"
        )

    def find(stage: str) -> dict | None:
        hits = [r for r in eval_rows if r["stage"] == stage and r.get("split") == "target_test"]
        return hits[-1] if hits else None

    base = find("baseline")
    ours = find("domain")
    comparison = None
    if base and ours:
        improvement = (base["abs_rel"] - ours["abs_rel"]) / base["abs_rel"]
        comparison = {
            "baseline_abs_rel": base["abs_rel"],
            "bicross_abs_rel": ours["abs_rel"],
            "abs_rel_improvement": improvement,
            "baseline_delta1": base["delta1"],
            "bicross_delta1": ours["delta1"],
        }
        lines.append("")
        lines.append(
            f"target abs_rel: source-only {base['abs_rel']:.4f} -> adapted {ours['abs_rel']:.4f}"
            f"  ({improvement * 100.0:+.1f}% relative)"
        )
    else:
        warnings.append("baseline/domain target evaluations incomplete; comparison skipped")

    for w in warnings:
        lines.append(f"WARNING: {w}")
    text = "\n".join(lines) + "\n"

    config_rows = [r for r in rows if r.get("kind") == "config"]
    cfg = config_rows[-1]["config"] if config_rows else {}
    summary = {
        "stages": [
            {"stage": r["stage"], "split": r.get("split"), "metrics": {c: r[c] for c in _METRIC_COLS}}
            for r in eval_rows
        ],
        "comparison": comparison,
        "config_hash": config_hash(cfg),
        "warnings": warnings,
    }
    with open(os.path.join(run_dir, "report.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    with open(os.path.join(run_dir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return text
