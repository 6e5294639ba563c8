"""Generate the cross-implementation parity fixtures.

Twenty luminance inputs (seed-42 stream, mixed .lum files and PGM frame
directories, odd widths to exercise line padding) plus, for each, the
reference encoder's .spk bytes and the reference firing-rate PGM.

Run from the repository root after installing the Python package:

    python3 frontend/scripts/make_fixtures.py
"""

import json
import os
import shutil

import numpy as np

from bicross.fileio import write_lum, write_pgm
from bicross.spike import LuminanceSequence, interpolate_frames, rate_image, simulate_spikes, write_spk

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURE_DIR = os.path.join(HERE, "..", "fixtures")


def reference_encode(frames: np.ndarray, theta: float, interp: int, freq: float, out_path: str):
    lum = LuminanceSequence(frames.astype(np.float64), dt=1.0 / freq)
    stream = simulate_spikes(interpolate_frames(lum, interp), theta=theta)
    write_spk(stream, out_path)
    return stream


def main() -> None:
    rng = np.random.default_rng(42)
    if os.path.isdir(FIXTURE_DIR):
        shutil.rmtree(FIXTURE_DIR)
    os.makedirs(FIXTURE_DIR)

    cases = []
    # case 0: the canonical 3x5x7 seed-42 fixture
    specs = [dict(t=3, h=5, w=7, theta=0.4, interp=1, freq=1280.0, kind="lum")]
    # varied shapes, thresholds, interpolation factors, input kinds
    for i in range(19):
        t = int(rng.integers(2, 24))
        h = int(rng.integers(1, 20))
        w = int(rng.integers(1, 40))  # odd widths exercise the per-line padding
        theta = float(rng.uniform(0.001, 0.02))
        interp = int(rng.integers(1, 5))
        freq = float(rng.choice([32.0, 256.0, 1280.0]))
        kind = "pgm_dir" if i % 4 == 0 else "lum"
        specs.append(dict(t=t, h=h, w=w, theta=theta, interp=interp, freq=freq, kind=kind))

    for idx, spec in enumerate(specs):
        name = f"case_{idx:02d}"
        frames = rng.random((spec["t"], spec["h"], spec["w"]))
        if spec["kind"] == "pgm_dir":
            # quantize to what the 8-bit frames can carry; both sides read v/255
            frames8 = np.floor(frames * 255.0 + 0.5).astype(np.uint8)
            in_rel = f"{name}_frames"
            in_dir = os.path.join(FIXTURE_DIR, in_rel)
            os.makedirs(in_dir)
            for ti in range(spec["t"]):
                write_pgm(frames8[ti], os.path.join(in_dir, f"frame_{ti:03d}.pgm"))
            frames = frames8.astype(np.float64) / 255.0
        else:
            in_rel = f"{name}.lum"
            write_lum(frames.astype(np.float32), os.path.join(FIXTURE_DIR, in_rel))
            frames = frames.astype(np.float32).astype(np.float64)

        spk_rel = f"{name}.spk"
        stream = reference_encode(
            frames, spec["theta"], spec["interp"], spec["freq"], os.path.join(FIXTURE_DIR, spk_rel)
        )
        rate_rel = f"{name}_rate.pgm"
        write_pgm(rate_image(stream), os.path.join(FIXTURE_DIR, rate_rel))

        cases.append(
            {
                "name": name,
                "input": in_rel,
                "kind": spec["kind"],
                "theta": spec["theta"],
                "interp": spec["interp"],
                "freq": spec["freq"],
                "expected_spk": spk_rel,
                "expected_rate_pgm": rate_rel,
                "total_spikes": int(stream.bits.sum()),
            }
        )

    with open(os.path.join(FIXTURE_DIR, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(cases, f, indent=2, sort_keys=True)
    print(f"wrote {len(cases)} fixtures to {FIXTURE_DIR}")


if __name__ == "__main__":
    main()
