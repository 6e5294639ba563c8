"""Tour of the spike simulator and the .spk container.

Simulates integrate-and-fire streams from simple luminance inputs, shows the
exact count law for constant luminance, compares carry vs hard reset, and
roundtrips a stream through the binary container.

Run:  python3 demos/01_spike_simulation.py
"""

import os
import tempfile

import numpy as np

from bicross.spike import (
    LuminanceSequence,
    bin_stream,
    interpolate_frames,
    rate_image,
    read_spk,
    simulate_spikes,
    write_spk,
)

# -- constant luminance: the count law ---------------------------------------

theta = 0.4
steps = 24
for value in (0.1, 0.2, 0.4):
    lum = LuminanceSequence(np.full((steps, 1, 1), value), dt=1.0)
    stream = simulate_spikes(lum, theta=theta)
    count = int(stream.bits.sum())
    print(f"I*dt={value:.1f}, theta={theta}: {count} spikes in {steps} steps "
          f"(law: floor({steps}*{value}/{theta}) = {int(np.floor(steps * value / theta))})")
    print("  pattern:", "".join(str(b) for b in stream.bits[:, 0, 0]))

# -- carry vs hard reset ------------------------------------------------------

lum = LuminanceSequence(np.full((9, 1, 1), 0.45), dt=1.0)
carry = simulate_spikes(lum, theta=1.0, reset="carry")
hard = simulate_spikes(lum, theta=1.0, reset="hard")
print("\nI*dt=0.45, theta=1, 9 steps:")
print("  carry reset:", "".join(str(b) for b in carry.bits[:, 0, 0]), "->", carry.bits.sum(), "spikes")
print("  hard reset: ", "".join(str(b) for b in hard.bits[:, 0, 0]), "->", hard.bits.sum(),
      "spikes (overshoot discarded)")

# -- temporal upsampling then simulation --------------------------------------

ramp = LuminanceSequence(np.linspace(0.0, 1.0, 5).reshape(5, 1, 1), dt=1.0 / 5.0)
dense = interpolate_frames(ramp, factor=4)
print(f"\ninterpolated {ramp.t_lum} frames -> {dense.t_lum} frames, dt {ramp.dt} -> {dense.dt}")
stream = simulate_spikes(dense, theta=0.05)
print("spikes along the ramp:", "".join(str(b) for b in stream.bits[:, 0, 0]))

# -- container roundtrip and firing-rate image ---------------------------------

rng = np.random.default_rng(42)
textured = LuminanceSequence(rng.random((32, 24, 24)) * 0.8, dt=1.0 / 32.0)
stream = simulate_spikes(textured, theta=0.05)
with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "demo.spk")
    write_spk(stream, path)
    size = os.path.getsize(path)
    back = read_spk(path)
    print(f"\nwrote {stream.shape} stream to .spk: {size} bytes "
          f"(header 34 + {size - 34} packed payload)")
    print("roundtrip bit-exact:", np.array_equal(back.bits, stream.bits))

volume = bin_stream(stream, t_start=8, t_model=16)
print("temporal slice [8, 24):", volume.planes.shape)
img = rate_image(stream)
print(f"rate image: min={img.min()} max={img.max()} (255 = fires every step)")
