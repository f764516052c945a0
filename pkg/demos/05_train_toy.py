"""Train the reduced network to pull three fixed tones out of white noise.

Usage: python demos/05_train_toy.py [steps]   (default 300; 2000 takes ~5 min)
"""

import sys

from ssmdenoise import train_toy

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
net, m = train_toy(steps, seed=0)
print(f"tones: {', '.join(f'{f:.0f} Hz' for f in m['freqs_hz'])}")
for step in range(0, steps, max(1, steps // 10)):
    print(f"step {step:5d}  loss {m['loss'][step]:.3e}  lr {m['lr'][step]:.2e}")
print(f"held-out SNR: {m['input_snr_db']:.2f} dB in, {m['output_snr_db']:.2f} dB out")
print(f"largest |abar| seen: {max(m['max_abar']):.5f}")
