"""Building training-style inputs: mix a tone with noise, then degrade it.

Writes three WAV files to the directory given as the first argument
(default: ./demo_audio).
"""

import pathlib
import sys

import numpy as np

from ssmdenoise import AudioBuffer, DegradeSpec, degrade, snr_db, write_wav
from ssmdenoise.audio import mix_components

out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "demo_audio")
out.mkdir(exist_ok=True)

rng = np.random.default_rng(0)
t = np.arange(32000) / 16000
tone = np.sin(2 * np.pi * 440 * t) + 0.5 * np.sin(2 * np.pi * 1320 * t)
mix = mix_components(tone, rng.standard_normal(t.size), snr_db=5.0, level_db=-20.0)
print(f"mixed at {snr_db(mix.clean, mix.noisy.samples):.2f} dB SNR, "
      f"RMS {20 * np.log10(np.sqrt(np.mean(mix.noisy.samples ** 2))):.2f} dBFS, {mix.clipped} clipped")

write_wav(AudioBuffer(mix.clean), out / "clean.wav")
write_wav(mix.noisy, out / "noisy.wav")

# telephone-ish: 8 kHz content held back up to 16 kHz, 8-bit mu-law
lofi = degrade(mix.noisy, DegradeSpec(target_rate=8000, bits=8))
write_wav(lofi, out / "noisy_8k_8bit.wav")
print(f"distinct sample values after 8-bit mu-law: {np.unique(lofi.samples).size}")
print(f"wrote clean.wav, noisy.wav, noisy_8k_8bit.wav to {out}/")
