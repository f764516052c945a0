"""Audio I/O and the signal degradations used to build training inputs."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np
import scipy.io.wavfile as wavfile
import scipy.signal as ss

from .errors import AudioFormatError, SilentSignalError

log = logging.getLogger(__name__)

WORKING_RATE = 16000
DEFAULT_MU = 255
ANTIALIAS_TAPS = 63
ANTIALIAS_FRACTION = 0.45
SILENCE_POWER = 1e-12


@dataclass(frozen=True)
class AudioBuffer:
    """Mono floating-point samples nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = WORKING_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).reshape(-1)
        if not np.all(np.isfinite(s)):
            raise AudioFormatError("audio contains non-finite samples")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def rms(self):
        return float(np.sqrt(np.mean(self.samples**2))) if self.samples.size else 0.0


@dataclass(frozen=True)
class DegradeSpec:
    target_rate: int = WORKING_RATE
    bits: int = 16
    mu: int = DEFAULT_MU

    def __post_init__(self):
        if self.target_rate not in (4000, 8000, 16000):
            raise AudioFormatError(f"unsupported target rate {self.target_rate} (use 4000, 8000 or 16000)")
        if self.bits not in (4, 8, 16):
            raise AudioFormatError(f"unsupported bit depth {self.bits} (use 4, 8 or 16)")

    @property
    def factor(self):
        return WORKING_RATE // self.target_rate


# -- WAV ------------------------------------------------------------------------


def read_wav(source):
    """Read a PCM or float WAV from a path or binary file object.

    Integer samples are scaled to [-1, 1); stereo is averaged to mono.
    """
    try:
        rate, data = wavfile.read(source)
    except (ValueError, EOFError) as exc:
        raise AudioFormatError(f"not a readable WAV file: {exc}") from exc
    if data.dtype == np.uint8:
        samples = (data.astype(float) - 128.0) / 128.0
    elif data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(float)
    else:
        raise AudioFormatError(f"unsupported sample type {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioBuffer(samples, int(rate))


def write_wav(buffer, sink):
    """Write 16-bit PCM mono; samples are clipped to [-1, 1]."""
    pcm = np.clip(np.round(buffer.samples * 32768.0), -32768, 32767).astype("<i2")
    wavfile.write(sink, int(buffer.sample_rate), pcm)


def wav_bytes(buffer):
    bio = io.BytesIO()
    write_wav(buffer, bio)
    return bio.getvalue()


# -- mu-law ---------------------------------------------------------------------


def mulaw_compress(x, mu=DEFAULT_MU):
    x = np.clip(x, -1.0, 1.0)
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def mulaw_expand(y, mu=DEFAULT_MU):
    # (1 + mu)**1 - 1 == mu exactly, so the endpoints map back to +-1
    return np.sign(y) * (np.power(1.0 + mu, np.abs(y)) - 1.0) / mu


def mulaw_levels(bits):
    """Number of positive midtread levels; ``2 * K + 1 == 2**bits - 1`` in total."""
    return 2 ** (bits - 1) - 1


def mulaw_quantize(y, bits):
    """Round to the nearest of the levels ``q / K``, ties away from zero (keeps it odd)."""
    K = mulaw_levels(bits)
    return np.sign(y) * np.floor(np.abs(y) * K + 0.5) / K


def mulaw_degrade(buffer, bits, mu=DEFAULT_MU):
    if not 2 <= bits <= 16:
        raise AudioFormatError(f"bits must be in [2, 16], got {bits}")
    y = mulaw_quantize(mulaw_compress(buffer.samples, mu), bits)
    out = np.clip(mulaw_expand(y, mu), -1.0, 1.0)
    return AudioBuffer(out, buffer.sample_rate)


# -- Downsample and repeat --------------------------------------------------------


def antialias_filter(factor, taps=ANTIALIAS_TAPS):
    """Linear-phase FIR low-pass at 0.45x the Nyquist rate after decimation."""
    return ss.firwin(taps, ANTIALIAS_FRACTION / factor)


def downsample_and_repeat(buffer, factor, antialias=True):
    """Decimate by ``factor`` and hold each kept sample ``factor`` times.

    The result keeps the input length and the 16 kHz rate tag, so a network
    built for 16 kHz can consume it unchanged.
    """
    if factor not in (1, 2, 4):
        raise AudioFormatError(f"unsupported downsampling factor {factor} (use 1, 2 or 4)")
    if buffer.sample_rate != WORKING_RATE:
        raise AudioFormatError(f"expected {WORKING_RATE} Hz audio, got {buffer.sample_rate}")
    x = buffer.samples
    if factor == 1:
        return AudioBuffer(x.copy(), buffer.sample_rate)
    if antialias:
        x = np.convolve(x, antialias_filter(factor), mode="same")
    held = np.repeat(x[::factor], factor)[: buffer.samples.size]
    return AudioBuffer(np.clip(held, -1.0, 1.0), buffer.sample_rate)


def degrade(buffer, spec, antialias=True):
    """Downsample-and-repeat, then mu-law quantize, in that order."""
    out = downsample_and_repeat(buffer, spec.factor, antialias=antialias)
    if spec.bits < 16:
        out = mulaw_degrade(out, spec.bits, spec.mu)
    return out


# -- Mixing -------------------------------------------------------------------------


@dataclass(frozen=True)
class Mixture:
    """A leveled noisy mix together with its leveled components.

    ``noisy == clip(clean + noise)``; ``gain`` is the leveling factor already
    applied to both components and ``clipped`` counts clipped samples.
    """

    noisy: AudioBuffer
    clean: np.ndarray
    noise: np.ndarray
    gain: float
    noise_scale: float
    clipped: int


def power(x):
    return float(np.mean(np.square(x)))


def fit_length(noise, length, rng):
    """Tile ``noise`` as needed and cut ``length`` samples at a random offset."""
    reps = -(-length // noise.size) + 1
    tiled = np.tile(noise, reps)
    start = int(rng.integers(0, noise.size))
    return tiled[start : start + length]


def mix_components(clean, noise, snr_db, level_db, seed=0):
    c = np.asarray(getattr(clean, "samples", clean), dtype=float)
    n = np.asarray(getattr(noise, "samples", noise), dtype=float)
    pc = power(c)
    if pc < SILENCE_POWER:
        raise SilentSignalError(f"clean signal power {pc:.3g} is below {SILENCE_POWER}")
    if n.size != c.size:
        n = fit_length(n, c.size, np.random.default_rng(seed))
    pn = power(n)
    if pn < SILENCE_POWER:
        raise SilentSignalError(f"noise power {pn:.3g} is below {SILENCE_POWER}")
    scale = np.sqrt(pc / (pn * 10.0 ** (snr_db / 10.0)))
    mix = c + scale * n
    gain = 10.0 ** (level_db / 20.0) / np.sqrt(power(mix))
    leveled = gain * mix
    clipped = int(np.count_nonzero(np.abs(leveled) > 1.0))
    if clipped:
        log.info("mix_at_snr: clipped %d of %d samples", clipped, leveled.size)
    rate = getattr(clean, "sample_rate", WORKING_RATE)
    return Mixture(
        noisy=AudioBuffer(np.clip(leveled, -1.0, 1.0), rate),
        clean=gain * c,
        noise=gain * scale * n,
        gain=float(gain),
        noise_scale=float(scale),
        clipped=clipped,
    )


def mix_at_snr(clean, noise, snr_db, level_db, seed=0):
    """Mix at ``snr_db`` and level the sum to ``level_db`` dBFS RMS (then hard clip).

    Noise shorter or longer than ``clean`` is tiled/cut at a seeded offset.
    """
    return mix_components(clean, noise, snr_db, level_db, seed).noisy


def snr_db(reference, estimate):
    """``10 log10(|ref|^2 / |ref - est|^2)``."""
    reference = np.asarray(reference, dtype=float)
    err = reference - np.asarray(estimate, dtype=float)
    return float(10.0 * np.log10(np.sum(reference**2) / np.sum(err**2)))
