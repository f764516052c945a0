"""Desk-scale training: SmoothL1 loss, AdamW and a toy denoising task.

The toy task mixes a few random-phase tones (frequencies fixed per seed,
between 200 and 3000 Hz) with white Gaussian noise at 0 dB SNR, levels the
mix to a random -35..-15 dBFS, and trains a reduced hourglass network to
recover the leveled clean signal. Training runs the batch (FFT) path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .audio import mix_components, snr_db
from .config import BlockSpec, NetworkConfig
from .errors import DivergenceError
from .network import backward, build_network, forward_batch
from .ssm import discretize_zoh

SMOOTH_L1_BETA = 0.5
LEARNING_RATE = 5e-3
WEIGHT_DECAY = 0.02
WARMUP_FRACTION = 0.01
GRAD_CLIP = 1.0
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def smooth_l1(pred, target, beta=SMOOTH_L1_BETA):
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if beta <= 0:
        raise ValueError("beta must be positive")
    d = np.abs(pred - target)
    return float(np.mean(np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)))


def smooth_l1_grad(pred, target, beta=SMOOTH_L1_BETA):
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return np.where(np.abs(d) < beta, d / beta, np.sign(d)) / d.size


# -- Optimizer ------------------------------------------------------------------


def lr_at(step, total, base=LEARNING_RATE, warmup=WARMUP_FRACTION):
    """Linear warmup over ``warmup * total`` steps, then cosine decay to zero."""
    warm = max(1, round(warmup * total))
    if step < warm:
        return base * (step + 1) / warm
    progress = (step - warm) / max(1, total - warm)
    return base * 0.5 * (1.0 + math.cos(math.pi * progress))


def decays(name):
    """Weight decay applies to weight matrices only (projections, PreConv taps, SSM B and C)."""
    return name.endswith((".weight", ".ssm.B", ".ssm.C")) and ".norm." not in name


def is_log_param(name):
    """Timesteps are optimized as ``log(dt)`` so they stay positive."""
    return name.endswith(".ssm.dt")


def clip_by_global_norm(grads, max_norm=GRAD_CLIP):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


@dataclass
class AdamW:
    lr: float = LEARNING_RATE
    weight_decay: float = WEIGHT_DECAY
    betas: tuple = ADAM_BETAS
    eps: float = ADAM_EPS
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params, grads, lr=None):
        """Update ``params`` in place."""
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.t += 1
        for name, g in grads.items():
            p = params[name]
            if is_log_param(name):
                g = g * p
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / (1 - b1**self.t)) / (np.sqrt(v / (1 - b2**self.t)) + self.eps)
            if is_log_param(name):
                params[name] = np.exp(np.log(p) - lr * update)
                continue
            if decays(name):
                p *= 1 - lr * self.weight_decay
            p -= lr * update


# -- Toy task --------------------------------------------------------------------


def toy_config(h=64, sample_rate=16000):
    """Two encoder and two decoder blocks, one neck and one output block."""
    blocks = (
        BlockSpec("encoder", 4, 8),
        BlockSpec("encoder", 4, 16, has_preconv=True),
        BlockSpec("neck", 1, 16),
        BlockSpec("decoder", 4, 8, has_preconv=True),
        BlockSpec("decoder", 4, 1),
        BlockSpec("output", 1, 1),
    )
    return NetworkConfig(sample_rate=sample_rate, blocks=blocks, ssm_state_size=h)


@dataclass
class ToyTask:
    seed: int = 0
    length: int = 2048
    sample_rate: int = 16000
    n_tones: int = 3
    fmin: float = 200.0
    fmax: float = 3000.0
    snr_db: float = 0.0
    level_range: tuple = (-35.0, -15.0)

    def __post_init__(self):
        rng = np.random.default_rng([self.seed, 0])
        self.freqs = np.sort(rng.uniform(self.fmin, self.fmax, self.n_tones))

    def batch(self, size, rng):
        """``(noisy, clean)`` arrays of shape ``(size, 1, length)``."""
        t = np.arange(self.length) / self.sample_rate
        noisy = np.empty((size, 1, self.length))
        clean = np.empty_like(noisy)
        for b in range(size):
            phases = rng.uniform(0, 2 * np.pi, self.n_tones)
            amps = rng.uniform(0.5, 1.0, self.n_tones)
            tone = (amps[:, None] * np.sin(2 * np.pi * self.freqs[:, None] * t + phases[:, None])).sum(axis=0)
            noise = rng.standard_normal(self.length)
            level = rng.uniform(*self.level_range)
            mix = mix_components(tone, noise, self.snr_db, level, seed=int(rng.integers(2**31)))
            noisy[b, 0] = mix.noisy.samples
            clean[b, 0] = mix.clean
        return noisy, clean


def max_abar(net):
    return max(
        float(np.abs(discretize_zoh(net.ssm(lay.name)).abar).max()) for lay in net.layouts()
    )


def train_step(net, opt, noisy, clean, lr):
    """One optimizer step; returns ``(loss, grad_norm)``."""
    out, tape = forward_batch(net, noisy, training=True, return_tape=True)
    loss = smooth_l1(out, clean)
    grads, _ = backward(net, tape, smooth_l1_grad(out, clean))
    grads, norm = clip_by_global_norm(grads)
    opt.step(net.params, grads, lr=lr)
    return loss, norm


def evaluate(net, noisy, clean):
    out = forward_batch(net, noisy)
    return snr_db(clean.ravel(), out.ravel())


def train_toy(steps, seed=0, batch_size=8, length=2048, h=64, metrics_sink=None, eval_size=16):
    """Train the reduced network on the toy task.

    Returns ``(net, metrics)``; ``metrics`` holds per-step ``loss``, ``lr``
    and ``max_abar`` lists plus held-out ``input_snr_db`` and
    ``output_snr_db``. When ``metrics_sink`` is given, one JSON object per
    step is written to it.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    cfg = toy_config(h=h)
    if length % cfg.total_factor:
        raise ValueError(f"length must be a multiple of {cfg.total_factor}")
    net = build_network(cfg, seed=seed)
    task = ToyTask(seed=seed, length=length, sample_rate=cfg.sample_rate)
    rng = np.random.default_rng([seed, 1])
    held_noisy, held_clean = task.batch(eval_size, np.random.default_rng([seed, 2]))
    opt = AdamW()
    history = {"loss": [], "lr": [], "max_abar": [], "grad_norm": []}
    for step in range(steps):
        noisy, clean = task.batch(batch_size, rng)
        lr = lr_at(step, steps)
        loss, norm = train_step(net, opt, noisy, clean, lr)
        if not math.isfinite(loss):
            raise DivergenceError(step, loss)
        history["loss"].append(loss)
        history["lr"].append(lr)
        history["grad_norm"].append(norm)
        history["max_abar"].append(max_abar(net))
        if metrics_sink is not None:
            metrics_sink.write(json.dumps({"step": step, "loss": loss, "lr": lr}) + "\n")
    metrics = dict(history)
    metrics["input_snr_db"] = snr_db(held_clean.ravel(), held_noisy.ravel())
    metrics["output_snr_db"] = evaluate(net, held_noisy, held_clean)
    metrics["freqs_hz"] = task.freqs.tolist()
    return net, metrics
