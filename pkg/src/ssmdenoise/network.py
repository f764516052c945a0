"""The hourglass network: weights, batch forward/backward and accounting.

Every block wraps a branch ``PreConv -> Norm -> SSM -> Act`` in a residual
connection, ``x + branch(x)``. Encoder blocks then downsample and decoder
blocks upsample first; the upsampled features receive an additive skip from
the mirrored encoder block's pre-downsample output. PreConv and Norm are
absent where the config says so (norms are dropped on single-channel
features, where normalizing over channels would erase the signal).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers
from .config import NetworkConfig
from .errors import AlignmentError
from .execution import fft_convolve
from .gradients import ssm_layer_backward
from .ssm import ContinuousSSM, discretize_zoh, init_ssm

SSM_FIELDS = ("a_r", "a_im", "B", "C", "dt")
PRECONV_INIT_NOISE = 0.01


def has_norm(lay):
    return lay.channels > 1


@dataclass
class Network:
    """A config plus its materialized weights.

    ``params`` maps names such as ``"enc1.ssm.C"`` to learnable arrays;
    ``buffers`` holds BatchNorm running statistics.
    """

    config: NetworkConfig
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    def ssm(self, block):
        p = self.params
        return ContinuousSSM(*(p[f"{block}.ssm.{k}"] for k in SSM_FIELDS))

    def layouts(self):
        return self.config.layout()

    def copy(self):
        return Network(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )


def expected_shapes(cfg):
    """``(params, buffers)``: ordered ``{name: shape}`` for a config."""
    h = cfg.ssm_state_size
    params, buffers = {}, {}
    for lay in cfg.layout():
        name, c = lay.name, lay.channels
        r = lay.spec.resample_factor
        if lay.spec.stage == "decoder":
            params[f"{name}.up.weight"] = (c, lay.in_channels // r)
            params[f"{name}.up.bias"] = (c,)
        if lay.spec.has_preconv:
            params[f"{name}.preconv.weight"] = (c, 3)
            params[f"{name}.preconv.bias"] = (c,)
        if has_norm(lay):
            params[f"{name}.norm.weight"] = (c,)
            params[f"{name}.norm.bias"] = (c,)
            if lay.spec.norm == "batch":
                buffers[f"{name}.norm.running_mean"] = (c,)
                buffers[f"{name}.norm.running_var"] = (c,)
        params[f"{name}.ssm.a_r"] = (h,)
        params[f"{name}.ssm.a_im"] = (h,)
        params[f"{name}.ssm.B"] = (h, c)
        params[f"{name}.ssm.C"] = (c, h)
        params[f"{name}.ssm.dt"] = (h,)
        if lay.spec.stage == "encoder":
            params[f"{name}.down.weight"] = (lay.out_channels, c * r)
            params[f"{name}.down.bias"] = (lay.out_channels,)
    return params, buffers


def build_network(cfg, seed=0):
    rng = np.random.default_rng(seed)
    h = cfg.ssm_state_size
    params, buffers = {}, {}
    for lay in cfg.layout():
        name, c = lay.name, lay.channels
        r = lay.spec.resample_factor
        if lay.spec.stage == "decoder":
            fan_in = lay.in_channels // r
            params[f"{name}.up.weight"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (c, fan_in))
            params[f"{name}.up.bias"] = np.zeros(c)
        if lay.spec.has_preconv:
            w = np.tile([0.0, 1.0, 0.0], (c, 1)) + rng.normal(0.0, PRECONV_INIT_NOISE, (c, 3))
            params[f"{name}.preconv.weight"] = w
            params[f"{name}.preconv.bias"] = np.zeros(c)
        if has_norm(lay):
            params[f"{name}.norm.weight"] = np.ones(c)
            params[f"{name}.norm.bias"] = np.zeros(c)
            if lay.spec.norm == "batch":
                buffers[f"{name}.norm.running_mean"] = np.zeros(c)
                buffers[f"{name}.norm.running_var"] = np.ones(c)
        ssm = init_ssm(c, c, h, seed=int(rng.integers(2**63)))
        for k in SSM_FIELDS:
            params[f"{name}.ssm.{k}"] = getattr(ssm, k)
        if lay.spec.stage == "encoder":
            fan_in = c * r
            params[f"{name}.down.weight"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (lay.out_channels, fan_in))
            params[f"{name}.down.bias"] = np.zeros(lay.out_channels)
    return Network(cfg, params, buffers)


def _as_batch(x):
    x = np.asarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    if x.ndim == 1:
        return x[None, None, :], lambda y: y[0, 0]
    if x.ndim == 2:
        if x.shape[0] != 1:
            raise ValueError(f"expected a single channel, got shape {x.shape}")
        return x[None], lambda y: y[0]
    if x.ndim == 3 and x.shape[1] == 1:
        return x, lambda y: y
    raise ValueError(f"expected (L,), (1, L) or (B, 1, L) input, got {x.shape}")


class _Runner:
    """One batch pass over the network, optionally recording a tape."""

    def __init__(self, net, dtype, training=False, record=False):
        self.net = net
        self.p = {k: v.astype(dtype, copy=False) for k, v in net.params.items()}
        self.training = training
        self.tape = {} if record else None

    def _keep(self, key, cache):
        if self.tape is not None:
            self.tape[key] = cache

    def branch(self, lay, x):
        p, name = self.p, lay.name
        h = x
        if lay.spec.has_preconv:
            h, cache = layers.preconv_forward(h, p[f"{name}.preconv.weight"], p[f"{name}.preconv.bias"])
            self._keep(f"{name}.preconv", cache)
        if has_norm(lay):
            w, b = p[f"{name}.norm.weight"], p[f"{name}.norm.bias"]
            if lay.spec.norm == "layer":
                h, cache = layers.layernorm_forward(h, w, b)
            else:
                mean = self.net.buffers[f"{name}.norm.running_mean"]
                var = self.net.buffers[f"{name}.norm.running_var"]
                if not self.training:
                    mean, var = mean.astype(h.dtype), var.astype(h.dtype)
                h, cache = layers.batchnorm_forward(h, w, b, mean, var, self.training)
            self._keep(f"{name}.norm", cache)
        self._keep(f"{name}.ssm", h)
        h = fft_convolve(h, discretize_zoh(self.net.ssm(name)))
        h, cache = layers.activation_forward(h, lay.spec.activation)
        self._keep(f"{name}.act", cache)
        return x + h

    def run(self, x):
        p = self.p
        skips = {}
        for lay in self.net.layouts():
            name, r = lay.name, lay.spec.resample_factor
            if lay.spec.stage == "decoder":
                x, cache = layers.upsample_forward(x, r, p[f"{name}.up.weight"], p[f"{name}.up.bias"])
                self._keep(f"{name}.up", cache)
                if lay.skip is not None:
                    x = x + skips[lay.skip]
            x = self.branch(lay, x)
            if lay.spec.stage == "encoder":
                skips[name] = x
                x, cache = layers.downsample_forward(x, r, p[f"{name}.down.weight"], p[f"{name}.down.bias"])
                self._keep(f"{name}.down", cache)
        return x


def forward_batch(net, x, training=False, return_tape=False):
    """Run the network over a whole signal.

    ``x`` is ``(L,)``, ``(1, L)`` or ``(B, 1, L)``; the output has the same
    shape. ``L`` must be a multiple of the total resampling factor. Float32
    input runs in single precision. With ``return_tape`` the intermediate
    caches needed by :func:`backward` are returned as well.
    """
    xb, unwrap = _as_batch(x)
    factor = net.config.total_factor
    if xb.shape[-1] % factor or xb.shape[-1] == 0:
        raise AlignmentError(f"input length {xb.shape[-1]} is not a positive multiple of {factor}")
    runner = _Runner(net, xb.dtype, training=training, record=return_tape)
    y = runner.run(xb)
    if return_tape:
        return unwrap(y), runner.tape
    return unwrap(y)


def _branch_backward(net, lay, g, tape, grads):
    name = lay.name
    gh, _ = layers.activation_backward(g, tape[f"{name}.act"])
    u = tape[f"{name}.ssm"]
    gh, bundle = ssm_layer_backward(gh, u, net.ssm(name))
    for k, v in bundle.as_dict().items():
        grads[f"{name}.ssm.{k}"] = v
    if has_norm(lay):
        cache = tape[f"{name}.norm"]
        back = layers.layernorm_backward if lay.spec.norm == "layer" else layers.batchnorm_backward
        gh, pg = back(gh, cache)
        grads[f"{name}.norm.weight"], grads[f"{name}.norm.bias"] = pg["weight"], pg["bias"]
    if lay.spec.has_preconv:
        gh, pg = layers.preconv_backward(gh, tape[f"{name}.preconv"])
        grads[f"{name}.preconv.weight"], grads[f"{name}.preconv.bias"] = pg["weight"], pg["bias"]
    return g + gh


def backward(net, tape, grad_out):
    """Gradients of a scalar loss given ``dloss/doutput``.

    ``tape`` comes from ``forward_batch(..., return_tape=True)``. Returns
    ``(grads, grad_input)`` with ``grads`` keyed like ``net.params``.
    """
    g, unwrap = _as_batch(np.asarray(grad_out, dtype=float))
    grads = {}
    skip_grads = {}
    for lay in reversed(net.layouts()):
        name = lay.name
        if lay.spec.stage == "encoder":
            g, pg = layers.downsample_backward(g, tape[f"{name}.down"])
            grads[f"{name}.down.weight"], grads[f"{name}.down.bias"] = pg["weight"], pg["bias"]
            g = g + skip_grads.pop(name, 0.0)
        g = _branch_backward(net, lay, g, tape, grads)
        if lay.spec.stage == "decoder":
            if lay.skip is not None:
                skip_grads[lay.skip] = g
            g, pg = layers.upsample_backward(g, tape[f"{name}.up"])
            grads[f"{name}.up.weight"], grads[f"{name}.up.bias"] = pg["weight"], pg["bias"]
    return grads, unwrap(g)


# -- Accounting -----------------------------------------------------------------


def count_params(net):
    """Number of learnable scalars (BatchNorm running statistics excluded)."""
    return int(sum(v.size for v in net.params.values()))


def ssm_step_macs(n, m, h):
    """Real MACs of one recurrent step: input projection, complex diagonal
    update (4 real MACs per state) and readout of the real part."""
    return h * n + 4 * h + m * h


def mac_breakdown(cfg, sample_rate=None):
    """``{block name: MACs per second}`` in streaming mode.

    Norms, activations and the residual/skip additions count one MAC per
    element.
    """
    rate = cfg.sample_rate if sample_rate is None else sample_rate
    h = cfg.ssm_state_size
    out = {}
    for lay in cfg.layout():
        c, r = lay.channels, lay.spec.resample_factor
        per_frame = ssm_step_macs(c, c, h) + 2 * c  # ssm, activation, residual add
        if lay.spec.has_preconv:
            per_frame += 3 * c
        if has_norm(lay):
            per_frame += c
        if lay.spec.stage == "decoder":
            per_frame += (lay.in_channels // r) * c + (c if lay.skip else 0)
        total = per_frame * rate / lay.period
        if lay.spec.stage == "encoder":
            total += c * r * lay.out_channels * rate / (lay.period * r)
        out[lay.name] = total
    return out


def count_macs(net, sample_rate=None):
    cfg = net.config if isinstance(net, Network) else net
    return float(sum(mac_breakdown(cfg, sample_rate).values()))
