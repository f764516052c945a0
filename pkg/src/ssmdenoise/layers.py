"""Forward and backward passes of the non-SSM network layers.

All layers act on arrays shaped ``(..., C, L)`` (channels, time). Each
``*_forward`` returns ``(out, cache)`` and the matching ``*_backward`` takes
``(grad_out, cache)`` and returns ``(grad_in, param_grads)``.
"""

from __future__ import annotations

import numpy as np

from .errors import AlignmentError, ShapeMismatchError

NORM_EPS = 1e-5
BN_MOMENTUM = 0.1


def _sum_to_channels(x):
    """Sum over every axis except the channel axis (-2)."""
    return x.sum(axis=tuple(i for i in range(x.ndim) if i != x.ndim - 2))


# -- PreConv: depthwise, width 3, centered, zero padded ---------------------


def preconv(x, weight, bias=None):
    return preconv_forward(x, weight, bias)[0]


def preconv_forward(x, weight, bias=None):
    C = x.shape[-2]
    if weight.shape != (C, 3):
        raise ShapeMismatchError(f"preconv weight must be ({C}, 3), got {weight.shape}")
    pad = [(0, 0)] * (x.ndim - 1) + [(1, 1)]
    xp = np.pad(x, pad)
    w = weight[..., None]
    y = w[:, 0] * xp[..., :-2] + w[:, 1] * xp[..., 1:-1] + w[:, 2] * xp[..., 2:]
    if bias is not None:
        y = y + bias[:, None]
    return y, (xp, weight)


def preconv_backward(g, cache):
    xp, weight = cache
    taps = (xp[..., :-2], xp[..., 1:-1], xp[..., 2:])
    gw = np.stack([_sum_to_channels(g * t) for t in taps], axis=-1)
    gb = _sum_to_channels(g)
    gxp = np.zeros_like(xp)
    w = weight[..., None]
    gxp[..., :-2] += w[:, 0] * g
    gxp[..., 1:-1] += w[:, 1] * g
    gxp[..., 2:] += w[:, 2] * g
    return gxp[..., 1:-1], {"weight": gw, "bias": gb}


# -- Normalization ----------------------------------------------------------


def layernorm_forward(x, weight, bias):
    """Normalize each time step over the channel axis."""
    mu = x.mean(axis=-2, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-2, keepdims=True)
    inv = 1.0 / np.sqrt(var + NORM_EPS)
    xhat = xc * inv
    return weight[:, None] * xhat + bias[:, None], (xhat, inv, weight)


def layernorm_backward(g, cache):
    xhat, inv, weight = cache
    gw = _sum_to_channels(g * xhat)
    gb = _sum_to_channels(g)
    gh = g * weight[:, None]
    gx = inv * (gh - gh.mean(axis=-2, keepdims=True) - xhat * (gh * xhat).mean(axis=-2, keepdims=True))
    return gx, {"weight": gw, "bias": gb}


def batchnorm_forward(x, weight, bias, running_mean, running_var, training=False):
    """Per-channel normalization over batch and time.

    In training mode the batch statistics are used and the running buffers
    (updated in place) track them; at inference the running statistics are
    applied, which makes the layer a fixed per-channel affine map.
    """
    if training:
        axes = tuple(i for i in range(x.ndim) if i != x.ndim - 2)
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        count = x.size // x.shape[-2]
        running_mean *= 1 - BN_MOMENTUM
        running_mean += BN_MOMENTUM * mu
        running_var *= 1 - BN_MOMENTUM
        running_var += BN_MOMENTUM * var * count / max(count - 1, 1)
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + NORM_EPS)
    xhat = (x - mu[:, None]) * inv[:, None]
    return weight[:, None] * xhat + bias[:, None], (xhat, inv, weight, training)


def batchnorm_backward(g, cache):
    xhat, inv, weight, training = cache
    gw = _sum_to_channels(g * xhat)
    gb = _sum_to_channels(g)
    gh = g * weight[:, None]
    if not training:
        return gh * inv[:, None], {"weight": gw, "bias": gb}
    count = g.size // g.shape[-2]
    gx = inv[:, None] * (
        gh - (_sum_to_channels(gh) / count)[:, None] - xhat * (_sum_to_channels(gh * xhat) / count)[:, None]
    )
    return gx, {"weight": gw, "bias": gb}


# -- Activations --------------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def activation_forward(x, kind):
    if kind == "silu":
        s = _sigmoid(x)
        return x * s, (kind, x, s)
    if kind == "relu":
        return np.maximum(x, 0), (kind, x, None)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(g, cache):
    kind, x, s = cache
    if kind == "silu":
        return g * s * (1.0 + x * (1.0 - s)), {}
    return g * (x > 0), {}


# -- Reshape-project resampling ---------------------------------------------


def downsample(x, r, weight, bias=None):
    return downsample_forward(x, r, weight, bias)[0]


def downsample_forward(x, r, weight, bias=None):
    """``(C, L) -> (C r, L / r) -> (C_out, L / r)``.

    Coarse frame ``k`` stacks fine frames ``k r .. k r + r - 1``; feature
    index ``j * C + c`` holds channel ``c`` of sub-frame ``j``.
    """
    *lead, C, L = x.shape
    if L % r:
        raise AlignmentError(f"length {L} not divisible by factor {r}")
    if weight.shape[1] != C * r:
        raise ShapeMismatchError(f"down weight needs {C * r} inputs, got {weight.shape}")
    z = x.reshape(*lead, C, L // r, r)
    z = np.moveaxis(z, -1, -3).reshape(*lead, r * C, L // r)
    y = np.einsum("oc,...cl->...ol", weight, z)
    if bias is not None:
        y = y + bias[:, None]
    return y, (z, weight, r, C)


def downsample_backward(g, cache):
    z, weight, r, C = cache
    gz = np.einsum("oc,...ol->...cl", weight, g)
    gw = np.einsum("bol,bcl->oc", g.reshape(-1, *g.shape[-2:]), z.reshape(-1, *z.shape[-2:]))
    *lead, _, Lr = gz.shape
    gx = np.moveaxis(gz.reshape(*lead, r, C, Lr), -3, -1).reshape(*lead, C, Lr * r)
    return gx, {"weight": gw, "bias": _sum_to_channels(g)}


def upsample(x, r, weight, bias=None):
    return upsample_forward(x, r, weight, bias)[0]


def upsample_forward(x, r, weight, bias=None):
    """``(C, L) -> (C / r, L r) -> (C_out, L r)``, the mirror of :func:`downsample`.

    Channels ``j * C/r .. (j + 1) * C/r - 1`` of coarse frame ``k`` become
    fine frame ``k r + j``.
    """
    *lead, C, L = x.shape
    if C % r:
        raise AlignmentError(f"{C} channels not divisible by factor {r}")
    c = C // r
    if weight.shape[1] != c:
        raise ShapeMismatchError(f"up weight needs {c} inputs, got {weight.shape}")
    z = np.moveaxis(x.reshape(*lead, r, c, L), -3, -1).reshape(*lead, c, L * r)
    y = np.einsum("oc,...cl->...ol", weight, z)
    if bias is not None:
        y = y + bias[:, None]
    return y, (z, weight, r, c)


def upsample_backward(g, cache):
    z, weight, r, c = cache
    gz = np.einsum("oc,...ol->...cl", weight, g)
    gw = np.einsum("bol,bcl->oc", g.reshape(-1, *g.shape[-2:]), z.reshape(-1, *z.shape[-2:]))
    *lead, _, Lr = gz.shape
    gx = np.moveaxis(gz.reshape(*lead, c, Lr // r, r), -1, -3).reshape(*lead, r * c, Lr // r)
    return gx, {"weight": gw, "bias": _sum_to_channels(g)}
