"""Analytic gradients of the SSM layer.

The kernel of a layer built from :class:`~ssmdenoise.ssm.ContinuousSSM` is

    k[j, i, tau] = sum_s C[j, s] * Re(W[s, tau]) * B[s, i]
    W[s, tau]    = g_s * z_s**tau,   z_s = exp(dt_s a_s),   g_s = (z_s - 1) / a_s

with ``a_s = -softplus(a_r[s]) + 1j * a_im[s]``. Everything reduces to the
"basis" gradient ``M[s, tau] = dloss / dRe(W[s, tau])``; the derivatives
of ``W`` with respect to ``a`` and ``dt`` are holomorphic, so

    dW/da  = z**tau * (dt**2 * phi'(dt a) + g * tau * dt)
    dW/ddt = z**tau * (z + g * tau * a)

and a real parameter ``p`` with ``da/dp = c`` gets ``sum M * Re(c dW/da)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .execution import fft_length_for
from .ssm import dphi, phi, sigmoid


@dataclass
class GradientBundle:
    a_r: np.ndarray
    a_im: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: np.ndarray

    def as_dict(self):
        return {"a_r": self.a_r, "a_im": self.a_im, "B": self.B, "C": self.C, "dt": self.dt}


def basis_powers(ssm, length):
    """``z_s**tau`` with ``z = exp(dt a)``, shape ``(h, L)``."""
    return np.exp((ssm.dt * ssm.A)[:, None] * np.arange(length)[None, :])


def basis_kernels(ssm, length, powers=None):
    """``W[s, tau] = g_s z_s**tau`` with the ZOH gain folded in, shape ``(h, L)``."""
    powers = basis_powers(ssm, length) if powers is None else powers
    return (ssm.dt * phi(ssm.dt * ssm.A))[:, None] * powers


def basis_gradients(ssm, M, powers=None):
    """Map ``M = dloss/dRe(W)`` (shape ``(h, L)``) to ``(g_a_r, g_a_im, g_dt)``."""
    length = M.shape[1]
    a = ssm.A
    dt = ssm.dt
    w = dt * a
    g = dt * phi(w)
    tau = np.arange(length)[None, :]
    zt = basis_powers(ssm, length) if powers is None else powers
    dW_da = zt * ((dt * dt * dphi(w))[:, None] + (g * dt)[:, None] * tau)
    dW_ddt = zt * (np.exp(w)[:, None] + (g * a)[:, None] * tau)
    sa = (M * dW_da).sum(axis=1)
    g_a_r = -sigmoid(ssm.a_r) * sa.real
    g_a_im = -sa.imag
    g_dt = (M * dW_ddt).sum(axis=1).real
    return g_a_r, g_a_im, g_dt


def kernel_gradients(ssm, upstream, length=None, powers=None):
    """Gradients of the parameters given ``dloss/dk`` of shape ``(m, n, L)``."""
    G = np.asarray(upstream, dtype=float)
    length = G.shape[2] if length is None else length
    if G.shape != (ssm.m, ssm.n, length):
        raise ValueError(f"upstream must be {(ssm.m, ssm.n, length)}, got {G.shape}")
    powers = basis_powers(ssm, length) if powers is None else powers
    Wr = basis_kernels(ssm, length, powers).real
    M = np.einsum("jit,js,si->st", G, ssm.C, ssm.B, optimize=True)
    gC = np.einsum("jit,si,st->js", G, ssm.B, Wr, optimize=True)
    gB = np.einsum("jit,js,st->si", G, ssm.C, Wr, optimize=True)
    g_a_r, g_a_im, g_dt = basis_gradients(ssm, M, powers)
    return GradientBundle(a_r=g_a_r, a_im=g_a_im, B=gB, C=gC, dt=g_dt)


def _conv(a_hat, b_hat, nfft, length):
    return sfft.irfft(a_hat * b_hat, nfft, axis=-1)[..., :length]


def _backward_through_states(g, u, ssm, nfft):
    length = u.shape[-1]
    powers = basis_powers(ssm, length)
    Wr = basis_kernels(ssm, length, powers).real
    W_hat = sfft.rfft(Wr, nfft, axis=-1)
    v = np.einsum("si,bit->bst", ssm.B, u)
    v_hat = sfft.rfft(v, nfft, axis=-1)
    xr = _conv(v_hat, W_hat, nfft, length)
    gC = np.einsum("bjt,bst->js", g, xr)
    gx = np.einsum("js,bjt->bst", ssm.C, g)
    gx_hat = sfft.rfft(gx, nfft, axis=-1)
    # correlations: sum_t a[t + tau] b[t]
    gv = _conv(gx_hat, np.conj(W_hat), nfft, length)
    M = _conv((gx_hat * np.conj(v_hat)).sum(axis=0), 1.0, nfft, length)
    gB = np.einsum("bst,bit->si", gv, u)
    gu = np.einsum("si,bst->bit", ssm.B, gv)
    g_a_r, g_a_im, g_dt = basis_gradients(ssm, M, powers)
    return gu, GradientBundle(a_r=g_a_r, a_im=g_a_im, B=gB, C=gC, dt=g_dt)


def _backward_through_kernel(g, u, ssm, nfft):
    length = u.shape[-1]
    powers = basis_powers(ssm, length)
    Wr = basis_kernels(ssm, length, powers).real
    k = np.einsum("js,st,si->jit", ssm.C, Wr, ssm.B, optimize=True)
    g_hat = sfft.rfft(g, nfft, axis=-1)
    u_hat = sfft.rfft(u, nfft, axis=-1)
    k_hat = sfft.rfft(k, nfft, axis=-1)
    gk = _conv(np.einsum("bjf,bif->jif", g_hat, np.conj(u_hat)), 1.0, nfft, length)
    gu = _conv(np.einsum("bjf,jif->bif", g_hat, np.conj(k_hat)), 1.0, nfft, length)
    return gu, kernel_gradients(ssm, gk, powers=powers)


def ssm_layer_backward(g, u, ssm, route=None):
    """Backward pass of ``y = fft_convolve(u, discretize_zoh(ssm))``.

    ``g`` is ``dloss/dy`` with shape ``(..., m, L)`` and ``u`` the layer
    input ``(..., n, L)``. Two equivalent routes exist: ``"states"`` uses
    ``y = C (Re(W) * (B u))`` and never forms the ``m x n x L`` kernel;
    ``"kernel"`` correlates through the materialized kernel and is cheaper
    when ``m * n`` is small next to ``batch * h``. ``route=None`` picks by
    that comparison. Returns ``(dloss/du, GradientBundle)``.
    """
    lead = np.shape(u)[:-2]
    g = np.asarray(g, dtype=float).reshape(-1, ssm.m, np.shape(g)[-1])
    u = np.asarray(u, dtype=float).reshape(-1, ssm.n, np.shape(u)[-1])
    if route is None:
        route = "kernel" if ssm.m * ssm.n <= u.shape[0] * ssm.h else "states"
    nfft = fft_length_for(u.shape[-1])
    if route == "kernel":
        gu, bundle = _backward_through_kernel(g, u, ssm, nfft)
    elif route == "states":
        gu, bundle = _backward_through_states(g, u, ssm, nfft)
    else:
        raise ValueError(f"unknown route {route!r}")
    return gu.reshape(*lead, ssm.n, u.shape[-1]), bundle
