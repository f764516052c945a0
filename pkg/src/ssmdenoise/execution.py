"""The two execution paths of an SSM layer.

``fft_convolve`` evaluates the causal long convolution with the full-length
impulse response in the frequency domain (zero-padded, so linear rather than
circular). ``step_recurrent`` / ``scan_recurrent`` advance the complex state
one sample at a time:

    x[t] = abar * x[t-1] + bbar @ u[t],    y[t] = C @ Re(x[t])

Both paths produce the same output up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ShapeMismatchError
from .planner import ContractionDims, ContractionOrder, Order, plan_contraction


def fft_length_for(length):
    """Smallest power of two that holds a linear convolution of two length-L signals."""
    return 1 << max(0, (2 * length - 2).bit_length())


def _working_dtypes(u):
    real = np.float32 if u.dtype == np.float32 else np.float64
    return np.dtype(real), np.result_type(real, np.complex64)


def _readout(C, x):
    if np.iscomplexobj(C):
        return np.einsum("js,...st->...jt", C, x).real
    return np.einsum("js,...st->...jt", C, x.real.astype(C.dtype, copy=False))


@dataclass
class FftPlan:
    """FFT length for one signal length plus a cache of kernel spectra.

    Cached spectra are keyed by a caller-provided name (e.g. the layer name),
    so a plan must not be reused after the layer weights change.
    """

    signal_length: int
    fft_length: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.fft_length:
            self.fft_length = fft_length_for(self.signal_length)
        if self.fft_length < 2 * self.signal_length - 1:
            raise ValueError("fft_length too short for linear convolution")

    def spectrum(self, key, d, variant, dtype):
        ck = (key, variant, np.dtype(dtype).str)
        if ck not in self._cache:
            self._cache[ck] = _kernel_spectrum(d, variant, self.signal_length, self.fft_length, dtype)
        return self._cache[ck]


def geometric_spectrum(abar, length, nfft):
    """DFT (size ``nfft``) of ``abar[s] ** tau`` truncated to ``tau < length``.

    Closed form of a finite geometric series, ``(1 - z^L w^L) / (1 - z w)``
    with ``w = exp(-2j pi f / nfft)``; no power table or FFT is needed.
    Shape ``(h, nfft)``, complex128.
    """
    z = np.asarray(abar, dtype=np.complex128)[:, None]
    f = np.arange(nfft)
    w = np.exp(-2j * np.pi * f / nfft)
    wL = np.exp(-2j * np.pi * ((f * length) % nfft) / nfft)
    zL = np.exp(length * np.log(np.where(z == 0, 1.0, z)))
    zL = np.where(z == 0, 0.0, zL)
    num = 1.0 - zL * wL
    den = 1.0 - z * w
    at_pole = den == 0
    return np.where(at_pole, length, num / np.where(at_pole, 1.0, den))


def _kernel_spectrum(d, variant, length, nfft, real_dtype):
    real_dtype = np.dtype(real_dtype)
    cplx = np.result_type(real_dtype, np.complex64)
    # computed in double from the (possibly rounded) abar
    G = geometric_spectrum(d.abar, length, nfft)
    if variant == Order.KERNEL_FIRST:
        P = np.einsum("js,si,sf->jif", d.C, d.bbar, G, optimize=True)
        # spectrum of the real part: (P[f] + conj(P[-f])) / 2
        half = nfft // 2 + 1
        K = 0.5 * (P[..., :half] + np.conj(P[..., (-np.arange(half)) % nfft]))
        return K.astype(cplx)
    return G.astype(cplx)


def fft_convolve(u, d, order=None, plan=None, key=None):
    """Causal convolution of ``u`` (shape ``(..., n, L)``) with the layer kernel.

    Returns ``(..., m, L)``. ``order`` may be a :class:`ContractionOrder`, an
    :class:`Order` or ``None`` (planned from the operand shapes). Float32
    input runs the whole path in single precision.
    """
    u = np.asarray(u)
    if u.dtype not in (np.float32, np.float64):
        u = u.astype(np.float64)
    if u.ndim < 2 or u.shape[-2] != d.n:
        raise ShapeMismatchError(f"expected input with {d.n} channels, got shape {u.shape}")
    real, cplx = _working_dtypes(u)
    d = d.astype(real)
    L = u.shape[-1]
    if order is None:
        batch = int(np.prod(u.shape[:-2], dtype=np.int64)) or 1
        order = plan_contraction(ContractionDims(B=batch, I=d.n, J=d.m, N=d.h, F=L))
    variant = order.variant if isinstance(order, ContractionOrder) else Order(order)

    nfft = plan.fft_length if plan is not None else fft_length_for(L)
    if plan is not None and plan.signal_length != L:
        raise ShapeMismatchError(f"plan built for length {plan.signal_length}, input has {L}")
    if plan is not None and key is not None:
        spec = plan.spectrum(key, d, variant, real)
    else:
        spec = _kernel_spectrum(d, variant, L, nfft, real)

    if variant == Order.KERNEL_FIRST:
        U = sfft.rfft(u, nfft, axis=-1)
        Y = np.einsum("...if,jif->...jf", U, spec)
        return sfft.irfft(Y, nfft, axis=-1)[..., :L].astype(real, copy=False)

    v = np.einsum("si,...it->...st", d.bbar, u.astype(cplx, copy=False))
    X = sfft.fft(v, nfft, axis=-1) * spec
    x = sfft.ifft(X, nfft, axis=-1)[..., :L]
    return _readout(d.C, x).astype(real, copy=False)


def step_recurrent(x, d, u):
    """Advance state ``x`` (complex ``(h,)``, updated in place) by one input sample."""
    u = np.asarray(u)
    x *= d.abar
    x += d.bbar @ u
    if np.iscomplexobj(d.C):
        return (d.C @ x).real
    return d.C @ x.real


def scan_recurrent(x, d, U):
    """Run the recurrence over frames ``U`` (shape ``(n, T)``); ``x`` is updated in place.

    The input projection and the readout are batched over the chunk; the state
    update itself is sequential.
    """
    U = np.asarray(U)
    if U.shape[0] != d.n:
        raise ShapeMismatchError(f"expected {d.n} input channels, got {U.shape[0]}")
    T = U.shape[1]
    bu = d.bbar @ U.astype(d.bbar.dtype, copy=False)
    states = np.empty((d.h, T), dtype=x.dtype)
    abar = d.abar
    state = x
    for t in range(T):
        state = abar * state + bu[:, t]
        states[:, t] = state
    x[:] = state
    return _readout(d.C, states)
