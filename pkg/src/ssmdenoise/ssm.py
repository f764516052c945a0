"""Diagonal state-space layer: parameterization, ZOH discretization, kernels.

A layer maps ``n`` input channels to ``m`` output channels through ``h``
complex diagonal states. The continuous system is

    x'(t) = A x(t) + B u(t),    y(t) = C Re(x(t))

with ``A = -softplus(a_r) + 1j * a_im`` (so ``Re(A) < 0`` always) and a
per-state timestep ``dt``. Discretization uses the zero-order hold, and the
discrete recurrence is timed so that its impulse response is exactly
``k[tau] = Re(C @ diag(abar**tau) @ bbar)`` with ``k[0] = Re(C @ bbar)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, NonDiagonalizableError

# |dt * a| below this switches (exp(w) - 1)/w to its truncated series.
SERIES_THRESHOLD = 1e-4
# Initial value of the pre-softplus real part; softplus(-0.4328) ~= 0.5.
A_REAL_INIT = -0.4328
DT_MIN, DT_MAX = 1e-3, 1e-1
DT_BLOCK = 16
MAX_EIGVEC_COND = 1e12


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def expm1c(w):
    """``exp(w) - 1`` for complex ``w`` without cancellation near zero."""
    w = np.asarray(w, dtype=complex)
    x, y = w.real, w.imag
    re = np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2
    im = np.exp(x) * np.sin(y)
    return re + 1j * im


def phi(w):
    """``(exp(w) - 1) / w``, continuous through ``w = 0``."""
    w = np.asarray(w, dtype=complex)
    small = np.abs(w) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, w)
    out = expm1c(safe) / safe
    series = 1.0 + w / 2.0 + w * w / 6.0
    return np.where(small, series, out)


def dphi(w):
    """Derivative of :func:`phi`, ``(w e^w - e^w + 1) / w**2``."""
    w = np.asarray(w, dtype=complex)
    # the closed form loses ~eps/|w| to cancellation; the series is exact
    # to double precision up to |w| ~ 1e-2
    small = np.abs(w) < 1e-2
    safe = np.where(small, 1.0, w)
    closed = (safe * np.exp(safe) - expm1c(safe)) / (safe * safe)
    series = 0.5 + w * (1 / 3 + w * (1 / 8 + w * (1 / 30 + w * (1 / 144 + w / 840))))
    return np.where(small, series, closed)


@dataclass(frozen=True)
class ContinuousSSM:
    """Learnable parameters of one MIMO diagonal SSM layer.

    Shapes: ``a_r, a_im, dt`` are ``(h,)``, ``B`` is ``(h, n)``, ``C`` is
    ``(m, h)``.
    """

    a_r: np.ndarray
    a_im: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: np.ndarray

    def __post_init__(self):
        h = self.a_r.shape[0]
        if self.a_im.shape != (h,) or self.dt.shape != (h,):
            raise InvalidDimensionError("a_r, a_im and dt must all have shape (h,)")
        if self.B.ndim != 2 or self.B.shape[0] != h:
            raise InvalidDimensionError(f"B must be (h={h}, n), got {self.B.shape}")
        if self.C.ndim != 2 or self.C.shape[1] != h:
            raise InvalidDimensionError(f"C must be (m, h={h}), got {self.C.shape}")
        if not np.all(self.dt > 0):
            raise InvalidDimensionError("dt must be strictly positive")

    @property
    def h(self):
        return self.a_r.shape[0]

    @property
    def n(self):
        return self.B.shape[1]

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def A(self):
        return -softplus(self.a_r) + 1j * self.a_im


@dataclass(frozen=True)
class DiscreteSSM:
    """Inference-ready diagonal system.

    ``abar`` is the complex diagonal of the transition matrix. ``bbar`` is
    complex in general: the learnable ``B`` is real but the ZOH gain
    ``(exp(dt a) - 1)/a`` is not. ``C`` is real for layers produced by
    :func:`discretize_zoh` and complex for the output of :func:`diagonalize`.
    """

    abar: np.ndarray
    bbar: np.ndarray
    C: np.ndarray

    @property
    def h(self):
        return self.abar.shape[0]

    @property
    def n(self):
        return self.bbar.shape[1]

    @property
    def m(self):
        return self.C.shape[0]

    def astype(self, dtype):
        """Round the coefficients to working precision ``dtype`` (real)."""
        real = np.dtype(dtype)
        cplx = np.result_type(real, np.complex64)
        c_dtype = cplx if np.iscomplexobj(self.C) else real
        return DiscreteSSM(
            self.abar.astype(cplx), self.bbar.astype(cplx), self.C.astype(c_dtype)
        )


@dataclass(frozen=True)
class DenseSSM:
    """A discrete system with a dense (non-diagonal) real transition."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def init_dt(h):
    """Per-state timesteps, geometric from DT_MIN to DT_MAX in blocks of 16."""
    blocks = np.arange(h) // DT_BLOCK
    span = max(1, math.ceil(h / DT_BLOCK) - 1)
    return DT_MIN * (DT_MAX / DT_MIN) ** (blocks / span)


def init_ssm(n, m, h, seed=0):
    if min(n, m, h) < 1:
        raise InvalidDimensionError(f"n, m, h must be >= 1, got {(n, m, h)}")
    rng = np.random.default_rng(seed)
    return ContinuousSSM(
        a_r=np.full(h, A_REAL_INIT),
        a_im=np.pi * np.arange(h, dtype=float),
        B=np.ones((h, n)),
        C=rng.normal(0.0, math.sqrt(2.0 / h), size=(m, h)),
        dt=init_dt(h),
    )


def zoh_coefficients(a, dt):
    """Elementwise ZOH of a diagonal system: ``(exp(dt a), (exp(dt a) - 1)/a)``."""
    w = dt * a
    return np.exp(w), dt * phi(w)


def discretize_zoh(ssm):
    abar, gain = zoh_coefficients(ssm.A, ssm.dt)
    return DiscreteSSM(abar=abar, bbar=gain[:, None] * ssm.B, C=ssm.C)


def vandermonde(abar, length):
    """``abar[s] ** tau`` for ``tau`` in ``[0, length)``, shape ``(h, length)``."""
    abar = np.asarray(abar, dtype=np.complex128)
    zero = abar == 0
    logz = np.log(np.where(zero, 1.0, abar))
    out = np.exp(logz[:, None] * np.arange(length)[None, :])
    if zero.any():
        out[zero] = 0.0
        out[zero, 0] = 1.0
    return out


def materialize_kernel(d, length):
    """Impulse-response kernels ``k[j, i, tau]``, shape ``(m, n, length)``."""
    if length < 1:
        raise InvalidDimensionError("kernel length must be >= 1")
    powers = vandermonde(d.abar, length)
    return np.einsum("js,st,si->jit", d.C, powers, d.bbar, optimize=True).real


def dense_kernel(dense, length):
    """``C A^tau B`` by repeated matrix products, shape ``(m, n, length)``."""
    A, B, C = (np.asarray(x, dtype=float) for x in (dense.A, dense.B, dense.C))
    out = np.empty((C.shape[0], B.shape[1], length))
    state = B.copy()
    for tau in range(length):
        out[:, :, tau] = C @ state
        state = A @ state
    return out


def diagonalize(dense):
    """Eigendecompose a dense system and absorb the similarity into B and C.

    With ``A = V diag(lam) V^-1`` the kernel ``C A^tau B`` equals
    ``(C V) diag(lam)^tau (V^-1 B)``; the returned system has complex
    ``bbar = V^-1 B`` and ``C = C V``.
    """
    A = np.asarray(dense.A, dtype=float)
    lam, V = np.linalg.eig(A)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > MAX_EIGVEC_COND:
        raise NonDiagonalizableError(
            f"eigenvector matrix is numerically singular (cond={cond:.3g})"
        )
    bbar = np.linalg.solve(V, np.asarray(dense.B, dtype=complex))
    C = np.asarray(dense.C, dtype=complex) @ V
    return DiscreteSSM(abar=lam.astype(complex), bbar=bbar, C=C)
