import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_power_kernel, diagonal_kernel, zoh_series
from ssmdenoise.errors import InvalidDimensionError, NonDiagonalizableError
from ssmdenoise.execution import scan_recurrent
from ssmdenoise.ssm import (
    ContinuousSSM,
    DenseSSM,
    DiscreteSSM,
    diagonalize,
    discretize_zoh,
    init_dt,
    init_ssm,
    materialize_kernel,
    phi,
    softplus,
    vandermonde,
    zoh_coefficients,
)


def scalar_ssm(a, dt, b=1.0, c=1.0):
    a = complex(a)
    # invert softplus for the real part: a_r = log(expm1(-Re a))
    return ContinuousSSM(
        a_r=np.array([np.log(np.expm1(-a.real))]),
        a_im=np.array([a.imag]),
        B=np.array([[b]]),
        C=np.array([[c]]),
        dt=np.array([dt]),
    )


class TestInit:
    def test_real_part_is_minus_half(self):
        s = init_ssm(1, 1, 256, seed=3)
        assert np.allclose(s.A.real, -0.5, atol=1e-3)

    def test_b_all_ones(self):
        assert np.array_equal(init_ssm(1, 1, 256, seed=3).B, np.ones((256, 1)))

    def test_dt_blocks_h32(self):
        dt = init_ssm(1, 1, 32, seed=0).dt
        assert np.allclose(dt[:16], 1e-3) and np.allclose(dt[16:], 1e-1)

    def test_dt_geometric_h256(self):
        dt = init_dt(256)
        blocks = dt.reshape(16, 16)
        assert np.all(blocks == blocks[:, :1])
        ratios = blocks[1:, 0] / blocks[:-1, 0]
        assert np.allclose(ratios, ratios[0])
        assert np.isclose(dt[0], 1e-3) and np.isclose(dt[-1], 1e-1)

    def test_imag_part_spacing(self):
        assert np.allclose(np.diff(init_ssm(1, 1, 8).a_im), np.pi)

    def test_seed_determinism(self):
        a, b = init_ssm(2, 3, 16, seed=9), init_ssm(2, 3, 16, seed=9)
        assert np.array_equal(a.C, b.C)

    def test_bad_dims(self):
        with pytest.raises(InvalidDimensionError):
            init_ssm(0, 1, 4)

    def test_shape_validation(self):
        with pytest.raises(InvalidDimensionError):
            ContinuousSSM(np.zeros(3), np.zeros(2), np.ones((3, 1)), np.ones((1, 3)), np.ones(3))
        with pytest.raises(InvalidDimensionError):
            ContinuousSSM(np.zeros(3), np.zeros(3), np.ones((3, 1)), np.ones((1, 3)), -np.ones(3))


class TestDiscretize:
    def test_scalar_closed_form(self):
        d = discretize_zoh(scalar_ssm(-1.0, np.log(2.0)))
        assert np.isclose(d.abar[0], 0.5, rtol=1e-14)
        assert np.isclose(d.bbar[0, 0], 0.5, rtol=1e-14)

    def test_zero_limit(self):
        abar, gain = zoh_coefficients(np.array([0j]), np.array([0.1]))
        assert abar[0] == 1.0 and np.isclose(gain[0], 0.1, rtol=1e-15)

    def test_matches_series_oracle_64_states(self, rng):
        h = 64
        s = ContinuousSSM(
            a_r=rng.normal(size=h), a_im=rng.uniform(-50, 50, h),
            B=np.ones((h, 1)), C=np.ones((1, h)), dt=10 ** rng.uniform(-3, -1, h),
        )
        d = discretize_zoh(s)
        for i in range(h):
            e, g = zoh_series(s.A[i], s.dt[i])
            assert abs(d.abar[i] - e) <= 1e-12 * abs(e)
            assert abs(d.bbar[i, 0] - g) <= 1e-12 * abs(g)

    def test_phi_continuity_across_threshold(self):
        w = np.array([0.999e-4, 1.001e-4]) * np.exp(0.3j)
        exact = [zoh_series(x, 1.0)[1] for x in w]
        assert np.allclose(phi(w), exact, rtol=1e-14)

    @given(st.floats(-10, 10), st.floats(-1e3, 1e3), st.floats(1e-3, 1e-1))
    def test_stable_everywhere(self, a_r, a_im, dt):
        s = ContinuousSSM(np.array([a_r]), np.array([a_im]), np.ones((1, 1)), np.ones((1, 1)), np.array([dt]))
        assert abs(discretize_zoh(s).abar[0]) < 1
        assert s.A.real[0] < 0

    def test_underflow_edge_reaches_unit_modulus(self):
        # softplus(-800) underflows to 0: the continuous system is still stable
        # but |abar| rounds to exactly 1 in double precision
        assert softplus(np.array([-800.0]))[0] == 0.0


class TestKernel:
    def test_geometric(self):
        d = DiscreteSSM(np.array([0.5 + 0j]), np.array([[0.5 + 0j]]), np.array([[1.0]]))
        assert np.allclose(materialize_kernel(d, 6)[0, 0], 0.5 ** np.arange(1, 7), rtol=1e-15)

    def test_imaginary_unit(self):
        d = DiscreteSSM(np.array([1j]), np.array([[1 + 0j]]), np.array([[1.0]]))
        assert np.allclose(materialize_kernel(d, 8)[0, 0], [1, 0, -1, 0, 1, 0, -1, 0], atol=1e-15)

    def test_matches_recurrence_impulse(self, rng):
        h, n, m, L = 8, 2, 3, 64
        s = init_ssm(n, m, h, seed=4)
        s = ContinuousSSM(rng.normal(size=h), rng.normal(size=h) * 3, rng.normal(size=(h, n)), s.C, s.dt * 20)
        d = discretize_zoh(s)
        k = materialize_kernel(d, L)
        for i in range(n):
            u = np.zeros((n, L))
            u[i, 0] = 1.0
            x = np.zeros(h, dtype=complex)
            assert np.abs(scan_recurrent(x, d, u) - k[:, i, :]).max() < 1e-10

    def test_matches_running_product_oracle(self, rng):
        h, n, m, L = 16, 3, 2, 200
        abar = 0.97 * np.exp(2j * np.pi * rng.uniform(size=h))
        bbar = rng.normal(size=(h, n)) + 1j * rng.normal(size=(h, n))
        C = rng.normal(size=(m, h))
        d = DiscreteSSM(abar, bbar, C)
        assert np.abs(materialize_kernel(d, L) - diagonal_kernel(abar, bbar, C, L)).max() < 1e-12

    def test_vandermonde_zero_eigenvalue(self):
        v = vandermonde(np.array([0j, 0.5]), 3)
        assert np.array_equal(v[0], [1, 0, 0]) and np.allclose(v[1], [1, 0.5, 0.25])

    def test_length_validation(self):
        d = DiscreteSSM(np.array([0.5 + 0j]), np.array([[1 + 0j]]), np.array([[1.0]]))
        with pytest.raises(InvalidDimensionError):
            materialize_kernel(d, 0)

    def test_astype_float32(self):
        d = discretize_zoh(init_ssm(2, 2, 8)).astype(np.float32)
        assert d.abar.dtype == np.complex64 and d.C.dtype == np.float32


class TestDiagonalize:
    def test_already_diagonal(self):
        A = np.diag([0.5, -0.25, 0.9])
        d = diagonalize(DenseSSM(A, np.ones((3, 1)), np.ones((1, 3))))
        assert np.allclose(sorted(d.abar.real), sorted(np.diag(A)))
        dense = dense_power_kernel(A, np.ones((3, 1)), np.ones((1, 3)), 20)
        assert np.allclose(materialize_kernel(d, 20), dense, atol=1e-12)

    def test_rotation(self):
        A = np.array([[0.0, -1.0], [1.0, 0.0]])
        d = diagonalize(DenseSSM(A, np.array([[1.0], [0.0]]), np.array([[1.0, 0.0]])))
        assert np.allclose(sorted(d.abar.imag), [-1, 1]) and np.allclose(d.abar.real, 0)
        k = materialize_kernel(d, 8)[0, 0]
        dense = dense_power_kernel(A, np.array([[1.0], [0.0]]), np.array([[1.0, 0.0]]), 8)[0, 0]
        assert np.allclose(k, [1, 0, -1, 0, 1, 0, -1, 0], atol=1e-12) and np.allclose(k, dense, atol=1e-12)

    def test_random_stable_6x6(self, rng):
        M = rng.normal(size=(6, 6))
        A = 0.95 * M / np.abs(np.linalg.eigvals(M)).max()
        B, C = rng.normal(size=(6, 2)), rng.normal(size=(3, 6))
        d = diagonalize(DenseSSM(A, B, C))
        assert np.abs(materialize_kernel(d, 65) - dense_power_kernel(A, B, C, 65)).max() < 1e-6

    def test_defective_rejected(self):
        A = np.array([[0.5, 1.0], [0.0, 0.5]])
        with pytest.raises(NonDiagonalizableError):
            diagonalize(DenseSSM(A, np.ones((2, 1)), np.ones((1, 2))))
