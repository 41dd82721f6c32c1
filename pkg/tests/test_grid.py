"""Grid containers and the truncated real 2D FFT."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurop.errors import InvalidArgumentError
from neurop.grid import GridField2D, SpectralTensor, fft2_truncated, ifft2_from_truncated, zero_pad_boundary

from oracles import bandlimited_field, dft2_corner, truncate_and_invert


def random_field(seed, channels=1, ny=8, nx=8):
    rng = np.random.default_rng(seed)
    return GridField2D.from_array(rng.normal(size=(channels, ny, nx)))


class TestGridField:
    def test_spacing_is_vertex_centered(self):
        f = random_field(0, ny=31, nx=61)
        assert f.dx == pytest.approx(1.0 / 60)
        assert f.dy == pytest.approx(1.0 / 30)

    def test_rejects_tiny_grids_and_bad_sizes(self):
        with pytest.raises(InvalidArgumentError):
            GridField2D(nx=1, ny=4, channels=1, data=np.zeros(4))
        with pytest.raises(InvalidArgumentError):
            GridField2D(nx=4, ny=4, channels=1, data=np.zeros(15))

    def test_data_is_frozen(self):
        f = random_field(1)
        with pytest.raises(ValueError):
            f.data[0, 0, 0] = 1.0


class TestFFT2Truncated:
    def test_constant_field_has_only_dc(self):
        f = GridField2D.from_array(np.full((1, 8, 8), 5.0))
        spec = fft2_truncated(f, 3, 3)
        assert spec.coeffs[0, 0, 0] == pytest.approx(5.0 * 64)
        rest = spec.coeffs.copy()
        rest[0, 0, 0] = 0.0
        assert np.abs(rest).max() < 1e-10

    def test_single_harmonic_lands_on_axis2_index_1(self):
        # cos(2 pi x) with periodic indexing over 16 points
        x = np.arange(16) / 16.0
        data = np.broadcast_to(np.cos(2 * np.pi * x)[None, :], (16, 16))
        spec = fft2_truncated(GridField2D.from_array(data[None]), 3, 3)
        energy = np.abs(spec.coeffs[0]) ** 2
        assert energy[0, 1] == pytest.approx((16 * 16 / 2) ** 2, rel=1e-12)
        energy[0, 1] = 0.0
        assert energy.max() < 1e-16

    def test_matches_double_sum_oracle_at_full_modes(self):
        f = random_field(7, channels=2)
        spec = fft2_truncated(f, 8, 5)
        oracle = dft2_corner(f.data, 8, 5)
        assert np.abs(spec.coeffs - oracle).max() < 1e-12 * np.abs(oracle).max()

    def test_dc_coefficient_of_real_field_is_real(self):
        spec = fft2_truncated(random_field(8), 4, 4)
        assert abs(spec.coeffs[0, 0, 0].imag) < 1e-12

    def test_mode_bounds_checked(self):
        f = random_field(2)
        with pytest.raises(InvalidArgumentError):
            fft2_truncated(f, 9, 3)
        with pytest.raises(InvalidArgumentError):
            fft2_truncated(f, 3, 6)  # nx//2+1 == 5


class TestIFFT2FromTruncated:
    def test_dc_only_inverts_to_constant(self):
        coeffs = np.zeros((1, 2, 2), dtype=complex)
        coeffs[0, 0, 0] = 7 * 7 * 3.25
        spec = SpectralTensor(k1=2, k2=2, channels=1, coeffs=coeffs)
        f = ifft2_from_truncated(spec, nx=7, ny=7)
        assert np.abs(f.data - 3.25).max() < 1e-12

    def test_roundtrip_identity_on_bandlimited_field(self):
        rng = np.random.default_rng(3)
        data = bandlimited_field(rng, 2, 12, 3, 3)
        f = GridField2D.from_array(data)
        back = ifft2_from_truncated(fft2_truncated(f, 3, 3), 12, 12)
        assert np.abs(back.data - f.data).max() < 1e-12 * np.abs(f.data).max()

    def test_roundtrip_full_modes_is_identity(self):
        f = random_field(11, channels=2, ny=8, nx=8)
        back = ifft2_from_truncated(fft2_truncated(f, 8, 5), 8, 8)
        assert np.abs(back.data - f.data).max() < 1e-12

    def test_truncated_roundtrip_matches_lowpass_oracle(self):
        f = random_field(13, channels=2, ny=8, nx=8)
        got = ifft2_from_truncated(fft2_truncated(f, 3, 3), 8, 8)
        want = truncate_and_invert(f.data, 3, 3)
        assert np.abs(got.data - want).max() < 1e-12


class TestZeroPadBoundary:
    def test_empty_map_gives_zero_field(self):
        f = zero_pad_boundary({}, nx=5, ny=5)
        assert not f.data.any()

    def test_top_edge_row(self):
        values = {(i, 4): 1.0 for i in range(5)}
        f = zero_pad_boundary(values, nx=5, ny=5)
        assert np.array_equal(f.data[0, 4, :], np.ones(5))
        assert not f.data[0, :4, :].any()

    def test_interior_key_rejected(self):
        with pytest.raises(InvalidArgumentError):
            zero_pad_boundary({(2, 2): 1.0}, nx=5, ny=5)

    def test_interior_nodes_forced_zero(self):
        values = {(0, 2): 4.0, (3, 0): -1.0, (4, 4): 2.5}
        f = zero_pad_boundary(values, nx=5, ny=5)
        assert f.data[0, 2, 0] == 4.0 and f.data[0, 0, 3] == -1.0 and f.data[0, 4, 4] == 2.5
        assert not f.data[0, 1:-1, 1:-1].any()


class TestInvariants:
    def test_parseval_for_untruncated_transform(self):
        f = random_field(17, channels=2, ny=10, nx=14)
        n = f.nx * f.ny
        field_energy = np.sum(f.data**2) / n
        full = np.fft.fft2(f.data, axes=(-2, -1))
        coeff_energy = np.sum(np.abs(full) ** 2) / n**2
        assert field_energy == pytest.approx(coeff_energy, rel=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(0, 10**6),
        st.floats(-3, 3, allow_nan=False),
        st.floats(-3, 3, allow_nan=False),
    )
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        fa = rng.normal(size=(1, 8, 8))
        fb = rng.normal(size=(1, 8, 8))
        lhs = fft2_truncated(GridField2D.from_array(a * fa + b * fb), 3, 3).coeffs
        rhs = a * fft2_truncated(GridField2D.from_array(fa), 3, 3).coeffs + b * fft2_truncated(
            GridField2D.from_array(fb), 3, 3
        ).coeffs
        assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())

    def test_resolution_consistency_of_scaled_coefficients(self):
        # the same continuous harmonics sampled at n and 2n (periodic
        # convention) give identical coefficients after 1/(nx*ny) scaling
        rng = np.random.default_rng(23)
        k1 = k2 = 3
        amps = rng.normal(size=(k1, k2)) + 1j * rng.normal(size=(k1, k2))
        amps[0, 0] = abs(amps[0, 0])

        def sample(n):
            t = np.arange(n) / n
            data = np.zeros((n, n))
            for ky in range(k1):
                for kx in range(k2):
                    wave = amps[ky, kx] * np.exp(
                        2j * np.pi * (ky * t[:, None] + kx * t[None, :])
                    )
                    data += np.real(wave) if (ky, kx) == (0, 0) else 2 * np.real(wave)
            return GridField2D.from_array(data[None])

        c16 = fft2_truncated(sample(16), k1, k2).coeffs / 16**2
        c32 = fft2_truncated(sample(32), k1, k2).coeffs / 32**2
        assert np.abs(c16 - c32).max() < 1e-10
