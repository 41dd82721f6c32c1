"""Seeded samplers: determinism, documented generator, field statistics."""

import numpy as np
import pytest

from neurop.errors import InvalidArgumentError
from neurop.randfield import (
    RngStream,
    sample_boundary_setting2,
    sample_correlated_field,
    sample_permeability,
    sample_source_setting2,
)

MASK64 = (1 << 64) - 1


def splitmix64_reference(state, count):
    """Independent pure-int SplitMix64 (canonical finalizer constants)."""
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append(z ^ (z >> 31))
    return out


class TestRngStream:
    def test_matches_pure_python_splitmix64(self):
        for seed, idx in [(0, 0), (123, 0), (2**63, 977), (42, 7)]:
            stream = RngStream(seed, idx)
            got = [int(v) for v in stream.cursor().u64(5)]
            state = (seed ^ ((idx * 0xD1342543DE82EF95) & MASK64)) & MASK64
            assert got == splitmix64_reference(state, 5)

    def test_known_first_output_for_seed_zero(self):
        assert int(RngStream(0, 0).cursor().u64(1)[0]) == 0xE220A8397B1DCDAF

    def test_cursor_is_sequential(self):
        cur = RngStream(5, 5).cursor()
        first = cur.u64(3)
        second = cur.u64(2)
        fresh = RngStream(5, 5).cursor().u64(5)
        assert np.array_equal(np.concatenate([first, second]), fresh)

    def test_normals_are_standard(self):
        z = RngStream(1, 0).cursor().normals(200_000)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01


class TestPermeability:
    def test_values_are_exactly_two_phase(self):
        f = sample_permeability(RngStream(0, 0), 16)
        assert set(np.unique(f.data)) <= {3.0, 12.0}
        assert 12.0 / 3.0 == 4.0  # the documented phase contrast

    def test_deterministic(self):
        a = sample_permeability(RngStream(9, 4), 16)
        b = sample_permeability(RngStream(9, 4), 16)
        assert np.array_equal(a.data, b.data)

    def test_minimum_size_enforced(self):
        with pytest.raises(InvalidArgumentError):
            sample_permeability(RngStream(0, 0), 7)

    def test_pooled_phase_fraction_near_half(self):
        fracs = [
            (sample_permeability(RngStream(42, j), 31).data == 12.0).mean() for j in range(500)
        ]
        assert 0.35 <= float(np.mean(fracs)) <= 0.65

    def test_distinct_streams_are_independent(self):
        # correlation across 100 pairs, estimated per node then averaged;
        # under independence the estimate concentrates near sqrt(2/(100*pi))
        n_pairs = 100
        a = np.stack(
            [sample_permeability(RngStream(7, 2 * k), 31).data[0] for k in range(n_pairs)]
        )
        b = np.stack(
            [sample_permeability(RngStream(7, 2 * k + 1), 31).data[0] for k in range(n_pairs)]
        )
        ac = a - a.mean(axis=0)
        bc = b - b.mean(axis=0)
        den = a.std(axis=0) * b.std(axis=0)
        rho = (ac * bc).mean(axis=0) / np.maximum(den, 1e-300)
        assert float(np.abs(rho).mean()) < 0.1


class TestSourceSetting2:
    def test_field_matches_drawn_frequencies(self):
        field, meta = sample_source_setting2(RngStream(3, 2), 9)
        nodes = np.linspace(0, 1, 9)
        want = np.cos(2 * np.pi * meta["a_y"] * nodes)[:, None] * np.cos(
            2 * np.pi * meta["a_x"] * nodes
        )
        assert np.abs(field.data[0] - want).max() < 1e-14

    def test_forced_unit_frequencies(self):
        field, _ = sample_source_setting2(RngStream(0, 0), 5, force=(1.0, 1.0))
        assert field.data[0, 0, 0] == pytest.approx(1.0)
        assert field.data[0, 2, 2] == pytest.approx(1.0)  # (0.5, 0.5)
        assert abs(field.data[0, 1, 1]) < 1e-15  # (0.25, 0.25)

    def test_values_bounded_by_one(self):
        for j in range(20):
            field, _ = sample_source_setting2(RngStream(11, j), 17)
            assert np.abs(field.data).max() <= 1.0 + 1e-12

    def test_frequency_mean_matches_uniform(self):
        vals = [sample_source_setting2(RngStream(9, j), 2)[1]["a_x"] for j in range(10_000)]
        assert float(np.mean(vals)) == pytest.approx(1.25, abs=0.02)


class TestBoundarySetting2:
    def test_field_matches_drawn_parameters(self):
        field, meta = sample_boundary_setting2(RngStream(5, 8), 11)
        x = np.linspace(0, 1, 11)
        top = (
            meta["u0"]
            * (meta["t1"] * np.sin(2 * np.pi * x) + meta["t2"] * np.sin(4 * np.pi * x))
            / (meta["t1"] + meta["t2"])
        )
        assert np.abs(field.data[0, -1, :] - top).max() < 1e-15
        assert np.all(field.data[0, :, 0] == meta["u0"])
        assert np.all(field.data[0, :, -1] == meta["u0"])
        assert np.all(field.data[0, 0, :] == meta["u0"])

    def test_forced_zero_amplitude_gives_zero_field(self):
        field, _ = sample_boundary_setting2(RngStream(0, 0), 7, force=(0.0, 0.7, 0.3))
        assert not field.data.any()

    def test_forced_single_sine(self):
        field, _ = sample_boundary_setting2(RngStream(0, 0), 9, force=(0.001, 1.0, 0.0))
        x = np.linspace(0, 1, 9)
        assert np.abs(field.data[0, -1, :] - 0.001 * np.sin(2 * np.pi * x)).max() < 1e-18
        assert field.data[0, -1, 0] == 0.0 and field.data[0, -1, -1] == pytest.approx(0.0, abs=1e-18)

    def test_interior_zero_and_global_bound(self):
        for j in range(20):
            field, _ = sample_boundary_setting2(RngStream(13, j), 15)
            assert not field.data[0, 1:-1, 1:-1].any()
            assert np.abs(field.data).max() <= 0.002


class TestCorrelatedField:
    def test_forced_zero_noise_gives_zero_field(self):
        f = sample_correlated_field(RngStream(0, 0), 16, force_noise=np.zeros((16, 16)))
        assert np.abs(f.data).max() < 1e-300

    def test_zero_spatial_mean(self):
        for j in range(10):
            f = sample_correlated_field(RngStream(21, j), 32)
            assert abs(f.data.mean()) < 1e-10

    def test_power_spectrum_slope(self):
        n, reps, exponent = 64, 200, -1.25
        acc = np.zeros((n, n))
        for j in range(reps):
            acc += np.abs(np.fft.fft2(sample_correlated_field(RngStream(3, j), n).data[0])) ** 2
        acc /= reps
        w = np.fft.fftfreq(n, d=1.0 / n)
        s = w[:, None] ** 2 + w[None, :] ** 2
        mask = (s > 0) & (s < (n // 3) ** 2)
        slope = np.polyfit(np.log(s[mask]), np.log(acc[mask]), 1)[0]
        assert slope == pytest.approx(exponent, rel=0.15)

    def test_deterministic(self):
        a = sample_correlated_field(RngStream(2, 3), 16)
        b = sample_correlated_field(RngStream(2, 3), 16)
        assert np.array_equal(a.data, b.data)
