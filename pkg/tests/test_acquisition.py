"""Acquisition simulation: full scans, compressive scans, binary masks, exposure."""

import math

import numpy as np
import pytest

from spfti.acquisition import (
    allon_reference,
    binary_acquire,
    binary_pattern,
    compressive_acquire,
    demix_binary,
    light_exposure,
    load_measurements,
    nyquist_acquire,
    save_measurements,
)
from spfti.coherence import SamplingPlan, build_pmf, sample_omega, uniform_pmf
from spfti.core import Dims, HSVolume
from spfti.phantom import default_phantom
from spfti.transforms import densify, sensing_map


def random_volume(dims, seed=0):
    rng = np.random.default_rng(seed)
    return HSVolume(dims, rng.normal(size=dims.n_hs))


def full_plan(dims):
    pmf = uniform_pmf(dims)
    omega = np.arange(1, dims.n_hs + 1, dtype=np.int64)
    return SamplingPlan(
        pmf=pmf, omega=omega, weights=1.0 / np.sqrt(pmf[omega - 1]), seed=0, m=dims.n_hs
    )


class TestNyquist:
    def test_noiseless_round_trip(self):
        x = random_volume(Dims(8, 4))
        ms = nyquist_acquire(x, 0.0)
        back = sensing_map(x.dims).adjoint(ms.y)
        assert np.linalg.norm(back - x.data) <= 1e-10 * np.linalg.norm(x.data)

    def test_basis_vector_case(self):
        dims = Dims(4, 2)
        e = np.zeros(dims.n_hs)
        e[5] = 1.0
        x = HSVolume(dims, np.real(sensing_map(dims).adjoint(e.astype(complex))))
        ms = nyquist_acquire(x, 0.0)
        np.testing.assert_allclose(ms.y, e, atol=1e-10)

    def test_empirical_snr_matches_requested(self):
        from spfti.recovery import snr_to_sigma

        dims = Dims(64, 16)
        x = default_phantom(dims, seed=3)
        sigma = snr_to_sigma(x, 25.0)
        # estimate sigma from the respective noise components over trials
        sq = 0.0
        n_draws = 0
        for seed in range(10):
            ms = nyquist_acquire(x, sigma, seed=seed)
            clean = nyquist_acquire(x, 0.0)
            noise = ms.y - clean.y
            sq += float(np.sum(noise.real**2 + noise.imag**2))
            n_draws += 2 * dims.n_hs
        sigma_hat = math.sqrt(sq / n_draws)
        snr_hat = 10 * math.log10(float(np.dot(x.data, x.data)) / (sigma_hat**2 * dims.n_hs))
        assert abs(snr_hat - 25.0) <= 0.2

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            nyquist_acquire(random_volume(Dims(4, 2)), -1.0)


class TestCompressive:
    def test_full_plan_matches_nyquist(self):
        x = random_volume(Dims(8, 4))
        ms = compressive_acquire(x, full_plan(x.dims), 0.0)
        np.testing.assert_allclose(ms.y, nyquist_acquire(x, 0.0).y, atol=1e-13)

    def test_duplicate_indices_noiseless(self):
        dims = Dims(4, 2)
        x = random_volume(dims)
        pmf = uniform_pmf(dims)
        omega = np.array([7, 7], dtype=np.int64)
        plan = SamplingPlan(pmf=pmf, omega=omega, weights=np.sqrt([16.0, 16.0]), seed=0, m=2)
        ms = compressive_acquire(x, plan, 0.0)
        full = sensing_map(dims).forward(x.data)
        np.testing.assert_allclose(ms.y, [full[6], full[6]], atol=1e-13)

    def test_matches_dense_restriction(self):
        dims = Dims(4, 2)
        x = random_volume(dims, 5)
        pmf = build_pmf(dims)
        plan = sample_omega(pmf, 11, seed=2)
        ms = compressive_acquire(x, plan, 0.0)
        dense = densify(sensing_map(dims))
        np.testing.assert_allclose(ms.y, (dense @ x.data)[plan.omega - 1], atol=1e-12)

    def test_noise_deterministic_and_independent_for_duplicates(self):
        dims = Dims(4, 2)
        x = random_volume(dims)
        pmf = uniform_pmf(dims)
        omega = np.array([3, 3], dtype=np.int64)
        plan = SamplingPlan(pmf=pmf, omega=omega, weights=np.sqrt([16.0, 16.0]), seed=0, m=2)
        a = compressive_acquire(x, plan, 0.5, seed=9)
        b = compressive_acquire(x, plan, 0.5, seed=9)
        np.testing.assert_array_equal(a.y, b.y)
        assert a.y[0] != a.y[1]  # independent draws per repeated acquisition

    def test_dims_mismatch(self):
        x = random_volume(Dims(4, 2))
        plan = sample_omega(build_pmf(Dims(8, 4)), 5, 0)
        with pytest.raises(ValueError):
            compressive_acquire(x, plan, 0.0)


class TestBinaryPatterns:
    def test_first_pattern_is_all_on(self):
        np.testing.assert_array_equal(binary_pattern(1, 4), np.ones((4, 4), dtype=np.int64))

    @pytest.mark.parametrize("l_p", range(2, 17))
    def test_half_on_balance(self, l_p):
        mask = binary_pattern(l_p, 4)
        assert mask.sum() == 8
        assert set(np.unique(mask)) <= {0, 1}

    def test_hand_computed_second_pattern(self):
        # sqrt(4) * second Paley column (1,1,-1,-1)/2, mapped to 0/1
        np.testing.assert_array_equal(binary_pattern(2, 2), np.array([[1, 1], [0, 0]]))

    def test_range_error(self):
        with pytest.raises(ValueError):
            binary_pattern(0, 4)
        with pytest.raises(ValueError):
            binary_pattern(17, 4)


class TestDemix:
    def test_noiseless_round_trip_equals_signed_acquisition(self):
        dims = Dims(8, 4)
        x = default_phantom(dims, seed=1)
        pmf = build_pmf(dims)
        plan = sample_omega(pmf, 20, seed=4)
        y_bin = binary_acquire(x, plan.omega)
        from spfti.core import unflatten_index

        l_xis = sorted({unflatten_index(int(l), dims).l_xi for l in plan.omega})
        allon = allon_reference(x, l_xis)
        demixed = demix_binary(y_bin, plan.omega, allon, dims)
        signed = compressive_acquire(x, plan, 0.0)
        assert np.max(np.abs(demixed - signed.y)) <= 1e-10 * max(1.0, np.max(np.abs(signed.y)))

    def test_allon_pattern_demixes_to_dc_measurement(self):
        dims = Dims(4, 2)
        x = random_volume(dims)
        omega = np.array([1], dtype=np.int64)  # (l_xi=1, pattern 1) is the all-on pattern
        y_bin = binary_acquire(x, omega)
        allon = allon_reference(x, [1])
        demixed = demix_binary(y_bin, omega, allon, dims)
        full = sensing_map(dims).forward(x.data)
        np.testing.assert_allclose(demixed, [full[0]], atol=1e-10)

    def test_zero_volume(self):
        dims = Dims(4, 2)
        x = HSVolume(dims, np.zeros(dims.n_hs))
        omega = np.array([1, 5, 9], dtype=np.int64)
        demixed = demix_binary(binary_acquire(x, omega), omega, allon_reference(x, [1, 2, 3]), dims)
        np.testing.assert_allclose(demixed, 0, atol=1e-14)

    def test_missing_reference_is_an_error(self):
        dims = Dims(4, 2)
        x = random_volume(dims)
        omega = np.array([9], dtype=np.int64)  # l_xi = 3
        y_bin = binary_acquire(x, omega)
        with pytest.raises(ValueError, match="all-on"):
            demix_binary(y_bin, omega, allon_reference(x, [1]), dims)


class TestExposure:
    def test_full_scan_has_unit_ratio(self):
        dims = Dims(8, 4)
        assert light_exposure(dims.n_hs, dims).ratio == 1.0

    def test_reference_scale_identity(self):
        dims = Dims(512, 64)
        m = 0.1 * (dims.n_hs + dims.n_xi) - dims.n_xi
        assert abs(light_exposure(m, dims).ratio - 0.1) <= 1e-12

    def test_zero_measurements_boundary(self):
        dims = Dims(8, 4)
        assert light_exposure(0, dims).ratio == pytest.approx(
            dims.n_xi / (dims.n_hs + dims.n_xi), abs=1e-15
        )

    def test_strictly_increasing_in_m(self):
        dims = Dims(8, 4)
        ratios = [light_exposure(m, dims).ratio for m in range(0, dims.n_hs + 1, 16)]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    def test_unit_accounting(self):
        dims = Dims(8, 4)
        rep = light_exposure(10, dims)
        assert rep.compressive_units == (10 + 8) * 16
        assert rep.nyquist_units == (128 + 8) * 16

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            light_exposure(-1, Dims(8, 4))
        with pytest.raises(ValueError):
            light_exposure(129, Dims(8, 4))


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        dims = Dims(8, 4)
        x = random_volume(dims, 7)
        plan = sample_omega(build_pmf(dims), 17, seed=5)
        ms = compressive_acquire(x, plan, 0.3, seed=6)
        ms.meta = {"pmf_variant": "kappa_sq", "plan_seed": 5}
        path = tmp_path / "meas.bin"
        save_measurements(ms, path)
        back = load_measurements(path)
        np.testing.assert_array_equal(back.y, ms.y)
        np.testing.assert_array_equal(back.omega, ms.omega)
        assert back.sigma_nyq == ms.sigma_nyq
        assert back.dims == ms.dims
        assert back.meta == ms.meta

    def test_missing_sidecar(self, tmp_path):
        path = tmp_path / "meas.bin"
        path.write_bytes(b"\x00" * 16)
        with pytest.raises(ValueError, match="sidecar"):
            load_measurements(path)

    def test_payload_length_mismatch(self, tmp_path):
        dims = Dims(4, 2)
        x = random_volume(dims)
        ms = nyquist_acquire(x, 0.0)
        path = tmp_path / "meas.bin"
        save_measurements(ms, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="payload"):
            load_measurements(path)
