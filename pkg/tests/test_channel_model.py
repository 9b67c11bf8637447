import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mompnet.channel_model import (
    SPEED_OF_LIGHT,
    ArrayParams,
    ImpairmentSpreads,
    PathSet,
    SubcarrierParams,
    add_noise,
    coupling_matrix,
    frequency_response,
    nominal_subcarriers,
    nominal_ula,
    sample_impairments,
    steering_vector,
    synthesize_channel,
    unit_direction,
)
from mompnet.errors import DomainError

LAM = SPEED_OF_LIGHT / 28e9
# carrier phases reach ~1e5 rad, so float64 rounding is ~1e-11 absolute
PHASE_TOL = 1e-10


class TestUnitDirection:
    @pytest.mark.parametrize(
        "angle, expected",
        [(np.pi / 2, (1, 0, 0)), (0.0, (0, 1, 0)), (np.pi / 3, (np.sqrt(3) / 2, 0.5, 0))],
    )
    def test_values(self, angle, expected):
        np.testing.assert_allclose(unit_direction(angle), expected, atol=1e-15)

    def test_domain(self):
        with pytest.raises(DomainError):
            unit_direction(-0.1)
        with pytest.raises(DomainError):
            unit_direction(3.5)


class TestSteeringVector:
    def test_broadside_is_ones(self):
        np.testing.assert_allclose(steering_vector(nominal_ula(4, LAM), np.pi / 2), np.ones(4), atol=1e-12)

    def test_endfire_phases(self):
        arr = nominal_ula(4, LAM)
        np.testing.assert_allclose(arr.positions[:, 1], [-0.75 * LAM, -0.25 * LAM, 0.25 * LAM, 0.75 * LAM])
        expected = np.exp(1j * np.array([1.5, 0.5, -0.5, -1.5]) * np.pi)
        np.testing.assert_allclose(steering_vector(arr, 0.0), expected, atol=1e-12)

    def test_elementwise_oracle(self):
        rng = np.random.default_rng(0)
        n = 6
        pos = rng.normal(scale=LAM, size=(n, 3))
        arr = ArrayParams(pos, rng.uniform(0.5, 1, n), rng.uniform(-1, 1, n), 0j, LAM)
        angle = 1.1
        got = steering_vector(arr, angle)
        for i in range(n):
            proj = pos[i, 0] * np.sin(angle) + pos[i, 1] * np.cos(angle)
            g = arr.gain_amplitudes[i] * np.exp(1j * arr.gain_phases[i])
            assert got[i] == pytest.approx(g * np.exp(-2j * np.pi / LAM * proj), abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0, np.pi), st.integers(1, 12))
    def test_unit_modulus(self, angle, n):
        assert np.allclose(np.abs(steering_vector(nominal_ula(n, LAM), angle)), 1.0)


class TestFrequencyResponse:
    def test_zero_delay(self):
        sub = nominal_subcarriers(8, 1e6, 28e9)
        np.testing.assert_array_equal(frequency_response(sub, 0.0), np.ones(8))

    def test_direct(self):
        sub = SubcarrierParams(np.array([1.0, 2.0]), 1.0)
        np.testing.assert_allclose(frequency_response(sub, 0.25), [-1j, -1], atol=1e-15)

    def test_phase_oracle(self):
        rng = np.random.default_rng(2)
        f = np.sort(rng.uniform(1e9, 2e9, 10))
        tau = 3.7e-8
        got = frequency_response(SubcarrierParams(f, 1e6), tau)
        np.testing.assert_allclose(np.abs(got), 1.0)
        for fi, gi in zip(f, got):
            assert gi == pytest.approx(np.exp(-2j * np.pi * fi * tau), abs=1e-9)

    def test_negative_delay(self):
        with pytest.raises(DomainError):
            frequency_response(nominal_subcarriers(2, 1.0), -1.0)


class TestCouplingMatrix:
    def test_zero_is_identity(self):
        np.testing.assert_array_equal(coupling_matrix(0, 3), np.eye(3))

    def test_reference_coefficient(self):
        c1 = 0.15 * np.exp(-1j * np.pi / 6)
        np.testing.assert_array_equal(coupling_matrix(c1, 2), [[1, c1], [c1, 1]])

    def test_structure(self):
        c = coupling_matrix(0.3 + 0.2j, 6)
        np.testing.assert_array_equal(c, c.T)
        assert np.all(np.diag(c) == 1)
        assert np.all(np.triu(c, 2) == 0)

    def test_domain(self):
        with pytest.raises(DomainError):
            coupling_matrix(1.0, 3)


def _random_system(rng, nb=4, nm=3, ns=5, c_b=0.1 - 0.05j, c_m=0.05j):
    bs = ArrayParams(nominal_ula(nb, LAM).positions + [0, 1e-3, 0] * rng.uniform(-1, 1, (nb, 1)),
                     rng.uniform(0.6, 1, nb), rng.uniform(-0.4, 0.4, nb), c_b, LAM)
    ms = ArrayParams(nominal_ula(nm, LAM).positions, rng.uniform(0.6, 1, nm), rng.uniform(-0.4, 0.4, nm), c_m, LAM)
    sub = nominal_subcarriers(ns, 1.44e6, 28e9)
    return bs, ms, sub


def _random_paths(rng, k):
    g = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    return PathSet(rng.uniform(0, np.pi, k), rng.uniform(0, np.pi, k), rng.uniform(0, 5e-7, k), g)


class TestSynthesize:
    def test_no_paths(self):
        bs, ms, sub = _random_system(np.random.default_rng(0))
        np.testing.assert_array_equal(synthesize_channel(bs, ms, sub, PathSet()), 0)

    def test_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        bs, ms, sub = _random_system(rng)
        p = _random_paths(rng, 1)
        p = PathSet(p.aoa, p.aod, p.delay, [1.0])
        h = synthesize_channel(bs, ms, sub, p)
        eb = coupling_matrix(bs.coupling, bs.size) @ steering_vector(bs, p.aoa[0])
        em = coupling_matrix(ms.coupling, ms.size) @ steering_vector(ms, p.aod[0])
        ef = frequency_response(sub, p.delay[0])
        for a in range(bs.size):
            for b in range(ms.size):
                for c in range(sub.size):
                    assert h[a, b, c] == pytest.approx(eb[a] * em[b] * ef[c], abs=PHASE_TOL)

    def test_cancellation(self):
        rng = np.random.default_rng(2)
        bs, ms, sub = _random_system(rng)
        p = _random_paths(rng, 1)
        two = PathSet(np.r_[p.aoa, p.aoa], np.r_[p.aod, p.aod], np.r_[p.delay, p.delay], [0.7j, -0.7j])
        assert np.max(np.abs(synthesize_channel(bs, ms, sub, two))) < 1e-15

    def test_linear_in_gains(self):
        rng = np.random.default_rng(3)
        bs, ms, sub = _random_system(rng)
        p = _random_paths(rng, 3)
        c = 1.3 - 0.4j
        scaled = PathSet(p.aoa, p.aod, p.delay, c * p.gain)
        np.testing.assert_allclose(
            synthesize_channel(bs, ms, sub, scaled), c * synthesize_channel(bs, ms, sub, p), rtol=1e-13, atol=1e-13
        )

    def test_dense_kronecker_oracle(self):
        rng = np.random.default_rng(4)
        bs, ms, sub = _random_system(rng, 4, 3, 5)
        p = _random_paths(rng, 3)
        ref = np.zeros(4 * 3 * 5, complex)
        cb, cm = coupling_matrix(bs.coupling, 4), coupling_matrix(ms.coupling, 3)
        for k in range(3):
            ref += p.gain[k] * np.kron(
                np.kron(cb @ steering_vector(bs, p.aoa[k]), cm @ steering_vector(ms, p.aod[k])),
                frequency_response(sub, p.delay[k]),
            )
        np.testing.assert_allclose(synthesize_channel(bs, ms, sub, p).ravel(), ref, atol=PHASE_TOL)


class TestImpairments:
    def setup_method(self):
        self.bs = nominal_ula(16, LAM)
        self.ms = [nominal_ula(8, LAM) for _ in range(3)]
        self.sub = nominal_subcarriers(16, 1.44e6, 28e9)

    def test_zero_spreads_identity(self):
        bs, ms, sub = sample_impairments(self.bs, self.ms, self.sub, ImpairmentSpreads(), 0)
        np.testing.assert_array_equal(bs.positions, self.bs.positions)
        np.testing.assert_array_equal(bs.gains, self.bs.gains)
        assert bs.coupling == 0
        for a, b in zip(ms, self.ms):
            np.testing.assert_array_equal(a.positions, b.positions)
            np.testing.assert_array_equal(a.gains, b.gains)
        np.testing.assert_array_equal(sub.frequencies, self.sub.frequencies)

    def test_bounds_and_axes(self):
        spreads = ImpairmentSpreads.reference_defaults()
        for seed in range(20):
            bs, ms, _ = sample_impairments(self.bs, self.ms, self.sub, spreads, seed)
            dy = bs.positions[:, 1] - self.bs.positions[:, 1]
            assert np.all(np.abs(dy) <= 0.24 * LAM)
            np.testing.assert_array_equal(bs.positions[:, [0, 2]], self.bs.positions[:, [0, 2]])
            assert np.all((bs.gain_amplitudes <= 1) & (bs.gain_amplitudes >= 0.6))
            assert np.all(np.abs(bs.gain_phases) <= 0.4)
            assert bs.coupling == spreads.coupling_true
            for a, b in zip(ms, self.ms):
                assert np.all(np.abs(a.positions[:, 1] - b.positions[:, 1]) <= 0.24 * LAM)
                np.testing.assert_array_equal(a.gains, b.gains)

    def test_independent_ms_realizations(self):
        _, ms, _ = sample_impairments(self.bs, self.ms, self.sub, ImpairmentSpreads(delta_q=0.2), 1)
        assert not np.allclose(ms[0].positions, ms[1].positions)

    def test_subcarrier_offset(self):
        _, _, sub = sample_impairments(self.bs, self.ms, self.sub, ImpairmentSpreads(ppm=0.01), 0)
        idx = np.arange(1, 17)
        np.testing.assert_allclose(sub.frequencies - self.sub.frequencies, idx * 0.01 * 1.44e6, rtol=1e-6)

    def test_deterministic(self):
        spreads = ImpairmentSpreads.reference_defaults()
        a = sample_impairments(self.bs, self.ms, self.sub, spreads, 42)
        b = sample_impairments(self.bs, self.ms, self.sub, spreads, 42)
        np.testing.assert_array_equal(a[0].positions, b[0].positions)
        np.testing.assert_array_equal(a[0].gains, b[0].gains)


class TestNoise:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.h = rng.standard_normal((4, 3, 5)) + 1j * rng.standard_normal((4, 3, 5))

    def test_noiseless(self):
        y, s2 = add_noise(self.h, np.inf, 0)
        np.testing.assert_array_equal(y, self.h)
        assert s2 == 0

    def test_zero_db(self):
        _, s2 = add_noise(self.h, 0.0, 0)
        assert s2 == pytest.approx(np.sum(np.abs(self.h) ** 2) / self.h.size)

    def test_zero_channel(self):
        with pytest.raises(DomainError):
            add_noise(np.zeros((2, 2, 2)), 10.0, 0)

    def test_variance_monte_carlo(self):
        ratios = []
        for seed in range(1000):
            y, s2 = add_noise(self.h, 10.0, seed)
            ratios.append(np.sum(np.abs(y - self.h) ** 2) / (self.h.size * s2))
        assert np.mean(ratios) == pytest.approx(1.0, rel=0.05)

    def test_circular(self):
        n = np.concatenate([(add_noise(self.h, 0.0, s)[0] - self.h).ravel() for s in range(200)])
        assert np.var(n.real) == pytest.approx(np.var(n.imag), rel=0.1)
        assert abs(np.mean(n.real * n.imag)) < 0.05 * np.var(n.real)
