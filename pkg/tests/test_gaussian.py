"""Gaussian moment propagation: examples, closed forms and invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qndclock import gaussian as gc
from qndclock.errors import InvalidArgument, NumericalDegeneracy

from reference import mean_field_rotation

N = 2e4
G = 3.05e-7
ALPHA = 7.18e9

finite = dict(allow_nan=False, allow_infinity=False)
omegas = st.floats(0.0, 20.0, **finite)
deltas = st.floats(-20.0, 20.0, **finite)
times = st.floats(0.0, 2.0, **finite)


def poisson_state(n=N):
    return gc.new_coherent_state(gc.AtomNumberModel.poisson(n))


def with_pulse(state, alpha_sq=ALPHA, g=G):
    s = gc.append_probe_mode(state)
    return gc.qnd_interact(s, s.n_pulses - 1, g, alpha_sq)


def psd_ok(cov):
    return gc.psd_margin(cov) >= -1e-9


class TestCoherentState:

    def test_deterministic_example(self):
        s = gc.new_coherent_state(gc.AtomNumberModel.deterministic(4))
        np.testing.assert_array_equal(s.mean, [2, 0, 0, -2])
        np.testing.assert_array_equal(s.cov, np.diag([0, 1, 1, 0]))
        assert s.n_pulses == 0 and s.dim == 4

    def test_poisson_number_statistics(self):
        s = poisson_state()
        c = s.cov
        assert c[gc.J0, gc.J0] == c[gc.JZ, gc.JZ] == 5e3
        assert c[gc.J0, gc.JZ] == -5e3
        # Var(J0 - Jz) = Var(N)
        v = np.array([1, 0, 0, -1.0])
        assert v @ c @ v == pytest.approx(2e4, rel=1e-15)

    def test_poisson_transverse(self):
        s = poisson_state()
        assert s.cov[gc.JX, gc.JX] == s.cov[gc.JY, gc.JY] == 5e3

    def test_transverse_override(self):
        s = gc.new_coherent_state(gc.AtomNumberModel(gc.AtomNumberKind.POISSON, 100, 0.5))
        assert s.cov[gc.JX, gc.JX] == 50

    @pytest.mark.parametrize("n", [0, -3])
    def test_nonpositive_mean_rejected(self, n):
        with pytest.raises(InvalidArgument):
            gc.AtomNumberModel.poisson(n)

    def test_mean_atom_number(self):
        assert poisson_state(123.0).mean_atom_number == 123.0


class TestAppend:

    def test_vacuum_block(self):
        s = gc.append_probe_mode(poisson_state())
        assert s.dim == 6
        np.testing.assert_array_equal(s.cov[4:, 4:], np.diag([0.25, 0.25]))
        assert not np.any(s.cov[4:, :4])

    def test_twice(self):
        s = gc.append_probe_mode(gc.append_probe_mode(poisson_state()))
        assert s.dim == 8
        np.testing.assert_array_equal(s.cov[4:, 4:], 0.25 * np.eye(4))

    def test_spin_block_bitwise(self):
        s0 = gc.rabi_evolve(poisson_state(), 3.0, 0.7, 0.4)
        s1 = gc.append_probe_mode(s0)
        assert np.array_equal(s1.cov[:4, :4], s0.cov)
        assert np.array_equal(s1.mean[:4], s0.mean)

    def test_extract_gives_vacuum(self):
        s = gc.append_probe_mode(gc.append_probe_mode(poisson_state()))
        mu, gamma = gc.extract_measurement_stats(s, [0, 1])
        np.testing.assert_array_equal(mu, 0)
        np.testing.assert_array_equal(gamma, 0.25 * np.eye(2))


class TestRabi:

    def test_zero_duration_identity(self):
        s = poisson_state()
        assert gc.rabi_evolve(s, 1.0, 0.3, 0.0) is s

    def test_negative_duration(self):
        with pytest.raises(InvalidArgument):
            gc.rabi_evolve(poisson_state(), 1.0, 0.0, -1e-3)

    def test_pi_pulse_inverts(self):
        omega = 2.0
        s = gc.rabi_evolve(poisson_state(), omega, 0.0, math.pi / omega)
        np.testing.assert_allclose(s.mean, [N / 2, 0, 0, N / 2], atol=1e-9 * N)

    def test_pure_precession(self):
        s0 = gc.rabi_evolve(poisson_state(), 1.0, 0.0, 0.7)  # tip away from the pole
        delta, t = 0.9, 1.3
        s1 = gc.rabi_evolve(s0, 0.0, delta, t)
        assert s1.mean[gc.JZ] == pytest.approx(s0.mean[gc.JZ], rel=1e-14)
        assert s1.cov[gc.JZ, gc.JZ] == pytest.approx(s0.cov[gc.JZ, gc.JZ], rel=1e-12)
        c, s = math.cos(-delta * t), math.sin(-delta * t)
        x0, y0 = s0.mean[gc.JX], s0.mean[gc.JY]
        np.testing.assert_allclose(s1.mean[[gc.JX, gc.JY]], [c * x0 - s * y0, s * x0 + c * y0],
                                   rtol=1e-12, atol=1e-9)

    @given(omegas, deltas, times)
    def test_matches_integrated_mean_field(self, omega, delta, t):
        j0 = np.array([0.3, -0.5, -0.8]) * 100
        state = gc.PhaseSpaceState(np.r_[50.0, j0], np.eye(4))
        out = gc.rabi_evolve(state, omega, delta, t)
        np.testing.assert_allclose(out.mean[1:], mean_field_rotation(omega, delta, t, j0),
                                   atol=1e-8 * 100)

    @given(omegas, deltas, times)
    def test_rotation_orthogonal(self, omega, delta, t):
        R = gc.rotation_matrix(omega, delta, t)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    @given(omegas, deltas, times)
    def test_spin_block_invariants(self, omega, delta, t):
        s0 = with_pulse(gc.rabi_evolve(poisson_state(), 2.0, 1.0, 0.3))
        s1 = gc.rabi_evolve(s0, omega, delta, t)
        c0, c1 = s0.spin_cov, s1.spin_cov
        assert np.trace(c1) == pytest.approx(np.trace(c0), rel=1e-10)
        assert np.linalg.det(c1) == pytest.approx(np.linalg.det(c0), rel=1e-8)
        assert np.linalg.norm(s1.spin_mean) == pytest.approx(np.linalg.norm(s0.spin_mean), rel=1e-12)
        # J0 and optical entries are untouched
        assert s1.mean[gc.J0] == s0.mean[gc.J0]
        np.testing.assert_array_equal(s1.cov[4:, 4:], s0.cov[4:, 4:])

    def test_batched_matches_scalar(self):
        deltas = np.array([-1.0, 0.2, 3.0])
        batched = gc.rabi_evolve(poisson_state(), 2.0, deltas, 0.8)
        for k, d in enumerate(deltas):
            single = gc.rabi_evolve(poisson_state(), 2.0, d, 0.8)
            np.testing.assert_allclose(batched.cov[k], single.cov, rtol=1e-14, atol=1e-9)


class TestQnd:

    def test_zero_photons_identity(self):
        s = gc.append_probe_mode(poisson_state())
        assert gc.qnd_interact(s, 0, G, 0.0) is s

    def test_bad_index(self):
        with pytest.raises(InvalidArgument):
            gc.qnd_interact(gc.append_probe_mode(poisson_state()), 1, G, ALPHA)

    def test_down_state_readout(self):
        s = with_pulse(poisson_state())
        mu, gamma = gc.extract_measurement_stats(s, [0])
        amp = math.sqrt(ALPHA)
        assert mu[0] == pytest.approx(G * amp * N, rel=1e-14)
        # Poisson: Var(J0 - Jz) = N
        assert gamma[0, 0] == pytest.approx(0.25 + G ** 2 * ALPHA * N, rel=1e-13)

    def test_deterministic_readout_vacuum_only(self):
        s = with_pulse(gc.new_coherent_state(gc.AtomNumberModel.deterministic(N)))
        assert s.cov[4, 4] == pytest.approx(0.25, rel=1e-14)

    def test_phase_shift_small(self):
        assert G * N == pytest.approx(6.1e-3)
        assert G * N < gc.SMALL_ANGLE_WARN

    def test_warns_above_small_angle(self):
        s = gc.append_probe_mode(poisson_state(1e7))
        with pytest.warns(RuntimeWarning, match="0.3 rad"):
            gc.qnd_interact(s, 0, 1e-7, 1.0)

    def test_back_action_on_transverse(self):
        s = gc.rabi_evolve(poisson_state(), 2.0, 0.0, math.pi / 4)  # <Jy> != 0
        jy = s.mean[gc.JY]
        out = with_pulse(s)
        added = (2 * G * math.sqrt(ALPHA) * jy) ** 2 * 0.25
        assert out.cov[gc.JX, gc.JX] == pytest.approx(s.cov[gc.JX, gc.JX] + added, rel=1e-12)

    def test_residual_rotation(self):
        s = gc.rabi_evolve(poisson_state(), 2.0, 0.0, 0.5)
        s = gc.append_probe_mode(s)
        a = gc.qnd_interact(s, 0, G, ALPHA)
        b = gc.qnd_interact(s, 0, G, ALPHA, residual_rotation=0.1)
        assert a.mean[gc.JZ] == b.mean[gc.JZ]
        assert np.hypot(*a.mean[1:3]) == pytest.approx(np.hypot(*b.mean[1:3]), rel=1e-12)
        assert not np.allclose(a.mean[1:3], b.mean[1:3])


class TestDecoherence:

    def test_zero_eta_identity(self):
        s = poisson_state()
        assert gc.apply_decoherence(s, 0.0) is s

    @pytest.mark.parametrize("eta", [1.0, 1.5])
    def test_destroys_ensemble(self, eta):
        with pytest.raises(InvalidArgument, match="destroys ensemble"):
            gc.apply_decoherence(poisson_state(), eta)

    def test_half_loss_example(self):
        s = gc.new_coherent_state(gc.AtomNumberModel.deterministic(N))
        out = gc.apply_decoherence(s, 0.5)
        np.testing.assert_allclose(out.mean, s.mean / 2)
        # (1-eta)^2 G + eta(1-eta) G + eta N/4 = G/2 + N/8
        np.testing.assert_allclose(out.cov, s.cov / 2 + N / 8 * np.eye(4), rtol=1e-14)

    def test_isotropic_term_only_for_zero_cov(self):
        s = gc.PhaseSpaceState(np.array([N / 2, 0, 0, -N / 2]), np.zeros((4, 4)))
        out = gc.apply_decoherence(s, 0.5)
        np.testing.assert_allclose(np.diag(out.cov), N / 8)

    def test_optical_blocks_untouched_cross_scaled(self):
        s = with_pulse(poisson_state())
        out = gc.apply_decoherence(s, 0.2)
        np.testing.assert_array_equal(out.cov[4:, 4:], s.cov[4:, 4:])
        np.testing.assert_allclose(out.cov[:4, 4:], 0.8 * s.cov[:4, 4:])

    def test_relative_transverse_noise_monotone(self):
        s = gc.new_coherent_state(gc.AtomNumberModel.deterministic(N))
        ratios = []
        for eta in np.arange(0, 1.0, 0.1):
            out = gc.apply_decoherence(s, eta)
            ratios.append(out.cov[gc.JX, gc.JX] / out.mean[gc.JZ] ** 2)
        assert np.all(np.diff(ratios) >= 0)

    def test_custom_single_atom_strategy(self):
        s = poisson_state()
        initial = s.cov / N
        out = gc.apply_decoherence(s, 0.1, single_atom_cov=lambda _: initial)
        np.testing.assert_allclose(out.cov, gc.apply_decoherence(s, 0.1).cov)


class TestConditioning:

    def test_uncoupled_pulse_leaves_spin(self):
        s = gc.append_probe_mode(gc.rabi_evolve(poisson_state(), 2.0, 0.5, 0.3))
        out = gc.condition_on_pulses(s, [0])
        np.testing.assert_allclose(out.cov[:4, :4], s.cov[:4, :4], rtol=1e-15)

    def test_covariance_outcome_independent(self):
        s = with_pulse(poisson_state())
        sigma = math.sqrt(s.cov[4, 4])
        a = gc.condition_on_pulses(s, [0], [s.mean[4]])
        b = gc.condition_on_pulses(s, [0], [s.mean[4] + 10 * sigma])
        np.testing.assert_array_equal(a.cov, b.cov)
        assert not np.allclose(a.mean, b.mean)

    def test_scalar_kalman_update(self):
        s = with_pulse(poisson_state())
        out = gc.condition_on_pulses(s, [0])
        v = np.array([1, 0, 0, -1.0])
        prior = v @ s.cov[:4, :4] @ v
        k2 = G ** 2 * ALPHA
        expected = 1.0 / (1.0 / prior + 4 * k2)  # information adds, vacuum noise 1/4
        assert v @ out.cov[:4, :4] @ v == pytest.approx(expected, rel=1e-9)
        assert expected < prior

    def test_measured_rows_collapse(self):
        out = gc.condition_on_pulses(with_pulse(poisson_state()), [0], [1.0])
        assert out.mean[4] == pytest.approx(1.0)
        assert not np.any(out.cov[4, :]) and not np.any(out.cov[:, 4])
        assert out.measured == {0}

    def test_double_conditioning_rejected(self):
        out = gc.condition_on_pulses(with_pulse(poisson_state()), [0])
        with pytest.raises(InvalidArgument):
            gc.condition_on_pulses(out, [0])

    def test_singular_block(self):
        s = gc.PhaseSpaceState(np.zeros(6), np.zeros((6, 6)), n_pulses=1)
        with pytest.raises(NumericalDegeneracy):
            gc.condition_on_pulses(s, [0])

    @given(omegas, deltas, times, st.floats(1e8, 1e11))
    def test_never_increases_variance(self, omega, delta, t, alpha_sq):
        s = gc.rabi_evolve(poisson_state(), omega, delta, t)
        s = with_pulse(s, alpha_sq)
        s = gc.rabi_evolve(s, omega, delta, t)
        s = with_pulse(s, alpha_sq)
        out = gc.condition_on_pulses(s, [0, 1])
        assert np.all(np.diag(out.cov) <= np.diag(s.cov) * (1 + 1e-12) + 1e-9)


@st.composite
def op_sequences(draw):
    ops = draw(st.lists(st.tuples(st.sampled_from("rqd"), omegas, deltas, times,
                                  st.floats(0.0, 3e10), st.floats(0.0, 0.3)), min_size=1, max_size=8))
    return ops


class TestInvariants:

    @given(op_sequences())
    def test_psd_and_symmetric_after_any_sequence(self, ops):
        s = poisson_state()
        for kind, omega, delta, t, alpha_sq, eta in ops:
            if kind == "r":
                s = gc.rabi_evolve(s, omega, delta, t)
            elif kind == "q":
                s = with_pulse(s, alpha_sq)
            else:
                s = gc.apply_decoherence(s, eta)
            assert s.mean.shape == (s.dim,) and s.cov.shape == (s.dim, s.dim)
            assert np.allclose(s.cov, s.cov.T, rtol=1e-12, atol=0)
            assert psd_ok(s.cov)

    @given(op_sequences())
    def test_vacuum_floor(self, ops):
        s = poisson_state()
        for kind, omega, delta, t, alpha_sq, eta in ops:
            s = gc.rabi_evolve(s, omega, delta, t)
            s = with_pulse(s, alpha_sq)
            s = gc.apply_decoherence(s, eta)
        _, gamma = gc.extract_measurement_stats(s, range(s.n_pulses))
        assert np.linalg.eigvalsh(gamma - 0.25 * np.eye(s.n_pulses)).min() >= -1e-9 * np.trace(gamma)
