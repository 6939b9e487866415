import math

import numpy as np
import pytest

from noise_adapter.circuits import CX, Circuit, Family, H, X, gen_bell, gen_ghz, gen_qft
from noise_adapter.device import DeviceProfile, preset
from noise_adapter.errors import DomainError, EmptyCountsError, InvalidProfileError, NumericError, ParameterError
from noise_adapter.qsim import (
    CountsMap,
    Distribution,
    GateDurations,
    NoiseChannelSet,
    amplitude_damping,
    bitstring,
    build_channels,
    counts_to_distribution,
    depolarizing,
    ideal_distribution,
    kraus_completeness_error,
    noisy_distribution,
    phase_damping,
    sample_counts,
)
from noise_adapter.qsim import simulator


def _circuit(n, gates):
    return Circuit("t", Family.RANDOM, n, tuple(gates))


class TestChannels:
    @pytest.mark.parametrize("strength", [i / 10 for i in range(10)] + [0.01])
    def test_kraus_sets_are_complete(self, strength):
        for kraus in (amplitude_damping(strength), phase_damping(strength), depolarizing(strength)):
            assert kraus_completeness_error(kraus) < 1e-12

    def test_source_channel_strengths(self):
        ch = build_channels(preset("SourceA"))
        assert ch.gamma1_2q == pytest.approx(1 - math.exp(-0.30 / 142.4), rel=1e-12)
        assert ch.gamma1_1q == pytest.approx(1 - math.exp(-0.05 / 142.4), rel=1e-12)
        rate_phi = 1 / 104.1 - 1 / (2 * 142.4)
        assert ch.gamma_phi_2q == pytest.approx(1 - math.exp(-0.30 * rate_phi), rel=1e-12)
        assert ch.p_dep_2q == 0.0328
        assert ch.p_dep_1q == pytest.approx(0.00328)
        assert ch.p_readout == 0.0285

    def test_near_infinite_coherence_gives_no_decay(self):
        ch = build_channels(DeviceProfile(name="clean", t1_us=1e12, t2_us=1e12, readout_error=0.0, cx_error=0.0))
        assert ch.gamma1_2q < 1e-12
        assert ch.gamma_phi_2q < 1e-12

    def test_longer_gates_decay_more(self):
        short = build_channels(preset("TargetB"), GateDurations(t_1q=0.05, t_2q=0.3))
        long = build_channels(preset("TargetB"), GateDurations(t_1q=0.05, t_2q=0.6))
        assert long.gamma1_2q > short.gamma1_2q

    def test_incoherent_profile_is_rejected(self):
        bad = DeviceProfile.model_construct(name="bad", t1_us=10.0, t2_us=25.0, readout_error=0.01, cx_error=0.01)
        with pytest.raises(InvalidProfileError):
            build_channels(bad)

    def test_channel_strength_range(self):
        with pytest.raises(ParameterError):
            NoiseChannelSet(p_readout=1.0)


class TestIdeal:
    def test_bell(self):
        np.testing.assert_allclose(ideal_distribution(gen_bell(0)).probs, [0.5, 0, 0, 0.5], atol=1e-12)

    def test_ghz_three_qubits(self):
        probs = ideal_distribution(gen_ghz(1)).probs
        expected = np.zeros(8)
        expected[[0, 7]] = 0.5
        np.testing.assert_allclose(probs, expected, atol=1e-12)

    @pytest.mark.parametrize("variant", [0, 4, 8, 12])
    def test_qft_of_a_basis_state_is_uniform(self, variant):
        c = gen_qft(variant, np.random.default_rng(variant))
        np.testing.assert_allclose(ideal_distribution(c).probs, np.full(2 ** c.n_qubits, 2.0 ** -c.n_qubits), atol=1e-12)

    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_qubit_k_is_bit_k(self, k):
        probs = ideal_distribution(_circuit(3, [X(k)])).probs
        assert probs[2 ** k] == pytest.approx(1.0)
        assert bitstring(2 ** k, 3)[-1 - k] == "1"

    def test_null_channels_reproduce_ideal(self, suite):
        for c in suite.circuits:
            np.testing.assert_allclose(
                noisy_distribution(c, NoiseChannelSet.null()).probs, ideal_distribution(c).probs, atol=1e-12
            )


class TestNoisy:
    def test_readout_flip(self):
        d = noisy_distribution(_circuit(1, [X(0)]), NoiseChannelSet(p_readout=0.1))
        np.testing.assert_allclose(d.probs, [0.1, 0.9], atol=1e-12)

    def test_single_qubit_depolarizing(self):
        d = noisy_distribution(_circuit(1, [X(0)]), NoiseChannelSet(p_dep_1q=0.2))
        np.testing.assert_allclose(d.probs, [0.1, 0.9], atol=1e-12)

    def test_amplitude_damping_after_each_gate(self):
        # |1> decays with 0.2, is flipped, then the new |1> decays again
        d = noisy_distribution(_circuit(1, [X(0), X(0)]), NoiseChannelSet(gamma1_1q=0.2))
        np.testing.assert_allclose(d.probs, [0.84, 0.16], atol=1e-12)

    def test_dephasing_shrinks_interference(self):
        # coherence scales by sqrt(1 - 0.36) = 0.8 before the second H
        d = noisy_distribution(_circuit(1, [H(0), H(0)]), NoiseChannelSet(gamma_phi_1q=0.36))
        np.testing.assert_allclose(d.probs, [0.9, 0.1], atol=1e-12)

    def test_two_qubit_noise_hits_both_qubits(self):
        d = noisy_distribution(_circuit(2, [CX(0, 1)]), NoiseChannelSet(p_dep_2q=0.2))
        # each qubit independently leaves |0> with probability 0.1
        np.testing.assert_allclose(d.probs, [0.81, 0.09, 0.09, 0.01], atol=1e-12)

    def test_realistic_noise_keeps_a_distribution(self, suite):
        ch = build_channels(preset("TargetB"))
        for c in suite.circuits[::7]:
            d = noisy_distribution(c, ch)
            assert d.probs.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(d.probs >= 0)

    def test_every_channel_is_checked(self, monkeypatch):
        leaky = lambda gamma: [1.01 * k for k in phase_damping(gamma)]  # noqa: E731
        monkeypatch.setattr(simulator, "phase_damping", leaky)
        ch = NoiseChannelSet(gamma_phi_1q=0.1, p_dep_1q=0.1)
        with pytest.raises(NumericError, match="dephasing on qubit 0 at gate 0"):
            noisy_distribution(_circuit(1, [X(0)]), ch)


class TestSampling:
    def test_point_mass(self):
        counts = sample_counts(Distribution([1.0, 0, 0, 0], 2), 8192, np.random.default_rng(0))
        assert counts.counts == {"00": 8192}

    def test_bell_frequencies_converge(self):
        counts = sample_counts(Distribution([0.5, 0, 0, 0.5], 2), 8192, np.random.default_rng(42))
        assert set(counts.counts) <= {"00", "11"}
        assert abs(counts.counts["00"] / 8192 - 0.5) < 4 * math.sqrt(0.25 / 8192)

    def test_sampling_is_seeded(self):
        d = ideal_distribution(gen_ghz(2))
        a = sample_counts(d, 1000, np.random.default_rng(9))
        b = sample_counts(d, 1000, np.random.default_rng(9))
        assert a.counts == b.counts

    def test_zero_shots(self):
        with pytest.raises(ParameterError):
            sample_counts(Distribution([1.0, 0.0], 1), 0, np.random.default_rng(0))

    def test_counts_to_distribution(self):
        d = counts_to_distribution(CountsMap({"00": 4096, "11": 4096}, 8192, 2), 2)
        np.testing.assert_allclose(d.probs, [0.5, 0, 0, 0.5])
        d = counts_to_distribution(CountsMap({"1": 8192}, 8192, 1), 1)
        np.testing.assert_allclose(d.probs, [0.0, 1.0])

    def test_empty_counts(self):
        with pytest.raises(EmptyCountsError):
            counts_to_distribution(CountsMap({}, 0, 2), 2)

    def test_counts_must_sum_to_shots(self):
        with pytest.raises(DomainError):
            CountsMap({"00": 10}, 11, 2)
