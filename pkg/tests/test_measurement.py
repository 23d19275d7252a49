import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magbell.hilbert import (
    HilbertSpace,
    QuantumState,
    basis_state,
    bell_state,
    parity_operator,
    product_state,
    superposed_state,
)
from magbell.measurement import (
    NullOutcomeError,
    ProtocolConfig,
    TargetOverlapError,
    analytic_kraus,
    apply_projection,
    coupling_ratio_fidelity,
    interval_for_target,
    kraus_coefficient,
    numeric_kraus,
    qubit_parity_reference,
    rabi_frequency,
    run_protocol,
    stabilize,
)
from magbell.model import EffectiveParams, build_jc_effective

from conftest import block_return_amplitude, coefficient_power_amplitudes

SQRT2PI_COS = math.cos(math.sqrt(2.0) * math.pi)  # single-excitation damping at resonance


def jc_space(d):
    return HilbertSpace((("atom", 3), ("n", d), ("m", d)))


def magnon(d):
    return HilbertSpace((("n", d), ("m", d)))


class TestRabiFrequency:
    def test_vacuum_pair_is_half_detuning(self, resonant_eff):
        assert rabi_frequency(0, 0, resonant_eff, 0.3) == pytest.approx(0.15)

    def test_resonant_equal_couplings(self):
        eff = EffectiveParams(G_e=2e-3, G_f=2e-3)
        assert rabi_frequency(1, 1, eff, 0.0) == pytest.approx(math.sqrt(2) * 2e-3)
        assert rabi_frequency(3, 3, eff, 0.0) == pytest.approx(math.sqrt(6) * 2e-3)


class TestKrausCoefficient:
    @settings(max_examples=200, deadline=None)
    @given(
        n=st.integers(0, 6), m=st.integers(0, 6),
        g_e=st.floats(0.0, 0.01), g_f=st.floats(0.0, 0.01),
        delta=st.floats(-0.02, 0.02), tau=st.floats(0.0, 1e4),
    )
    def test_magnitude_bounded_by_one(self, n, m, g_e, g_f, delta, tau):
        eff = EffectiveParams(G_e=g_e, G_f=g_f)
        alpha = kraus_coefficient(n, m, eff, delta, tau)
        assert abs(alpha) <= 1.0 + 1e-12
        if n == 0 and m == 0:
            assert abs(abs(alpha) - 1.0) <= 1e-12

    def test_vacuum_pair_unit_magnitude_at_nonzero_detuning(self, resonant_eff):
        alpha = kraus_coefficient(0, 0, resonant_eff, 0.7, 123.4)
        assert abs(alpha) == pytest.approx(1.0, abs=1e-15)

    def test_held_pair_returns_to_one(self, resonant_eff):
        tau0 = interval_for_target(1, resonant_eff, 0.0)
        assert kraus_coefficient(1, 1, resonant_eff, 0.0, tau0) == pytest.approx(1.0, abs=1e-12)

    def test_single_excitation_value_at_resonance(self, resonant_eff):
        tau0 = interval_for_target(1, resonant_eff, 0.0)
        a01 = kraus_coefficient(0, 1, resonant_eff, 0.0, tau0)
        assert a01.real == pytest.approx(SQRT2PI_COS, abs=1e-12)
        assert a01.real == pytest.approx(-0.2663, abs=1e-4)
        assert kraus_coefficient(1, 0, resonant_eff, 0.0, tau0) == pytest.approx(a01)

    def test_revival_at_multiples_of_block_period(self, resonant_eff):
        omega = rabi_frequency(2, 1, resonant_eff, 1.3e-3)
        alpha = kraus_coefficient(2, 1, resonant_eff, 1.3e-3, 2 * math.pi / omega)
        assert abs(alpha) == pytest.approx(1.0, abs=1e-12)


class TestAnalyticKraus:
    def test_decoupled_limit_is_identity(self):
        eff = EffectiveParams(G_e=0.0, G_f=0.0)
        v = analytic_kraus(magnon(3), eff, 0.0, 17.0).matrix
        assert np.abs(v - np.eye(9)).max() <= 1e-14

    def test_diagonal_magnitudes_bounded(self, resonant_eff):
        v = analytic_kraus(magnon(5), resonant_eff, 2e-3, 500.0).matrix
        assert np.abs(np.diag(v)).max() <= 1.0 + 1e-12

    def test_matches_numeric_on_small_grid(self, resonant_eff):
        d = 4
        tau = 0.7 * interval_for_target(1, resonant_eff, 0.0)
        va = analytic_kraus(magnon(d), resonant_eff, 0.0, tau).matrix
        vn = numeric_kraus(build_jc_effective(resonant_eff, jc_space(d)), tau).matrix
        assert np.abs(va - vn).max() <= 1e-10


class TestNumericKraus:
    def test_zero_time_identity(self, resonant_eff):
        v = numeric_kraus(build_jc_effective(resonant_eff, jc_space(3)), 0.0).matrix
        assert np.abs(v - np.eye(9)).max() <= 1e-13

    def test_diagonal_in_fock_basis(self):
        eff = EffectiveParams(G_e=1.7e-3, G_f=0.9e-3, Delta_e_tilde=2e-3, Delta_f_tilde=2e-3)
        v = numeric_kraus(build_jc_effective(eff, jc_space(4)), 800.0).matrix
        assert np.abs(v - np.diag(np.diag(v))).max() <= 1e-12

    def test_matches_block_diagonalization_oracle(self):
        rng = np.random.default_rng(42)
        d = 4
        for _ in range(25):
            g_e, g_f = rng.uniform(1e-4, 5e-3, 2)
            delta = rng.uniform(-5e-3, 5e-3)
            eff = EffectiveParams(G_e=g_e, G_f=g_f, Delta_e_tilde=delta, Delta_f_tilde=delta)
            tau = rng.uniform(0.1, 2.0) * interval_for_target(1, eff, delta)
            v = numeric_kraus(build_jc_effective(eff, jc_space(d)), tau).matrix
            space = magnon(d)
            for k in range(d * d):
                n, m = space.occupations(k)
                want = block_return_amplitude(n, m, g_e, g_f, delta, tau)
                assert abs(v[k, k] - want) <= 1e-10


class TestApplyProjection:
    def test_ground_atom_passes_through(self, resonant_eff):
        space = jc_space(3)
        psi = basis_state(space, (0, 1, 1))
        state, prob = apply_projection(psi)
        assert prob == pytest.approx(1.0, abs=1e-14)
        assert np.allclose(state.data, basis_state(magnon(3), (1, 1)).data)

    def test_excited_atom_is_null_outcome(self):
        psi = basis_state(jc_space(3), (1, 0, 0))
        with pytest.raises(NullOutcomeError):
            apply_projection(psi)

    def test_born_rule_on_product_state(self):
        space = jc_space(2)
        theta = 0.4
        atom = np.array([math.cos(theta), math.sin(theta), 0.0], dtype=complex)
        chi = np.array([0.6, 0.0, 0.8, 0.0], dtype=complex)
        psi = QuantumState(space, "pure", np.kron(atom, chi))
        _, prob = apply_projection(psi)
        assert prob == pytest.approx(math.cos(theta) ** 2, abs=1e-12)


class TestIntervalForTarget:
    def test_single_excitation_reference(self, resonant_eff):
        tau0 = interval_for_target(1, resonant_eff, 0.0)
        assert tau0 == pytest.approx(2 * math.pi / (math.sqrt(2) * 1e-3), rel=1e-12)

    def test_held_coefficient_magnitude(self):
        eff = EffectiveParams(G_e=1e-3, G_f=1.2e-3)
        for n in (1, 2, 3):
            tau = interval_for_target(n, eff, 0.8e-3)
            alpha = kraus_coefficient(n, n, eff, 0.8e-3, tau)
            assert abs(abs(alpha) - 1.0) <= 1e-12

    def test_inverse_sqrt_scaling_at_resonance(self, resonant_eff):
        tau1 = interval_for_target(1, resonant_eff, 0.0)
        tau4 = interval_for_target(4, resonant_eff, 0.0)
        assert tau4 == pytest.approx(tau1 / 2.0, rel=1e-12)


class TestRunProtocol:
    def test_superposed_input_distills_even_bell(self, resonant_eff):
        cfg = ProtocolConfig.for_target(resonant_eff, rounds=8)
        plus = superposed_state(3, 1)
        psi = product_state(magnon(3), {"n": plus, "m": plus})
        rec = run_protocol(psi, cfg)
        assert 1.0 - rec.fidelity_plus[-1] <= 1e-9
        assert rec.success_probability[-1] == pytest.approx(0.5, abs=0.02)
        assert np.all(np.diff(rec.success_probability) <= 1e-15)

    def test_half_interval_odd_rounds_give_odd_bell(self, resonant_eff):
        cfg = ProtocolConfig.for_target(resonant_eff, rounds=16, interval_mode="half")
        plus = superposed_state(3, 1)
        psi = product_state(magnon(3), {"n": plus, "m": plus})
        rec = run_protocol(psi, cfg)
        # closed form: F_minus(odd M) = 1 / (1 + cos(pi/sqrt2)^(2M))
        damp = math.cos(math.pi / math.sqrt(2.0))
        for k in (7, 13, 15):
            assert rec.fidelity_minus[k] == pytest.approx(1.0 / (1.0 + damp ** (2 * k)), abs=1e-12)
        reached = [k for k in range(1, 17, 2) if rec.fidelity_minus[k] >= 1.0 - 1e-6]
        assert reached and min(reached) == 15

    def test_fock_dark_state(self, resonant_eff):
        cfg = ProtocolConfig.for_target(resonant_eff, rounds=5)
        rec = run_protocol(basis_state(magnon(3), (0, 0)), cfg)
        assert np.allclose(rec.fidelity_plus, 0.5, atol=1e-12)
        assert np.allclose(rec.success_probability, 1.0, atol=1e-12)

    def test_zero_target_overlap_rejected(self, resonant_eff):
        cfg = ProtocolConfig.for_target(resonant_eff, rounds=2)
        with pytest.raises(TargetOverlapError):
            run_protocol(basis_state(magnon(3), (0, 1)), cfg)

    def test_unnormalized_populations_follow_coefficient_powers(self):
        # protocol output against the independent per-block power oracle
        eff = EffectiveParams(G_e=1e-3, G_f=1.2e-3)
        cfg = ProtocolConfig.for_target(eff, rounds=12)
        rng = np.random.default_rng(9)
        vec = rng.normal(size=16) + 1j * rng.normal(size=16)
        vec /= np.linalg.norm(vec)
        psi = QuantumState(magnon(4), "pure", vec)
        rec = run_protocol(psi, cfg)
        want = coefficient_power_amplitudes(vec, 1e-3, 1.2e-3, 0.0, cfg.tau, 12, (4, 4))
        got = rec.final_state.data * math.sqrt(rec.success_probability[-1])
        # global phase of the normalized state is fixed by the (0,0) component
        phase = want[0] / got[0]
        assert np.abs(got * phase - want).max() <= 1e-10

    def test_target_pair_population_conserved_unnormalized(self, resonant_eff):
        cfg = ProtocolConfig.for_target(resonant_eff, rounds=10)
        plus = superposed_state(3, 1)
        psi = product_state(magnon(3), {"n": plus, "m": plus})
        rec = run_protocol(psi, cfg)
        kept = rec.even_population * rec.success_probability
        assert np.abs(kept - kept[0]).max() <= 1e-10 * kept[0]

    def test_converged_state_supported_on_even_parity(self, resonant_eff):
        cfg = ProtocolConfig.for_target(resonant_eff, rounds=12)
        plus = superposed_state(3, 1)
        psi = product_state(magnon(3), {"n": plus, "m": plus})
        rec = run_protocol(psi, cfg)
        assert rec.converged_round is not None
        q = parity_operator(magnon(3), ("n", "m")).matrix
        expectation = float(np.real(np.vdot(rec.final_state.data, q @ rec.final_state.data)))
        assert expectation >= 1.0 - 1e-9

    def test_success_probability_lower_bound(self):
        eff = EffectiveParams(G_e=1.4e-3, G_f=0.9e-3)
        cfg = ProtocolConfig.for_target(eff, rounds=6)
        rng = np.random.default_rng(17)
        space = magnon(4)
        for _ in range(10):
            vec = rng.normal(size=16) + 1j * rng.normal(size=16)
            vec /= np.linalg.norm(vec)
            psi = QuantumState(space, "pure", vec)
            initial_pair = abs(vec[space.index((0, 0))]) ** 2 + abs(vec[space.index((1, 1))]) ** 2
            rec = run_protocol(psi, cfg)
            assert rec.success_probability[-1] >= initial_pair - 1e-10

    def test_slow_state_diagnostics_flag_degenerate_pairs(self):
        # equal couplings leave (0, 2) and (2, 0) exactly dark (same block
        # frequency as the held target pair); the record must surface them
        eff = EffectiveParams(G_e=1e-3, G_f=1e-3)
        cfg = ProtocolConfig.for_target(eff, rounds=2)
        plus = superposed_state(4, 1)
        rec = run_protocol(product_state(magnon(4), {"n": plus, "m": plus}), cfg)
        assert (0, 2) in rec.slow_states and (2, 0) in rec.slow_states
        # detuned couplings lift that degeneracy but keep the diagonal family
        eff_split = EffectiveParams(G_e=1e-3, G_f=1.2e-3)
        cfg_split = ProtocolConfig.for_target(eff_split, rounds=2)
        plus10 = superposed_state(10, 1)
        rec_split = run_protocol(product_state(magnon(10), {"n": plus10, "m": plus10}),
                                 cfg_split)
        assert (0, 2) not in rec_split.slow_states
        assert (4, 4) in rec_split.slow_states


class TestStabilize:
    def test_no_decoherence_config_rejected(self, resonant_eff):
        cfg = ProtocolConfig.for_target(resonant_eff, rounds=2)
        with pytest.raises(ValueError):
            stabilize(bell_state(magnon(3), 1, +1), cfg)

    def test_lossless_limit_holds_unit_fidelity(self):
        # default step count; coarser steps leak RK4 error past 1e-8
        eff = EffectiveParams(G_e=6e-3, G_f=6e-3)
        cfg = ProtocolConfig.for_target(eff, rounds=2, decoherence=(0.0, 0.0))
        f_stab, f_free = stabilize(bell_state(magnon(3), 1, +1), cfg)
        assert np.abs(f_stab - 1.0).max() <= 1e-8
        assert np.abs(f_free - 1.0).max() <= 1e-8


class TestCouplingRatioFidelity:
    def test_balanced_value(self):
        want = 2.0 / (2.0 + 2.0 * SQRT2PI_COS**2)
        assert coupling_ratio_fidelity(1.0) == pytest.approx(want, abs=1e-15)
        assert coupling_ratio_fidelity(1.0) == pytest.approx(0.9338, abs=1e-4)

    def test_balanced_is_grid_argmax(self):
        xis = np.linspace(0.8, 1.2, 81)
        values = [coupling_ratio_fidelity(float(x)) for x in xis]
        assert xis[int(np.argmax(values))] == pytest.approx(1.0, abs=1e-12)

    def test_approximation_close_near_balance(self):
        for xi in np.linspace(0.95, 1.05, 21):
            exact = coupling_ratio_fidelity(float(xi))
            approx = coupling_ratio_fidelity(float(xi), approximate=True)
            assert abs(exact - approx) <= 5e-3

    def test_invalid_ratio(self):
        with pytest.raises(ValueError):
            coupling_ratio_fidelity(0.0)


class TestQubitParityReference:
    def test_plus_plus_projects_to_bell(self):
        space = HilbertSpace((("q1", 2), ("q2", 2)))
        plus = superposed_state(2, 1)
        state, prob = qubit_parity_reference(product_state(space, {"q1": plus, "q2": plus}))
        assert prob == pytest.approx(0.5, abs=1e-12)
        assert np.allclose(state.data, bell_state(space, 1, +1).data)

    def test_bell_state_unchanged(self):
        space = HilbertSpace((("q1", 2), ("q2", 2)))
        phi = bell_state(space, 1, +1)
        state, prob = qubit_parity_reference(phi)
        assert prob == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(state.data, phi.data)

    def test_odd_state_is_null_outcome(self):
        space = HilbertSpace((("q1", 2), ("q2", 2)))
        with pytest.raises(NullOutcomeError):
            qubit_parity_reference(basis_state(space, (0, 1)))
