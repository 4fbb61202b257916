"""Cancellation state machine tests: smoothing, nulling, ledger, streaming."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jamcancel import modem
from jamcancel.canceller import (
    ActionKind,
    CancellerState,
    ChannelState,
    cancel,
    classify,
    estimate_amplitude_ratio,
    indicators,
    run_stream,
    select_jammer_phase,
    smooth_phase,
    step,
)
from jamcancel.channel import ScenarioConfig, apply_channel, build_scenario, make_gains
from jamcancel.iqcore import (
    UsageError,
    circular_distance,
    complex_gaussian,
    make_rng,
    measure_power,
    wrap_phase,
)


class TestIndicators:
    def test_clear_single(self):
        assert indicators(0.9, 0.1) == (1, 0)

    def test_threshold_strict(self):
        assert indicators(0.5, 0.5) == (0, 0)

    def test_collision(self):
        assert indicators(0.51, 0.99) == (1, 1)


class TestClassify:
    def test_three_states(self):
        assert classify((0, 0)) is ChannelState.NOISE
        assert classify((1, 0)) is ChannelState.SINGLE
        assert classify((0, 1)) is ChannelState.SINGLE
        assert classify((1, 1)) is ChannelState.COLLISION


class TestSmoothPhase:
    def test_initialization(self):
        assert smooth_phase(None, 1.0, 0.01) == 1.0

    def test_fixed_point(self):
        for lam in (0.001, 0.01, 0.5, 1.0):
            assert smooth_phase(0.7, 0.7, lam) == pytest.approx(0.7)

    def test_phasor_mode_wraps_correctly(self):
        # Oracle: the blend of e^{j*3.1} and e^{-j*3.1} at equal weight has
        # angle pi (not 0); linear averaging would wrongly give 0.
        oracle = float(np.angle(0.5 * np.exp(1j * 3.1) + 0.5 * np.exp(-1j * 3.1)))
        got = smooth_phase(3.1, -3.1, 0.5, mode="phasor")
        assert abs(got) == pytest.approx(np.pi, abs=1e-9)
        assert got == pytest.approx(float(wrap_phase(oracle)), abs=1e-9)

    def test_linear_mode_is_weighted_average(self):
        assert smooth_phase(0.2, 1.2, 0.25, mode="linear") == pytest.approx(
            0.25 * 1.2 + 0.75 * 0.2)

    def test_lambda_one_is_replacement(self):
        assert smooth_phase(0.1, -2.0, 1.0) == pytest.approx(-2.0)

    def test_bad_lambda(self):
        with pytest.raises(UsageError):
            smooth_phase(0.0, 0.0, 0.0)
        with pytest.raises(UsageError):
            smooth_phase(0.0, 0.0, 1.5)

    def test_bad_mode(self):
        with pytest.raises(UsageError):
            smooth_phase(0.0, 0.1, 0.5, mode="quadratic")

    @given(cur=st.floats(-np.pi, np.pi, exclude_max=True),
           new=st.floats(-np.pi, np.pi, exclude_max=True),
           lam=st.floats(0.001, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_phasor_result_between_inputs(self, cur, new, lam):
        out = smooth_phase(cur, new, lam, mode="phasor")
        assert -np.pi <= out < np.pi
        # The blend never overshoots past the new estimate.
        d_total = float(circular_distance(cur, new))
        assert float(circular_distance(out, cur)) <= d_total + 1e-9
        assert float(circular_distance(out, new)) <= d_total + 1e-9


class TestCancel:
    def test_algebraic_identity_noise_free(self):
        rng = make_rng(0)
        g = make_gains(2 * np.pi / 3, 1.3, rng)
        s = complex_gaussian(rng, 4096)
        j = complex_gaussian(rng, 4096) * 10.0  # SJR -20 dB
        r1, r2 = apply_channel(s, j, g, 0.0, rng)
        out = cancel(r1, r2, g.a_j, g.delta_phi_j)
        # Output is exactly p2 * S; jammer residual vanishes.
        np.testing.assert_allclose(out, g.p2 * s, atol=1e-12)
        residual = out - g.p2 * s
        assert measure_power(residual) <= 1e-20 * measure_power(g.h_j1 * j)

    def test_zero_sep_nulls_sender_too(self):
        rng = make_rng(1)
        g = make_gains(0.0, 1.0, rng)
        s = complex_gaussian(rng, 1024)
        r1, r2 = apply_channel(s, None, g, 0.0, rng)
        out = cancel(r1, r2, g.a_j, g.delta_phi_j)
        assert measure_power(out) < 1e-24

    def test_residual_from_phase_error(self):
        # Residual jammer power with a perturbed phase matches the
        # closed form |1 - e^{j*err}|^2 * E_J at unit amplitude ratio.
        rng = make_rng(2)
        g = make_gains(np.pi / 2, 1.0, rng)
        j = complex_gaussian(rng, 200_000) * 10 ** 0.9  # SJR -18 dB vs unit S
        r1, r2 = apply_channel(None, j, g, 0.0, rng)
        err = 0.1
        out = cancel(r1, r2, g.a_j, g.delta_phi_j + err)
        e_j1 = measure_power(g.h_j1 * j)
        expected = abs(1 - np.exp(1j * err)) ** 2 * e_j1
        assert measure_power(out) == pytest.approx(expected, rel=0.05)

    def test_nonpositive_ratio_rejected(self):
        with pytest.raises(UsageError):
            cancel(np.ones(4), np.ones(4), 0.0, 0.1)


class TestSelectJammerPhase:
    def test_closest_to_tracked_jammer(self):
        state = CancellerState(delta_phi_j=0.5)
        phase, conf = select_jammer_phase(0.45, 2.0, state)
        assert phase == 0.45 and conf

    def test_wrap_aware_distance(self):
        state = CancellerState(delta_phi_j=-3.0)
        phase, conf = select_jammer_phase(3.1, 0.0, state)
        assert phase == 3.1 and conf  # circular distance 0.183 < 3.0

    def test_tie_break_first_slot(self):
        state = CancellerState(delta_phi_j=0.0)
        phase, _ = select_jammer_phase(0.3, -0.3, state)
        assert phase == 0.3

    def test_sender_history_picks_farther_candidate(self):
        state = CancellerState(delta_phi_s=1.0)
        phase, conf = select_jammer_phase(1.1, -2.0, state)
        assert phase == -2.0 and conf

    def test_cold_start_low_confidence(self):
        phase, conf = select_jammer_phase(0.2, 0.9, CancellerState())
        assert phase == 0.9 and not conf


class TestEstimateAmplitudeRatio:
    def test_synthetic_arithmetic(self):
        # E_S = (1, 1); totals (5, 2) mean the jammer added (4, 1): sqrt(4/1) = 2.
        state = CancellerState(e_s=(1.0, 1.0))
        a_j, new_state = estimate_amplitude_ratio(state, (5.0, 2.0))
        assert a_j == pytest.approx(2.0)
        assert new_state.a_j_last == pytest.approx(2.0)

    def test_degenerate_falls_back_to_last(self):
        state = CancellerState(e_s=(1.0, 1.0), a_j_last=1.5)
        a_j, new_state = estimate_amplitude_ratio(state, (0.9, 2.0))
        assert a_j == 1.5
        assert new_state.degenerate_ratio_count == 1

    def test_degenerate_without_history_returns_unity(self):
        a_j, _ = estimate_amplitude_ratio(CancellerState(), (2.0, 2.0))
        assert a_j == 1.0

    def test_sender_ledger_refresh_after_jammer_single(self):
        # Previous period: lone jammer (XOR indicators, I_last_J = 1);
        # entering the collision refreshes E_S = E_T - E_J once.
        state = CancellerState(e_j=(3.0, 1.0), i_last_j=1,
                               prev_indicators=(0, 1))
        a_j, new_state = estimate_amplitude_ratio(state, (6.0, 3.0))
        # Refreshed E_S = (3, 2); ratio sqrt((6-3)/(3-2)) = sqrt(3).
        assert new_state.e_s == (3.0, 2.0)
        assert new_state.e_s_frozen
        assert a_j == pytest.approx(np.sqrt(3.0))

    def test_no_refresh_when_previous_was_collision(self):
        state = CancellerState(e_s=(1.0, 1.0), e_j=(3.0, 1.0), i_last_j=1,
                               prev_indicators=(1, 1))
        _, new_state = estimate_amplitude_ratio(state, (6.0, 3.0))
        assert new_state.e_s == (1.0, 1.0)  # held, not refreshed


class _Oracle:
    """Network-output stand-in built from scenario ground truth."""

    @staticmethod
    def outputs(scenario):
        g = scenario.truth.gains
        n = len(scenario.truth.states)
        p = np.zeros((n, 2))
        i = np.zeros((n, 2))
        for b, state in enumerate(scenario.truth.states):
            name = state.value
            if name == "sender_only":
                p[b] = (g.delta_phi_s, 0.0)
                i[b] = (0.99, 0.01)
            elif name == "jammer_only":
                p[b] = (g.delta_phi_j, 0.0)
                i[b] = (0.99, 0.01)
            elif name == "collision":
                lo, hi = sorted((g.delta_phi_s, g.delta_phi_j))
                p[b] = (lo, hi)
                i[b] = (0.99, 0.99)
            else:
                i[b] = (0.01, 0.01)
        return p, i


class TestStep:
    def test_noise_blocks_skip_and_preserve_trackers(self):
        state = CancellerState(delta_phi_j=0.4, e_j=(2.0, 1.0), i_last_j=1)
        block = complex_gaussian(make_rng(3), 128, 0.01)
        action, new_state, diag = step(state, block, block, 0.0, 0.0,
                                       0.1, 0.2, modem.ModScheme.DBPSK)
        assert action.kind is ActionKind.SKIP
        assert diag.state is ChannelState.NOISE
        assert new_state.delta_phi_j == 0.4
        assert new_state.e_j == (2.0, 1.0)

    def test_step_never_mutates_input_state(self):
        state = CancellerState(delta_phi_j=0.4)
        block = complex_gaussian(make_rng(4), 128)
        step(state, block, block, 0.1, 0.2, 0.9, 0.9, modem.ModScheme.DBPSK)
        assert state.delta_phi_j == 0.4
        assert state.prev_state is ChannelState.NOISE

    def test_jammer_single_updates_jammer_ledger(self):
        # A long noise-like single stream with no preamble resolves as the
        # jammer and updates E_J, delta_phi_j, I_last_J.
        rng = make_rng(5)
        state = CancellerState(lam=1.0)
        g = make_gains(np.pi / 2, 1.2, rng)
        j = complex_gaussian(rng, 6 * 128)
        r1, r2 = apply_channel(None, j, g, 0.0, rng)
        for b in range(6):
            sl = slice(b * 128, (b + 1) * 128)
            action, state, diag = step(state, r1[sl], r2[sl],
                                       g.delta_phi_j, 0.0, 0.95, 0.05,
                                       modem.ModScheme.DBPSK)
            assert action.kind is ActionKind.PASS
        assert state.i_last_j == 1
        assert state.delta_phi_j == pytest.approx(g.delta_phi_j)
        assert state.e_j is not None

    def test_sender_single_updates_sender_ledger(self):
        rng = make_rng(6)
        state = CancellerState(lam=1.0)
        g = make_gains(np.pi / 2, 1.0, rng)
        payload = rng.integers(0, 2, 512).astype(np.uint8)
        wave = modem.serialize_packet(modem.frame(payload), modem.ModScheme.DBPSK)
        wave = np.concatenate([wave, np.zeros((-wave.size) % 128)])
        r1, r2 = apply_channel(wave, None, g, 1e-8, rng)
        for b in range(wave.size // 128):
            sl = slice(b * 128, (b + 1) * 128)
            _, state, _ = step(state, r1[sl], r2[sl],
                               g.delta_phi_s, 0.0, 0.95, 0.05,
                               modem.ModScheme.DBPSK)
        assert state.i_last_j == 0
        assert state.delta_phi_s == pytest.approx(g.delta_phi_s, abs=1e-6)
        # E_S tracks the measured single-period power.
        assert state.e_s[0] == pytest.approx(measure_power(r1[-128:]), rel=1e-9)

    def test_collision_uses_warmup_phase_and_power(self):
        # Jammer-only warm-up then collision: the first collision block
        # emits CANCELLED using the warm-up ledger.
        cfg = ScenarioConfig(scheme=modem.ModScheme.DBPSK, sjr_db=-15.0,
                             snr_db=200.0, sep_rad=2 * np.pi / 3, seed=11,
                             n_packets=1, payload_bytes=64, warmup_blocks=8)
        sc = build_scenario(cfg)
        p, i = _Oracle.outputs(sc)
        state = CancellerState(lam=1.0)
        out, actions, diags, state = run_stream(
            state, sc.r1, sc.r2, (p, i), cfg.scheme, 128)
        first_collision = sc.truth.states.index(
            next(s for s in sc.truth.states if s.value == "collision"))
        assert actions[first_collision] is ActionKind.CANCELLED
        d = diags[first_collision]
        g = sc.truth.gains
        assert d.phase == pytest.approx(g.delta_phi_j, abs=1e-6)
        assert d.a_j == pytest.approx(g.a_j, rel=0.05)
        assert d.confident


class TestRunStream:
    def test_all_noise_stream_all_skip(self):
        rng = make_rng(7)
        r = complex_gaussian(rng, 10 * 128, 0.01)
        p = np.zeros((10, 2))
        i = np.full((10, 2), 0.1)
        out, actions, _, state = run_stream(CancellerState(), r, r, (p, i),
                                            modem.ModScheme.DBPSK, 128)
        assert all(a is ActionKind.SKIP for a in actions)
        np.testing.assert_array_equal(out, r)  # raw pass-through keeps alignment
        assert state.delta_phi_j is None

    def test_replay_reproduces_identical_outputs(self):
        cfg = ScenarioConfig(sjr_db=-10.0, seed=13, n_packets=2, warmup_blocks=6)
        sc = build_scenario(cfg)
        p, i = _Oracle.outputs(sc)
        a1 = run_stream(CancellerState(), sc.r1, sc.r2, (p, i), cfg.scheme, 128)
        a2 = run_stream(CancellerState(), sc.r1, sc.r2, (p, i), cfg.scheme, 128)
        np.testing.assert_array_equal(a1[0], a2[0])
        assert a1[1] == a2[1]

    def test_truth_driven_cancellation_recovers_packets(self):
        # Full loop with oracle network outputs: warm-up tracks the jammer,
        # collisions cancel, packets decode error-free at strong jamming.
        cfg = ScenarioConfig(scheme=modem.ModScheme.DQPSK, sjr_db=-15.0,
                             snr_db=40.0, sep_rad=2 * np.pi / 3, seed=17,
                             n_packets=3, payload_bytes=64, warmup_blocks=10)
        sc = build_scenario(cfg)
        p, i = _Oracle.outputs(sc)
        out, actions, _, _ = run_stream(CancellerState(lam=1.0), sc.r1, sc.r2,
                                        (p, i), cfg.scheme, 128)
        g = sc.truth.gains
        errors = 0
        for payload, (a, b) in zip(sc.truth.sent_payloads,
                                   sc.truth.packet_symbol_ranges):
            ok, got = modem.check_decodable(out[a:b], cfg.scheme)
            assert ok
            errors += int(np.sum(got != payload))
        assert errors == 0

    def test_smoothing_variance_ordering_on_noisy_estimates(self):
        # Noisy phase estimates: lam = 0.01 yields steadier emitted block
        # energy than lam = 1 (qualitative energy-variation trend).
        cfg = ScenarioConfig(scheme=modem.ModScheme.DBPSK, sjr_db=-12.0,
                             snr_db=30.0, sep_rad=np.pi / 2, seed=19,
                             n_packets=6, payload_bytes=128, warmup_blocks=20)
        sc = build_scenario(cfg)
        p, i = _Oracle.outputs(sc)
        rng = make_rng(20)
        p = p + rng.normal(0.0, 0.15, p.shape)  # estimator noise
        variances = {}
        for lam in (1.0, 0.01):
            out, actions, _, _ = run_stream(CancellerState(lam=lam),
                                            sc.r1, sc.r2, (p, i),
                                            cfg.scheme, 128)
            energies = [measure_power(out[b * 128:(b + 1) * 128])
                        for b, a in enumerate(actions)
                        if a is ActionKind.CANCELLED]
            variances[lam] = float(np.var(energies))
        assert variances[0.01] < variances[1.0]
