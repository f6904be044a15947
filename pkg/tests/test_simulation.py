"""Closed-loop integration, envelope fitting, and trajectory identities."""

import numpy as np
import pytest
import scipy.linalg

from formstab import (
    AgentDynamics,
    ConstantSignal,
    ControllerSet,
    Edge,
    FormationSpec,
    NonFiniteStateError,
    NotSiblingParentsError,
    PiecewiseConstantSignal,
    SinusoidSignal,
    StepTooLargeError,
    ZeroSignal,
    chain_residual,
    check,
    decompose,
    error_dynamics_check,
    fit_envelope,
    ideal_initial_states,
    is_hurwitz,
    simulate,
    synthesize,
    write_trace_csv,
)
from formstab.controllers import assemble_controller
from formstab.instances import two_leader_fork


def _single_agent(A):
    A = np.asarray(A, dtype=float)
    spec = FormationSpec(
        n=A.shape[0],
        m=1,
        agents=(AgentDynamics(A=A, B=np.zeros((A.shape[0], 1))),),
        edges=(),
    )
    return spec, decompose(spec), ControllerSet(n=A.shape[0], m=1, followers={})


def _destabilized(chain, chain_decomp, ctrl):
    """Flip the sign of the first follower's own gain; breaks its closed
    loop's Hurwitz property while keeping the matching identities."""
    S = {i: ctrl.gains(i).S for i in (2, 3)}
    S[2] = -S[2]
    assert not is_hurwitz(chain.agent(2).A + chain.agent(2).B @ S[2]).is_hurwitz
    N = {i: ctrl.gains(i).N for i in (2, 3)}
    kt = {i: ctrl.gains(i).k_tilde for i in (2, 3)}
    w = {i: {chain_decomp.parent[i]: 1.0} for i in (2, 3)}
    return assemble_controller(chain_decomp, 2, 1, S, N, kt, w)


@pytest.fixture(scope="module")
def chain_ctrl(chain, chain_decomp, chain_report):
    return synthesize(chain, chain_decomp, chain_report)


class TestSignals:
    def test_zero(self):
        sig = ZeroSignal(2)
        assert np.array_equal(sig.value(3.0), [0.0, 0.0])
        assert sig.running_sup(5.0) == 0.0
        assert sig.is_zero

    def test_constant(self):
        sig = ConstantSignal([3.0, 4.0])
        assert sig.running_sup(0.0) == pytest.approx(5.0)
        assert sig.running_sup(7.0) == pytest.approx(5.0)

    @pytest.mark.parametrize("omega,phase,t", [
        (2.0, 0.0, 0.3),     # before the first peak
        (2.0, 0.0, 1.0),     # past the first peak
        (1.0, 2.0, 0.5),     # nonzero phase
        (0.0, 0.7, 9.0),     # frozen sinusoid
        (3.0, -1.0, 4.0),
    ])
    def test_sinusoid_running_sup_matches_dense_sampling(self, omega, phase, t):
        amp = np.array([1.0, -2.0])
        sig = SinusoidSignal(amp, omega, phase)
        taus = np.linspace(0.0, t, 200_001)
        brute = max(np.linalg.norm(sig.value(tau)) for tau in taus)
        exact = sig.running_sup(t)
        assert exact >= brute - 1e-9
        assert exact <= brute + 1e-6 * (1.0 + brute)

    def test_piecewise(self):
        sig = PiecewiseConstantSignal([0.0, 1.0, 2.0], [[1.0], [-3.0], [0.5]])
        assert sig.value(0.5) == pytest.approx(1.0)
        assert sig.value(1.0) == pytest.approx(-3.0)  # right-continuous
        assert sig.left_value(1.0) == pytest.approx(1.0)
        assert sig.running_sup(0.5) == pytest.approx(1.0)
        assert sig.running_sup(1.5) == pytest.approx(3.0)
        assert sig.running_sup(9.0) == pytest.approx(3.0)
        assert sig.breakpoints(10.0) == (1.0, 2.0)
        assert sig.breakpoints(1.5) == (1.0,)

    def test_piecewise_validation(self):
        with pytest.raises(ValueError):
            PiecewiseConstantSignal([0.5, 1.0], [[1.0], [2.0]])
        with pytest.raises(ValueError):
            PiecewiseConstantSignal([0.0, 0.0], [[1.0], [2.0]])


class TestSimulate:
    def test_matrix_exponential_oracle(self):
        A = np.array([[-1.0, 2.0], [0.0, -3.0]])
        spec, dec, ctrl = _single_agent(A)
        x0 = np.array([1.0, -1.0])
        tr = simulate(spec, dec, ctrl, {1: x0}, T=3.0, dt=1e-3)
        exact = scipy.linalg.expm(3.0 * A) @ x0
        assert np.linalg.norm(tr.states[1][-1] - exact) <= 1e-10

    def test_rk4_convergence_order(self):
        A = np.array([[0.0, 4.0], [-9.0, -2.0]])
        spec, dec, ctrl = _single_agent(A)
        x0 = np.array([1.0, -0.5])
        exact = scipy.linalg.expm(2.0 * A) @ x0
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            tr = simulate(spec, dec, ctrl, {1: x0}, T=2.0, dt=dt)
            errs.append(np.linalg.norm(tr.states[1][-1] - exact))
        orders = [np.log2(errs[k] / errs[k + 1]) for k in range(2)]
        assert min(orders) >= 3.8

    def test_ideal_initial_states_keep_errors_at_zero(
        self, chain, chain_decomp, chain_ctrl
    ):
        # the identity is scale-free; verified at a scale where the
        # leader's exp(2t) growth keeps roundoff under the tolerance
        rng = np.random.default_rng(5)
        x0_vec = 1e-13 * rng.standard_normal(2)
        tr = simulate(
            chain, chain_decomp, chain_ctrl,
            ideal_initial_states(chain_decomp, x0_vec), T=20.0,
        )
        worst = max(float(np.linalg.norm(z, axis=1).max()) for z in tr.errors.values())
        assert worst <= 1e-9 * (1.0 + np.linalg.norm(x0_vec))

    def test_limit_of_free_response_is_minus_offset(
        self, chain, chain_decomp, chain_ctrl
    ):
        tr = simulate(
            chain, chain_decomp, chain_ctrl,
            {i: np.zeros(2) for i in chain.nodes}, T=40.0,
        )
        for i in chain.nodes:
            gap = np.linalg.norm(tr.states[i][-1] + chain_decomp.cumulative_offset[i])
            assert gap <= 1e-4

    def test_errors_recomputable_from_states(self, chain, chain_decomp, chain_ctrl):
        rng = np.random.default_rng(2)
        x0 = {i: rng.standard_normal(2) for i in chain.nodes}
        tr = simulate(chain, chain_decomp, chain_ctrl, x0, T=2.0)
        for e in chain.edges:
            recon = tr.states[e.i] - tr.states[e.j] + e.d
            assert np.max(np.abs(recon - tr.errors[e.key])) <= 1e-12
        assert np.all(np.diff(tr.times) > 0)
        assert tr.metadata["integrator"] == "rk4"

    def test_recorded_inputs_match_control_law(self, chain, chain_decomp, chain_ctrl):
        from formstab import control_input

        rng = np.random.default_rng(3)
        x0 = {i: rng.standard_normal(2) for i in chain.nodes}
        tr = simulate(chain, chain_decomp, chain_ctrl, x0, T=1.0)
        k = len(tr.times) // 2
        states_k = {i: tr.states[i][k] for i in chain.nodes}
        for i in (2, 3):
            assert np.allclose(tr.inputs[i][k], control_input(chain_ctrl, i, states_k))
        assert np.allclose(tr.inputs[1], 0.0)

    def test_step_too_large(self, chain, chain_decomp, chain_ctrl):
        with pytest.raises(StepTooLargeError):
            simulate(chain, chain_decomp, chain_ctrl,
                     {i: np.zeros(2) for i in chain.nodes}, T=10.0, dt=1.0)

    def test_non_finite_state_reports_first_bad_time(
        self, chain, chain_decomp, chain_ctrl
    ):
        bad = _destabilized(chain, chain_decomp, chain_ctrl)
        huge = {i: 1e300 * np.ones(2) for i in chain.nodes}
        with pytest.raises(NonFiniteStateError) as exc:
            simulate(chain, chain_decomp, bad, huge, T=40.0)
        assert 0.0 < exc.value.time <= 40.0

    def test_piecewise_signal_steps_align_to_breakpoints(self):
        # one stable controlled leader under a discontinuous input; the
        # segment-exact solution is the oracle
        A = np.array([[-1.0, 0.5], [0.0, -2.0]])
        B = np.array([[1.0], [1.0]])
        spec = FormationSpec(n=2, m=1, agents=(AgentDynamics(A=A, B=B),), edges=())
        dec = decompose(spec)
        ctrl = ControllerSet(n=2, m=1, followers={})
        sig = PiecewiseConstantSignal([0.0, 0.737, 1.5], [[1.0], [-2.0], [0.3]])
        x0 = np.array([0.2, -0.1])
        tr = simulate(spec, dec, ctrl, {1: x0}, signals={1: sig}, T=2.0, dt=1e-2)

        x = x0.copy()
        prev = 0.0
        for b, u in ((0.737, 1.0), (1.5, -2.0), (2.0, 0.3)):
            h = b - prev
            E = scipy.linalg.expm(h * A)
            x = E @ x + np.linalg.solve(A, (E - np.eye(2)) @ (B @ [u])).ravel()
            prev = b
        assert np.linalg.norm(tr.states[1][-1] - x) <= 1e-8
        assert any(abs(t - 0.737) < 1e-12 for t in tr.times)

    def test_rejects_signal_on_follower(self, chain, chain_decomp, chain_ctrl):
        with pytest.raises(ValueError):
            simulate(chain, chain_decomp, chain_ctrl,
                     {i: np.zeros(2) for i in chain.nodes},
                     signals={2: ConstantSignal([1.0])}, T=1.0)

    def test_stacked_system_is_block_lower_triangular(self, good_triangle):
        # coupling only reaches downward in level order
        from formstab.simulation import _closed_loop_blocks

        dec = decompose(good_triangle)
        rep = check(good_triangle, dec)
        ctrl = synthesize(good_triangle, dec, rep)
        order, pos, M, _, _ = _closed_loop_blocks(good_triangle, dec, ctrl)
        n = good_triangle.n
        for row, i in enumerate(order):
            for col, j in enumerate(order):
                if col > row:
                    block = M[pos[i] : pos[i] + n, pos[j] : pos[j] + n]
                    assert not block.any()


class TestEnvelope:
    def test_decay_run_passes_with_positive_rates(
        self, chain, chain_decomp, chain_ctrl
    ):
        rng = np.random.default_rng(42)
        x0 = {i: rng.standard_normal(2) for i in chain.nodes}
        tr = simulate(chain, chain_decomp, chain_ctrl, x0, T=6.0)
        fit = fit_envelope(tr, chain_decomp)
        assert fit.passed and not fit.degenerate
        assert all(a is not None and a > 0 for a in fit.alpha.values())
        assert all(b == 0.0 for b in fit.beta.values())
        assert fit.max_violation <= fit.tolerance

    def test_identically_zero_trace_is_vacuous(self, chain, chain_decomp, chain_ctrl):
        tr = simulate(chain, chain_decomp, chain_ctrl,
                      ideal_initial_states(chain_decomp, np.zeros(2)), T=5.0)
        fit = fit_envelope(tr, chain_decomp)
        assert fit.passed and fit.degenerate
        assert all(a is None for a in fit.alpha.values())

    def test_destabilized_controller_fails(self, chain, chain_decomp, chain_ctrl):
        bad = _destabilized(chain, chain_decomp, chain_ctrl)
        rng = np.random.default_rng(42)
        x0 = {i: rng.standard_normal(2) for i in chain.nodes}
        tr = simulate(chain, chain_decomp, bad, x0, T=6.0)
        fit = fit_envelope(tr, chain_decomp)
        assert not fit.passed
        assert fit.max_violation > fit.tolerance

    def test_forced_run_bounds_input_contribution(self):
        # stable two-leader instance driven by sinusoids: the bound's
        # input term must absorb the steady response
        spec, dec, rep = _stable_fork()
        ctrl = synthesize(spec, dec, rep)
        rng = np.random.default_rng(7)
        x0 = {i: rng.standard_normal(2) for i in spec.nodes}
        sig = {s: SinusoidSignal([0.8], omega=1.7, phase=0.3) for s in sorted(dec.leaders)}
        tr = simulate(spec, dec, ctrl, x0, signals=sig, T=12.0)
        fit = fit_envelope(tr, dec)
        assert fit.passed
        assert all(a is not None and a > 0 for a in fit.alpha.values())
        assert any(b > 0 for b in fit.beta.values())
        assert tr.free_errors is not None

    def test_forced_run_from_ideal_states_costs_only_the_input_term(self):
        spec, dec, rep = _stable_fork()
        ctrl = synthesize(spec, dec, rep)
        sig = {s: ConstantSignal([0.5]) for s in sorted(dec.leaders)}
        tr = simulate(spec, dec, ctrl, ideal_initial_states(dec, np.zeros(2)),
                      signals=sig, T=8.0)
        fit = fit_envelope(tr, dec)
        assert fit.passed and not fit.degenerate
        assert fit.z0_norm <= 1e-12


def _stable_fork():
    base = two_leader_fork()
    # same instance with agreeing displacements: stable multi-leader case
    spec = FormationSpec(
        n=2, m=1, agents=base.agents,
        edges=(Edge(3, 1, [2.0, 0.0]), Edge(3, 2, [2.0, 0.0])),
    )
    dec = decompose(spec)
    rep = check(spec, dec)
    assert rep.stable
    return spec, dec, rep


class TestChainResidual:
    def test_triangle_identity_holds(self, good_triangle):
        dec = decompose(good_triangle)
        rep = check(good_triangle, dec)
        ctrl = synthesize(good_triangle, dec, rep)
        rng = np.random.default_rng(9)
        x0 = {i: rng.standard_normal(2) for i in good_triangle.nodes}
        tr = simulate(good_triangle, dec, ctrl, x0, T=6.0)
        resid = chain_residual(tr, dec, (3, 1), 2)
        assert resid.shape == tr.times.shape
        assert float(resid.max()) <= 1e-9

    def test_distinct_leaders_term(self):
        spec, dec, rep = _stable_fork()
        ctrl = synthesize(spec, dec, rep)
        rng = np.random.default_rng(11)
        x0 = {i: rng.standard_normal(2) for i in spec.nodes}
        sig = {s: SinusoidSignal([0.6], omega=2.0) for s in sorted(dec.leaders)}
        tr = simulate(spec, dec, ctrl, x0, signals=sig, T=6.0)
        resid = chain_residual(tr, dec, (3, 1), 2)
        assert float(resid.max()) <= 1e-9

    def test_in_tree_has_no_sibling_parents(self, chain, chain_decomp, chain_ctrl):
        tr = simulate(chain, chain_decomp, chain_ctrl,
                      {i: np.zeros(2) for i in chain.nodes}, T=1.0)
        with pytest.raises(NotSiblingParentsError):
            chain_residual(tr, chain_decomp, (3, 2), 1)


class TestErrorDynamics:
    def _trace(self, chain, chain_decomp, chain_ctrl, dt):
        rng = np.random.default_rng(0)
        x0 = {
            i: -chain_decomp.cumulative_offset[i] + 0.1 * rng.standard_normal(2)
            for i in chain.nodes
        }
        return simulate(chain, chain_decomp, chain_ctrl, x0, T=2.0, dt=dt)

    def test_defect_small_and_second_order(self, chain, chain_decomp, chain_ctrl):
        d1 = error_dynamics_check(
            self._trace(chain, chain_decomp, chain_ctrl, 1e-3),
            chain, chain_decomp, chain_ctrl,
        )
        d2 = error_dynamics_check(
            self._trace(chain, chain_decomp, chain_ctrl, 5e-4),
            chain, chain_decomp, chain_ctrl,
        )
        assert d1 <= 1e-4
        assert d1 / d2 >= 3.5

    def test_zero_trace_zero_defect(self, chain, chain_decomp, chain_ctrl):
        tr = simulate(chain, chain_decomp, chain_ctrl,
                      ideal_initial_states(chain_decomp, np.zeros(2)), T=1.0)
        assert error_dynamics_check(tr, chain, chain_decomp, chain_ctrl) <= 1e-12


class TestCsvExport:
    def test_header_and_determinism(self, tmp_path, chain, chain_decomp, chain_ctrl):
        rng = np.random.default_rng(1)
        x0 = {i: rng.standard_normal(2) for i in chain.nodes}
        tr = simulate(chain, chain_decomp, chain_ctrl, x0, T=1.0)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trace_csv(tr, chain_decomp, p1)
        write_trace_csv(tr, chain_decomp, p2)
        assert p1.read_bytes() == p2.read_bytes()

        lines = p1.read_text().splitlines()
        assert lines[0] == (
            "time,x_1[1],x_1[2],x_2[1],x_2[2],x_3[1],x_3[2],"
            "z_2_1[1],z_2_1[2],z_3_2[1],z_3_2[2]"
        )
        assert len(lines) == len(tr.times) + 1
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == 0.0
        assert np.allclose(first[1:3], tr.states[1][0])
        assert np.allclose(first[7:9], tr.errors[(2, 1)][0])
