"""Numerical kernels: eigenvalues, Hurwitz/stabilizability tests, solves,
gain synthesis, decay certificates."""

import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from formstab import (
    NotStabilizableError,
    RateTooAggressive,
    Tolerances,
    controllability_matrix,
    eigenvalues,
    exp_envelope,
    is_hurwitz,
    is_stabilizable,
    matrix_rank,
    solve_matrix_equation,
    spectral_abscissa,
    stabilize,
)
from formstab.instances import random_controllable_pair, three_agent_chain

CHAIN = three_agent_chain()
A1, A2, A3 = (CHAIN.agent(i).A for i in (1, 2, 3))
B1, B2, B3 = (CHAIN.agent(i).B for i in (1, 2, 3))


class TestEigenvalues:
    def test_diagonal(self):
        assert np.allclose(sorted(eigenvalues(np.diag([1.0, 2.0])).real), [1.0, 2.0])

    def test_identity_multiplicity(self):
        eigs = eigenvalues(np.eye(2))
        assert np.allclose(eigs, [1.0, 1.0])

    def test_hand_oracle_characteristic_polynomial(self):
        # [[0,-1],[-2,0]]: lambda^2 - 2 = 0, roots +-sqrt(2)
        eigs = eigenvalues(np.array([[0.0, -1.0], [-2.0, 0.0]]))
        assert np.allclose(sorted(eigs.real), [-math.sqrt(2), math.sqrt(2)])
        assert np.allclose(eigs.imag, 0.0)

    def test_complex_pair(self):
        eigs = eigenvalues(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        assert np.allclose(sorted(e.imag for e in eigs), [-1.0, 1.0])
        assert np.allclose([e.real for e in eigs], 0.0)

    @given(seed=st.integers(0, 100_000), n=st.integers(1, 6))
    @settings(max_examples=60, deadline=None)
    def test_trace_and_determinant_invariants(self, seed, n):
        A = np.random.default_rng(seed).standard_normal((n, n))
        eigs = eigenvalues(A)
        assert len(eigs) == n
        tr = float(np.trace(A))
        assert abs(np.sum(eigs).real - tr) <= 1e-9 * (1.0 + abs(tr))
        assert abs(np.sum(eigs).imag) <= 1e-9
        det = float(np.linalg.det(A))
        prod = np.prod(eigs)
        assert abs(prod - det) <= 1e-6 * (1.0 + abs(det))


class TestHurwitz:
    def test_negative_identity(self):
        rep = is_hurwitz(-np.eye(2))
        assert rep.is_hurwitz and rep.spectral_abscissa == pytest.approx(-1.0)

    def test_unstable_diagonal_leader_matrix(self):
        rep = is_hurwitz(A1)
        assert not rep.is_hurwitz
        assert rep.spectral_abscissa == pytest.approx(2.0)

    def test_saddle_is_not_hurwitz(self):
        rep = is_hurwitz(A3)
        assert not rep.is_hurwitz
        assert rep.spectral_abscissa == pytest.approx(math.sqrt(2))

    def test_margin_semantics(self):
        # abscissa at exactly -margin is not strictly inside
        tol = Tolerances(eps_hurwitz=1e-3)
        assert not is_hurwitz(np.diag([-1e-3, -1.0]), tol).is_hurwitz
        assert is_hurwitz(np.diag([-2e-3, -1.0]), tol).is_hurwitz


class TestSolveMatrixEquation:
    def test_chain_follower_gain_equation(self):
        rep = solve_matrix_equation(B2, A1 - A2)
        assert rep.solvable
        assert np.allclose(rep.solution, [[1.0, 1.0]])
        assert rep.relative_residual <= 1e-12

    def test_chain_pairwise_infeasible(self):
        rep = solve_matrix_equation(B3, A2 - A3)
        assert not rep.solvable
        assert rep.relative_residual > 1e-2

    def test_zero_system(self):
        rep = solve_matrix_equation(np.zeros((2, 1)), np.zeros((2, 2)))
        assert rep.solvable
        assert np.allclose(rep.solution, 0.0)
        assert rep.rank_B == 0

    def test_vector_rhs_round_trip(self):
        rep = solve_matrix_equation(B2, A2 @ np.array([2.0, 1.0]))
        assert rep.solvable and rep.solution.shape == (1,)
        assert rep.solution[0] == pytest.approx(-1.0)

    def test_row_count_mismatch(self):
        with pytest.raises(ValueError):
            solve_matrix_equation(np.zeros((2, 1)), np.zeros((3, 1)))

    @given(seed=st.integers(0, 100_000))
    @settings(max_examples=60, deadline=None)
    def test_consistent_systems_solve_to_tolerance(self, seed):
        rng = np.random.default_rng(seed)
        n, m, k = (int(x) for x in rng.integers(1, 5, 3))
        B = rng.standard_normal((n, m))
        X0 = rng.standard_normal((m, k))
        C = B @ X0
        rep = solve_matrix_equation(B, C)
        assert rep.solvable
        assert np.linalg.norm(B @ rep.solution - C) <= 1e-8 * (1 + np.linalg.norm(C))
        # minimum-norm solution never beats the generating one
        assert np.linalg.norm(rep.solution) <= np.linalg.norm(X0) + 1e-9


class TestStabilizability:
    def test_chain_follower_is_stabilizable(self):
        assert is_stabilizable(A2, B2)

    def test_unstable_with_zero_input_matrix(self):
        res = is_stabilizable(np.diag([1.0, 2.0]), np.zeros((2, 1)))
        assert not res
        assert res.witness == pytest.approx(1.0)

    def test_hurwitz_with_zero_input_matrix(self):
        assert is_stabilizable(np.diag([-1.0, -2.0]), np.zeros((2, 1)))

    def test_stabilizable_but_not_controllable(self):
        A = np.diag([-1.0, 1.0])
        B = np.array([[0.0], [1.0]])
        assert is_stabilizable(A, B)
        assert np.linalg.matrix_rank(controllability_matrix(A, B)) == 1

    def test_unstable_uncontrollable_mode(self):
        A = np.diag([1.0, 2.0])
        B = np.array([[1.0], [0.0]])
        res = is_stabilizable(A, B)
        assert not res and res.witness == pytest.approx(2.0)

    @given(seed=st.integers(0, 100_000))
    @settings(max_examples=40, deadline=None)
    def test_agrees_with_controllability_rank(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        A, B = random_controllable_pair(rng, n, m)
        assert matrix_rank(controllability_matrix(A, B)) == n
        assert is_stabilizable(A, B)


class TestStabilize:
    def test_chain_followers(self):
        for A, B in ((A2, B2), (A3, B3)):
            S = stabilize(A, B)
            assert is_hurwitz(A + B @ S).is_hurwitz

    def test_hurwitz_input_is_fine(self):
        A = np.diag([-1.0, -2.0])
        B = np.array([[1.0], [3.0]])
        S = stabilize(A, B)
        assert is_hurwitz(A + B @ S).is_hurwitz

    def test_zero_b_on_hurwitz_matrix_gives_zero_gain(self):
        S = stabilize(-np.eye(3), np.zeros((3, 2)))
        assert np.array_equal(S, np.zeros((2, 3)))

    def test_not_stabilizable_raises_with_witness(self):
        with pytest.raises(NotStabilizableError) as exc:
            stabilize(np.diag([1.0, 2.0]), np.zeros((2, 1)))
        assert exc.value.witness == pytest.approx(1.0)

    def test_stabilizable_uncontrollable_pair(self):
        A = np.diag([-0.5, 3.0])
        B = np.array([[0.0], [1.0]])
        S = stabilize(A, B)
        assert is_hurwitz(A + B @ S).is_hurwitz

    @given(seed=st.integers(0, 100_000))
    @settings(max_examples=40, deadline=None)
    def test_random_controllable_pairs_closed_loop_hurwitz(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 3))
        A, B = random_controllable_pair(rng, n, m)
        S = stabilize(A, B)
        assert is_hurwitz(A + B @ S).is_hurwitz


class TestExpEnvelope:
    def test_negative_identity_tight(self):
        env = exp_envelope(-np.eye(2), 0.5)
        assert env.C == pytest.approx(1.0, abs=1e-9)
        assert env.alpha == 0.5

    def test_non_normal_transient_growth(self):
        A = np.array([[-1.0, 10.0], [0.0, -1.0]])
        env = exp_envelope(A, 0.5)
        # sampled oracle: the transient really does exceed the asymptote
        ts = np.linspace(0.0, 10.0, 200)
        sampled = max(
            np.linalg.norm(scipy.linalg.expm(t * A), 2) * math.exp(0.5 * t) for t in ts
        )
        assert sampled > 1.0
        assert env.C >= sampled / (1.0 + 1e-6)
        assert env.C > 1.0

    def test_rate_too_aggressive(self):
        with pytest.raises(RateTooAggressive):
            exp_envelope(np.diag([-0.1, -1.0]), 0.2)

    def test_non_hurwitz_rejected(self):
        with pytest.raises(RateTooAggressive):
            exp_envelope(np.diag([0.5, -1.0]), 0.1)

    @given(seed=st.integers(0, 100_000))
    @settings(max_examples=25, deadline=None)
    def test_certificate_samples_hold(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        R = rng.standard_normal((n, n))
        A = R - (spectral_abscissa(R) + 0.5 + rng.uniform(0, 1)) * np.eye(n)
        alpha = 0.5 * -spectral_abscissa(A)
        env = exp_envelope(A, alpha)
        assert env.C >= 1.0
        for t in np.linspace(0.0, 20.0 / alpha, 50):
            norm = np.linalg.norm(scipy.linalg.expm(t * A), 2)
            assert norm <= env.C * math.exp(-alpha * t) * (1.0 + 1e-6)


class TestRank:
    def test_chain_controllability_ranks(self):
        assert matrix_rank(controllability_matrix(A2, B2)) == 2
        assert matrix_rank(controllability_matrix(A3, B3)) == 2

    def test_rank_deficient(self):
        assert matrix_rank(np.array([[1.0, 2.0], [2.0, 4.0]])) == 1


def test_tolerances_must_be_positive():
    with pytest.raises(ValueError):
        Tolerances(eps_solve=0.0)
    with pytest.raises(ValueError):
        Tolerances(eps_hurwitz=-1.0)
