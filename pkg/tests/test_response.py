import numpy as np
import pytest

from nlspec.evolution import EXACT, PulseSchedule
from nlspec.models import build_pump, build_xxz, ground_state, PumpSpec
from nlspec.pauli import OperatorSum, PauliTerm, StateVector
from nlspec.response import (
    MultiIndex,
    ResponseSeries,
    decomposition_rule,
    reconstruct_response,
    response_decomposition,
    rules_for_schedule,
    shift_configurations,
)
from nlspec.shift_rules import taylor_rule


def op(n, *terms):
    return OperatorSum(tuple(PauliTerm(c, f) for c, f in terms), n)


@pytest.fixture(scope="module")
def single_qubit():
    h = op(1, (0.5, {0: "Z"}))
    x = op(1, (1.0, {0: "X"}))
    psi = StateVector.computational_basis(1, 1)
    return h, x, psi


class TestReconstructResponse:
    def test_single_qubit_linear_response(self, single_qubit):
        h, x, psi = single_qubit
        grid = np.linspace(0, 6, 13)
        series = reconstruct_response(
            h, PulseSchedule([(x, [0.0])]), x, grid, MultiIndex([1]), EXACT, psi
        )
        assert np.max(np.abs(series.values + 2 * np.sin(grid))) < 1e-12

    def test_commuting_pump_gives_zero(self):
        h = OperatorSum((), 2)
        b = op(2, (1.0, {0: "Z"}))
        a = op(2, (1.0, {0: "Z"}), (1.0, {1: "Z"}))
        psi = StateVector.computational_basis(2, 2)
        grid = np.linspace(0, 3, 5)
        for m in (1, 2, 3):
            series = reconstruct_response(
                h, PulseSchedule([(b, [0.0])]), a, grid, MultiIndex([m]), EXACT, psi
            )
            assert np.max(np.abs(series.values)) < 1e-12

    def test_linearity_in_observable(self):
        h = build_xxz(4, 0.9, 0.3)
        psi = ground_state(h)
        b = op(4, (1.0, {1: "X"}))
        sched = PulseSchedule([(b, [0.0])])
        grid = np.linspace(0, 4, 9)
        a1 = op(4, (1.0, {2: "X"}))
        a2 = op(4, (0.5, {1: "Z", 2: "Z"}))
        beta = MultiIndex([2])
        s1 = reconstruct_response(h, sched, a1, grid, beta, EXACT, psi)
        s2 = reconstruct_response(h, sched, a2, grid, beta, EXACT, psi)
        s12 = reconstruct_response(h, sched, a1 + a2, grid, beta, EXACT, psi)
        assert np.max(np.abs(s12.values - s1.values - s2.values)) < 1e-12

    def test_configuration_count_matches_product(self):
        b = op(4, (1.0, {1: "X"}))
        sched = PulseSchedule([(b, [0.0]), (b, [1.0])])
        beta = MultiIndex([2, 1])
        rules = rules_for_schedule(sched, beta)
        configs, weights = shift_configurations(rules, beta)
        assert len(configs) == 9  # 3 x 3 Cartesian grid
        assert weights.shape == (9,)

    def test_requires_initial_state(self, single_qubit):
        h, x, _ = single_qubit
        with pytest.raises(ValueError):
            reconstruct_response(
                h, PulseSchedule([(x, [0.0])]), x, [0.0], MultiIndex([1]), EXACT, None
            )


class TestResponseSeries:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ResponseSeries(1, (1,), np.array([0.0]), np.array([np.inf]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ResponseSeries(1, (1,), np.array([0.0, 1.0]), np.array([0.0]))


class TestDecomposition:
    def test_zero_amplitude_only_baseline(self, single_qubit):
        h, x, psi = single_qubit
        grid = np.linspace(0, 3, 7)
        sched = PulseSchedule([(x, [0.0])])
        terms, diff = response_decomposition(h, sched, x, grid, 0.0, 3, EXACT, psi)
        assert np.max(np.abs(diff.values)) < 1e-12
        for n in (1, 2, 3):
            assert np.max(np.abs(terms[n].values)) < 1e-12  # eta^n factor kills them

    def test_cosine_taylor_remainder(self):
        # analytic band-limited signal F(eta) = cos(2 eta), t-independent:
        # A0 = 1, A1 = 0, A2 = -2 eta^2; diff = cos(2 eta) - (1 - 2 eta^2)
        h = OperatorSum((), 1)
        b = op(1, (1.0, {0: "X"}))
        a = op(1, (1.0, {0: "Z"}))
        psi = StateVector.computational_basis(1, 0)
        grid = np.array([0.0, 1.0])
        eta = 0.1
        terms, diff = response_decomposition(
            h, PulseSchedule([(b, [0.0])]), a, grid, eta, 2, EXACT, psi
        )
        assert np.allclose(terms[0].values, 1.0)
        assert np.max(np.abs(terms[1].values)) < 1e-12
        assert np.allclose(terms[2].values, -2 * eta**2, atol=1e-12)
        expected_diff = np.cos(2 * eta) - (1 - 2 * eta**2)
        assert np.allclose(diff.values, expected_diff, atol=1e-12)

    def test_polynomial_signal_truncates_exactly(self):
        # with the taylor rule, a polynomial signal of degree m yields
        # A^n = 0 for all n > m
        rule = taylor_rule(range(6), 6, 0.25)
        h = OperatorSum((), 1)
        b = op(1, (0.5, {0: "Z"}))
        a = op(1, (1.0, {0: "Z"}))
        psi = StateVector.computational_basis(1, 0)
        # build a synthetic sampler by overriding the driven signal through
        # the rule interface directly
        poly = np.polynomial.Polynomial([0.3, -0.4, 0.2, 0.05])
        samples = poly(rule.shifts)
        from nlspec.shift_rules import reconstruct_derivative

        for n in (4, 5):
            assert abs(reconstruct_derivative(samples, rule.coefficients[n])) < 1e-10

    def test_partial_sums_converge_with_order(self):
        h = build_xxz(3, 0.8, 0.2)
        psi = ground_state(h)
        b = build_pump(PumpSpec("local_pauli", site=1), 3)
        a = op(3, (1.0, {1: "X"}))
        sched = PulseSchedule([(b, [0.0])])
        grid = np.linspace(0, 4, 9)
        residuals = []
        for max_order in (1, 3, 5):
            _, diff = response_decomposition(h, sched, a, grid, 0.4, max_order, EXACT, psi)
            residuals.append(np.max(np.abs(diff.values)))
        assert residuals[0] > residuals[1] > residuals[2]

    def test_multi_channel_rejected(self):
        h = build_xxz(3, 0.8, 0.2)
        psi = ground_state(h)
        b = op(3, (1.0, {0: "X"}))
        sched = PulseSchedule([(b, [0.0]), (b, [1.0])])
        with pytest.raises(ValueError):
            response_decomposition(h, sched, b, [0.0, 1.0], 0.1, 2, EXACT, psi)


class TestDecompositionRule:
    def test_commensurate_uses_exact_rule(self):
        gen = op(4, (1.0, {1: "X"}))
        rule = decomposition_rule(gen, 7)
        assert rule.basis == "fourier"
        assert rule.n_shifts == 3

    def test_incommensurate_uses_taylor(self):
        gen = op(2, (1.0, {0: "X"}), (np.sqrt(2), {1: "X"}))
        rule = decomposition_rule(gen, 7)
        assert rule.basis == "taylor"
        assert rule.n_shifts == 8

    def test_forced_shift_count(self):
        gen = build_pump(PumpSpec("cosine_profile", momentum=1), 12)
        rule = decomposition_rule(gen, 7, n_shifts=8)
        assert rule.basis == "taylor"
        assert rule.n_shifts == 8
