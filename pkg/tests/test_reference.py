import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlspec.evolution import EXACT, Evolver, PulseSchedule
from nlspec.models import build_xxz, ground_state
from nlspec.pauli import OperatorSum, PauliTerm, StateVector, expectation, to_dense
from nlspec.reference import (
    finite_difference_derivative,
    nested_commutator_response,
    nested_commutator_series,
    stepwise_subtraction,
)
from nlspec.response import MultiIndex, reconstruct_response


def op(n, *terms):
    return OperatorSum(tuple(PauliTerm(c, f) for c, f in terms), n)


def dense_oracle(h, observable, pulses, t, psi):
    """Textbook dense-matrix evaluation of the nested-commutator kernel."""
    from scipy.linalg import expm

    hd = to_dense(h)
    ad = to_dense(observable)

    def heisenberg(mat, tau):
        u = expm(-1j * hd * tau)
        return u.conj().T @ mat @ u

    acc = heisenberg(ad, t)
    for generator, tau in reversed(pulses):  # innermost (latest) applied last
        bd = heisenberg(to_dense(generator), tau)
        acc = bd @ acc - acc @ bd
    m = len(pulses)
    norm = 1.0
    counts = {}
    for generator, tau in pulses:
        key = (generator.cache_key(), tau)
        counts[key] = counts.get(key, 0) + 1
        norm *= counts[key]
    val = (1j**m / norm) * np.vdot(psi, acc @ psi)
    return val.real


class TestNestedCommutator:
    def test_order_zero_is_plain_expectation(self):
        h = build_xxz(3, 1.0, 0.4)
        psi = ground_state(h)
        a = op(3, (1.0, {1: "Z"}))
        val = nested_commutator_response(h, a, [], 2.0, psi)
        assert val == pytest.approx(expectation(a, psi.amplitudes), abs=1e-12)

    def test_single_qubit_linear(self):
        h = op(1, (0.5, {0: "Z"}))
        x = op(1, (1.0, {0: "X"}))
        psi = StateVector.computational_basis(1, 1)
        grid = np.linspace(0, 6, 13)
        vals = nested_commutator_series(h, x, [(x, 0.0)], grid, psi)
        assert np.max(np.abs(vals + 2 * np.sin(grid))) < 1e-12

    def test_theta_causality(self):
        h = build_xxz(3, 1.0, 0.4)
        psi = ground_state(h)
        b = op(3, (1.0, {0: "X"}))
        a = op(3, (1.0, {1: "X"}))
        # measurement before the pulse
        assert nested_commutator_response(h, a, [(b, 1.0)], 0.5, psi) == 0.0
        # ascending pulse times violate the ordering
        assert (
            nested_commutator_response(h, a, [(b, 0.0), (b, 1.0)], 2.0, psi) == 0.0
        )

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000), st.integers(1, 3))
    def test_matches_dense_reference(self, seed, m):
        rng = np.random.default_rng(seed)
        h = build_xxz(3, float(rng.uniform(0, 2)), float(rng.uniform(0, 1)))
        psi = ground_state(h)
        b = op(3, (1.0, {1: "X"}))
        a = op(3, (1.0, {1: "X"}), (0.5, {0: "Z"}))
        t = float(rng.uniform(0.5, 3.0))
        pulses = [(b, 0.0)] * m
        fast = nested_commutator_response(h, a, pulses, t, psi)
        slow = dense_oracle(h, a, pulses, t, psi.amplitudes)
        assert fast == pytest.approx(slow, abs=1e-10)

    def test_matches_dense_reference_distinct_times(self):
        h = build_xxz(3, 0.8, 0.5)
        psi = ground_state(h)
        b = op(3, (1.0, {1: "X"}))
        a = op(3, (1.0, {2: "X"}))
        pulses = [(b, 1.2), (b, 0.4)]
        fast = nested_commutator_response(h, a, pulses, 2.5, psi)
        slow = dense_oracle(h, a, pulses, 2.5, psi.amplitudes)
        assert fast == pytest.approx(slow, abs=1e-10)

    def test_engine_equivalence_random_instances(self):
        rng = np.random.default_rng(42)
        grid = np.linspace(0, 5, 11)
        for _ in range(3):
            h = build_xxz(4, float(rng.uniform(0, 2)), float(rng.uniform(0, 1)))
            psi = ground_state(h)
            b = op(4, (1.0, {1: "X"}))
            a = op(4, (1.0, {2: "X"}), (1.0, {2: "Z"}))
            sched = PulseSchedule([(b, [0.0])])
            for m in range(1, 6):
                series = reconstruct_response(
                    h, sched, a, grid, MultiIndex([m]), EXACT, psi
                )
                oracle = nested_commutator_series(h, a, [(b, 0.0)] * m, grid, psi)
                assert np.max(np.abs(series.values - oracle)) < 1e-8

    def test_trotter_segmentation_consistency(self):
        # with a Trotterized propagator the oracle must segment at pulse
        # times exactly like the driven signal; two pulses exercise this
        h = build_xxz(4, 0.6, 0.4)
        psi = ground_state(h)
        b = op(4, (1.0, {1: "X"}))
        a = op(4, (1.0, {2: "X"}))
        trotter = Evolver("trotter1", 7)
        sched = PulseSchedule([(b, [0.0]), (b, [1.0])])
        grid = np.linspace(0, 4, 9)
        series = reconstruct_response(
            h, sched, a, grid, MultiIndex([1, 1]), trotter, psi
        )
        oracle = nested_commutator_series(h, a, [(b, 1.0), (b, 0.0)], grid, psi, trotter)
        assert np.max(np.abs(series.values - oracle)) < 1e-12


class TestFiniteDifference:
    def test_exact_on_quadratic(self):
        fd = finite_difference_derivative(lambda e: e**2, 2, 0.3)
        assert fd.value == pytest.approx(2.0, abs=1e-10)

    def test_symmetric_first_derivative_of_even(self):
        fd = finite_difference_derivative(lambda e: np.cos(2 * e), 1, 1e-4)
        assert abs(fd.value) < 1e-8

    def test_sin_first_derivative(self):
        fd = finite_difference_derivative(lambda e: np.sin(2 * e), 1, 1e-4)
        assert fd.value == pytest.approx(2.0, abs=1e-7)
        assert fd.refined == pytest.approx(2.0, abs=1e-9)

    def test_richardson_improves(self):
        fd = finite_difference_derivative(lambda e: np.sin(2 * e), 3, 0.05)
        assert abs(fd.refined + 8.0) < abs(fd.value + 8.0)

    def test_order_cap(self):
        with pytest.raises(ValueError):
            finite_difference_derivative(lambda e: e, 8, 0.1)


class TestStepwiseSubtraction:
    def test_recovers_odd_quintic_exactly(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            c1, c3, c5 = rng.normal(size=3)
            g = lambda s: c1 * s + c3 * s**3 + c5 * s**5
            a1, a3, a5 = stepwise_subtraction({s: g(s) for s in (0.0, 0.1, 0.2, 0.3)})
            assert a1 == pytest.approx(c1, abs=1e-10)
            assert a3 == pytest.approx(c3, abs=1e-10)
            assert a5 == pytest.approx(c5, abs=1e-10)

    def test_pure_linear_gives_zero_higher_orders(self):
        g = lambda s: 2.5 * s
        a1, a3, a5 = stepwise_subtraction({s: g(s) for s in (0.0, 0.05, 0.1, 0.2)})
        assert a1 == pytest.approx(2.5, abs=1e-12)
        assert abs(a3) < 1e-10 and abs(a5) < 1e-10

    def test_pure_quintic(self):
        g = lambda s: s**5
        a1, a3, a5 = stepwise_subtraction({s: g(s) for s in (0.0, 0.1, 0.2, 0.3)})
        assert a5 == pytest.approx(1.0, abs=1e-10)
        assert abs(a1) < 1e-10 and abs(a3) < 1e-10

    def test_background_subtracted(self):
        g = lambda s: 4.0 + 0.5 * s + 0.25 * s**3
        a1, a3, a5 = stepwise_subtraction({s: g(s) for s in (0.0, 0.1, 0.2, 0.3)})
        assert a1 == pytest.approx(0.5, abs=1e-10)
        assert a3 == pytest.approx(0.25, abs=1e-10)

    def test_degree_seven_contamination_shrinks_with_amplitude(self):
        g = lambda s: 0.3 * s + 0.7 * s**3 - 1.2 * s**5 + 0.9 * s**7
        errors = []
        for scale in (1.0, 0.5, 0.25):
            s = (0.1 * scale, 0.2 * scale, 0.3 * scale)
            _, a3, _ = stepwise_subtraction({0.0: g(0.0), **{x: g(x) for x in s}})
            errors.append(abs(a3 - 0.7))
        assert errors[0] > errors[1] > errors[2]

    def test_vectorized_over_time(self):
        t = np.linspace(0, 1, 5)
        g = lambda s: np.sin(t) * s + np.cos(t) * s**3
        a1, a3, a5 = stepwise_subtraction({s: g(s) for s in (0.0, 0.1, 0.2, 0.3)})
        assert np.allclose(a1, np.sin(t), atol=1e-10)
        assert np.allclose(a3, np.cos(t), atol=1e-10)

    def test_bad_amplitudes_rejected(self):
        with pytest.raises(ValueError):
            stepwise_subtraction({0.0: 0.0, 0.2: 1.0, 0.1: 2.0})  # only 3 keys
