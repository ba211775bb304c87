"""Independent reference routes for cross-validating the shift-rule engine.

* ``nested_commutator_response`` evaluates the causal Kubo form of the
  order-m response, i^m <psi_0| ad_{B(t_m)} ... ad_{B(t_1)} A(t) |psi_0>
  with Heisenberg operators X(tau) built from the same segmented propagator
  the driven protocol uses.  The nested commutator is expanded into its
  2^m left/right operator orderings and evaluated matrix-free on state
  vectors, so it shares no code path with the shift-rule reconstruction.

* ``finite_difference_derivative`` is the deliberately imperfect baseline:
  minimal central stencils whose truncation error is the caller's problem.

* ``stepwise_subtraction`` recovers the odd series coefficients A^1, A^3,
  A^5 from signals at three pump amplitudes by successive cancellation of
  the lower orders (exact on odd quintics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .evolution import EXACT, Evolver, evolve
from .pauli import (
    HermiticityError,
    OperatorSum,
    StateLike,
    amplitudes_of,
    apply_operator,
)


def _propagate(
    h: OperatorSum,
    state: np.ndarray,
    t_from: float,
    t_to: float,
    checkpoints: Sequence[float],
    evolver: Evolver,
) -> np.ndarray:
    """Evolve through every checkpoint in (t_from, t_to], one segment per call.

    Segmenting at the pulse times makes the Trotterized propagator identical
    to the one the driven signal composes, so both routes differentiate the
    same function of the pump amplitudes.
    """
    tau = t_from
    for c in checkpoints:
        if tau < c <= t_to:
            state = evolve(h, state, c - tau, evolver)
            tau = c
    if t_to > tau:
        state = evolve(h, state, t_to - tau, evolver)
    return state


def nested_commutator_series(
    h: OperatorSum,
    observable: OperatorSum,
    pulses: Sequence[tuple[OperatorSum, float]],
    t_grid: Sequence[float],
    psi0: StateLike,
    evolver: Evolver = EXACT,
) -> np.ndarray:
    """Kubo nested-commutator response at every grid time.

    ``pulses`` lists (generator, time) pairs with times descending: the first
    entry is the innermost commutator (the latest pulse).  Any violation of
    the time ordering, or a measurement time before the latest pulse, gives
    an exact 0 through the step-function prefactors.

    Coincident repetitions of one pulse carry the simplex weight of the
    equal-time corner: each group of k identical (generator, time) entries
    divides the bare commutator value by k!, which is what makes this kernel
    equal the per-amplitude-monomial coefficient of the driven signal (and
    hence the shift-rule reconstruction) for delta drives.
    """
    grid = np.asarray(t_grid, dtype=float)
    m = len(pulses)
    psi = amplitudes_of(psi0)
    times = [float(t) for _, t in pulses]
    if any(t2 > t1 for t1, t2 in zip(times, times[1:])):
        return np.zeros(grid.size)
    group_norm = 1.0
    group_counts: dict[tuple, int] = {}
    for generator, t_k in pulses:
        key = (generator.cache_key(), float(t_k))
        group_counts[key] = group_counts.get(key, 0) + 1
        group_norm *= group_counts[key]

    anchor = min([0.0] + times) if times else 0.0
    checkpoints = sorted(set(times))
    # chain states: ket(S) applies the pulses of S in descending-index
    # (chronological) order, interleaved with free evolution
    kets: dict[frozenset, tuple[np.ndarray, float]] = {frozenset(): (psi, anchor)}

    def ket(subset: frozenset) -> tuple[np.ndarray, float]:
        if subset in kets:
            return kets[subset]
        k = min(subset)  # lowest index = latest time, applied last
        prev_state, prev_tau = ket(subset - {k})
        generator, t_k = pulses[k]
        state = _propagate(h, prev_state, prev_tau, t_k, checkpoints, evolver)
        state = apply_operator(generator, state)
        kets[subset] = (state, t_k)
        return kets[subset]

    all_indices = frozenset(range(m))
    subsets = [frozenset(s) for s in _powerset(range(m))]
    for s in subsets:
        ket(s)

    values = np.zeros(grid.size)
    latest = times[0] if times else -np.inf
    prefactor = 1j**m / group_norm
    for idx, t in enumerate(grid):
        if times and t < latest:
            values[idx] = 0.0
            continue
        w: dict[frozenset, np.ndarray] = {}
        aw: dict[frozenset, np.ndarray] = {}
        for s in subsets:
            state, tau = kets[s]
            w[s] = _propagate(h, state, tau, float(t), checkpoints, evolver)
        total = 0.0 + 0.0j
        for right in subsets:
            aw_right = apply_operator(observable, w[right])
            left = all_indices - right
            sign = -1.0 if len(right) % 2 else 1.0
            total += sign * np.vdot(w[left], aw_right)
        total *= prefactor
        scale = max(1.0, abs(total.real))
        if abs(total.imag) > 1e-8 * scale:
            raise HermiticityError(
                f"nested-commutator value has imaginary part {total.imag:.3e}"
            )
        values[idx] = total.real
    return values


def nested_commutator_response(
    h: OperatorSum,
    observable: OperatorSum,
    pulses: Sequence[tuple[OperatorSum, float]],
    t: float,
    psi0: StateLike,
    evolver: Evolver = EXACT,
) -> float:
    """Single-time convenience wrapper around ``nested_commutator_series``."""
    return float(
        nested_commutator_series(h, observable, pulses, [t], psi0, evolver)[0]
    )


def _powerset(items: Sequence[int]):
    import itertools

    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


@dataclass(frozen=True)
class FiniteDifference:
    """Plain central-stencil estimate plus its Richardson refinement."""

    value: float
    refined: float
    step: float
    order: int


def _central_stencil(order: int) -> np.ndarray:
    """Integer offsets of the minimal symmetric stencil for the given order."""
    half = (order + 1) // 2
    if order % 2 == 0:
        return np.arange(-half, half + 1, dtype=float)
    offsets = np.arange(1, half + 1, dtype=float)
    return np.concatenate([-offsets[::-1], offsets])


def _stencil_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    v = np.vander(offsets, offsets.size, increasing=True).T
    rhs = np.zeros(offsets.size)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(v, rhs)


def finite_difference_derivative(
    sampler: Callable[[float], float], order: int, step: float
) -> FiniteDifference:
    """Central finite-difference m-th derivative at 0 with spacing ``step``.

    Also evaluates the half-step stencil and returns the Richardson
    combination (4 D_{h/2} - D_h) / 3, which cancels the leading h^2 error
    of the symmetric stencil.
    """
    if order < 0 or order > 7:
        raise ValueError("finite differences supported for orders 0..7")
    if step <= 0:
        raise ValueError("step must be positive")

    def estimate(h: float) -> float:
        offsets = _central_stencil(order)
        weights = _stencil_weights(offsets, order) / h**order
        return float(sum(w * sampler(x * h) for w, x in zip(weights, offsets)))

    coarse = estimate(step)
    fine = estimate(step / 2.0)
    refined = (4.0 * fine - coarse) / 3.0
    return FiniteDifference(coarse, refined, step, order)


def stepwise_subtraction(values: Mapping[float, object]) -> tuple:
    """Recover (A^1, A^3, A^5) from signals at amplitudes {0, s1, s2, s3}.

    Assumes the odd ansatz <A>_s = A^0 + s A^1 + s^3 A^3 + s^5 A^5.  The
    zero-amplitude background is subtracted first, the linear order is
    cancelled by the quotient combination

        A3_tilde = d(s2) - (s2/s1) d(s1),      d(s) = <A>_s - <A>_0,

    and the remaining 2x2 system in (A^3, A^5) is solved exactly, followed
    by back-substitution for A^1.  The triple is therefore exact on any odd
    quintic; contamination from orders seven and above (or from even orders
    the ansatz omits) remains and shrinks as a power of the amplitudes.
    Values may be scalars or arrays over a time grid.
    """
    keys = sorted(float(k) for k in values)
    if len(keys) != 4 or abs(keys[0]) > 0.0:
        raise ValueError("values must be keyed by {0, s1, s2, s3}")
    s1, s2, s3 = keys[1:]
    if not 0.0 < s1 < s2 < s3:
        raise ValueError("amplitudes must satisfy 0 < s1 < s2 < s3")
    lookup = {float(k): np.asarray(v, dtype=float) for k, v in values.items()}
    d1 = lookup[s1] - lookup[0.0]
    d2 = lookup[s2] - lookup[0.0]
    d3 = lookup[s3] - lookup[0.0]

    a3_tilde = d2 - (s2 / s1) * d1
    a5_tilde = d3 - (s3 / s1) * d1
    # coefficients of A^3 and A^5 in the two linear-free combinations
    m33, m35 = s2**3 - s2 * s1**2, s2**5 - s2 * s1**4
    m53, m55 = s3**3 - s3 * s1**2, s3**5 - s3 * s1**4
    det = m33 * m55 - m35 * m53
    if abs(det) < 1e-14:
        raise ZeroDivisionError("degenerate amplitude choice: vanishing normalization")
    a3 = (m55 * a3_tilde - m35 * a5_tilde) / det
    a5 = (m33 * a5_tilde - m53 * a3_tilde) / det
    a1 = (d1 - s1**3 * a3 - s1**5 * a5) / s1
    return a1, a3, a5
