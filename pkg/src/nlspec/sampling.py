"""Shot-noise simulation and measurement-budget allocation.

Expectation values are estimated by drawing +-1 outcomes per Pauli string
from the exact outcome distribution (no readout bitstrings are simulated;
the per-term Bernoulli law carries the full variance content).  Budgets can
be split uniformly over shift configurations or proportionally to
|C_p| sqrt(Var_p), which minimizes the reconstruction variance.

Seeding is hierarchical: every (configuration, time) cell draws from a
substream spawned from the master seed, so parallel evaluation order cannot
change any estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .evolution import EXACT, Evolver, PulseSchedule
from .pauli import OperatorSum, PauliTerm, StateLike, amplitudes_of, expectation
from .response import MultiIndex, ResponseSeries, rules_for_schedule, shift_configurations
from .shift_rules import ShiftRule


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Total budget and its split over shift configurations."""

    total_shots: int
    per_configuration: tuple[int, ...]
    mode: str
    seed: int

    def __post_init__(self):
        if self.mode not in ("uniform", "optimal"):
            raise ValueError(f"unknown allocation mode {self.mode!r}")
        per = tuple(int(n) for n in self.per_configuration)
        if any(n < 0 for n in per):
            raise ValueError("per-configuration shots must be nonnegative")
        if sum(per) != self.total_shots:
            raise ValueError("per-configuration shots must sum to the total")
        object.__setattr__(self, "per_configuration", per)


def _largest_remainder(ideal: np.ndarray, total: int) -> np.ndarray:
    """Round nonnegative ideals to integers summing to ``total``.

    Largest fractional remainder first; ties go to the lowest index.
    """
    floors = np.floor(ideal).astype(int)
    leftover = total - int(floors.sum())
    remainders = ideal - floors
    order = sorted(range(ideal.size), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        floors[i] += 1
    return floors


def allocate_shots(
    weights: Sequence[float],
    total_shots: int,
    mode: str = "uniform",
    variances: Sequence[float] | None = None,
    seed: int = 0,
) -> SamplingPlan:
    """Split a shot budget over shift configurations.

    ``uniform`` gives every configuration the same count (remainder to the
    lowest indices).  ``optimal`` allocates proportionally to
    |C_p| sqrt(Var_p) with unit variances by default; zero-weight
    configurations get nothing.
    """
    w = np.abs(np.asarray(weights, dtype=float))
    m = w.size
    if m == 0:
        raise ValueError("no configurations to allocate over")
    if mode == "uniform":
        base = total_shots // m
        counts = np.full(m, base, dtype=int)
        counts[: total_shots - base * m] += 1
        return SamplingPlan(total_shots, tuple(counts), "uniform", seed)
    if mode != "optimal":
        raise ValueError(f"unknown allocation mode {mode!r}")
    var = np.ones(m) if variances is None else np.asarray(variances, dtype=float)
    score = w * np.sqrt(var)
    if not np.any(score > 0):
        raise ValueError("all configuration weights vanish")
    n_active = int(np.count_nonzero(score))
    if total_shots < n_active:
        raise ValueError(f"budget {total_shots} below the {n_active} active configurations")
    ideal = total_shots * score / score.sum()
    counts = _largest_remainder(ideal, total_shots)
    return SamplingPlan(total_shots, tuple(counts), "optimal", seed)


def sample_expectation(
    observable: OperatorSum,
    state: StateLike,
    shots: int,
    seed: int | np.random.SeedSequence = 0,
) -> tuple[float, float]:
    """Unbiased finite-shot estimate of <A> with its standard error.

    The budget is split evenly over the Pauli strings (remainder to the
    lowest-index terms) and each string is sampled as +-1 outcomes with the
    exact mean.  Deterministic for a fixed seed.
    """
    if shots < 1:
        raise ValueError("at least one shot is required")
    rng = np.random.default_rng(seed)
    amps = amplitudes_of(state)
    terms = observable.terms
    if not terms:
        return 0.0, 0.0
    base = shots // len(terms)
    counts = [base + (1 if i < shots - base * len(terms) else 0) for i in range(len(terms))]
    estimate = 0.0
    variance = 0.0
    for term, n in zip(terms, counts):
        if n == 0:
            continue
        string = OperatorSum((PauliTerm(1.0, term.factors),), observable.n_sites)
        mean = expectation(string, amps)
        mean = min(1.0, max(-1.0, mean))
        p_up = 0.5 * (1.0 + mean)
        k = rng.binomial(n, p_up)
        sample_mean = 2.0 * k / n - 1.0
        estimate += term.coefficient * sample_mean
        sample_var = max(0.0, 1.0 - sample_mean**2) * n / max(n - 1, 1)
        variance += term.coefficient**2 * sample_var / n
    return float(estimate), float(math.sqrt(variance))


def variance_bound(
    l2_squared: Sequence[float],
    l1: Sequence[float],
    n_shifts: Sequence[int],
    total_shots: int,
    mode: str = "uniform",
) -> float:
    """Worst-case estimator variance for unit-bounded per-shot outcomes.

    Per channel a the inputs are ||c_a||_2^2, ||c_a||_1 and the shift count
    M_a; weights factorize over channels, giving

        uniform:  (prod_a M_a) (prod_a ||c_a||_2^2) / N_tot
        optimal:  (prod_a ||c_a||_1)^2 / N_tot
    """
    if total_shots < 1:
        raise ValueError("total_shots must be positive")
    if mode == "uniform":
        m_prod = math.prod(int(m) for m in n_shifts)
        return m_prod * math.prod(float(v) for v in l2_squared) / total_shots
    if mode == "optimal":
        return math.prod(float(v) for v in l1) ** 2 / total_shots
    raise ValueError(f"unknown mode {mode!r}")


def variance_bound_for_rules(
    rules: Mapping[int, ShiftRule],
    beta: MultiIndex,
    total_shots: int,
    mode: str = "uniform",
) -> float:
    l2sq = [rules[a].l2_norm_squared(beta.beta[a]) for a in beta.support]
    l1 = [rules[a].l1_norm(beta.beta[a]) for a in beta.support]
    ms = [rules[a].n_shifts for a in beta.support]
    return variance_bound(l2sq, l1, ms, total_shots, mode)


def noisy_response(
    h: OperatorSum,
    schedule: PulseSchedule,
    observable: OperatorSum,
    t_grid: Sequence[float],
    beta: MultiIndex,
    plan: SamplingPlan,
    evolver: Evolver = EXACT,
    psi0: StateLike = None,
    rules: Mapping[int, ShiftRule] | None = None,
) -> tuple[ResponseSeries, np.ndarray]:
    """Shift-rule reconstruction from finite-shot estimates.

    Returns the noisy response series and the per-time propagated standard
    error sqrt(sum_p C_p^2 se_p^2).  Exact states are propagated noiselessly;
    only the measurement is sampled.
    """
    if psi0 is None:
        raise ValueError("psi0 must be provided")
    if rules is None:
        rules = rules_for_schedule(schedule, beta)
    configs, weights = shift_configurations(rules, beta)
    if len(plan.per_configuration) != len(configs):
        raise ValueError(
            f"plan covers {len(plan.per_configuration)} configurations, grid has {len(configs)}"
        )
    grid = np.asarray(t_grid, dtype=float)
    totals = np.zeros(grid.size)
    variances = np.zeros(grid.size)
    root = np.random.SeedSequence(plan.seed)
    for p, (etas, w) in enumerate(zip(configs, weights)):
        shots = plan.per_configuration[p]
        if shots == 0 or w == 0.0:
            continue
        # exact signal states, sampled measurement; one substream per (p, t)
        exact = _driven_states_expectations(
            h, schedule, etas, observable, grid, evolver, psi0, shots, root, p
        )
        estimates, errors = exact
        totals += w / beta.factorial_product * estimates
        variances += (w / beta.factorial_product) ** 2 * errors**2
    series = ResponseSeries(
        beta.order,
        beta.beta,
        grid,
        totals,
        {"sampling_mode": plan.mode, "total_shots": plan.total_shots, "seed": plan.seed},
    )
    return series, np.sqrt(variances)


def _driven_states_expectations(
    h, schedule, etas, observable, grid, evolver, psi0, shots, root, config_index
):
    """Sampled estimates of the driven signal at every grid time."""
    from .evolution import apply_kick, evolve
    from .pauli import amplitudes_of

    events = schedule.events()
    anchor = min(0.0, grid[0], events[0][0] if events else 0.0)
    state = amplitudes_of(psi0).copy()
    tau = anchor
    pending = list(events)
    estimates = np.empty(grid.size)
    errors = np.empty(grid.size)
    for k, t in enumerate(grid):
        while pending and pending[0][0] <= t:
            t_pulse, channel = pending.pop(0)
            if t_pulse > tau:
                state = evolve(h, state, t_pulse - tau, evolver)
                tau = t_pulse
            generator, _ = schedule.channels[channel]
            state = apply_kick(generator, etas[channel], state)
        meas = evolve(h, state, t - tau, evolver) if t > tau else state
        seed = np.random.SeedSequence(
            entropy=root.entropy, spawn_key=(int(config_index), int(k))
        )
        estimates[k], errors[k] = sample_expectation(observable, meas, shots, seed)
    return estimates, errors
