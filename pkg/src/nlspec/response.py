"""Reconstruction of response functions from shifted driven signals.

The order-m response of <A(t)> to a multi-channel impulsive drive is the
mixed amplitude derivative (1 / prod_a beta_a!) * d^beta <A(t)>_eta at
eta = 0, and that derivative factorizes over channels: it is a weighted sum
of driven signals on the Cartesian product of the per-channel shift grids,
with weights prod_a c_{a, p_a}^{(beta_a)}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .evolution import EXACT, Evolver, PulseSchedule, driven_signal
from .pauli import OperatorSum, StateLike
from .shift_rules import (
    MultiIndex,
    ShiftRule,
    ShiftRuleError,
    gap_set,
    rule_for_generator,
    taylor_rule,
)

#: largest exact-rule shift count response_decomposition will use by default
DEFAULT_SHIFT_BUDGET = 33


@dataclass(frozen=True, eq=False)
class ResponseSeries:
    """A response contribution sampled on a time grid."""

    order: int
    multi_index: tuple[int, ...]
    times: np.ndarray
    values: np.ndarray
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape:
            raise ValueError("times and values must have matching shape")
        if not np.all(np.isfinite(values)):
            raise ValueError("response values must be finite")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "metadata", dict(self.metadata))


def rules_for_schedule(
    schedule: PulseSchedule,
    beta: MultiIndex,
    n_shifts: int | None = None,
    mode: str = "full",
) -> dict[int, ShiftRule]:
    """One shift rule per active channel, keyed by channel index."""
    if len(beta.beta) != schedule.n_channels:
        raise ValueError("multi-index length must equal the channel count")
    rules: dict[int, ShiftRule] = {}
    for a in beta.support:
        generator, _ = schedule.channels[a]
        rules[a] = rule_for_generator(generator, [beta.beta[a]], n_shifts=n_shifts, mode=mode)
    return rules


def shift_configurations(
    rules: Mapping[int, ShiftRule], beta: MultiIndex
) -> tuple[list[tuple[float, ...]], np.ndarray]:
    """Cartesian shift grid over the active channels and the product weights.

    Inactive channels are pinned at amplitude 0.  Returns the list of full
    amplitude vectors (length = channel count) and the weight C_p for each.
    """
    n_channels = len(beta.beta)
    active = beta.support
    per_channel_shifts = [rules[a].shifts for a in active]
    per_channel_coeffs = [rules[a].coefficients[beta.beta[a]] for a in active]
    configs: list[tuple[float, ...]] = []
    weights: list[float] = []
    for combo in itertools.product(*(range(len(s)) for s in per_channel_shifts)):
        etas = [0.0] * n_channels
        w = 1.0
        for a, p in zip(active, combo):
            etas[a] = float(rules[a].shifts[p])
        for coeffs, p in zip(per_channel_coeffs, combo):
            w *= float(coeffs[p])
        configs.append(tuple(etas))
        weights.append(w)
    return configs, np.asarray(weights)


def reconstruct_response(
    h: OperatorSum,
    schedule: PulseSchedule,
    observable: OperatorSum,
    t_grid: Sequence[float],
    beta: MultiIndex,
    evolver: Evolver = EXACT,
    psi0: StateLike = None,
    rules: Mapping[int, ShiftRule] | None = None,
    n_shifts: int | None = None,
    mode: str = "full",
) -> ResponseSeries:
    """Pulse-summed order-m response chi^(m)(t) over the time grid."""
    if psi0 is None:
        raise ValueError("psi0 must be provided (prepare it from the model)")
    if rules is None:
        rules = rules_for_schedule(schedule, beta, n_shifts=n_shifts, mode=mode)
    configs, weights = shift_configurations(rules, beta)
    grid = np.asarray(t_grid, dtype=float)
    total = np.zeros(grid.size)
    for etas, w in zip(configs, weights):
        if w == 0.0:
            continue
        total += w * driven_signal(h, schedule, etas, observable, grid, evolver, psi0)
    total /= beta.factorial_product
    meta = {
        "n_configurations": len(configs),
        "shifts": {a: rules[a].shifts.tolist() for a in beta.support},
        "evolver": evolver.kind,
    }
    return ResponseSeries(beta.order, beta.beta, grid, total, meta)


def decomposition_rule(
    generator: OperatorSum,
    max_order: int,
    n_shifts: int | None = None,
    shift_budget: int = DEFAULT_SHIFT_BUDGET,
) -> ShiftRule:
    """Rule used to expand a single-channel signal order by order.

    Uses the exact gap-set rule when the spectrum is commensurate and small
    enough; otherwise (or when ``n_shifts`` forces fewer points than gaps) a
    truncated polynomial rule on max_order + 1 points scaled to a quarter
    period of the fastest spectral component.
    """
    orders = list(range(max_order + 1))
    gaps = gap_set(generator)
    exact_feasible = gaps.unit is not None and len(gaps) <= shift_budget
    if n_shifts is None and exact_feasible:
        return rule_for_generator(generator, orders)
    if n_shifts is not None and exact_feasible and n_shifts >= len(gaps):
        return rule_for_generator(generator, orders, n_shifts=n_shifts)
    m = n_shifts if n_shifts is not None else max_order + 1
    if m < max_order + 1:
        raise ShiftRuleError(f"{m} shifts cannot resolve orders up to {max_order}")
    scale = np.pi / (2.0 * gaps.max_gap) if gaps.max_gap > 0 else 0.5
    return taylor_rule(orders, m, scale)


def response_decomposition(
    h: OperatorSum,
    schedule: PulseSchedule,
    observable: OperatorSum,
    t_grid: Sequence[float],
    eta_eval: float,
    max_order: int,
    evolver: Evolver = EXACT,
    psi0: StateLike = None,
    rule: ShiftRule | None = None,
    n_shifts: int | None = None,
) -> tuple[dict[int, ResponseSeries], ResponseSeries]:
    """Order-by-order expansion A^n(t) = (eta^n / n!) F^(n)(0; t) plus the
    truncation residual diff(t) = <A(t)>_eta - sum_n A^n(t).

    Single-channel protocol; all pulses in the channel share the amplitude.
    """
    if schedule.n_channels != 1:
        raise ValueError("response_decomposition expects a single drive channel")
    generator, _ = schedule.channels[0]
    if rule is None:
        rule = decomposition_rule(generator, max_order, n_shifts=n_shifts)
    if any(r not in rule.coefficients for r in range(max_order + 1)):
        raise ShiftRuleError(f"rule lacks coefficients for some order <= {max_order}")
    grid = np.asarray(t_grid, dtype=float)
    samples = np.empty((rule.n_shifts, grid.size))
    for p, s in enumerate(rule.shifts):
        samples[p] = driven_signal(h, schedule, [s], observable, grid, evolver, psi0)
    terms: dict[int, ResponseSeries] = {}
    partial = np.zeros(grid.size)
    factorial = 1.0
    for n in range(max_order + 1):
        if n > 0:
            factorial *= n
        deriv = rule.coefficients[n] @ samples
        values = (eta_eval**n / factorial) * deriv
        partial += values
        terms[n] = ResponseSeries(
            n, (n,), grid, values, {"eta_eval": eta_eval, "basis": rule.basis}
        )
    reference = driven_signal(h, schedule, [eta_eval], observable, grid, evolver, psi0)
    diff = ResponseSeries(
        max_order,
        (max_order,),
        grid,
        reference - partial,
        {"eta_eval": eta_eval, "kind": "truncation_residual"},
    )
    return terms, diff
