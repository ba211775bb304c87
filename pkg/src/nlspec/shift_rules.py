"""Spectral-gap sets, shift grids, and derivative reconstruction weights.

A kick generator B with eigenvalues {lambda_s} drives an expectation value
F(eta) = <exp(i eta B) A exp(-i eta B)> that is a finite Fourier series over
the signed gap set Omega = {lambda_s - lambda_s'}.  Derivatives of F at 0 are
then exact linear combinations of samples F(s_p): the weights c_p^(r) solve

    sum_p c_p^(r) exp(i omega s_p) = (i omega)^r   for every omega in Omega.

Three rule flavors are provided:

* ``full``   - one shift per signed gap (the default, exact for any order);
* ``odd``    - antisymmetric weights on +-s_p pairs, valid for odd orders,
               needing only one shift per positive gap;
* ``taylor`` - a truncated polynomial (finite-difference style) rule with a
               caller-chosen shift count, exact on polynomial signals only.
               This is the fallback when the gap set is incommensurate or
               too large to sample exhaustively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .pauli import OperatorSum, eigendecompose

DEFAULT_GAP_TOL = 1e-9
DEFAULT_CONDITION_LIMIT = 1e8
#: relative residual allowed on the defining linear system
RESIDUAL_TOL = 1e-9
#: gap-unit candidates smaller than max_gap / this are treated as spurious
_MAX_HARMONIC = 1e6


class ShiftRuleError(RuntimeError):
    """Shift-rule construction failed (singular, ill-conditioned, or infeasible)."""


@dataclass(frozen=True, eq=False)
class GapSet:
    """Signed spectral-difference set of a generator, 0 included.

    ``unit`` is the greatest common scale g when all gaps are integer
    multiples of g (commensurate spectrum), else None.
    """

    gaps: np.ndarray
    unit: float | None
    tol: float

    def __post_init__(self):
        gaps = np.asarray(self.gaps, dtype=float)
        gaps.flags.writeable = False
        object.__setattr__(self, "gaps", gaps)

    @property
    def positive(self) -> np.ndarray:
        return self.gaps[self.gaps > self.tol]

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.gaps))) if self.gaps.size else 0.0

    def __len__(self) -> int:
        return int(self.gaps.size)


def _dedup_sorted(values: np.ndarray, tol: float) -> np.ndarray:
    values = np.sort(values)
    kept = [values[0]]
    for v in values[1:]:
        if v - kept[-1] > tol:
            kept.append(v)
    return np.asarray(kept)


def _float_gcd(a: float, b: float, tol: float) -> float:
    while b > tol:
        a, b = b, math.fmod(a, b)
    return a


def _common_unit(positive: np.ndarray, tol: float) -> float | None:
    """Approximate positive GCD of the gaps, or None if incommensurate."""
    if positive.size == 0:
        return None
    g = float(positive[0])
    for v in positive[1:]:
        g = _float_gcd(float(v), g, tol)
        if g <= tol:
            return None
    max_gap = float(positive[-1])
    if g < max_gap / _MAX_HARMONIC:
        return None
    # verify every gap is an integer multiple of g
    ratios = positive / g
    if np.max(np.abs(ratios - np.round(ratios))) > 1e-6:
        return None
    return g


def gap_set(generator: OperatorSum, tol: float = DEFAULT_GAP_TOL) -> GapSet:
    """All pairwise eigenvalue differences of the generator, deduplicated.

    The spectrum is taken on the generator's support factor, so the cost is
    2**r for support size r regardless of the register size.
    """
    eig = eigendecompose(generator, on_support=True)
    values = _dedup_sorted(eig.values, tol)
    diffs = (values[:, None] - values[None, :]).ravel()
    gaps = _dedup_sorted(diffs, tol)
    # enforce exact symmetry and an exact zero entry
    positive = gaps[gaps > tol]
    sym = np.concatenate([-positive[::-1], [0.0], positive])
    return GapSet(sym, _common_unit(positive, tol), tol)


def shift_grid(gap_set: GapSet, n_shifts: int | None = None, mode: str = "full") -> np.ndarray:
    """Default shift points for a gap set.

    ``full``: M equispaced points centered at 0 with spacing T/(M+1), where
    T = 2*pi/g is the signal period (for the Pauli gap set {-2, 0, 2} this is
    {-pi/4, 0, pi/4}).  Incommensurate spectra get Chebyshev nodes on
    [-pi/w_max, pi/w_max] and must pass the least-squares residual check.

    ``odd``: positive-gap count of +- pairs s_p = pi (2p - 1) / (2 K g),
    recovering the two-point rule {-pi/2, pi/2} for gaps {-1, 0, 1}.
    """
    if mode == "odd":
        k = int(gap_set.positive.size)
        if k == 0:
            raise ShiftRuleError("gap set has no positive entries")
        if gap_set.unit is None:
            raise ShiftRuleError("odd-order reduction needs a commensurate spectrum")
        n_pos = n_shifts // 2 if n_shifts is not None else k
        if n_pos < k:
            raise ShiftRuleError(f"odd-order rule needs at least {2 * k} shifts")
        s = np.array([np.pi * (2 * p - 1) / (2 * n_pos * gap_set.unit) for p in range(1, n_pos + 1)])
        return np.concatenate([-s[::-1], s])
    if mode != "full":
        raise ShiftRuleError(f"unknown shift mode {mode!r}")
    m = int(n_shifts) if n_shifts is not None else len(gap_set)
    if m < len(gap_set):
        raise ShiftRuleError(
            f"{m} shifts cannot satisfy {len(gap_set)} gap constraints; "
            f"need at least {len(gap_set)}"
        )
    if gap_set.unit is not None:
        period = 2.0 * np.pi / gap_set.unit
        offsets = np.arange(1, m + 1) - (m + 1) / 2.0
        return offsets * (period / (m + 1))
    w_max = gap_set.max_gap
    if w_max == 0.0:
        raise ShiftRuleError("gap set is trivial; nothing to reconstruct")
    half = np.pi / w_max
    nodes = np.cos(np.pi * (2 * np.arange(1, m + 1) - 1) / (2 * m))
    return np.sort(half * nodes)


def solve_shift_coefficients(
    gap_set: GapSet,
    shifts: Sequence[float],
    order: int,
    condition_limit: float = DEFAULT_CONDITION_LIMIT,
) -> tuple[np.ndarray, float, float]:
    """Solve sum_p c_p e^{i w s_p} = (i w)^order over the signed gap set.

    Returns (coefficients, relative residual, condition number).  The system
    is solved exactly when square, in least squares otherwise; a residual
    above the tolerance or an excessive condition number raises.
    """
    shifts = np.asarray(shifts, dtype=float)
    omegas = gap_set.gaps
    v = np.exp(1j * np.outer(omegas, shifts))
    rhs = (1j * omegas) ** order
    cond = float(np.linalg.cond(v))
    if cond > condition_limit:
        raise ShiftRuleError(f"shift system condition number {cond:.3e} exceeds {condition_limit:.1e}")
    if v.shape[0] == v.shape[1]:
        coeffs = np.linalg.solve(v, rhs)
    else:
        coeffs, *_ = np.linalg.lstsq(v, rhs, rcond=None)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    residual = float(np.max(np.abs(v @ coeffs - rhs))) / scale
    if residual > RESIDUAL_TOL:
        raise ShiftRuleError(
            f"shift-rule residual {residual:.3e} exceeds {RESIDUAL_TOL:.1e}; "
            "the grid cannot represent this derivative exactly"
        )
    if np.max(np.abs(coeffs.imag)) > 1e-10 * max(1.0, np.max(np.abs(coeffs.real))):
        raise ShiftRuleError("shift coefficients came out non-real")
    return coeffs.real.copy(), residual, cond


def _solve_odd_coefficients(
    gap_set: GapSet, shifts: np.ndarray, order: int
) -> tuple[np.ndarray, float, float]:
    """Antisymmetric ansatz on a symmetric grid, valid for odd orders only."""
    if order % 2 == 0:
        raise ShiftRuleError("the odd-order reduction applies to odd orders only")
    k = shifts.size // 2
    pos_shifts = shifts[k:]
    omegas = gap_set.positive
    # 2 sum_p c_p sin(w s_p) = Im[(i w)^r] for odd r
    v = 2.0 * np.sin(np.outer(omegas, pos_shifts))
    rhs = ((1j * omegas) ** order).imag
    cond = float(np.linalg.cond(v))
    if v.shape[0] == v.shape[1]:
        c_pos = np.linalg.solve(v, rhs)
    else:
        c_pos, *_ = np.linalg.lstsq(v, rhs, rcond=None)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    residual = float(np.max(np.abs(v @ c_pos - rhs))) / scale
    if residual > RESIDUAL_TOL:
        raise ShiftRuleError(f"odd-rule residual {residual:.3e} too large")
    return np.concatenate([-c_pos[::-1], c_pos]), residual, cond


def _taylor_coefficients(shifts: np.ndarray, order: int) -> tuple[np.ndarray, float, float]:
    """Finite-difference style weights: sum_p c_p s_p^k = k! delta_{k,order}."""
    m = shifts.size
    if order >= m:
        raise ShiftRuleError(f"order {order} needs more than {m} shift points")
    scale = float(np.max(np.abs(shifts)))
    u = shifts / scale
    v = np.vander(u, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order) / scale**order
    cond = float(np.linalg.cond(v))
    coeffs = np.linalg.solve(v, rhs)
    residual = float(np.max(np.abs(v @ coeffs - rhs))) / max(1.0, float(np.max(np.abs(rhs))))
    return coeffs, residual, cond


@dataclass(frozen=True, eq=False)
class ShiftRule:
    """Shift points with derivative weights for one kick generator.

    ``coefficients[r]`` reconstructs the r-th derivative at zero amplitude as
    dot(coefficients[r], F(shifts)).  ``basis`` records whether the rule is
    exact on the generator's Fourier support ("fourier", "fourier-odd") or a
    truncated polynomial rule ("taylor").
    """

    shifts: np.ndarray
    coefficients: Mapping[int, np.ndarray]
    gap_set: GapSet | None
    residuals: Mapping[int, float]
    condition_number: float
    basis: str

    def __post_init__(self):
        shifts = np.asarray(self.shifts, dtype=float)
        shifts.flags.writeable = False
        object.__setattr__(self, "shifts", shifts)
        frozen = {}
        for r, c in dict(self.coefficients).items():
            c = np.asarray(c, dtype=float)
            c.flags.writeable = False
            frozen[int(r)] = c
        object.__setattr__(self, "coefficients", frozen)
        object.__setattr__(self, "residuals", dict(self.residuals))

    @property
    def n_shifts(self) -> int:
        return int(self.shifts.size)

    def l1_norm(self, order: int) -> float:
        return float(np.sum(np.abs(self.coefficients[order])))

    def l2_norm_squared(self, order: int) -> float:
        return float(np.sum(self.coefficients[order] ** 2))


def rule_for_gap_set(
    gaps: GapSet,
    orders: Sequence[int],
    n_shifts: int | None = None,
    mode: str = "full",
    shifts: Sequence[float] | None = None,
    condition_limit: float = DEFAULT_CONDITION_LIMIT,
) -> ShiftRule:
    """Build a ShiftRule carrying weights for every requested order."""
    orders = sorted(set(int(r) for r in orders))
    if shifts is None:
        grid = shift_grid(gaps, n_shifts=n_shifts, mode=mode)
    else:
        grid = np.asarray(shifts, dtype=float)
    coefficients: dict[int, np.ndarray] = {}
    residuals: dict[int, float] = {}
    cond = 0.0
    for r in orders:
        if mode == "odd":
            c, res, k = _solve_odd_coefficients(gaps, grid, r)
        else:
            c, res, k = solve_shift_coefficients(gaps, grid, r, condition_limit)
        coefficients[r] = c
        residuals[r] = res
        cond = max(cond, k)
    basis = "fourier-odd" if mode == "odd" else "fourier"
    return ShiftRule(grid, coefficients, gaps, residuals, cond, basis)


def rule_for_generator(
    generator: OperatorSum,
    orders: Sequence[int],
    n_shifts: int | None = None,
    mode: str = "full",
    shifts: Sequence[float] | None = None,
    tol: float = DEFAULT_GAP_TOL,
) -> ShiftRule:
    return rule_for_gap_set(gap_set(generator, tol), orders, n_shifts, mode, shifts)


def taylor_rule(orders: Sequence[int], n_shifts: int, scale: float) -> ShiftRule:
    """Truncated rule: n_shifts equispaced points on [-scale, scale].

    Exact only on signals polynomial of degree < n_shifts in the amplitude;
    used when the gap set is incommensurate or impractically large.
    """
    if n_shifts < 2:
        raise ShiftRuleError("taylor rule needs at least 2 shifts")
    if scale <= 0:
        raise ShiftRuleError("taylor rule scale must be positive")
    grid = np.linspace(-scale, scale, n_shifts)
    coefficients = {}
    residuals = {}
    cond = 0.0
    for r in sorted(set(int(r) for r in orders)):
        c, res, k = _taylor_coefficients(grid, r)
        coefficients[r] = c
        residuals[r] = res
        cond = max(cond, k)
    return ShiftRule(grid, coefficients, None, residuals, cond, "taylor")


def reconstruct_derivative(samples: Sequence[float], coefficients: Sequence[float]) -> float:
    """dot(c, F(shifts)); exact when the signal is band-limited to the gaps."""
    samples = np.asarray(samples, dtype=float)
    coefficients = np.asarray(coefficients, dtype=float)
    if samples.shape[0] != coefficients.shape[0]:
        raise ValueError("samples and coefficients must have matching length")
    return float(np.dot(coefficients, samples))


@dataclass(frozen=True)
class MultiIndex:
    """Per-channel derivative orders beta_a; the response order is their sum."""

    beta: tuple[int, ...]

    def __init__(self, beta: Sequence[int]):
        beta = tuple(int(b) for b in beta)
        if any(b < 0 for b in beta):
            raise ValueError("multi-index entries must be nonnegative")
        if sum(beta) < 1:
            raise ValueError("multi-index must have total order >= 1")
        object.__setattr__(self, "beta", beta)

    @property
    def order(self) -> int:
        return sum(self.beta)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(a for a, b in enumerate(self.beta) if b > 0)

    @property
    def factorial_product(self) -> int:
        out = 1
        for b in self.beta:
            out *= math.factorial(b)
        return out
