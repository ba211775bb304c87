"""Higher-level diagnostics built on the propagation and shift-rule engines.

Entanglement entropy and its pump-amplitude expansion, toric-code style
pump-probe correlators with channel contrast and principal-axis slopes, and
the three-pulse protocol whose double Fourier transform gives a 2D optical
spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .evolution import EXACT, Evolver, PulseSchedule, apply_kick, evolve
from .pauli import (
    OperatorSum,
    PauliTerm,
    StateLike,
    apply_operator,
    n_sites_of,
    partial_trace,
)
from .reference import nested_commutator_response
from .response import MultiIndex, reconstruct_response
from .shift_rules import ShiftRule, rule_for_generator


class AnalysisError(ValueError):
    """Invalid input to one of the diagnostic routines."""


@dataclass(frozen=True)
class StringOperator:
    """A Pauli string along lattice edges, e.g. a probe or pump channel."""

    edges: tuple[int, ...]
    axes: tuple[str, ...]
    label: str = ""

    def __init__(self, edges: Sequence[int], axes: Sequence[str] | str, label: str = ""):
        edges = tuple(int(e) for e in edges)
        if not edges:
            raise AnalysisError("string operator needs at least one edge")
        if isinstance(axes, str) and len(axes) == 1:
            axes = (axes,) * len(edges)
        else:
            axes = tuple(axes)
        if len(axes) != len(edges):
            raise AnalysisError("one axis per edge is required")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "label", label)

    def to_operator(self, n_sites: int) -> OperatorSum:
        return OperatorSum((PauliTerm(1.0, dict(zip(self.edges, self.axes))),), n_sites)


@dataclass(frozen=True, eq=False)
class PointCloud2D:
    """A set of (x, y) samples, e.g. paired response orders over a sweep."""

    points: np.ndarray
    labels: tuple[str, str] = ("x", "y")

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise AnalysisError("point cloud must be an (n >= 2, 2) array")
        if not np.all(np.isfinite(pts)):
            raise AnalysisError("point cloud must be finite")
        if np.allclose(pts, pts[0]):
            raise AnalysisError("point cloud is a single repeated point")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)


def entanglement_entropy(state: StateLike, block_size: int, start: int = 0) -> float:
    """Von Neumann entropy (natural log) of a contiguous block of sites."""
    n = n_sites_of(state)
    if not 1 <= block_size < n:
        raise AnalysisError(f"block size must be in [1, {n - 1}]")
    rho = partial_trace(state, range(start, start + block_size))
    evals = np.linalg.eigvalsh(rho)
    evals = evals[evals > 1e-14]
    return float(-np.sum(evals * np.log(evals)))


@dataclass(frozen=True, eq=False)
class EntropyExpansion:
    """Polynomial coefficients of S(eta) about eta = 0 from a symmetric grid."""

    coefficients: np.ndarray
    condition_number: float
    residual: float

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)


_FIT_CONDITION_LIMIT = 1e10


def entropy_expansion(
    h: OperatorSum,
    pump: OperatorSum,
    psi0: StateLike,
    eta_grid: Sequence[float],
    t: float,
    block_size: int,
    max_order: int,
    evolver: Evolver = EXACT,
) -> EntropyExpansion:
    """Least-squares fit S(eta) = sum_n S^(n) eta^n after kick-and-evolve.

    Entropy is a nonlinear functional of the state, so this is a polynomial
    fit on a symmetric amplitude grid rather than a shift-rule evaluation;
    the Vandermonde conditioning is reported and guarded.
    """
    etas = np.asarray(eta_grid, dtype=float)
    if etas.size < max_order + 1:
        raise AnalysisError("eta grid must have at least max_order + 1 points")
    if np.max(np.abs(etas + etas[::-1])) > 1e-12 * max(1.0, np.max(np.abs(etas))):
        raise AnalysisError("eta grid must be symmetric about 0")
    entropies = np.empty(etas.size)
    for k, eta in enumerate(etas):
        state = apply_kick(pump, float(eta), psi0)
        if t != 0.0:
            state = evolve(h, state, t, evolver)
        entropies[k] = entanglement_entropy(state, block_size)
    scale = float(np.max(np.abs(etas)))
    design = np.vander(etas / scale, max_order + 1, increasing=True)
    cond = float(np.linalg.cond(design))
    if cond > _FIT_CONDITION_LIMIT:
        raise AnalysisError(f"entropy fit is ill-conditioned (cond {cond:.2e})")
    scaled, res, *_ = np.linalg.lstsq(design, entropies, rcond=None)
    coeffs = scaled / scale ** np.arange(max_order + 1)
    residual = float(np.sqrt(np.mean((design @ scaled - entropies) ** 2)))
    return EntropyExpansion(coeffs, cond, residual)


def pump_probe_correlator(
    h: OperatorSum,
    pump: OperatorSum,
    probe_1: OperatorSum,
    probe_2: OperatorSum,
    t_1: float,
    t_2: float,
    eta: float,
    psi0: StateLike,
    evolver: Evolver = EXACT,
) -> complex:
    """C(t1, t2; eta) = <psi0| e^{i eta B} A2(t1+t2) A1(t1) e^{-i eta B} |psi0>.

    The probes are Heisenberg operators with respect to the unperturbed
    Hamiltonian; the result is generally complex.
    """
    phi = apply_kick(pump, eta, psi0)
    bra = evolve(h, phi, t_1 + t_2, evolver)
    ket = evolve(h, phi, t_1, evolver)
    ket = apply_operator(probe_1, ket)
    ket = evolve(h, ket, t_2, evolver)
    ket = apply_operator(probe_2, ket)
    return complex(np.vdot(bra, ket))


def correlator_order_expansion(
    sampler: Callable[[float], complex],
    rule: ShiftRule,
    orders: Sequence[int],
    eta: float,
) -> dict[int, complex]:
    """C^(n) = (eta^n / n!) d^n C / d eta^n at 0, from shifted samples.

    The shift rule is applied separately to the real and imaginary parts of
    the sampled correlator.
    """
    samples = np.array([sampler(float(s)) for s in rule.shifts], dtype=complex)
    out: dict[int, complex] = {}
    for n in orders:
        c = rule.coefficients[int(n)]
        deriv = complex(np.dot(c, samples.real), np.dot(c, samples.imag))
        out[int(n)] = deriv * (eta ** int(n)) / math.factorial(int(n))
    return out


def contrast_ratio(c_kappa: complex, c_zero: complex, floor: float = 1e-10) -> complex:
    """R = C(kappa)/C(0) - 1; a near-zero reference denominator is rejected."""
    if abs(c_zero) <= floor:
        raise AnalysisError(f"reference correlator magnitude {abs(c_zero):.2e} below floor")
    return complex(c_kappa / c_zero - 1.0)


def pca_slope(cloud: PointCloud2D) -> float:
    """Total-least-squares slope: the leading principal axis of the cloud.

    The eigenvector is oriented to positive x; a vertical principal axis
    returns +inf, and an isotropic cloud (degenerate eigenvalues) is
    rejected as directionless.
    """
    pts = cloud.points - cloud.points.mean(axis=0)
    cov = pts.T @ pts / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    scale = max(evals[-1], 1e-300)
    if (evals[-1] - evals[0]) <= 1e-12 * scale:
        raise AnalysisError("isotropic point cloud: principal axis undefined")
    v = evecs[:, -1]
    if abs(v[0]) <= 1e-300 * abs(v[1]):
        return float("inf")
    if v[0] < 0:
        v = -v
    return float(v[1] / v[0])


def third_order_2dos(
    h: OperatorSum,
    observable: OperatorSum,
    pump: OperatorSum,
    t_2: float,
    t1_grid: Sequence[float],
    t3_grid: Sequence[float],
    psi0: StateLike,
    evolver: Evolver = EXACT,
    method: str = "shift_rule",
) -> np.ndarray:
    """Absorptive third-order signal S^(3)(t1, t3) for the three-pulse protocol.

    Three identical kicks act at 0, t1, and t1 + t2 and <A> is read out at
    t1 + t2 + t3.  The returned array is the causal third-order response
    i^3 <[[[A(t1+t2+t3), B(t1+t2)], B(t1)], B(0)]>, which for Hermitian A and
    B is real and equals the imaginary part of the bare triple-commutator
    matrix element.

    ``method`` selects the reconstruction route: "shift_rule" differentiates the
    three-amplitude driven signal with one shift rule per pulse, "oracle"
    evaluates the nested commutator directly; both agree to rounding.
    """
    if t_2 < 0:
        raise AnalysisError("waiting time t_2 must be nonnegative")
    t1s = np.asarray(t1_grid, dtype=float)
    t3s = np.asarray(t3_grid, dtype=float)
    if np.any(t1s < 0) or np.any(t3s < 0):
        raise AnalysisError("t1 and t3 grids must be nonnegative")
    out = np.empty((t1s.size, t3s.size))
    if method == "oracle":
        for i, t1 in enumerate(t1s):
            for j, t3 in enumerate(t3s):
                pulses = [(pump, t1 + t_2), (pump, t1), (pump, 0.0)]
                out[i, j] = nested_commutator_response(
                    h, observable, pulses, t1 + t_2 + t3, psi0, evolver
                )
        return out
    if method != "shift_rule":
        raise AnalysisError(f"unknown method {method!r}")
    rule = rule_for_generator(pump, [1])
    beta = MultiIndex([1, 1, 1])
    rules = {0: rule, 1: rule, 2: rule}
    for i, t1 in enumerate(t1s):
        for j, t3 in enumerate(t3s):
            times = [0.0, t1, t1 + t_2]
            if times[1] <= times[0] or times[2] <= times[1]:
                # coincident pulses: fall back to the commutator route, which
                # handles the equal-time step functions unambiguously
                pulses = [(pump, t1 + t_2), (pump, t1), (pump, 0.0)]
                out[i, j] = nested_commutator_response(
                    h, observable, pulses, t1 + t_2 + t3, psi0, evolver
                )
                continue
            schedule = PulseSchedule([(pump, [times[0]]), (pump, [times[1]]), (pump, [times[2]])])
            series = reconstruct_response(
                h,
                schedule,
                observable,
                [t1 + t_2 + t3],
                beta,
                evolver,
                psi0,
                rules=rules,
            )
            out[i, j] = series.values[0]
    return out
