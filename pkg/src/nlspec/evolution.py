"""Time propagation, impulsive kicks, and driven-signal evaluation.

The driven protocol is: prepare |psi_0>, then alternate free evolution under
H_0 with instantaneous kicks exp(-i eta_a B_a) at the scheduled pulse times,
and measure <A> at each grid time.  Free evolution between two consecutive
events is performed by a single evolver call; with the first-order Trotter
evolver this segmentation is part of the propagator's definition, and the
commutator reference in `reference` uses the identical segmentation so the
two routes agree to rounding error.

Kicks scheduled exactly at a measurement time are applied before measuring;
pulses after the measurement time are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .pauli import (
    DENSE_SITE_CAP,
    DimensionCapError,
    OperatorSum,
    PauliTerm,
    StateLike,
    _phase_signs,
    _xor_index,
    amplitudes_of,
    commutator_norm,
    eigendecompose,
    expectation,
    terms_commute_pairwise,
)

EVOLVER_KINDS = ("exact", "trotter1")

#: exact evolution diagonalizes densely up to this many sites and switches to
#: a sparse Krylov propagator above (same unitary, machine-precision accurate)
_EIGH_SITE_CAP = 9


class ScheduleError(ValueError):
    """Invalid pulse schedule (ordering, commutation, or grid consistency)."""


@dataclass(frozen=True)
class Evolver:
    """Propagation method: exact eigenbasis phases or first-order Trotter.

    ``trotter1`` applies (prod_k exp(-i H_k t/n))^n with the operator's
    construction term order (or the permutation in ``term_order``); each
    evolver call uses ``n_steps`` steps for its full duration.
    """

    kind: str = "exact"
    n_steps: int = 0
    term_order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in EVOLVER_KINDS:
            raise ValueError(f"unknown evolver kind {self.kind!r}")
        if self.kind == "trotter1" and self.n_steps < 1:
            raise ValueError("trotter1 requires n_steps >= 1")
        if self.term_order is not None:
            object.__setattr__(self, "term_order", tuple(int(i) for i in self.term_order))


EXACT = Evolver("exact")


class _BoundedCache:
    """Tiny FIFO cache for eigendecompositions keyed by operator content."""

    def __init__(self, cap: int):
        self.cap = cap
        self._data: dict = {}

    def get_or_compute(self, key, fn):
        if key in self._data:
            return self._data[key]
        value = fn()
        if len(self._data) >= self.cap:
            self._data.pop(next(iter(self._data)))
        self._data[key] = value
        return value


_EIG_CACHE = _BoundedCache(cap=6)
_KICK_CACHE = _BoundedCache(cap=32)
_SPARSE_CACHE = _BoundedCache(cap=6)


def _hamiltonian_eigensystem(h: OperatorSum):
    return _EIG_CACHE.get_or_compute(h.cache_key(), lambda: eigendecompose(h))


def _sparse_hamiltonian(h: OperatorSum):
    from .pauli import to_sparse

    return _SPARSE_CACHE.get_or_compute(h.cache_key(), lambda: to_sparse(h).tocsr())


def _ordered_terms(h: OperatorSum, evolver: Evolver) -> tuple[PauliTerm, ...]:
    if evolver.term_order is None:
        return h.terms
    if sorted(evolver.term_order) != list(range(len(h.terms))):
        raise ValueError("term_order must be a permutation of the term indices")
    return tuple(h.terms[i] for i in evolver.term_order)


@lru_cache(maxsize=4096)
def _string_masks(factors: tuple) -> tuple[int, int, complex]:
    flip = phase = y_count = 0
    for site, axis in factors:
        bit = 1 << site
        if axis in ("X", "Y"):
            flip |= bit
        if axis in ("Y", "Z"):
            phase |= bit
        if axis == "Y":
            y_count += 1
    return flip, phase, (1j) ** y_count


def _apply_string_rotation(term: PauliTerm, angle: float, amps: np.ndarray, n_sites: int) -> np.ndarray:
    """exp(-i angle P) |psi> for a single Pauli string P (P^2 = 1)."""
    flip, phase, y_factor = _string_masks(term.factors)
    scale = -1j * np.sin(angle) * y_factor
    signed = amps if phase == 0 else amps * _phase_signs(n_sites, phase)
    applied = signed if flip == 0 else signed[_xor_index(n_sites, flip)]
    return np.cos(angle) * amps + scale * applied


def _trotter_evolve(h: OperatorSum, amps: np.ndarray, t: float, evolver: Evolver) -> np.ndarray:
    dt = t / evolver.n_steps
    terms = _ordered_terms(h, evolver)
    state = amps
    for _ in range(evolver.n_steps):
        for term in terms:
            state = _apply_string_rotation(term, term.coefficient * dt, state, h.n_sites)
    return state


def evolve(h: OperatorSum, state: StateLike, t: float, evolver: Evolver = EXACT) -> np.ndarray:
    """Propagate |psi> by exp(-i H t) (exact) or its Trotter approximation."""
    if not np.isfinite(t):
        raise ValueError("evolution time must be finite")
    amps = amplitudes_of(state)
    if t == 0.0:
        return amps.copy()
    if evolver.kind == "exact":
        if h.n_sites > DENSE_SITE_CAP:
            raise DimensionCapError("exact evolution exceeds the dense cap")
        if h.n_sites <= _EIGH_SITE_CAP:
            eig = _hamiltonian_eigensystem(h)
            return eig.vectors @ (np.exp(-1j * eig.values * t) * (eig.vectors.conj().T @ amps))
        from scipy.sparse.linalg import expm_multiply

        return expm_multiply((-1j * t) * _sparse_hamiltonian(h), amps)
    return _trotter_evolve(h, amps, t, evolver)


def _kick_plan(b: OperatorSum):
    """Either the commuting-term factorization or the support eigensystem."""

    def compute():
        if terms_commute_pairwise(b):
            return ("product", None)
        support = b.support
        if len(support) > DENSE_SITE_CAP:
            raise DimensionCapError(
                f"kick generator support {len(support)} exceeds cap {DENSE_SITE_CAP}"
            )
        eig = eigendecompose(b, on_support=True)
        return ("support", (support, eig))

    return _KICK_CACHE.get_or_compute(b.cache_key(), compute)


def _apply_on_support(matrix: np.ndarray, support: Sequence[int], amps: np.ndarray, n_sites: int) -> np.ndarray:
    """Apply a 2^r x 2^r matrix acting on the given sites to the full state."""
    tensor = amps.reshape([2] * n_sites)
    axes = [n_sites - 1 - s for s in support]  # axis k of the tensor is site n-1-k
    moved = np.moveaxis(tensor, axes, range(len(axes)))
    shape = moved.shape
    flat = moved.reshape(2 ** len(axes), -1)
    flat = matrix @ flat
    moved = flat.reshape(shape)
    return np.moveaxis(moved, range(len(axes)), axes).reshape(-1)


def apply_kick(b: OperatorSum, eta: float, state: StateLike) -> np.ndarray:
    """exp(-i eta B)|psi>, exactly.

    Mutually commuting term sums (single strings, site-local drives, cosine
    profiles) factorize into per-string rotations; otherwise the generator is
    diagonalized once on its support and the kick applied in that eigenbasis.
    """
    amps = amplitudes_of(state)
    if eta == 0.0:
        return amps.copy()
    kind, payload = _kick_plan(b)
    if kind == "product":
        out = amps
        for term in b.terms:
            out = _apply_string_rotation(term, eta * term.coefficient, out, b.n_sites)
        return out
    support, eig = payload
    # support order must match the reindexed operator used for eigendecompose:
    # site k of the support factor is support[k]
    phases = np.exp(-1j * eta * eig.values)
    matrix = (eig.vectors * phases) @ eig.vectors.conj().T
    # reversed: axis 0 of the 2^r block is the most significant support site
    return _apply_on_support(matrix, list(reversed(support)), amps, b.n_sites)


@dataclass(frozen=True)
class PulseSchedule:
    """L drive channels, each a generator with one shared amplitude and an
    ascending tuple of pulse times."""

    channels: tuple[tuple[OperatorSum, tuple[float, ...]], ...]

    def __init__(self, channels: Sequence[tuple[OperatorSum, Sequence[float]]]):
        normalized = []
        n_sites = None
        for generator, times in channels:
            times = tuple(float(t) for t in times)
            if not times:
                raise ScheduleError("each channel needs at least one pulse time")
            if any(not np.isfinite(t) for t in times):
                raise ScheduleError("pulse times must be finite")
            if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
                raise ScheduleError("pulse times must be strictly ascending within a channel")
            if n_sites is None:
                n_sites = generator.n_sites
            elif generator.n_sites != n_sites:
                raise ScheduleError("all channel generators must share one register")
            normalized.append((generator, times))
        if not normalized:
            raise ScheduleError("schedule needs at least one channel")
        self._check_simultaneous(normalized)
        object.__setattr__(self, "channels", tuple(normalized))

    @staticmethod
    def _check_simultaneous(channels) -> None:
        by_time: dict[float, list[OperatorSum]] = {}
        for generator, times in channels:
            for t in times:
                by_time.setdefault(t, []).append(generator)
        for t, gens in by_time.items():
            for i in range(len(gens)):
                for j in range(i + 1, len(gens)):
                    if commutator_norm(gens[i], gens[j]) > 1e-10:
                        raise ScheduleError(
                            f"simultaneous kicks at t={t} from non-commuting generators"
                        )

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def n_sites(self) -> int:
        return self.channels[0][0].n_sites

    def events(self) -> list[tuple[float, int]]:
        """All (time, channel) pulse events, ordered by time then channel."""
        out = []
        for a, (_, times) in enumerate(self.channels):
            out.extend((t, a) for t in times)
        out.sort()
        return out

    def checkpoint_times(self) -> tuple[float, ...]:
        return tuple(sorted({t for _, times in self.channels for t in times}))


def time_grid(start: float, stop: float, points: int) -> np.ndarray:
    """Uniform inclusive grid; dt = (stop - start)/(points - 1)."""
    if points < 1:
        raise ValueError("grid needs at least one point")
    return np.linspace(start, stop, points)


def driven_signal(
    h: OperatorSum,
    schedule: PulseSchedule,
    etas: Sequence[float],
    observable: OperatorSum,
    t_grid: Sequence[float],
    evolver: Evolver,
    psi0: StateLike,
) -> np.ndarray:
    """<A(t)> under the kicked protocol, for each t in the grid.

    The initial state is anchored at min(0, first pulse, first grid time);
    for H_0 eigenstates under exact evolution the anchor is immaterial.
    Each measurement propagates afresh from the latest checkpoint, so the
    Trotterized signal is a well-defined function of the amplitudes.
    """
    grid = np.asarray(t_grid, dtype=float)
    if grid.size == 0:
        raise ScheduleError("empty time grid")
    if np.any(np.diff(grid) <= 0):
        raise ScheduleError("time grid must be strictly ascending")
    etas = [float(e) for e in etas]
    if len(etas) != schedule.n_channels:
        raise ScheduleError("one amplitude per channel is required")
    events = schedule.events()
    if events and events[-1][0] > grid[-1]:
        raise ScheduleError("pulses scheduled after the last measurement time")

    anchor = min(0.0, grid[0], events[0][0] if events else 0.0)
    state = amplitudes_of(psi0).copy()
    tau = anchor
    pending = list(events)
    values = np.empty(grid.size, dtype=float)
    for k, t in enumerate(grid):
        while pending and pending[0][0] <= t:
            t_pulse, channel = pending.pop(0)
            if t_pulse > tau:
                state = evolve(h, state, t_pulse - tau, evolver)
                tau = t_pulse
            generator, _ = schedule.channels[channel]
            state = apply_kick(generator, etas[channel], state)
        meas = evolve(h, state, t - tau, evolver) if t > tau else state
        values[k] = expectation(observable, meas)
    return values
