"""Pauli-string operators and state vectors for spin-1/2 registers.

Conventions
-----------
Site 0 is the least significant bit of the computational-basis index, so the
basis state |b_{N-1} ... b_1 b_0> has index sum_j b_j 2^j and Z_j |b> =
(-1)^{b_j} |b>.  All operators are weighted sums of Pauli strings with real
coefficients, hence Hermitian by construction.  Operators and states are
immutable after construction; every function here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

AXES = ("X", "Y", "Z")

#: terms with |coefficient| below this are dropped at construction
COEFF_PRUNE_TOL = 1e-14

#: dense matrices (and dense eigendecompositions) are refused above 2**12
DENSE_SITE_CAP = 12


class DimensionCapError(RuntimeError):
    """Dense-path request exceeds the configured qubit cap."""


class HermiticityError(RuntimeError):
    """A quantity that must be real came out with a large imaginary part."""


StateLike = Union["StateVector", np.ndarray]


@dataclass(frozen=True)
class PauliTerm:
    """A single weighted Pauli string, e.g. 0.25 * X_0 X_1.

    ``factors`` maps site index to axis and is stored as a site-sorted tuple
    of (site, axis) pairs so terms are hashable and canonically ordered.
    An empty factor tuple is the identity string.
    """

    coefficient: float
    factors: tuple[tuple[int, str], ...]

    def __init__(self, coefficient: float, factors: Mapping[int, str] | Iterable[tuple[int, str]]):
        items = sorted(dict(factors).items()) if isinstance(factors, Mapping) else sorted(factors)
        seen = set()
        for site, axis in items:
            if site < 0 or site != int(site):
                raise ValueError(f"invalid site index {site!r}")
            if site in seen:
                raise ValueError(f"duplicate site {site} in Pauli term")
            if axis not in AXES:
                raise ValueError(f"invalid axis {axis!r}; expected one of {AXES}")
            seen.add(site)
        coefficient = float(coefficient)
        if not np.isfinite(coefficient):
            raise ValueError("coefficient must be finite")
        object.__setattr__(self, "coefficient", coefficient)
        object.__setattr__(self, "factors", tuple((int(s), a) for s, a in items))

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.factors)

    def masks(self) -> tuple[int, int, int]:
        """Bit masks (flip, phase, y_count) encoding the string's action.

        flip has a 1 at X and Y sites, phase at Y and Z sites; applying the
        string to |i> gives (i)^{y_count} * (-1)^{popcount(i & phase)} |i ^ flip>.
        """
        flip = phase = y_count = 0
        for site, axis in self.factors:
            bit = 1 << site
            if axis in ("X", "Y"):
                flip |= bit
            if axis in ("Y", "Z"):
                phase |= bit
            if axis == "Y":
                y_count += 1
        return flip, phase, y_count


@dataclass(frozen=True)
class OperatorSum:
    """Hermitian operator given as a real-weighted sum of Pauli strings.

    Duplicate strings are merged and terms with |coefficient| < 1e-14 pruned,
    so equal operators compare equal and can serve as cache keys.
    """

    terms: tuple[PauliTerm, ...]
    n_sites: int

    def __init__(self, terms: Iterable[PauliTerm], n_sites: int):
        n_sites = int(n_sites)
        if n_sites < 1:
            raise ValueError("n_sites must be positive")
        merged: dict[tuple[tuple[int, str], ...], float] = {}
        for term in terms:
            if term.sites and max(term.sites) >= n_sites:
                raise ValueError(f"term acts on site {max(term.sites)} outside register of {n_sites}")
            merged[term.factors] = merged.get(term.factors, 0.0) + term.coefficient
        kept = tuple(
            PauliTerm(c, f) for f, c in sorted(merged.items()) if abs(c) > COEFF_PRUNE_TOL
        )
        object.__setattr__(self, "terms", kept)
        object.__setattr__(self, "n_sites", n_sites)

    @property
    def support(self) -> tuple[int, ...]:
        """Sites on which at least one term acts nontrivially, ascending."""
        sites: set[int] = set()
        for term in self.terms:
            sites.update(term.sites)
        return tuple(sorted(sites))

    @property
    def coefficient_l1(self) -> float:
        return float(sum(abs(t.coefficient) for t in self.terms))

    def cache_key(self) -> tuple:
        return (self.n_sites, tuple((t.factors, t.coefficient) for t in self.terms))

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        if other.n_sites != self.n_sites:
            raise ValueError("site-count mismatch")
        return OperatorSum(self.terms + other.terms, self.n_sites)

    def __mul__(self, scalar: float) -> "OperatorSum":
        return OperatorSum(
            tuple(PauliTerm(scalar * t.coefficient, t.factors) for t in self.terms), self.n_sites
        )

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state over 2**n_sites basis states."""

    amplitudes: np.ndarray
    n_sites: int

    def __init__(self, amplitudes: np.ndarray, n_sites: int | None = None):
        amps = np.asarray(amplitudes, dtype=np.complex128)
        if amps.ndim != 1:
            raise ValueError("amplitudes must be one-dimensional")
        inferred = int(np.log2(amps.size))
        if 2**inferred != amps.size:
            raise ValueError(f"amplitude length {amps.size} is not a power of two")
        if n_sites is None:
            n_sites = inferred
        elif 2**n_sites != amps.size:
            raise ValueError("n_sites inconsistent with amplitude length")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm {norm!r} deviates from 1 by more than 1e-12")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "n_sites", int(n_sites))

    @classmethod
    def computational_basis(cls, n_sites: int, index: int = 0) -> "StateVector":
        amps = np.zeros(2**n_sites, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps, n_sites)

    @classmethod
    def from_unnormalized(cls, amplitudes: np.ndarray) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm)


@dataclass(frozen=True, eq=False)
class Eigensystem:
    """Spectral decomposition B = V diag(values) V^dagger, values ascending."""

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vecs = np.asarray(self.vectors, dtype=np.complex128)
        vals.flags.writeable = False
        vecs.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "vectors", vecs)


def amplitudes_of(state: StateLike) -> np.ndarray:
    """Coerce a StateVector or raw complex array to an amplitude array."""
    if isinstance(state, StateVector):
        return state.amplitudes
    return np.asarray(state, dtype=np.complex128)


def n_sites_of(state: StateLike) -> int:
    if isinstance(state, StateVector):
        return state.n_sites
    n = int(np.log2(len(state)))
    if 2**n != len(state):
        raise ValueError("amplitude length is not a power of two")
    return n


@lru_cache(maxsize=256)
def _xor_index(n_sites: int, flip: int) -> np.ndarray:
    idx = np.arange(2**n_sites, dtype=np.int64) ^ flip
    idx.flags.writeable = False
    return idx


@lru_cache(maxsize=256)
def _phase_signs(n_sites: int, phase_mask: int) -> np.ndarray:
    counts = np.bitwise_count(np.arange(2**n_sites, dtype=np.uint64) & np.uint64(phase_mask))
    signs = np.where(counts & 1, -1.0, 1.0)
    signs.flags.writeable = False
    return signs


def apply_term(term: PauliTerm, amps: np.ndarray, n_sites: int, out: np.ndarray) -> None:
    """Accumulate term|psi> into ``out`` without materializing any matrix."""
    flip, phase, y_count = term.masks()
    scale = term.coefficient * (1j) ** y_count
    signed = amps if phase == 0 else amps * _phase_signs(n_sites, phase)
    if flip == 0:
        out += scale * signed
    else:
        out += scale * signed[_xor_index(n_sites, flip)]


def apply_operator(op: OperatorSum, state: StateLike) -> np.ndarray:
    """Return op|psi> as a (generally unnormalized) complex amplitude array."""
    amps = amplitudes_of(state)
    if 2**op.n_sites != amps.size:
        raise ValueError("operator and state act on different registers")
    out = np.zeros_like(amps)
    for term in op.terms:
        apply_term(term, amps, op.n_sites, out)
    return out


def expectation(op: OperatorSum, state: StateLike) -> float:
    """<psi|op|psi> for a Hermitian operator; the imaginary part must vanish."""
    amps = amplitudes_of(state)
    raw = np.vdot(amps, apply_operator(op, amps))
    tol = 1e-10 * max(1.0, op.coefficient_l1)
    if abs(raw.imag) > tol:
        raise HermiticityError(f"imaginary part {raw.imag:.3e} exceeds tolerance {tol:.3e}")
    return float(raw.real)


def complex_matrix_element(op_product: Sequence[OperatorSum], state: StateLike) -> complex:
    """<psi| op_1 op_2 ... op_k |psi>, keeping the imaginary part.

    The product is taken in sequence order, so the last operator in the
    sequence acts on |psi> first.
    """
    amps = amplitudes_of(state)
    ket = amps
    for op in reversed(list(op_product)):
        if 2**op.n_sites != amps.size:
            raise ValueError("operator and state act on different registers")
        ket = apply_operator(op, ket)
    return complex(np.vdot(amps, ket))


def to_dense(op: OperatorSum) -> np.ndarray:
    """Dense 2**N x 2**N matrix of the operator; refused above the cap."""
    if op.n_sites > DENSE_SITE_CAP:
        raise DimensionCapError(f"dense matrix for {op.n_sites} sites exceeds cap {DENSE_SITE_CAP}")
    dim = 2**op.n_sites
    rows = np.arange(dim, dtype=np.int64)
    mat = np.zeros((dim, dim), dtype=np.complex128)
    for term in op.terms:
        flip, phase, y_count = term.masks()
        scale = term.coefficient * (1j) ** y_count
        phases = scale * _phase_signs(op.n_sites, phase)
        mat[rows ^ flip, rows] += phases
    return mat


def to_sparse(op: OperatorSum):
    """CSR matrix of the operator (any N); one dim-length block per term."""
    from scipy.sparse import csr_matrix

    dim = 2**op.n_sites
    rows_all = []
    cols_all = []
    data_all = []
    cols = np.arange(dim, dtype=np.int64)
    for term in op.terms:
        flip, phase, y_count = term.masks()
        scale = term.coefficient * (1j) ** y_count
        rows_all.append(cols ^ flip)
        cols_all.append(cols)
        data_all.append(scale * _phase_signs(op.n_sites, phase))
    if not rows_all:
        return csr_matrix((dim, dim), dtype=np.complex128)
    return csr_matrix(
        (np.concatenate(data_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(dim, dim),
    )


def _project_to_support(op: OperatorSum) -> OperatorSum:
    """Reindex the operator onto its support sites 0..r-1."""
    support = op.support
    relabel = {site: k for k, site in enumerate(support)}
    terms = tuple(
        PauliTerm(t.coefficient, tuple((relabel[s], a) for s, a in t.factors)) for t in op.terms
    )
    return OperatorSum(terms, max(1, len(support)))


def eigendecompose(op: OperatorSum, on_support: bool = False) -> Eigensystem:
    """Dense spectral decomposition, optionally on the support factor only.

    ``on_support=True`` diagonalizes the operator restricted to the tensor
    factor where it acts nontrivially; the distinct eigenvalues (and hence
    all spectral gaps) agree with those of the full operator.
    """
    target = _project_to_support(op) if on_support else op
    if target.n_sites > DENSE_SITE_CAP:
        raise DimensionCapError(
            f"eigendecomposition of {target.n_sites} sites exceeds cap {DENSE_SITE_CAP}"
        )
    vals, vecs = np.linalg.eigh(to_dense(target))
    return Eigensystem(vals, vecs)


def partial_trace(state: StateLike, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix over a contiguous block of kept sites."""
    amps = amplitudes_of(state)
    n = n_sites_of(state)
    keep = sorted(int(k) for k in keep)
    if not keep:
        raise ValueError("keep block must be nonempty")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"keep block {keep} outside register of {n} sites")
    if keep != list(range(keep[0], keep[-1] + 1)):
        raise ValueError("only contiguous site blocks are supported")
    lo, size = keep[0], len(keep)
    # axes split as (high bits, kept block, low bits); site 0 is the LSB
    tensor = amps.reshape(2 ** (n - lo - size), 2**size, 2**lo)
    return np.einsum("hml,hnl->mn", tensor, tensor.conj())


def pauli_product(
    factors_a: tuple[tuple[int, str], ...], factors_b: tuple[tuple[int, str], ...]
) -> tuple[complex, tuple[tuple[int, str], ...]]:
    """Multiply two Pauli strings symbolically: returns (phase, factors)."""
    table = {
        ("X", "Y"): (1j, "Z"),
        ("Y", "Z"): (1j, "X"),
        ("Z", "X"): (1j, "Y"),
        ("Y", "X"): (-1j, "Z"),
        ("Z", "Y"): (-1j, "X"),
        ("X", "Z"): (-1j, "Y"),
    }
    result = dict(factors_a)
    phase: complex = 1.0
    for site, axis in factors_b:
        if site not in result:
            result[site] = axis
        elif result[site] == axis:
            del result[site]
        else:
            ph, new_axis = table[(result[site], axis)]
            phase *= ph
            result[site] = new_axis
    return phase, tuple(sorted(result.items()))


def commutator_norm(op_a: OperatorSum, op_b: OperatorSum) -> float:
    """Max |coefficient| of [A, B] computed symbolically (exact, matrix-free)."""
    acc: dict[tuple[tuple[int, str], ...], complex] = {}
    for ta in op_a.terms:
        for tb in op_b.terms:
            w = ta.coefficient * tb.coefficient
            ph_ab, f_ab = pauli_product(ta.factors, tb.factors)
            ph_ba, f_ba = pauli_product(tb.factors, ta.factors)
            acc[f_ab] = acc.get(f_ab, 0.0) + w * ph_ab
            acc[f_ba] = acc.get(f_ba, 0.0) - w * ph_ba
    if not acc:
        return 0.0
    return float(max(abs(v) for v in acc.values()))


def terms_commute_pairwise(op: OperatorSum) -> bool:
    """True when every pair of Pauli strings in the sum commutes."""
    terms = op.terms
    for i in range(len(terms)):
        fa = dict(terms[i].factors)
        for j in range(i + 1, len(terms)):
            conflicts = sum(
                1 for site, axis in terms[j].factors if site in fa and fa[site] != axis
            )
            if conflicts % 2:
                return False
    return True
