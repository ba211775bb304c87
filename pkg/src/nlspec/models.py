"""Hamiltonians, pump generators, observables and ground states.

Covers the XXZ chain, the toric code on a torus, a coherently coupled
two-level-system dimer, and a shared-mode (spin-boson style) three-qubit
model, plus the pump profiles used to drive them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.sparse.linalg import eigsh

from .pauli import (
    DENSE_SITE_CAP,
    DimensionCapError,
    OperatorSum,
    PauliTerm,
    StateVector,
    apply_operator,
    to_dense,
    to_sparse,
)

MODEL_KINDS = ("xxz", "toric_code", "tls_dimer", "spin_boson")
PUMP_KINDS = ("local_pauli", "cosine_profile", "pauli_string")

_REQUIRED_PARAMS = {
    "xxz": ("n_sites", "delta", "h_field"),
    "toric_code": ("l_x", "l_y", "j_star", "j_plaquette"),
    "tls_dimer": ("omega_0", "omega_1", "j_exchange"),
    "spin_boson": ("omega_0", "omega_1", "omega_mode", "g_coupling"),
}


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model description; the schema of CLI config files."""

    kind: str
    parameters: Mapping[str, float]
    boundary: str = "open"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        params = dict(self.parameters)
        for name in _REQUIRED_PARAMS[self.kind]:
            if name not in params:
                raise ValueError(f"model kind {self.kind!r} requires parameter {name!r}")
            if not np.isfinite(params[name]):
                raise ValueError(f"parameter {name!r} must be finite")
        object.__setattr__(self, "parameters", dict(params))

    def n_qubits(self) -> int:
        if self.kind == "xxz":
            return int(self.parameters["n_sites"])
        if self.kind == "toric_code":
            return 2 * int(self.parameters["l_x"]) * int(self.parameters["l_y"])
        if self.kind == "tls_dimer":
            return 2
        return 3


@dataclass(frozen=True)
class PumpSpec:
    """Drive-generator description: a local Pauli, a cosine-weighted sum of
    single-site Paulis, or an arbitrary Pauli string.

    For the cosine profile, ``sites`` restricts the drive to a subset of the
    register (e.g. the two-level systems but not a shared mode); the k-th
    listed site gets weight cos(2 pi momentum k / len(sites)).
    """

    kind: str
    site: int | None = None
    axis: str = "X"
    momentum: int | None = None
    sites: tuple[int, ...] = ()
    factors: tuple[tuple[int, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in PUMP_KINDS:
            raise ValueError(f"unknown pump kind {self.kind!r}")
        if self.kind == "local_pauli" and self.site is None:
            raise ValueError("local_pauli pump requires a site")
        if self.kind == "cosine_profile" and self.momentum is None:
            raise ValueError("cosine_profile pump requires a momentum index")
        if self.kind == "pauli_string" and not self.factors:
            raise ValueError("pauli_string pump requires factors")
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "factors", tuple(sorted(dict(self.factors).items())))


def build_xxz(n_sites: int, delta: float, h_field: float, boundary: str = "open") -> OperatorSum:
    """H = (1/4) sum_<ij> (X_i X_j + Y_i Y_j + delta Z_i Z_j) - (h/2) sum_i Z_i."""
    if n_sites < 2:
        raise ValueError("XXZ chain needs at least 2 sites")
    bonds = [(i, i + 1) for i in range(n_sites - 1)]
    if boundary == "periodic":
        bonds.append((n_sites - 1, 0))
    terms = []
    for i, j in bonds:
        terms.append(PauliTerm(0.25, {i: "X", j: "X"}))
        terms.append(PauliTerm(0.25, {i: "Y", j: "Y"}))
        terms.append(PauliTerm(0.25 * delta, {i: "Z", j: "Z"}))
    for i in range(n_sites):
        terms.append(PauliTerm(-0.5 * h_field, {i: "Z"}))
    return OperatorSum(terms, n_sites)


@dataclass(frozen=True)
class ToricLattice:
    """Edge indexing for an l_x x l_y torus with qubits on edges.

    Per plaquette row y the l_x horizontal edges come first, then the l_x
    vertical ones: h(x, y) = 2*l_x*y + x and v(x, y) = 2*l_x*y + l_x + x,
    periodic in both directions.
    """

    l_x: int
    l_y: int

    def __post_init__(self):
        if self.l_x < 2 or self.l_y < 2:
            raise ValueError("torus requires l_x, l_y >= 2")

    @property
    def n_qubits(self) -> int:
        return 2 * self.l_x * self.l_y

    def h_edge(self, x: int, y: int) -> int:
        return 2 * self.l_x * (y % self.l_y) + (x % self.l_x)

    def v_edge(self, x: int, y: int) -> int:
        return 2 * self.l_x * (y % self.l_y) + self.l_x + (x % self.l_x)

    def star_edges(self, x: int, y: int) -> tuple[int, ...]:
        return (
            self.h_edge(x, y),
            self.h_edge(x - 1, y),
            self.v_edge(x, y),
            self.v_edge(x, y - 1),
        )

    def plaquette_edges(self, x: int, y: int) -> tuple[int, ...]:
        return (
            self.h_edge(x, y),
            self.h_edge(x, y + 1),
            self.v_edge(x, y),
            self.v_edge(x + 1, y),
        )


def build_toric_code(l_x: int, l_y: int, j_star: float, j_plaquette: float) -> OperatorSum:
    """H = -J_A sum_v prod_{e in v} X_e - J_B sum_p prod_{e in p} Z_e."""
    lattice = ToricLattice(l_x, l_y)
    terms = []
    for y in range(l_y):
        for x in range(l_x):
            terms.append(PauliTerm(-j_star, {e: "X" for e in lattice.star_edges(x, y)}))
            terms.append(PauliTerm(-j_plaquette, {e: "Z" for e in lattice.plaquette_edges(x, y)}))
    return OperatorSum(terms, lattice.n_qubits)


def build_tls_dimer(omega_0: float, omega_1: float, j_exchange: float) -> OperatorSum:
    """Two coupled two-level systems: sum_i (omega_i/2) Z_i + J (XX + YY + ZZ)."""
    terms = [
        PauliTerm(0.5 * omega_0, {0: "Z"}),
        PauliTerm(0.5 * omega_1, {1: "Z"}),
        PauliTerm(j_exchange, {0: "X", 1: "X"}),
        PauliTerm(j_exchange, {0: "Y", 1: "Y"}),
        PauliTerm(j_exchange, {0: "Z", 1: "Z"}),
    ]
    return OperatorSum(terms, 2)


def build_spin_boson(omega_0: float, omega_1: float, omega_mode: float, g_coupling: float) -> OperatorSum:
    """Two uncoupled two-level systems sharing a two-level mode on qubit 2:
    sum_i (omega_i/2) Z_i + (omega_b/2) Z_b + g (Z_0 X_b + Z_1 X_b)."""
    terms = [
        PauliTerm(0.5 * omega_0, {0: "Z"}),
        PauliTerm(0.5 * omega_1, {1: "Z"}),
        PauliTerm(0.5 * omega_mode, {2: "Z"}),
        PauliTerm(g_coupling, {0: "Z", 2: "X"}),
        PauliTerm(g_coupling, {1: "Z", 2: "X"}),
    ]
    return OperatorSum(terms, 3)


def build_model(spec: ModelSpec) -> OperatorSum:
    p = spec.parameters
    if spec.kind == "xxz":
        return build_xxz(int(p["n_sites"]), p["delta"], p["h_field"], spec.boundary)
    if spec.kind == "toric_code":
        return build_toric_code(int(p["l_x"]), int(p["l_y"]), p["j_star"], p["j_plaquette"])
    if spec.kind == "tls_dimer":
        return build_tls_dimer(p["omega_0"], p["omega_1"], p["j_exchange"])
    return build_spin_boson(p["omega_0"], p["omega_1"], p["omega_mode"], p["g_coupling"])


def cosine_weights(n_sites: int, momentum: int) -> np.ndarray:
    """Drive weights f_i = cos(2*pi*momentum*i / n_sites), bit-reproducible."""
    i = np.arange(n_sites, dtype=float)
    return np.cos(2.0 * np.pi * momentum * i / n_sites)


def build_pump(spec: PumpSpec, n_sites: int) -> OperatorSum:
    if spec.kind == "local_pauli":
        return OperatorSum((PauliTerm(1.0, {int(spec.site): spec.axis}),), n_sites)
    if spec.kind == "cosine_profile":
        sites = spec.sites or tuple(range(n_sites))
        weights = cosine_weights(len(sites), int(spec.momentum))
        terms = tuple(
            PauliTerm(w, {site: spec.axis})
            for site, w in zip(sites, weights)
            if w != 0.0
        )
        return OperatorSum(terms, n_sites)
    return OperatorSum((PauliTerm(1.0, spec.factors),), n_sites)


def _canonical_phase(amps: np.ndarray) -> np.ndarray:
    """Fix the global phase so the largest-magnitude amplitude is real positive."""
    k = int(np.argmax(np.abs(amps)))
    phase = amps[k] / abs(amps[k])
    return amps / phase


def _stabilizer_projection(h: OperatorSum) -> np.ndarray | None:
    """Ground state of a commuting sum of negative-weighted Pauli strings.

    Projects |0...0> onto the +1 eigenspace of every string carrying a
    negative coefficient (so each term is minimized).  Returns None when the
    model is not of this form or the projection annihilates the seed state.
    """
    if not h.terms:
        return None
    for term in h.terms:
        if term.coefficient >= 0:
            return None
    from .pauli import terms_commute_pairwise

    if not terms_commute_pairwise(h):
        return None
    dim = 2**h.n_sites
    state = np.zeros(dim, dtype=np.complex128)
    state[0] = 1.0
    for term in h.terms:
        string = OperatorSum((PauliTerm(1.0, term.factors),), h.n_sites)
        state = 0.5 * (state + apply_operator(string, state))
        norm = np.linalg.norm(state)
        if norm < 1e-12:
            return None
        state = state / norm
    return _canonical_phase(state)


_DENSE_GROUND_CAP = 2**9


def ground_state(h: OperatorSum) -> StateVector:
    """Deterministic lowest-energy eigenvector of the Hamiltonian.

    Commuting all-negative Pauli sums (the toric code at its solvable point)
    use the stabilizer projection of |0...0>; everything else falls back to a
    dense or Lanczos solve with a fixed starting vector, with the global
    phase pinned by the largest amplitude.
    """
    if h.n_sites > DENSE_SITE_CAP:
        raise DimensionCapError(f"ground state for {h.n_sites} sites exceeds cap {DENSE_SITE_CAP}")
    projected = _stabilizer_projection(h)
    if projected is not None:
        return StateVector(projected, h.n_sites)
    dim = 2**h.n_sites
    if dim <= _DENSE_GROUND_CAP:
        vals, vecs = np.linalg.eigh(to_dense(h))
        amps = vecs[:, 0]
    else:
        v0 = np.full(dim, 1.0 / np.sqrt(dim))
        vals, vecs = eigsh(to_sparse(h), k=1, which="SA", v0=v0, maxiter=10_000)
        amps = vecs[:, 0].astype(np.complex128)
    amps = _canonical_phase(amps)
    return StateVector(amps / np.linalg.norm(amps), h.n_sites)
