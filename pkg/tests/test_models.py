import numpy as np
import pytest

from nlspec.models import (
    ModelSpec,
    PumpSpec,
    ToricLattice,
    build_model,
    build_pump,
    build_spin_boson,
    build_tls_dimer,
    build_toric_code,
    build_xxz,
    cosine_weights,
    ground_state,
)
from nlspec.pauli import (
    OperatorSum,
    PauliTerm,
    commutator_norm,
    expectation,
    to_dense,
)


class TestXXZ:
    def test_heisenberg_dimer_ground_energy(self):
        h = build_xxz(2, 1.0, 0.0)
        assert np.linalg.eigvalsh(to_dense(h))[0] == pytest.approx(-0.75)

    def test_xy_dimer_spectrum(self):
        h = build_xxz(2, 0.0, 0.0)
        assert np.allclose(np.linalg.eigvalsh(to_dense(h)), [-0.5, 0, 0, 0.5])

    def test_term_count_n12(self):
        h = build_xxz(12, 0.0, 0.75)
        assert len(h.terms) == 11 * 2 + 12

    def test_periodic_has_extra_bond(self):
        assert len(build_xxz(4, 1.0, 0.0, "periodic").terms) == 4 * 3

    def test_total_z_conserved(self):
        h = build_xxz(5, 0.0, 0.0)
        sz = OperatorSum(tuple(PauliTerm(1.0, {i: "Z"}) for i in range(5)), 5)
        assert commutator_norm(h, sz) < 1e-14

    def test_needs_two_sites(self):
        with pytest.raises(ValueError):
            build_xxz(1, 1.0, 0.0)


class TestToricCode:
    def test_counts_and_ground_energy(self):
        h = build_toric_code(2, 2, 1.0, 1.0)
        assert h.n_sites == 8
        assert len(h.terms) == 8
        psi = ground_state(h)
        assert expectation(h, psi) == pytest.approx(-8.0, abs=1e-10)

    def test_all_stabilizers_plus_one(self):
        h = build_toric_code(2, 2, 1.0, 1.0)
        psi = ground_state(h)
        lat = ToricLattice(2, 2)
        for y in range(2):
            for x in range(2):
                star = OperatorSum(
                    (PauliTerm(1.0, {e: "X" for e in lat.star_edges(x, y)}),), 8
                )
                plaq = OperatorSum(
                    (PauliTerm(1.0, {e: "Z" for e in lat.plaquette_edges(x, y)}),), 8
                )
                assert expectation(star, psi) == pytest.approx(1.0, abs=1e-10)
                assert expectation(plaq, psi) == pytest.approx(1.0, abs=1e-10)

    def test_stabilizers_commute(self):
        h = build_toric_code(2, 3, 1.0, 0.7)
        for i, a in enumerate(h.terms):
            for b in h.terms[i + 1 :]:
                sa = OperatorSum((PauliTerm(1.0, a.factors),), h.n_sites)
                sb = OperatorSum((PauliTerm(1.0, b.factors),), h.n_sites)
                assert commutator_norm(sa, sb) == 0.0

    def test_zero_plaquette_coupling_ground_state(self):
        h = build_toric_code(2, 2, 1.0, 0.0)
        psi = ground_state(h)
        assert expectation(h, psi) == pytest.approx(-4.0, abs=1e-10)

    def test_negative_plaquette_coupling_falls_back(self):
        h = build_toric_code(2, 2, 1.0, -0.5)
        psi = ground_state(h)
        ref = np.linalg.eigvalsh(to_dense(h))[0]
        assert expectation(h, psi) == pytest.approx(ref, abs=1e-9)


class TestSmallModels:
    def test_tls_dimer_terms(self):
        h = build_tls_dimer(0.5, 1.0, 0.8)
        assert h.n_sites == 2 and len(h.terms) == 5

    def test_tls_dimer_decoupled_spectrum(self):
        h = build_tls_dimer(0.6, 1.4, 0.0)
        expected = sorted(
            s0 * 0.3 + s1 * 0.7 for s0 in (-1, 1) for s1 in (-1, 1)
        )
        assert np.allclose(np.linalg.eigvalsh(to_dense(h)), expected)

    def test_tls_degenerate_pair(self):
        h = build_tls_dimer(1.0, 1.0, 0.0)
        vals = np.linalg.eigvalsh(to_dense(h))
        assert np.allclose(vals[1:3], [0.0, 0.0], atol=1e-12)

    def test_spin_boson_terms(self):
        h = build_spin_boson(2.64, 3.20, 0.04, 0.05)
        assert h.n_sites == 3 and len(h.terms) == 5

    def test_spin_boson_decoupled_product_ground_state(self):
        h = build_spin_boson(1.0, 2.0, 0.5, 0.0)
        psi = ground_state(h)
        # all three qubits polarized: a computational-basis state
        assert np.sort(np.abs(psi.amplitudes))[-1] == pytest.approx(1.0, abs=1e-12)


class TestPump:
    def test_cosine_zero_momentum(self):
        assert np.allclose(cosine_weights(4, 0), [1, 1, 1, 1])

    def test_cosine_momentum_one_quarter_wave(self):
        w = cosine_weights(4, 1)
        assert np.allclose(w, [1, 0, -1, 0], atol=1e-15)

    def test_cosine_weights_bit_exact(self):
        n, m = 12, 1
        pump = build_pump(PumpSpec("cosine_profile", momentum=m), n)
        weights = {t.sites[0]: t.coefficient for t in pump.terms}
        for i in range(n):
            expected = np.cos(2.0 * np.pi * m * np.arange(n, dtype=float)[i] / n)
            if abs(expected) > 1e-14:  # sub-tolerance weights are pruned
                assert weights[i] == expected

    def test_local_pauli(self):
        pump = build_pump(PumpSpec("local_pauli", site=3), 12)
        assert pump.terms == (PauliTerm(1.0, {3: "X"}),)

    def test_restricted_sites(self):
        pump = build_pump(PumpSpec("cosine_profile", momentum=0, sites=(0, 1)), 3)
        assert pump.support == (0, 1)

    def test_pauli_string_pump(self):
        pump = build_pump(PumpSpec("pauli_string", factors=((0, "X"), (2, "Z"))), 8)
        assert len(pump.terms) == 1 and pump.terms[0].factors == ((0, "X"), (2, "Z"))


class TestGroundState:
    def test_z_field(self):
        h = OperatorSum((PauliTerm(1.0, {0: "Z"}),), 1)
        psi = ground_state(h)
        assert abs(psi.amplitudes[1]) == pytest.approx(1.0)

    def test_xxz_dimer_singlet(self):
        psi = ground_state(build_xxz(2, 1.0, 0.0))
        singlet = np.array([0, 1, -1, 0]) / np.sqrt(2)
        overlap = abs(np.vdot(singlet, psi.amplitudes))
        assert overlap == pytest.approx(1.0, abs=1e-10)

    def test_deterministic(self):
        h = build_xxz(6, 0.7, 0.3)
        a = ground_state(h).amplitudes
        b = ground_state(h).amplitudes
        assert np.array_equal(a, b)

    def test_lanczos_path_matches_dense(self):
        h = build_xxz(11, 0.9, 0.2)  # above the dense-ground-state cutoff
        psi = ground_state(h)
        e = expectation(h, psi)
        from scipy.sparse.linalg import eigsh
        from nlspec.pauli import to_sparse

        ref = eigsh(to_sparse(h), k=1, which="SA", return_eigenvectors=False)[0]
        assert e == pytest.approx(float(ref), abs=1e-8)


class TestModelSpec:
    def test_requires_parameters(self):
        with pytest.raises(ValueError, match="delta"):
            ModelSpec("xxz", {"n_sites": 4, "h_field": 0.0})

    def test_dispatch(self):
        spec = ModelSpec("tls_dimer", {"omega_0": 0.5, "omega_1": 1.0, "j_exchange": 0.8})
        h = build_model(spec)
        assert h.n_sites == 2

    def test_hermitian_hamiltonians_have_real_expectations(self):
        rng = np.random.default_rng(0)
        for spec in (
            ModelSpec("xxz", {"n_sites": 3, "delta": 1.3, "h_field": 0.2}),
            ModelSpec("tls_dimer", {"omega_0": 0.5, "omega_1": 1.0, "j_exchange": 0.8}),
            ModelSpec(
                "spin_boson",
                {"omega_0": 2.64, "omega_1": 3.2, "omega_mode": 0.04, "g_coupling": 0.05},
            ),
        ):
            h = build_model(spec)
            amps = rng.normal(size=2**h.n_sites) + 1j * rng.normal(size=2**h.n_sites)
            amps /= np.linalg.norm(amps)
            expectation(h, amps)  # raises if the imaginary part survives
