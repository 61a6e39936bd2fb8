"""Finite-dimensional generator structure: CP tests, expansion, gauge freedom."""

import numpy as np
import pytest

from levylab import rng
from levylab.generators import (
    DensityMatrix,
    GaugeElement,
    StandardGenerator,
    apply_gauge,
    apply_generator,
    apply_preadjoint,
    check_duality,
    choi_matrix,
    covariance_defect,
    cp_part_superop,
    dyson_evolve,
    dyson_terms,
    exact_evolve,
    gauge_group_law_check,
    gauge_product,
    hermitian_basis,
    is_completely_positive,
    is_conditionally_cp,
    random_standard_generator,
    unvec,
    vec,
)

SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def damped_qubit(gamma=1.0, drive=0.5, detuning=0.25) -> StandardGenerator:
    H = 0.5 * drive * SIGMA_X + 0.5 * detuning * SIGMA_Z
    return StandardGenerator.unital_build(H, [np.sqrt(gamma) * SIGMA_MINUS])


def random_gauge(m: int, seed: int) -> GaugeElement:
    gen = rng.stream(seed, 99)
    A = gen.standard_normal((m, m)) + 1j * gen.standard_normal((m, m))
    Q, _ = np.linalg.qr(A)
    a = gen.standard_normal(m) + 1j * gen.standard_normal(m)
    return GaugeElement(D=tuple(map(tuple, Q)), a=tuple(a), b=float(gen.standard_normal()))


class TestApplyGenerator:
    def test_unital_annihilates_identity(self):
        g = damped_qubit()
        assert np.abs(apply_generator(g, np.eye(2))).max() < 1e-12

    def test_pure_hamiltonian_is_commutator(self):
        H = np.array([[0.3, 0.1 - 0.2j], [0.1 + 0.2j, -0.5]])
        g = StandardGenerator.unital_build(H, [])
        X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
        assert np.abs(apply_generator(g, X) - 1j * (H @ X - X @ H)).max() < 1e-14

    def test_single_jump_against_brute_force(self):
        # direct 2x2 arithmetic oracle, written out independently
        L = SIGMA_MINUS
        K = 0.5 * (L.conj().T @ L)
        g = StandardGenerator.raw_build(K, [L])
        X = SIGMA_Z
        oracle = L.conj().T @ X @ L - K.conj().T @ X - X @ K
        assert np.abs(apply_generator(g, X) - oracle).max() < 1e-14

    def test_dimension_mismatch(self):
        g = damped_qubit()
        with pytest.raises(ValueError, match="dimension mismatch"):
            apply_generator(g, np.eye(3))

    def test_dissipativity_enforced_in_raw_build(self):
        with pytest.raises(ValueError, match="dissipativity"):
            StandardGenerator.raw_build(np.zeros((2, 2)), [SIGMA_MINUS])

    def test_unital_flag_detection(self):
        L = SIGMA_MINUS
        exact = StandardGenerator.raw_build(0.5 * L.conj().T @ L, [L])
        slack = StandardGenerator.raw_build(0.5 * L.conj().T @ L + 0.2 * np.eye(2), [L])
        assert exact.unital and not slack.unital


class TestChoi:
    def test_identity_map(self):
        c = choi_matrix(lambda X: X, 2)
        eigs = np.sort(np.linalg.eigvalsh(c.matrix))
        assert np.allclose(eigs, [0.0, 0.0, 0.0, 2.0], atol=1e-12)

    def test_transpose_map(self):
        c = choi_matrix(lambda X: X.T, 2)
        eigs = np.sort(np.linalg.eigvalsh(c.matrix))
        assert np.allclose(eigs, [-1.0, 1.0, 1.0, 1.0], atol=1e-12)

    def test_zero_map(self):
        c = choi_matrix(lambda X: np.zeros_like(X), 3)
        assert not c.matrix.any()

    def test_nonlinear_map_rejected(self):
        with pytest.raises(ValueError, match="not linear"):
            choi_matrix(lambda X: X @ X, 2)

    def test_kraus_map_is_cp(self):
        gen = rng.stream(12, 0)
        ops = [gen.standard_normal((3, 3)) + 1j * gen.standard_normal((3, 3)) for _ in range(2)]
        fn = lambda X: sum(L.conj().T @ X @ L for L in ops)
        ok, min_eig = is_completely_positive(fn, 3)
        assert ok and min_eig > -1e-12

    def test_unitary_conjugation_is_cp(self):
        U = np.array([[0, 1], [1, 0]], dtype=complex)
        ok, _ = is_completely_positive(lambda X: U.conj().T @ X @ U, 2)
        assert ok

    def test_transpose_not_cp_with_witness(self):
        ok, witness = is_completely_positive(lambda X: X.T, 2)
        assert not ok and witness == pytest.approx(-1.0, abs=1e-10)


class TestConditionalCP:
    def test_standard_generators_pass(self):
        for i in range(5):
            g = random_standard_generator(3, 2, seed=100 + i)
            assert is_conditionally_cp(g)

    def test_hamiltonian_only_passes(self):
        g = StandardGenerator.unital_build(SIGMA_Z, [])
        assert is_conditionally_cp(g)

    def test_transpose_fails(self):
        assert not is_conditionally_cp(lambda X: X.T, d=2)


class TestEvolution:
    def test_time_zero_identity(self):
        g = damped_qubit()
        assert np.abs(exact_evolve(g, 0.0) - np.eye(4)).max() < 1e-14

    def test_unital_preserves_identity(self):
        g = damped_qubit()
        E = exact_evolve(g, 2.0)
        assert np.abs(unvec(E @ vec(np.eye(2))) - np.eye(2)).max() < 1e-10

    def test_semigroup_law(self):
        g = damped_qubit()
        E = exact_evolve
        assert np.abs(E(g, 0.7) @ E(g, 0.5) - E(g, 1.2)).max() < 1e-9

    def test_nonunital_contracts_identity(self):
        g = random_standard_generator(3, 2, seed=7, unital=False)
        rho = np.eye(3) / 3.0
        values = []
        for t in (0.0, 0.3, 1.0, 3.0):
            Et = exact_evolve(g, t)
            values.append(np.trace(rho @ unvec(Et @ vec(np.eye(3)))).real)
        assert all(a >= b - 1e-10 for a, b in zip(values, values[1:]))


class TestDyson:
    def test_zero_terms_is_relaxing_semigroup(self):
        g = damped_qubit()
        term0 = dyson_evolve(g, 1.3, 0)
        E = np.asarray(exact_evolve_relax(g, 1.3))
        assert np.abs(term0 - E).max() < 1e-12

    def test_time_zero_identity(self):
        g = damped_qubit()
        assert np.abs(dyson_evolve(g, 0.0, 5) - np.eye(4)).max() < 1e-12

    def test_twelve_terms_hit_exact(self):
        g = damped_qubit()
        err = np.abs(dyson_evolve(g, 1.0, 12) - exact_evolve(g, 1.0)).max()
        assert err < 1e-6

    def test_terms_are_cp(self):
        g = damped_qubit()
        for term in dyson_terms(g, 1.0, 6):
            c = choi_matrix(lambda X: unvec(term @ vec(X)), 2)
            assert c.min_eigenvalue() > -1e-10

    def test_factorial_decay_of_term_ratios(self):
        g = damped_qubit()
        terms = dyson_terms(g, 1.0, 10)
        norms = [np.linalg.norm(T, 2) for T in terms]
        phi_norm = np.linalg.norm(cp_part_superop(g), 2)
        for n in range(len(norms) - 1):
            if norms[n] < 1e-14:
                continue
            assert norms[n + 1] / norms[n] <= phi_norm * 1.0 / (n + 1) * 1.1

    def test_quadrature_cross_check(self):
        g = damped_qubit()
        exact = dyson_terms(g, 0.8, 3, method="exact")
        quad = dyson_terms(g, 0.8, 3, method="quadrature")
        worst = max(np.abs(a - b).max() for a, b in zip(exact, quad))
        assert worst < 1e-10

    def test_negative_terms_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            dyson_evolve(damped_qubit(), 1.0, -1)


def exact_evolve_relax(g: StandardGenerator, t: float) -> np.ndarray:
    from scipy.linalg import expm

    E = expm(-g.K * t)
    return np.kron(E.T, E.conj().T)


class TestDuality:
    def test_maximally_mixed_state(self):
        g = damped_qubit()
        X = np.array([[0.2, 1 + 1j], [1 - 1j, -0.4]])
        assert check_duality(g, np.eye(2) / 2, X, t=0.0) < 1e-12

    def test_identity_observable_unital(self):
        g = damped_qubit()
        rho = DensityMatrix(np.diag([0.7, 0.3])).matrix
        assert abs(np.trace(apply_preadjoint(g, rho))) < 1e-12

    @pytest.mark.parametrize("d", [2, 3, 4, 5])
    def test_random_instances_up_to_d5(self, d):
        gen = rng.stream(17, d)
        for i in range(3):
            g = random_standard_generator(d, 2, seed=50 + 10 * d + i, unital=bool(i % 2))
            rho = gen.standard_normal((d, d)) + 1j * gen.standard_normal((d, d))
            rho = rho @ rho.conj().T
            rho /= np.trace(rho)
            X = gen.standard_normal((d, d)) + 1j * gen.standard_normal((d, d))
            assert check_duality(g, rho, X, t=0.4) < 1e-10


class TestGauge:
    def test_identity_element_is_neutral(self):
        g = damped_qubit()
        out = apply_gauge(g, GaugeElement.identity(1))
        assert np.abs(out.K - g.K).max() < 1e-14
        assert np.abs(out.jump_ops[0] - g.jump_ops[0]).max() < 1e-14

    def test_action_invariance(self):
        for i in range(5):
            g = random_standard_generator(2, 3, seed=300 + i)
            elem = random_gauge(3, 400 + i)
            transformed = apply_gauge(g, elem)
            for X in hermitian_basis(2):
                assert np.abs(
                    apply_generator(transformed, X) - apply_generator(g, X)
                ).max() < 1e-10

    def test_unitality_preserved(self):
        g = damped_qubit()
        out = apply_gauge(g, random_gauge(1, 5))
        assert out.unital

    def test_phase_only_element_shifts_k(self):
        g = damped_qubit()
        out = apply_gauge(g, GaugeElement(D=((1.0,),), a=(0.0,), b=1.3))
        assert np.abs(out.K - (g.K - 1.3j * np.eye(2))).max() < 1e-14
        for X in hermitian_basis(2):
            assert np.abs(apply_generator(out, X) - apply_generator(g, X)).max() < 1e-12

    def test_group_law_product(self):
        g1 = random_gauge(3, 1)
        g2 = random_gauge(3, 2)
        gen = random_standard_generator(2, 3, seed=42)
        assert gauge_group_law_check(g1, g2, gen) < 1e-10

    def test_identity_is_right_neutral(self):
        g1 = random_gauge(2, 11)
        prod = gauge_product(g1, GaugeElement.identity(2))
        assert np.abs(prod.D_matrix - g1.D_matrix).max() < 1e-14
        assert np.abs(prod.a_vector - g1.a_vector).max() < 1e-14
        assert prod.b == pytest.approx(g1.b, abs=1e-14)

    def test_translation_pair_picks_up_phase(self):
        a1 = np.array([1.0 + 0.5j, -0.3j])
        a2 = np.array([0.2 - 1.0j, 0.7])
        g1 = GaugeElement(D=tuple(map(tuple, np.eye(2))), a=tuple(a1), b=0.0)
        g2 = GaugeElement(D=tuple(map(tuple, np.eye(2))), a=tuple(a2), b=0.0)
        prod = gauge_product(g1, g2)
        assert prod.b == pytest.approx(-np.imag(np.vdot(a1, a2)), abs=1e-14)

    def test_multiplicity_mismatch_rejected(self):
        with pytest.raises(ValueError, match="m=2"):
            apply_gauge(damped_qubit(), GaugeElement.identity(2))


class TestCovariance:
    def test_identity_conjugation(self):
        g = damped_qubit()
        E = exact_evolve(g, 1.0)
        fn = lambda X: unvec(E @ vec(X))
        assert covariance_defect(fn, np.eye(2), hermitian_basis(2)) == 0.0

    def test_commuting_generator_is_covariant(self):
        V = np.diag(np.exp(1j * np.array([0.3, -1.1])))
        g = StandardGenerator.unital_build(SIGMA_Z, [np.diag([0.5, -0.2]).astype(complex)])
        E = exact_evolve(g, 1.0)
        fn = lambda X: unvec(E @ vec(X))
        assert covariance_defect(fn, V, hermitian_basis(2)) < 1e-10

    def test_generic_generator_breaks_covariance(self):
        V = np.diag(np.exp(1j * np.array([0.3, -1.1])))
        g = damped_qubit()
        E = exact_evolve(g, 1.0)
        fn = lambda X: unvec(E @ vec(X))
        assert covariance_defect(fn, V, hermitian_basis(2)) > 0.01


class TestMatrixIO:
    def test_round_trip(self):
        from levylab.generators import matrix_from_json, matrix_to_json

        m = np.array([[1.0 + 2.0j, -0.5], [0.0, 3.0j]])
        assert np.array_equal(matrix_from_json(matrix_to_json(m)), m)

    def test_superop_snapshot(self, tmp_path):
        from levylab.generators import load_superop_snapshot, save_superop_snapshot

        g = damped_qubit()
        mat = exact_evolve(g, 0.9)
        path = tmp_path / "snap.json"
        save_superop_snapshot(path, mat, {"t": 0.9})
        back, meta = load_superop_snapshot(path)
        assert np.array_equal(back, mat) and meta["t"] == 0.9


class TestDensityMatrix:
    def test_valid(self):
        DensityMatrix(np.diag([0.5, 0.5]))

    def test_trace_enforced(self):
        with pytest.raises(ValueError, match="unit trace"):
            DensityMatrix(np.diag([0.5, 0.6]))

    def test_positivity_enforced(self):
        with pytest.raises(ValueError, match="PSD"):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_hermiticity_enforced(self):
        with pytest.raises(ValueError, match="Hermitian"):
            DensityMatrix(np.array([[0.5, 1.0], [0.0, 0.5]]))
