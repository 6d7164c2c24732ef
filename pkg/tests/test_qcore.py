import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindnet.qcore import (SM, SP, X, Y, Z, DimensionError, PauliString, config_to_index, embed, expectation,
                           hs_inner, index_to_config, is_density_matrix, kron_all, partial_trace, pauli_matrix,
                           plus_state, random_density_matrix, tensor_product)

letters = st.text(alphabet="IXYZ", min_size=1, max_size=3)


class TestTensorProduct:
    def test_identities(self):
        np.testing.assert_array_equal(tensor_product(np.eye(2), np.eye(2)), np.eye(4))

    def test_left_factor_owns_high_bits(self):
        np.testing.assert_array_equal(tensor_product(Z, np.eye(2)), np.diag([1, 1, -1, -1]))

    def test_double_flip(self):
        e0 = np.zeros(4)
        e0[0] = 1
        assert np.argmax(np.abs(tensor_product(X, X) @ e0)) == 3


class TestPartialTrace:
    def test_product_state(self):
        ket = np.zeros(4)
        ket[0] = 1
        np.testing.assert_allclose(partial_trace(np.outer(ket, ket), {0}), np.diag([1, 0]))

    def test_bell_state(self):
        bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
        np.testing.assert_allclose(partial_trace(np.outer(bell, bell), {0}), np.eye(2) / 2)

    def test_recovers_factor(self, rng):
        a = random_density_matrix(2, rng)
        b = random_density_matrix(1, rng)
        np.testing.assert_allclose(partial_trace(np.kron(a, b), {2}), a, atol=1e-14)
        np.testing.assert_allclose(partial_trace(np.kron(a, b), {0, 1}), b, atol=1e-14)

    def test_keeps_relative_order(self, rng):
        a, b, c = (random_density_matrix(1, rng) for _ in range(3))
        np.testing.assert_allclose(partial_trace(kron_all([a, b, c]), {1}), np.kron(a, c), atol=1e-14)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            partial_trace(np.eye(4) / 4, {2})

    def test_trace_and_positivity_preserved(self, rng):
        for _ in range(100):
            rho = random_density_matrix(3, rng)
            traced = set(rng.choice(3, size=rng.integers(1, 3), replace=False).tolist())
            out = partial_trace(rho, traced)
            assert abs(np.trace(out) - 1) < 1e-12
            assert np.linalg.eigvalsh(out).min() > -1e-12


class TestPauli:
    @pytest.mark.parametrize("ps, expected", [
        (PauliString("X"), [[0, 1], [1, 0]]),
        (PauliString("ZZ"), np.diag([1, -1, -1, 1])),
        (PauliString("Y", 1j), [[0, 1], [-1, 0]]),
    ])
    def test_matrices(self, ps, expected):
        np.testing.assert_allclose(pauli_matrix(ps), expected)

    def test_invalid_letter(self):
        with pytest.raises(ValueError):
            PauliString("XA")

    def test_from_sites(self):
        assert PauliString.from_sites(4, {0: "Z", 2: "Z"}).letters == "ZIZI"

    @given(letters, letters)
    @settings(max_examples=60, deadline=None)
    def test_product_matches_matrix_product(self, a, b):
        n = min(len(a), len(b))
        pa, pb = PauliString(a[:n], 0.5), PauliString(b[:n], -2j)
        np.testing.assert_allclose(pauli_matrix(pa @ pb), pauli_matrix(pa) @ pauli_matrix(pb), atol=1e-14)

    @given(letters)
    @settings(max_examples=40, deadline=None)
    def test_elementwise_access(self, word):
        ps = PauliString(word, 0.7)
        dense = pauli_matrix(ps)
        d = dense.shape[0]
        elems = np.array([[ps.element(r, c) for c in range(d)] for r in range(d)])
        np.testing.assert_allclose(elems, dense)

    def test_ladder_operators(self):
        np.testing.assert_allclose(SM, (X - 1j * Y) / 2)
        np.testing.assert_allclose(SP @ SM, (np.eye(2) + Z) / 2)


class TestExpectation:
    @pytest.mark.parametrize("rho, obs, value", [
        (np.diag([1.0, 0.0]), "Z", 1.0),
        (np.eye(2) / 2, "X", 0.0),
        (np.full((2, 2), 0.5), "X", 1.0),
    ])
    def test_single_qubit(self, rho, obs, value):
        assert expectation(rho.astype(complex), PauliString(obs)) == pytest.approx(value, abs=1e-15)

    def test_matches_dense_trace(self, rng):
        rho = random_density_matrix(3, rng)
        for word in ("XYZ", "IZX", "YYI"):
            ps = PauliString(word, 0.3)
            assert expectation(rho, ps) == pytest.approx(np.trace(rho @ pauli_matrix(ps)).real, abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            expectation(np.eye(4) / 4, PauliString("X"))

    def test_non_hermitian_flagged(self):
        with pytest.raises(ValueError, match="imaginary"):
            expectation(np.array([[0.5, 1.0], [0.0, 0.5]], dtype=complex), PauliString("Y"))


class TestInnerProduct:
    def test_pure_state_purity(self):
        assert hs_inner(plus_state(2), plus_state(2)) == pytest.approx(1)

    def test_maximally_mixed(self):
        assert hs_inner(np.eye(2) / 2, np.eye(2) / 2) == pytest.approx(0.5)

    def test_orthogonal_paulis(self):
        assert hs_inner(X, Z) == 0

    def test_self_product_nonnegative(self, rng):
        for _ in range(20):
            a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            v = hs_inner(a, a)
            assert abs(v.imag) < 1e-14 and v.real >= 0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            hs_inner(np.eye(2), np.eye(4))


class TestConfigIndex:
    @pytest.mark.parametrize("spins, index", [((1, 1), 0), ((-1, -1), 3), ((1, -1), 1)])
    def test_examples(self, spins, index):
        assert config_to_index(spins) == index

    @pytest.mark.parametrize("n", range(1, 7))
    def test_round_trip(self, n):
        assert all(config_to_index(index_to_config(i, n)) == i for i in range(1 << n))

    def test_rejects_bad_spin(self):
        with pytest.raises(ValueError):
            config_to_index((1, 0))


def test_embed_matches_kron():
    np.testing.assert_allclose(embed(X, [1], 3), kron_all([np.eye(2), X, np.eye(2)]))
    cnot = np.eye(4)[[0, 1, 3, 2]]
    # control on qubit 2, target on qubit 0
    full = embed(cnot, [2, 0], 3)
    for i in range(8):
        b = [(i >> 2) & 1, (i >> 1) & 1, i & 1]
        j = ((b[0] ^ b[2]) << 2) | (b[1] << 1) | b[2]
        assert full[j, i] == 1


def test_density_matrix_check(rng):
    assert is_density_matrix(random_density_matrix(2, rng))
    assert not is_density_matrix(np.diag([1.0, 1.0]).astype(complex))
    assert not is_density_matrix(np.diag([1.5, -0.5]).astype(complex))
