import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindnet.network import (N_ANGLES, NetworkTopology, TopologyError, all_derivatives, euler_rotation, feedforward,
                             layer_map, parameter_shift_derivative, perceptron_unitary, shift_states)
from lindnet.qcore import PLUS, X, Z, embed, expectation, PauliString, is_density_matrix, kron_all, random_density_matrix

CNOT_PAIR = np.eye(8)[[0, 1, 3, 2, 5, 4, 6, 7]]
PLUS_DM = PLUS

# Euler triples acting on the inputs; zeroing them makes perceptrons commute
INPUT_TRIPLES = [0, 1, 3, 4, 6, 7, 9, 10]


def random_theta(topo, rng, scale=np.pi):
    return rng.uniform(-scale, scale, topo.n_params)


def five_point(f, x, idx, h=1e-5):
    def at(delta):
        y = x.copy()
        y[idx] += delta
        return f(y)
    return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)


class TestTopology:
    @pytest.mark.parametrize("sizes, connectivity, counts", [
        ((2, 2, 3, 3, 5), "local_modulo", (2, 3, 3, 5)),
        ((2, 2, 3, 3, 5), "full", (2, 3, 9, 15)),
        ((4, 4, 4), "full", (24, 24)),
    ])
    def test_perceptron_counts(self, sizes, connectivity, counts):
        topo = NetworkTopology(sizes, connectivity)
        assert topo.perceptron_counts == counts
        if connectivity == "full":
            assert topo.n_perceptrons == topo.full_perceptron_count()

    def test_local_modulo_wiring(self):
        topo = NetworkTopology((2, 3))
        assert topo.wiring[0] == ((0, 1, 0), (1, 0, 1), (0, 1, 2))

    @pytest.mark.parametrize("tying, n", [("tied_per_layer", 4 * 36), ("untied", 13 * 36)])
    def test_param_count(self, tying, n):
        assert NetworkTopology((2, 2, 3, 3, 5), tying=tying).n_params == n

    def test_tied_occurrences(self):
        topo = NetworkTopology((2, 2, 3))
        assert topo.occurrences(36 + 5) == [(1, 0, 5), (1, 1, 5), (1, 2, 5)]
        with pytest.raises(IndexError):
            topo.occurrences(topo.n_params)

    def test_untied_index_round_trip(self):
        topo = NetworkTopology((2, 2, 3), tying="untied")
        for idx in range(topo.n_params):
            [(t, k, s)] = topo.occurrences(idx)
            assert topo.param_index(t, k, s) == idx

    @pytest.mark.parametrize("sizes", [(3,), (2, 0), (1, 2)])
    def test_rejects_bad_sizes(self, sizes):
        with pytest.raises(TopologyError):
            NetworkTopology(sizes)

    def test_rejects_bad_enum(self):
        with pytest.raises(ValueError):
            NetworkTopology((2, 1), connectivity="ring")

    def test_wrong_parameter_count(self):
        with pytest.raises(TopologyError):
            feedforward(NetworkTopology((2, 1)), np.zeros(35))


class TestPerceptron:
    def test_euler_rotation_matches_expm(self, rng):
        from scipy.linalg import expm
        t = rng.normal(size=3)
        ref = expm(0.5j * t[0] * Z) @ expm(0.5j * t[1] * X) @ expm(0.5j * t[2] * Z)
        np.testing.assert_allclose(euler_rotation(*t), ref, atol=1e-14)

    def test_zero_angles_is_cnot_pair(self):
        np.testing.assert_allclose(perceptron_unitary(np.zeros(N_ANGLES)), CNOT_PAIR, atol=1e-15)

    def test_zero_angles_on_110(self):
        ket = np.zeros(8)
        ket[0b110] = 1
        np.testing.assert_allclose(perceptron_unitary(np.zeros(N_ANGLES)) @ ket, ket)

    def test_unitary(self, rng):
        for _ in range(20):
            u = perceptron_unitary(rng.uniform(-np.pi, np.pi, N_ANGLES))
            np.testing.assert_allclose(u @ u.conj().T, np.eye(8), atol=1e-12)

    def test_matches_explicit_gate_sequence(self, rng):
        angles = rng.uniform(-np.pi, np.pi, N_ANGLES)
        rots = [euler_rotation(*angles[3 * i:3 * i + 3]) for i in range(12)]
        u = kron_all(rots[0:3])
        for block in range(3):
            u = CNOT_PAIR @ u
            u = kron_all(rots[3 + 3 * block:6 + 3 * block]) @ u
        np.testing.assert_allclose(perceptron_unitary(angles), u, atol=1e-13)

    def test_wrong_angle_count(self):
        with pytest.raises(ValueError):
            perceptron_unitary(np.zeros(12))


class TestLayerMap:
    def test_zero_angles_give_plus_states(self, rng):
        u = perceptron_unitary(np.zeros(N_ANGLES))
        rho_in = random_density_matrix(2, rng)
        out = layer_map(rho_in, [u, u, u], [(0, 1, 0), (1, 0, 1), (0, 1, 2)], 3)
        np.testing.assert_allclose(out, kron_all([PLUS_DM] * 3), atol=1e-14)

    def test_final_x_rotation_fixes_plus(self):
        angles = np.zeros(N_ANGLES)
        angles[33:36] = (0, np.pi, 0)
        rho_in = np.zeros((4, 4), dtype=complex)
        rho_in[0, 0] = 1
        out = layer_map(rho_in, [perceptron_unitary(angles)], [(0, 1, 0)], 1)
        np.testing.assert_allclose(out, PLUS_DM, atol=1e-14)

    def test_random_output_valid(self, rng):
        for _ in range(10):
            us = [perceptron_unitary(rng.uniform(-np.pi, np.pi, N_ANGLES)) for _ in range(3)]
            out = layer_map(random_density_matrix(3, rng), us, [(0, 1, 0), (1, 2, 1), (2, 0, 2)], 3)
            assert is_density_matrix(out)

    def test_bad_wiring(self):
        u = perceptron_unitary(np.zeros(N_ANGLES))
        with pytest.raises(TopologyError):
            layer_map(np.eye(4) / 4, [u], [(0, 2, 0)], 1)
        with pytest.raises(TopologyError):
            layer_map(np.eye(4) / 4, [u], [(0, 0, 0)], 1)


class TestFeedforward:
    @pytest.mark.parametrize("sizes", [(2, 1), (2, 2, 3, 3, 5)])
    def test_zero_params(self, sizes):
        topo = NetworkTopology(sizes)
        rho = feedforward(topo, np.zeros(topo.n_params))
        np.testing.assert_allclose(rho, kron_all([PLUS_DM] * sizes[-1]), atol=1e-13)

    @pytest.mark.parametrize("sizes, tying", [((2, 2, 3), "untied"), ((2, 3, 2), "tied_per_layer"),
                                              ((3, 3, 3), "untied")])
    @pytest.mark.parametrize("connectivity", ["local_modulo", "full"])
    def test_factored_matches_dense(self, sizes, tying, connectivity, rng):
        topo = NetworkTopology(sizes, connectivity, tying)
        theta = random_theta(topo, rng)
        np.testing.assert_allclose(feedforward(topo, theta), feedforward(topo, theta, dense=True), atol=1e-12)

    def test_peak_register(self, rng):
        topo = NetworkTopology((2, 2, 3, 3, 5))
        stats = {}
        assert is_density_matrix(feedforward(topo, random_theta(topo, rng), stats=stats))
        assert stats["peak_qubits"] == 8

    def test_fresh_qubit_override(self):
        topo = NetworkTopology((2, 1))
        rho = feedforward(topo, np.zeros(topo.n_params), fresh_qubit=np.array([1, 0]))
        np.testing.assert_allclose(rho, np.diag([1, 0]), atol=1e-14)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_always_valid(self, seed):
        topo = NetworkTopology((2, 3, 3), tying="untied")
        rho = feedforward(topo, random_theta(topo, np.random.default_rng(seed), scale=10))
        assert np.abs(rho - rho.conj().T).max() < 1e-12
        assert abs(np.trace(rho) - 1) < 1e-12
        assert np.linalg.eigvalsh(rho).min() > -1e-10

    def test_cyclic_symmetry_with_controls_only_inputs(self, rng):
        topo = NetworkTopology((3, 3, 3))
        theta = random_theta(topo, rng)
        for t in range(topo.n_transitions):
            for tri in INPUT_TRIPLES:
                theta[t * N_ANGLES + 3 * tri:t * N_ANGLES + 3 * tri + 3] = 0
        rho = feedforward(topo, theta)
        zs = [expectation(rho, PauliString.from_sites(3, {j: "Z"})) for j in range(3)]
        np.testing.assert_allclose(zs, zs[0], atol=1e-10)

    def test_generic_parameters_break_cyclic_symmetry(self, rng):
        # the perceptron product is ordered, so rotated inputs see earlier perceptrons
        topo = NetworkTopology((3, 3, 3))
        rho = feedforward(topo, random_theta(topo, rng))
        zs = [expectation(rho, PauliString.from_sites(3, {j: "Z"})) for j in range(3)]
        assert np.ptp(zs) > 1e-6


class TestDerivatives:
    def test_matches_five_point_difference(self, rng):
        topo = NetworkTopology((2, 2, 3))
        theta = random_theta(topo, rng)
        _, drho = all_derivatives(topo, theta)
        for idx in range(topo.n_params):
            fd = five_point(lambda x: feedforward(topo, x), theta, idx)
            assert np.abs(drho[idx] - fd).max() < 1e-7

    @pytest.mark.parametrize("tying", ["untied", "tied_per_layer"])
    def test_batched_matches_single_parameter(self, tying, rng):
        topo = NetworkTopology((2, 3, 2), "full", tying)
        theta = random_theta(topo, rng)
        _, drho = all_derivatives(topo, theta)
        for idx in rng.choice(topo.n_params, 12, replace=False):
            np.testing.assert_allclose(drho[idx], parameter_shift_derivative(topo, theta, idx, dense=True),
                                       atol=1e-12)

    def test_traceless_and_hermitian(self, rng):
        topo = NetworkTopology((2, 2, 3, 3, 5))
        _, drho = all_derivatives(topo, random_theta(topo, rng))
        assert np.abs(np.trace(drho, axis1=1, axis2=2)).max() < 1e-12
        assert np.abs(drho - drho.conj().transpose(0, 2, 1)).max() < 1e-12

    def test_tied_is_sum_of_untied(self, rng):
        tied = NetworkTopology((2, 2, 3))
        untied = NetworkTopology((2, 2, 3), tying="untied")
        theta = random_theta(tied, rng)
        expanded = np.concatenate([a.ravel() for a in tied.perceptron_angles(theta)])
        _, d_tied = all_derivatives(tied, theta)
        _, d_untied = all_derivatives(untied, expanded)
        # second transition: 3 perceptrons share the same 36 angles
        summed = sum(d_untied[untied.param_index(1, k, 0):untied.param_index(1, k, 0) + 36] for k in range(3))
        np.testing.assert_allclose(d_tied[36:72], summed, atol=1e-12)

    def test_unreachable_parameter_has_zero_derivative(self):
        topo = NetworkTopology((2, 1))
        theta = np.zeros(topo.n_params)
        # first rotation of input qubit a: it only phases |+> and feeds controls of CNOTs on a |+> target
        d = parameter_shift_derivative(topo, theta, 2)
        np.testing.assert_allclose(d, 0, atol=1e-14)

    def test_output_rotation_x_derivative(self):
        topo = NetworkTopology((2, 1))
        theta = np.zeros(topo.n_params)
        for value in (0.0, np.pi / 2):
            theta[34] = value
            d = parameter_shift_derivative(topo, theta, 34)
            fd = five_point(lambda x: feedforward(topo, x), theta, 34, h=1e-6)
            assert abs(np.trace(X @ d) - np.trace(X @ fd)) < 1e-7

    def test_shift_states_rho_consistent(self, rng):
        topo = NetworkTopology((2, 2, 3))
        theta = random_theta(topo, rng)
        states = shift_states(topo, theta)
        np.testing.assert_allclose(states.rho, feedforward(topo, theta), atol=1e-13)
        assert states.shifted().shape == (topo.n_params, 2, 8, 8)

    def test_out_of_range_index(self):
        with pytest.raises(IndexError):
            parameter_shift_derivative(NetworkTopology((2, 1)), np.zeros(36), 36)


def test_embed_helper_consistency():
    # CNOT_PAIR as built from embedded two-qubit gates
    cnot = np.eye(4)[[0, 1, 3, 2]]
    np.testing.assert_allclose(embed(cnot, [1, 2], 3) @ embed(cnot, [0, 2], 3), CNOT_PAIR)
