import itertools
from collections import Counter

import numpy as np
import pytest

from lindnet.ed_oracle import standard_observables, steady_state
from lindnet.lindblad import build_decay, build_ising1d, dense_accessor
from lindnet.mcmc import (ChainStuckError, MoveSet, NonLocalObservableError, PairChainState, batch_stderr,
                          diag_chain_step, estimate_observable, estimate_sr, pair_chain_step)
from lindnet.network import NetworkTopology, feedforward
from lindnet.qcore import PauliString, config_to_index, expectation, plus_state, random_density_matrix
from lindnet.sr_solver import assemble_exact

CONFIGS_2 = list(itertools.product((1, -1), repeat=2))


def run_pair_chain(rho, steps, rng, bonds=((0, 1),)):
    elem = dense_accessor(rho)
    st = PairChainState.start(elem, (1, 1), (1, 1))
    path = []
    for _ in range(steps):
        st = pair_chain_step(st, elem, MoveSet(), rng, bonds)
        path.append(config_to_index(st.l) * 4 + config_to_index(st.r))
    return np.array(path)


def run_diag_chain(rho, n, steps, rng, bonds=()):
    elem = dense_accessor(rho)
    st = (1,) * n
    path = []
    for _ in range(steps):
        st = diag_chain_step(st, elem, MoveSet(), rng, bonds)
        path.append(config_to_index(st))
    return np.array(path)


def assert_stationary(path, target, n_sigma=5.0):
    onehot = (path[:, None] == np.arange(len(target))[None, :]).astype(float)
    freq = onehot.mean(axis=0)
    err = batch_stderr(onehot, 64)
    assert np.all(np.abs(freq - target) <= n_sigma * err + 1e-12), (freq, target, err)


def assert_detailed_balance(path, n_sigma=5.0):
    counts = Counter(zip(path[:-1], path[1:]))
    for (a, b), n_ab in counts.items():
        if a < b:
            n_ba = counts.get((b, a), 0)
            assert abs(n_ab - n_ba) <= n_sigma * np.sqrt(n_ab + n_ba) + 1


class TestMoveSet:
    def test_defaults(self):
        np.testing.assert_allclose(MoveSet().probabilities("pair", True), np.array([30, 30, 30, 1, 1]) / 92)
        np.testing.assert_allclose(MoveSet().probabilities("diag", True), np.array([30, 30, 1, 1]) / 62)

    def test_no_bonds_disables_pair_flips(self):
        p = MoveSet().probabilities("pair", False)
        assert p[2] == 0 and p.sum() == pytest.approx(1)

    @pytest.mark.parametrize("weights", [(0, 0, 0, 0, 0), (1, -1, 0, 0, 0)])
    def test_invalid(self, weights):
        with pytest.raises(ValueError):
            MoveSet(pair=weights)


class TestPairChain:
    def test_flat_amplitudes_always_accept(self, rng):
        rho = plus_state(3)
        elem = dense_accessor(rho)
        st = PairChainState.start(elem, (1, 1, 1), (1, 1, 1))
        for _ in range(500):
            new = pair_chain_step(st, elem, MoveSet(), rng, ((0, 1), (1, 2)))
            assert new is not st
            st = new

    def test_zero_amplitude_rejected(self, rng):
        rho = np.zeros((4, 4), dtype=complex)
        rho[0, 0] = 1
        elem = dense_accessor(rho)
        st = PairChainState.start(elem, (1, 1), (1, 1))
        for _ in range(200):
            assert pair_chain_step(st, elem, MoveSet(), rng, ((0, 1),)) is st

    def test_start_needs_nonzero(self):
        with pytest.raises(ValueError):
            PairChainState.start(dense_accessor(np.diag([1, 0]).astype(complex)), (-1,), (-1,))

    def test_stationary_distribution(self, rng):
        rho = random_density_matrix(2, rng)
        target = np.abs(rho.reshape(-1)) ** 2
        target /= target.sum()
        path = run_pair_chain(rho, 200_000, rng)
        assert_stationary(path, target)

    def test_detailed_balance(self, rng):
        assert_detailed_balance(run_pair_chain(random_density_matrix(2, rng), 100_000, rng))


class TestDiagChain:
    def test_maximally_mixed_accepts_all(self, rng):
        elem = dense_accessor(np.eye(8, dtype=complex) / 8)
        st = (1, 1, 1)
        for _ in range(300):
            new = diag_chain_step(st, elem, MoveSet(diag=(1, 0, 0, 0)), rng)
            assert new != st
            st = new

    def test_pinned_state(self, rng):
        rho = np.zeros((8, 8), dtype=complex)
        rho[0, 0] = 1
        path = run_diag_chain(rho, 3, 500, rng, bonds=((0, 1),))
        assert np.all(path == 0)

    def test_stationary_distribution(self, rng):
        rho = random_density_matrix(3, rng)
        path = run_diag_chain(rho, 3, 200_000, rng, bonds=((0, 1), (1, 2), (2, 0)))
        assert_stationary(path, np.diag(rho).real)

    def test_detailed_balance(self, rng):
        rho = random_density_matrix(2, rng)
        assert_detailed_balance(run_diag_chain(rho, 2, 100_000, rng, bonds=((0, 1),)))


class TestEstimateObservable:
    def test_plus_state_sigma_x_exact(self, rng):
        mean, err = estimate_observable(dense_accessor(plus_state(1)), PauliString("X"), 1000, 10, rng)
        assert mean == pytest.approx(1.0, abs=1e-14) and err == pytest.approx(0.0, abs=1e-14)

    def test_mixed_state_unbiased(self, rng):
        mean, err = estimate_observable(dense_accessor(np.eye(2, dtype=complex) / 2), PauliString("Z"), 10_000,
                                        None, rng)
        assert abs(mean) <= 5 * err

    def test_ising_steady_state(self, rng):
        m = build_ising1d(3, h=0.6)
        rho = steady_state(m)
        obs = standard_observables(3)
        for name in ("sz_mean", "sx_mean", "sxsx_01"):
            exact = sum(expectation(rho, t) for t in obs[name])
            mean, err = estimate_observable(dense_accessor(rho), obs[name], 20_000, None, rng,
                                            bonds=m.bonds)
            assert abs(mean - exact) <= 5 * err, name

    def test_non_local_rejected(self, rng):
        with pytest.raises(NonLocalObservableError):
            estimate_observable(dense_accessor(plus_state(3)), PauliString("XXX"), 100, 0, rng)

    def test_seeded(self):
        rho = random_density_matrix(2, np.random.default_rng(0))
        a = estimate_observable(dense_accessor(rho), PauliString("XZ"), 2000, 5, np.random.default_rng(9))
        b = estimate_observable(dense_accessor(rho), PauliString("XZ"), 2000, 5, np.random.default_rng(9))
        assert a == b


class TestEstimateSr:
    TOPO = NetworkTopology((2, 1))
    MODEL = build_decay(1.0, 0.7)

    def theta(self):
        return np.random.default_rng(5).uniform(-1, 1, self.TOPO.n_params)

    def test_matches_exact(self, rng):
        theta = self.theta()
        est = estimate_sr(self.MODEL, self.TOPO, theta, 20_000, None, rng)
        exact = assemble_exact(self.MODEL, self.TOPO, theta)
        assert np.all(np.abs(est.S - exact.S) <= 5 * est.S_stderr + 1e-12)
        assert np.all(np.abs(est.f - exact.f) <= 5 * est.f_stderr + 1e-12)
        np.testing.assert_allclose(est.info["rho"], feedforward(self.TOPO, theta), atol=1e-14)

    def test_stderr_scaling(self):
        theta = self.theta()
        ratios = []
        for seed in range(4):
            small = estimate_sr(self.MODEL, self.TOPO, theta, 4000, None, np.random.default_rng(seed))
            large = estimate_sr(self.MODEL, self.TOPO, theta, 8000, None, np.random.default_rng(100 + seed))
            mask = small.f_stderr > 1e-10
            ratios.append(np.median(large.f_stderr[mask] / small.f_stderr[mask]))
        assert np.mean(ratios) == pytest.approx(2**-0.5, rel=0.2)

    def test_zero_derivative_parameter(self, rng):
        theta = np.zeros(self.TOPO.n_params)
        est = estimate_sr(self.MODEL, self.TOPO, theta, 2000, None, rng)
        # third angle of the first input rotation commutes with the |+> input and the CNOT controls
        assert abs(est.f[2]) < 1e-12
        assert np.abs(est.S[2]).max() < 1e-12

    def test_scale_invariant(self):
        from lindnet.lindblad import local_estimator
        rng = np.random.default_rng(1)
        rho = random_density_matrix(2, rng)
        m = build_ising1d(2, h=0.4)
        for l, r in itertools.product(CONFIGS_2, repeat=2):
            a = local_estimator(m, dense_accessor(rho), l, r)
            b = local_estimator(m, dense_accessor(3.7 * rho), l, r)
            assert a == pytest.approx(b, rel=1e-12)

    def test_seeded(self):
        theta = self.theta()
        a = estimate_sr(self.MODEL, self.TOPO, theta, 500, 2, np.random.default_rng(4))
        b = estimate_sr(self.MODEL, self.TOPO, theta, 500, 2, np.random.default_rng(4))
        np.testing.assert_array_equal(a.S, b.S)
        np.testing.assert_array_equal(a.f, b.f)

    def test_stuck_chain_surfaces(self, rng, monkeypatch):
        # a pure computational basis state has a single nonzero element: every move is rejected
        import lindnet.mcmc as mcmc
        pure = np.zeros((2, 2), dtype=complex)
        pure[0, 0] = 1
        monkeypatch.setattr(mcmc, "all_derivatives", lambda topo, theta: (pure, np.zeros((36, 2, 2), complex)))
        with pytest.raises(ChainStuckError):
            estimate_sr(self.MODEL, self.TOPO, np.zeros(36), 1000, None, rng)


def test_batch_stderr_iid(rng):
    x = rng.normal(size=160_000)
    assert batch_stderr(x) == pytest.approx(1 / 400, rel=0.5)
