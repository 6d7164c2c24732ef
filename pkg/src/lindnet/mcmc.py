"""Markov-chain estimators of observables and of the SR system.

Two chains are used. The pair chain walks over ``(l, r)`` with weight
``|rho_{l,r}|^2`` and feeds the SR estimators; the diagonal chain walks over
``l`` with weight ``rho_{l,l}`` and feeds observable estimates. Both only
query single matrix elements through an accessor ``rho_elem(l, r)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lindblad import LindbladModel, RhoElement, dense_accessor, local_estimator
from .network import NetworkTopology, all_derivatives
from .qcore import PauliString, config_to_index

N_BATCHES = 16
MIN_STUCK_WINDOW = 100

SpinConfig = tuple[int, ...]


class ChainStuckError(RuntimeError):
    """No proposal was accepted over a whole sweep; the target is likely degenerate."""


class NonLocalObservableError(ValueError):
    pass


@dataclass(frozen=True)
class MoveSet:
    """Relative proposal weights.

    Pair chain: M1 flip a site in both ``l`` and ``r``; M2 flip a site in one
    of them; M3 flip a bonded pair in one of them; M4 flip everything; M5 draw
    a fresh uniform pair. Diagonal chain: D1 single flip, D2 bonded-pair flip,
    D3 flip all, D4 fresh configuration.
    """

    pair: tuple[float, float, float, float, float] = (30.0, 30.0, 30.0, 1.0, 1.0)
    diag: tuple[float, float, float, float] = (30.0, 30.0, 1.0, 1.0)

    def __post_init__(self):
        for name, w in (("pair", self.pair), ("diag", self.diag)):
            w = np.asarray(w, dtype=float)
            if np.any(w < 0) or not np.any(w > 0):
                raise ValueError(f"{name} move weights must be >= 0 with at least one positive, got {tuple(w)}")

    def probabilities(self, chain: str, has_bonds: bool) -> np.ndarray:
        """Normalized weights; bond moves are switched off when there are no bonds."""
        w = np.array(self.pair if chain == "pair" else self.diag, dtype=float)
        bond_move = 2 if chain == "pair" else 1
        if not has_bonds:
            w[bond_move] = 0.0
        if w.sum() == 0:
            raise ValueError(f"no usable {chain} move: the only weighted move needs bonds")
        return w / w.sum()


@dataclass(frozen=True)
class PairChainState:
    l: SpinConfig
    r: SpinConfig
    amp: complex

    @classmethod
    def start(cls, rho_elem: RhoElement, l: Sequence[int], r: Sequence[int]) -> "PairChainState":
        amp = rho_elem(tuple(l), tuple(r))
        if amp == 0:
            raise ValueError("pair chain must start on a configuration with nonzero amplitude")
        return cls(tuple(l), tuple(r), amp)


def _flip(spins: SpinConfig, sites) -> SpinConfig:
    out = list(spins)
    for s in sites:
        out[s] = -out[s]
    return tuple(out)


def _random_config(n: int, rng: np.random.Generator) -> SpinConfig:
    return tuple(int(s) for s in rng.choice((1, -1), size=n))


def _propose_pair(st: PairChainState, probs: np.ndarray, bonds, rng) -> tuple[SpinConfig, SpinConfig]:
    n = len(st.l)
    move = rng.choice(5, p=probs)
    if move == 0:
        j = int(rng.integers(n))
        return _flip(st.l, (j,)), _flip(st.r, (j,))
    if move == 1:
        j = int(rng.integers(n))
        return (_flip(st.l, (j,)), st.r) if rng.random() < 0.5 else (st.l, _flip(st.r, (j,)))
    if move == 2:
        bond = bonds[int(rng.integers(len(bonds)))]
        return (_flip(st.l, bond), st.r) if rng.random() < 0.5 else (st.l, _flip(st.r, bond))
    if move == 3:
        every = range(n)
        return _flip(st.l, every), _flip(st.r, every)
    return _random_config(n, rng), _random_config(n, rng)


def pair_chain_step(st: PairChainState, rho_elem: RhoElement, moves: MoveSet, rng: np.random.Generator,
                    bonds: Sequence[tuple[int, int]] = ()) -> PairChainState:
    """One Metropolis step on ``|rho_{l,r}|^2``; returns ``st`` itself on rejection."""
    probs = moves.probabilities("pair", bool(bonds))
    l2, r2 = _propose_pair(st, probs, bonds, rng)
    amp = rho_elem(l2, r2)
    ratio = abs(amp) ** 2 / abs(st.amp) ** 2
    if ratio >= 1 or rng.random() < ratio:
        return PairChainState(l2, r2, amp)
    return st


def diag_chain_step(st: SpinConfig, rho_elem: RhoElement, moves: MoveSet, rng: np.random.Generator,
                    bonds: Sequence[tuple[int, int]] = ()) -> SpinConfig:
    """One Metropolis step on the diagonal weights ``rho_{l,l}``."""
    st = tuple(st)
    old = rho_elem(st, st).real
    if not old > 0:
        raise ValueError(f"diagonal chain sits on a configuration with weight {old}")
    probs = moves.probabilities("diag", bool(bonds))
    move = rng.choice(4, p=probs)
    n = len(st)
    if move == 0:
        new = _flip(st, (int(rng.integers(n)),))
    elif move == 1:
        new = _flip(st, bonds[int(rng.integers(len(bonds)))])
    elif move == 2:
        new = _flip(st, range(n))
    else:
        new = _random_config(n, rng)
    ratio = max(rho_elem(new, new).real, 0.0) / old
    if ratio >= 1 or rng.random() < ratio:
        return new
    return st


def default_burn_in(n_sites: int) -> int:
    """Burn-in in sweeps: ``10 * n_sites``."""
    return 10 * n_sites


def _stuck_window(n_sites: int) -> int:
    # a sweep shorter than this can be rejected wholesale by chance
    return max(n_sites, MIN_STUCK_WINDOW)


def batch_stderr(samples: np.ndarray, n_batches: int = N_BATCHES) -> np.ndarray:
    """Batch-means standard error along axis 0."""
    means = np.stack([b.mean(axis=0) for b in np.array_split(samples, n_batches)])
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def _as_terms(obs) -> list[PauliString]:
    terms = [obs] if isinstance(obs, PauliString) else list(obs)
    for t in terms:
        if len(t.support) > 2:
            raise NonLocalObservableError(f"{t.letters} acts on {len(t.support)} sites; at most 2 are supported")
    return terms


def _start_diag(rho_elem, n, rng, tries=1000) -> SpinConfig:
    for _ in range(tries):
        cfg = _random_config(n, rng)
        if rho_elem(cfg, cfg).real > 0:
            return cfg
    raise ChainStuckError("could not find a configuration with positive diagonal weight")


def estimate_observable(rho_elem: RhoElement, obs, n_samples: int, burn_in: int | None,
                        rng: np.random.Generator, *, n_sites: int | None = None,
                        bonds: Sequence[tuple[int, int]] = (), moves: MoveSet = MoveSet()) -> tuple[float, float]:
    """Diagonal-chain estimate of ``Tr(rho O)`` with a batch-means standard error.

    ``obs`` is a Pauli string or a list of strings, each acting on at most
    two sites. The per-sample estimator is ``sum_m O_{m,l} rho_{l,m} / rho_{l,l}``.
    ``burn_in`` counts sweeps of ``n_sites`` proposals.
    """
    terms = _as_terms(obs)
    n = n_sites if n_sites is not None else terms[0].n_qubits
    if n_samples < N_BATCHES:
        raise ValueError(f"need at least {N_BATCHES} samples, got {n_samples}")
    sweeps = default_burn_in(n) if burn_in is None else burn_in
    st = _start_diag(rho_elem, n, rng)
    for _ in range(sweeps * n):
        st = diag_chain_step(st, rho_elem, moves, rng, bonds)
    masks = [t.flip_mask() for t in terms]
    n_bits = n
    values = np.empty(n_samples)
    for i in range(n_samples):
        st = diag_chain_step(st, rho_elem, moves, rng, bonds)
        idx = config_to_index(st)
        base = rho_elem(st, st)
        total = 0j
        for t, mask in zip(terms, masks):
            m_idx = idx ^ mask
            m_cfg = st if mask == 0 else tuple(-s if (mask >> (n_bits - 1 - j)) & 1 else s for j, s in enumerate(st))
            total += t.element(m_idx, idx) * rho_elem(st, m_cfg) / base
        values[i] = total.real
    return float(values.mean()), float(batch_stderr(values)[()])


def estimate_sr(m: LindbladModel, topo: NetworkTopology, theta, n_samples: int, burn_in: int | None,
                rng: np.random.Generator, *, noise_eps: float = 0.0, moves: MoveSet = MoveSet()):
    """Pair-chain estimate of ``S`` and ``f`` with batch-means standard errors.

    Matrix elements of ``rho`` and its parameter derivatives come from a dense
    network evaluation; the chain only touches them element by element.
    """
    from .sr_solver import SrSystem, inject_noise

    if n_samples < N_BATCHES:
        raise ValueError(f"need at least {N_BATCHES} samples, got {n_samples}")
    rho, drho = all_derivatives(topo, theta)
    drho = inject_noise(drho, noise_eps, rng)
    elem = dense_accessor(rho)
    n = m.n_sites
    bonds = list(m.bonds)

    st = None
    for _ in range(1000):
        l, r = _random_config(n, rng), _random_config(n, rng)
        if elem(l, r) != 0:
            st = PairChainState.start(elem, l, r)
            break
    if st is None:
        raise ChainStuckError("could not find a pair configuration with nonzero amplitude")

    window = _stuck_window(n)
    since_accept = 0

    def advance(st):
        nonlocal since_accept
        new = pair_chain_step(st, elem, moves, rng, bonds)
        since_accept = 0 if new is not st else since_accept + 1
        if since_accept >= window:
            raise ChainStuckError(f"no move accepted in {window} consecutive proposals at l={st.l}, r={st.r}")
        return new

    sweeps = default_burn_in(n) if burn_in is None else burn_in
    for _ in range(sweeps * n):
        st = advance(st)

    n_params = drho.shape[0]
    o_samples = np.empty((n_samples, n_params), dtype=complex)
    e_samples = np.empty(n_samples, dtype=complex)
    accepted = 0
    for i in range(n_samples):
        new = advance(st)
        accepted += new is not st
        st = new
        li, ri = config_to_index(st.l), config_to_index(st.r)
        o_samples[i] = drho[:, li, ri] / st.amp
        e_samples[i] = local_estimator(m, elem, st.l, st.r)

    def contract(o, e):
        mean_o = o.mean(axis=0)
        s = np.real(o.conj().T @ o / len(o) - np.outer(mean_o.conj(), mean_o))
        f = np.real(o.conj().T @ e / len(o) - mean_o.conj() * e.mean())
        return s, f

    s, f = contract(o_samples, e_samples)
    parts = [contract(o, e) for o, e in zip(np.array_split(o_samples, N_BATCHES), np.array_split(e_samples, N_BATCHES))]
    s_b = np.stack([p[0] for p in parts])
    f_b = np.stack([p[1] for p in parts])
    sys = SrSystem(
        S=0.5 * (s + s.T),
        f=f,
        S_stderr=s_b.std(axis=0, ddof=1) / np.sqrt(N_BATCHES),
        f_stderr=f_b.std(axis=0, ddof=1) / np.sqrt(N_BATCHES),
    )
    sys.info.update(rho=rho, acceptance=accepted / n_samples)
    return sys
