"""Dissipative spin models and the Lindblad generator.

The generator is

    L(rho) = -i[H, rho] - sum_j gamma_j/2 ({sp_j sm_j, rho} - 2 sm_j rho sp_j)

with one lowering-operator jump per site. Besides the dense application this
module provides single matrix elements in the spin-configuration picture,
which the Markov-chain estimators consume.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .qcore import SM, DimensionError, PauliString, config_to_index, embed, n_qubits_of, pauli_matrix

RhoElement = Callable[[Sequence[int], Sequence[int]], complex]


class ZeroAmplitudeError(ZeroDivisionError):
    """A ratio estimator was evaluated at a configuration with rho_{l,r} = 0."""


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian Pauli terms plus per-site lowering jumps.

    ``bonds`` lists nearest-neighbour pairs; it only drives the two-site
    Monte Carlo moves and does not enter the dynamics.
    """

    n_sites: int
    ham_terms: tuple[PauliString, ...]
    jumps: tuple[tuple[int, float], ...]
    bonds: tuple[tuple[int, int], ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ham_terms", tuple(self.ham_terms))
        object.__setattr__(self, "jumps", tuple((int(j), float(g)) for j, g in self.jumps))
        object.__setattr__(self, "bonds", tuple(tuple(b) for b in self.bonds))
        for term in self.ham_terms:
            if term.n_qubits != self.n_sites:
                raise DimensionError(f"term {term.letters} does not span {self.n_sites} sites")
            if abs(complex(term.coeff).imag) > 0:
                raise ValueError(f"Hamiltonian coefficient of {term.letters} must be real")
        for site, gamma in self.jumps:
            if not 0 <= site < self.n_sites:
                raise IndexError(f"jump site {site} out of range")
            if gamma < 0:
                raise ValueError(f"dissipation rate must be >= 0, got {gamma}")

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    @cached_property
    def hamiltonian(self) -> np.ndarray:
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for term in self.ham_terms:
            h += pauli_matrix(term)
        return h

    @cached_property
    def jump_matrices(self) -> tuple[tuple[np.ndarray, float], ...]:
        return tuple((embed(SM, [site], self.n_sites), gamma) for site, gamma in self.jumps)

    @cached_property
    def _effective(self) -> np.ndarray:
        """``H - i/2 sum gamma F^dag F`` so that ``L rho = -i(K rho - rho K^dag) + sum gamma F rho F^dag``."""
        k = self.hamiltonian.copy()
        for f, gamma in self.jump_matrices:
            k -= 0.5j * gamma * (f.conj().T @ f)
        return k

    def fingerprint(self) -> str:
        """Stable short hash of the model content."""
        payload = {
            "n": self.n_sites,
            "terms": [[t.letters, float(complex(t.coeff).real)] for t in self.ham_terms],
            "jumps": [list(j) for j in self.jumps],
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def build_ising1d(n: int, j: float = 1.0, h: float = 1.0, gamma: float = 1.0, periodic: bool = True) -> LindbladModel:
    """``H = J sum Z_j Z_{j+1} + h sum X_j`` with lowering jumps at rate ``gamma``."""
    if n < 2:
        raise ValueError(f"the Ising chain needs at least 2 sites, got {n}")
    pairs = [(s, s + 1) for s in range(n - 1)]
    if periodic and n > 2:
        pairs.append((n - 1, 0))
    # for n == 2 the wrap bond coincides with (0, 1) and is not doubled
    terms = [PauliString.from_sites(n, {a: "Z", b: "Z"}, j) for a, b in pairs]
    terms += [PauliString.from_sites(n, {s: "X"}, h) for s in range(n)]
    return LindbladModel(
        n_sites=n,
        ham_terms=tuple(terms),
        jumps=tuple((s, gamma) for s in range(n)),
        bonds=tuple(pairs),
        meta={"kind": "ising1d", "N": n, "J": j, "h": h, "gamma": gamma, "periodic": periodic},
    )


def square_lattice_bonds(lx: int, ly: int, periodic: bool) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Distinct nearest-neighbour and diagonal bonds; site index ``x * ly + y``.

    Wraparound duplicates (each bond of a 2-wide periodic direction is
    generated twice) are merged.
    """

    def site(x, y):
        return x * ly + y

    def wrap(x, y):
        if periodic:
            return x % lx, y % ly
        if 0 <= x < lx and 0 <= y < ly:
            return x, y
        return None

    nn, nnn = set(), set()
    for x in range(lx):
        for y in range(ly):
            for dx, dy, target in ((1, 0, nn), (0, 1, nn), (1, 1, nnn), (1, -1, nnn)):
                other = wrap(x + dx, y + dy)
                if other is None:
                    continue
                a, b = site(x, y), site(*other)
                if a != b:
                    target.add((min(a, b), max(a, b)))
    return sorted(nn), sorted(nnn)


def build_j1j2_2d(lx: int, ly: int, j1: float = 1.0, j2: float = 0.5, h: float = 1.0, gamma: float = 1.0,
                  periodic: bool = True) -> LindbladModel:
    """Square-lattice ``J1-J2`` Ising model in a transverse field with lowering jumps."""
    if lx < 2 or ly < 2:
        raise ValueError(f"lattice extents must be >= 2, got {lx}x{ly}")
    n = lx * ly
    nn, nnn = square_lattice_bonds(lx, ly, periodic)
    terms = [PauliString.from_sites(n, {a: "Z", b: "Z"}, j1) for a, b in nn]
    if j2 != 0:
        terms += [PauliString.from_sites(n, {a: "Z", b: "Z"}, j2) for a, b in nnn]
    terms += [PauliString.from_sites(n, {s: "X"}, h) for s in range(n)]
    return LindbladModel(
        n_sites=n,
        ham_terms=tuple(terms),
        jumps=tuple((s, gamma) for s in range(n)),
        bonds=tuple(nn),
        meta={"kind": "j1j2_2d", "Lx": lx, "Ly": ly, "J1": j1, "J2": j2, "h": h, "gamma": gamma,
              "periodic": periodic, "merged_wrap_bonds": bool(periodic and (lx == 2 or ly == 2)),
              "n_nn_bonds": len(nn), "n_nnn_bonds": len(nnn)},
    )


def build_decay(gamma: float = 1.0, h: float = 0.0) -> LindbladModel:
    """Single spin with lowering at rate ``gamma`` and optional field ``h X``."""
    terms = (PauliString("X", h),) if h else ()
    return LindbladModel(1, terms, ((0, gamma),), meta={"kind": "decay", "gamma": gamma, "h": h})


def apply_liouvillian(m: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """Dense ``L(rho)``."""
    if rho.shape != (m.dim, m.dim):
        raise DimensionError(f"model on {m.n_sites} sites cannot act on shape {rho.shape}")
    k = m._effective
    out = -1j * (k @ rho - rho @ k.conj().T)
    for f, gamma in m.jump_matrices:
        out += gamma * (f @ rho @ f.conj().T)
    return out


# --- single matrix elements in the spin picture ---------------------------------------------

def _flip(spins: Sequence[int], *sites: int) -> tuple[int, ...]:
    out = list(spins)
    for s in sites:
        out[s] = -out[s]
    return tuple(out)


def local_element(op: tuple, l: Sequence[int], r: Sequence[int]) -> complex:
    """``<l|op|r>`` for ``op`` one of ``("X", j)``, ``("ZZ", j, k)``, ``("Z", j)``,
    ``("NUM", j)`` (= sp_j sm_j), ``("SM", j)``, ``("SP", j)``."""
    kind, *sites = op
    j = sites[0]
    others_equal = all(lk == rk for k, (lk, rk) in enumerate(zip(l, r)) if k != j)
    if kind == "X":
        return complex(others_equal and r[j] == -l[j])
    if kind == "ZZ":
        return complex(r[sites[0]] * r[sites[1]]) if tuple(l) == tuple(r) else 0j
    if kind == "Z":
        return complex(r[j]) if tuple(l) == tuple(r) else 0j
    if kind == "NUM":
        return complex(r[j] == 1) if tuple(l) == tuple(r) else 0j
    if kind == "SM":
        return complex(others_equal and r[j] == 1 and l[j] == -1)
    if kind == "SP":
        return complex(others_equal and r[j] == -1 and l[j] == 1)
    raise ValueError(f"unknown local operator {kind!r}")


def _pauli_action(term: PauliString, spins: Sequence[int]) -> tuple[tuple[int, ...], complex]:
    """``(m, <m|P|spins>)`` for the unique nonzero entry of column ``spins``."""
    flipped = tuple(-s if c in "XY" else s for s, c in zip(spins, term.letters))
    return flipped, term.element(config_to_index(flipped), config_to_index(spins))


def local_estimator(m: LindbladModel, rho_elem: RhoElement, l: Sequence[int], r: Sequence[int]) -> complex:
    """``(L rho)_{l,r} / rho_{l,r}`` from O(n_sites) element queries.

    Diagonal (Z-only) terms contribute differences of eigenvalues; flipping
    terms contribute amplitude ratios. The jump term feeds from the
    configuration with site ``j`` raised in both ``l`` and ``r``.
    """
    l, r = tuple(l), tuple(r)
    base = rho_elem(l, r)
    if base == 0:
        raise ZeroAmplitudeError(f"rho_(l,r) vanishes at l={l}, r={r}")
    total = 0j
    for term in m.ham_terms:
        # (H rho)_{l r} = sum_m H_{l m} rho_{m r};  H_{l m} = conj(H_{m l}) for Hermitian terms
        ml, hl = _pauli_action(term, l)
        mr, hr = _pauli_action(term, r)
        if ml == l:
            total += -1j * (np.conj(hl) - hr)
        else:
            total += -1j * (np.conj(hl) * rho_elem(ml, r) - hr * rho_elem(l, mr)) / base
    for site, gamma in m.jumps:
        total -= 0.5 * gamma * ((l[site] == 1) + (r[site] == 1))
        if l[site] == -1 and r[site] == -1:
            total += gamma * rho_elem(_flip(l, site), _flip(r, site)) / base
    return complex(total)


def dense_accessor(rho: np.ndarray) -> RhoElement:
    """Element accessor over a dense matrix, indexed by spin configurations."""

    def elem(l, r):
        return complex(rho[config_to_index(l), config_to_index(r)])

    return elem
