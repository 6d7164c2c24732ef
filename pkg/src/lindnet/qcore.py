"""Dense qubit linear algebra shared by every other module.

Conventions used everywhere in the package:

* qubit 0 owns the most significant bit of a basis index;
* spin ``+1`` is basis state ``|0>`` (sigma_z eigenvalue ``+1``), spin ``-1``
  is ``|1>``;
* the lowering operator maps spin ``+1`` to spin ``-1``: ``sm = |1><0|``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
SM = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|, spin up -> spin down
SP = SM.T.copy()
PLUS = np.full((2, 2), 0.5, dtype=complex)  # |+><+|

PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}

# single-qubit products  a @ b = phase * PAULI[c]
_PRODUCT = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}


class DimensionError(ValueError):
    """Operands act on incompatible spaces."""


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Pauli letters times a coefficient.

    ``letters[j]`` acts on qubit ``j``; e.g. ``PauliString("ZIZ", 0.5)``.
    """

    letters: str
    coeff: complex = 1.0

    def __post_init__(self):
        letters = self.letters.upper()
        bad = set(letters) - set("IXYZ")
        if bad:
            raise ValueError(f"invalid Pauli letters {sorted(bad)} in {self.letters!r}")
        object.__setattr__(self, "letters", letters)

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(j for j, c in enumerate(self.letters) if c != "I")

    @classmethod
    def from_sites(cls, n_qubits: int, ops: dict[int, str], coeff: complex = 1.0) -> "PauliString":
        """Build e.g. ``from_sites(4, {0: "Z", 2: "Z"})`` -> ``ZIZI``."""
        letters = ["I"] * n_qubits
        for site, letter in ops.items():
            if not 0 <= site < n_qubits:
                raise IndexError(f"site {site} out of range for {n_qubits} qubits")
            letters[site] = letter
        return cls("".join(letters), coeff)

    def __matmul__(self, other: "PauliString") -> "PauliString":
        if self.n_qubits != other.n_qubits:
            raise DimensionError("Pauli strings act on different qubit counts")
        phase = self.coeff * other.coeff
        out = []
        for a, b in zip(self.letters, other.letters):
            p, c = _PRODUCT[(a, b)]
            phase *= p
            out.append(c)
        return PauliString("".join(out), phase)

    def flip_mask(self) -> int:
        """Bit mask of the qubits whose basis state this string flips (X or Y)."""
        n = self.n_qubits
        mask = 0
        for j, c in enumerate(self.letters):
            if c in "XY":
                mask |= 1 << (n - 1 - j)
        return mask

    def element(self, row: int, col: int) -> complex:
        """Matrix element ``<row|P|col>`` without building the matrix."""
        if row ^ col != self.flip_mask():
            return 0.0
        return complex(self.column_phases(np.array([col]))[0])

    def column_phases(self, cols: np.ndarray) -> np.ndarray:
        """``P[col ^ mask, col]`` for every index in ``cols`` (the only nonzero per column)."""
        n = self.n_qubits
        out = np.full(cols.shape, complex(self.coeff))
        for j, c in enumerate(self.letters):
            bit = (cols >> (n - 1 - j)) & 1
            if c == "Z":
                out = out * (1 - 2 * bit)
            elif c == "Y":
                out = out * np.where(bit == 1, -1j, 1j)
        return out


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with ``a`` on the high-order bits."""
    return np.kron(a, b)


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats, np.ones((1, 1), dtype=complex))


def n_qubits_of(mat: np.ndarray) -> int:
    dim = mat.shape[0]
    if mat.ndim != 2 or mat.shape[1] != dim:
        raise DimensionError(f"expected a square matrix, got shape {mat.shape}")
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


def pauli_matrix(ps: PauliString) -> np.ndarray:
    return ps.coeff * kron_all(PAULI[c] for c in ps.letters)


def embed(op: np.ndarray, qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Full ``2**n`` matrix of ``op`` acting on ``qubits`` (in the given order)."""
    k = len(qubits)
    if op.shape != (1 << k, 1 << k):
        raise DimensionError(f"operator of shape {op.shape} does not act on {k} qubits")
    if len(set(qubits)) != k or any(not 0 <= q < n_qubits for q in qubits):
        raise IndexError(f"invalid qubit list {list(qubits)} for {n_qubits} qubits")
    dim = 1 << n_qubits
    return apply_local(np.eye(dim, dtype=complex), op, qubits, n_qubits).T


def apply_local(state: np.ndarray, op: np.ndarray, qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Apply ``op`` on ``qubits`` to state vectors stored along the last axis.

    ``state`` has shape ``(..., 2**n)``; leading axes are a batch. ``op`` is a
    ``(2**k, 2**k)`` matrix or a batch ``(B, 2**k, 2**k)`` matched against the
    first leading axis.
    """
    k = len(qubits)
    lead = state.shape[:-1]
    nl = len(lead)
    psi = state.reshape(lead + (2,) * n_qubits)
    axes = [nl + q for q in qubits]
    psi = np.moveaxis(psi, axes, range(nl, nl + k))
    moved_shape = psi.shape
    psi = psi.reshape(lead + (1 << k, -1))
    if op.ndim == 3:
        op = op.reshape((op.shape[0],) + (1,) * (nl - 1) + op.shape[1:])
    psi = op @ psi
    psi = np.moveaxis(psi.reshape(moved_shape), range(nl, nl + k), axes)
    return psi.reshape(lead + (1 << n_qubits,))


def partial_trace(rho: np.ndarray, traced: Iterable[int]) -> np.ndarray:
    """Trace out the qubits in ``traced``; survivors keep their relative order."""
    n = n_qubits_of(rho)
    traced = sorted(set(traced))
    for q in traced:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n} qubits")
    keep = [q for q in range(n) if q not in traced]
    t = rho.reshape((2,) * (2 * n))
    row = "".join(chr(97 + q) for q in range(n))
    col = "".join(chr(97 + q) if q in traced else chr(65 + q) for q in range(n))
    out = "".join(chr(97 + q) for q in keep) + "".join(chr(65 + q) for q in keep)
    dk = 1 << len(keep)
    return np.einsum(f"{row}{col}->{out}", t).reshape(dk, dk)


def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt product ``Tr(a^dagger b)``."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def expectation(rho: np.ndarray, obs: PauliString, tol: float = 1e-10) -> float:
    """Real expectation value ``Tr(rho O)`` of a Hermitian Pauli string."""
    if n_qubits_of(rho) != obs.n_qubits:
        raise DimensionError(f"state has {n_qubits_of(rho)} qubits, observable {obs.n_qubits}")
    cols = np.arange(rho.shape[0])
    rows = cols ^ obs.flip_mask()
    # Tr(rho P) = sum_col rho[col, row] P[row, col]
    total = complex(np.sum(rho[cols, rows] * obs.column_phases(cols)))
    if abs(total.imag) > tol:
        raise ValueError(f"expectation has imaginary part {total.imag:.3e}; non-Hermitian input")
    return float(total.real)


def config_to_index(spins: Sequence[int]) -> int:
    idx = 0
    for s in spins:
        if s not in (1, -1):
            raise ValueError(f"spin values must be +1 or -1, got {s}")
        idx = (idx << 1) | (s == -1)
    return idx


def index_to_config(index: int, n_sites: int) -> tuple[int, ...]:
    return tuple(-1 if (index >> (n_sites - 1 - j)) & 1 else 1 for j in range(n_sites))


def is_density_matrix(rho: np.ndarray, psd_tol: float = PSD_TOL) -> bool:
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        return False
    if abs(np.trace(rho) - 1) > TRACE_TOL:
        return False
    return bool(np.linalg.eigvalsh(rho).min() >= -psd_tol)


def plus_state(n_qubits: int) -> np.ndarray:
    return kron_all([PLUS] * n_qubits)


def random_density_matrix(n_qubits: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-distributed random density matrix (test helper)."""
    dim = 1 << n_qubits
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
