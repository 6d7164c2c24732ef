"""Ancilla-interference circuits and shot-noise assembly of the SR system.

Every circuit prepares the ancilla in ``(|0> + e^{i phi}|1>)/sqrt(2)``,
applies a controlled unitary ``V`` to two registers holding ``a (x) b``,
applies a Hadamard to the ancilla and measures it:

    P(0) = 1/2 + 1/2 Re[e^{i phi} Tr(V (a (x) b))].

``phi = 0`` reads the real part, ``phi = pi/2`` minus the imaginary part.
With ``V = SWAP`` the trace is ``Tr(ab)``; ``V = SWAP (I (x) O)`` gives
``Tr(a O b)``; ``V = SWAP (O2 (x) O1)`` gives ``Tr(a O1 b O2)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .lindblad import LindbladModel
from .network import NetworkTopology, shift_states
from .qcore import DimensionError, PauliString, kron_all, n_qubits_of, pauli_matrix

N_BOOTSTRAP = 200
MAX_CIRCUIT_QUBITS = 11


class Part(str, enum.Enum):
    RE = "re"
    IM = "im"


@dataclass
class ShotConfig:
    """``shots=None`` means exact (infinite-shot) probabilities."""

    shots: int | None = None
    seed: int | None = None
    rng: np.random.Generator | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.shots is not None and self.shots < 1:
            raise ValueError(f"shots must be >= 1, got {self.shots}")
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    @property
    def exact(self) -> bool:
        return self.shots is None


def swap_matrix(n: int) -> np.ndarray:
    """Exchange of two ``n``-qubit registers."""
    d = 1 << n
    idx = np.arange(d * d)
    hi, lo = idx // d, idx % d
    out = np.zeros((d * d, d * d), dtype=complex)
    out[lo * d + hi, idx] = 1.0
    return out


def _phase(part: Part) -> float:
    return 0.0 if Part(part) is Part.RE else np.pi / 2


def _sign(part: Part) -> float:
    return 1.0 if Part(part) is Part.RE else -1.0


def ancilla_circuit_p0(a: np.ndarray, b: np.ndarray, v: np.ndarray, phase: float) -> float:
    """Dense simulation of the ancilla circuit on ``1 + 2n`` qubits; returns ``P(0)``."""
    n = n_qubits_of(a)
    if 2 * n + 1 > MAX_CIRCUIT_QUBITS:
        raise DimensionError(f"circuit on {2 * n + 1} qubits exceeds the simulator limit of {MAX_CIRCUIT_QUBITS}")
    anc = np.array([1.0, np.exp(1j * phase)]) / np.sqrt(2)
    sigma = kron_all([np.outer(anc, anc.conj()), a, b])
    dd = v.shape[0]
    cv = np.zeros((2 * dd, 2 * dd), dtype=complex)
    cv[:dd, :dd] = np.eye(dd)
    cv[dd:, dd:] = v
    hadamard = np.kron(np.array([[1, 1], [1, -1]]) / np.sqrt(2), np.eye(dd))
    g = hadamard @ cv
    sigma = g @ sigma @ g.conj().T
    return float(np.trace(sigma[:dd, :dd]).real)


def _closed_p0(trace_value: complex, phase: float) -> float:
    return float(0.5 + 0.5 * (np.exp(1j * phase) * trace_value).real)


def _readout(p0, part: Part, cfg: ShotConfig):
    """Turn ``P(0)`` (scalar or array) into the Re or Im estimate, sampling shots if finite."""
    p0 = np.clip(np.asarray(p0, dtype=float), 0.0, 1.0)
    if not cfg.exact:
        p0 = cfg.rng.binomial(cfg.shots, p0) / cfg.shots
    return _sign(part) * (2.0 * p0 - 1.0)


def _check_pair(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"registers differ: {a.shape} vs {b.shape}")
    return n_qubits_of(a)


def _unit_pauli(o: PauliString) -> tuple[np.ndarray, float]:
    # a controlled gate needs a unitary Hermitian operator: coefficient +1 or -1
    if o.coeff not in (1, -1):
        raise ValueError(f"controlled operator must be a Pauli string with coefficient +-1, got {o.coeff}")
    return pauli_matrix(PauliString(o.letters)), float(np.real(o.coeff))


def overlap_test(a: np.ndarray, b: np.ndarray, cfg: ShotConfig = ShotConfig(), *, circuit: bool = False) -> float:
    """Estimate ``Tr(ab)`` with the controlled-SWAP circuit."""
    n = _check_pair(a, b)
    if circuit:
        p0 = ancilla_circuit_p0(a, b, swap_matrix(n), 0.0)
    else:
        p0 = _closed_p0(np.trace(a @ b), 0.0)
    return float(_readout(p0, Part.RE, cfg))


def ctrl_o_test(a: np.ndarray, b: np.ndarray, o: PauliString, part: Part, cfg: ShotConfig = ShotConfig(),
                *, circuit: bool = False) -> float:
    """Estimate ``Re`` or ``Im`` of ``Tr(a O b)``; ``O`` acts on register B before the swap."""
    n = _check_pair(a, b)
    if o.n_qubits != n:
        raise DimensionError(f"observable on {o.n_qubits} qubits, registers have {n}")
    om, coeff = _unit_pauli(o)
    phase = _phase(part)
    if circuit:
        v = swap_matrix(n) @ np.kron(np.eye(1 << n), om)
        p0 = ancilla_circuit_p0(a, b, v, phase)
    else:
        p0 = _closed_p0(np.trace(a @ om @ b), phase)
    return coeff * float(_readout(p0, part, cfg))


def ctrl_o1_o2_test(a: np.ndarray, b: np.ndarray, o1: PauliString, o2: PauliString, part: Part,
                    cfg: ShotConfig = ShotConfig(), *, circuit: bool = False) -> float:
    """Estimate ``Re`` or ``Im`` of ``Tr(a O1 b O2)``."""
    n = _check_pair(a, b)
    if o1.n_qubits != n or o2.n_qubits != n:
        raise DimensionError(f"observables do not act on {n} qubits")
    m1, c1 = _unit_pauli(o1)
    m2, c2 = _unit_pauli(o2)
    phase = _phase(part)
    if circuit:
        v = swap_matrix(n) @ np.kron(m2, m1)
        p0 = ancilla_circuit_p0(a, b, v, phase)
    else:
        p0 = _closed_p0(np.trace(a @ m1 @ b @ m2), phase)
    return c1 * c2 * float(_readout(p0, part, cfg))


# --- batched assembly ---------------------------------------------------------------------------

def _traces(states: np.ndarray, right: np.ndarray) -> np.ndarray:
    """``Tr(s @ right)`` for each ``s`` in ``states`` (``right`` may be batched over a trailing list)."""
    return np.einsum("sij,...ji->s...", states, right)


def _sample(values: np.ndarray, part: Part, cfg: ShotConfig, symmetric: bool = False) -> np.ndarray:
    """Shot-sampled version of exact circuit values (real, in [-1, 1])."""
    if cfg.exact:
        return values
    p0 = 0.5 + 0.5 * _sign(part) * values
    out = _readout(p0, part, cfg)
    if symmetric:
        upper = np.triu(out)
        out = upper + np.triu(out, 1).T
    return out


def circuit_values(m: LindbladModel, states: np.ndarray, rho: np.ndarray) -> dict[str, tuple[np.ndarray, Part]]:
    """Exact readouts of every circuit the SR assembly needs.

    ``states`` are the probe states (shifted mixtures followed by ``rho``).
    """
    n = m.n_sites
    site_ops = {c: np.stack([pauli_matrix(PauliString.from_sites(n, {j: c})) for j, _ in m.jumps])
                for c in "XYZ"} if m.jumps else {c: np.zeros((0,) + rho.shape) for c in "XYZ"}
    terms = np.stack([pauli_matrix(PauliString(t.letters)) for t in m.ham_terms]) if m.ham_terms else \
        np.zeros((0,) + rho.shape)
    out = {"gram": (np.einsum("aij,bji->ab", states, states).real, Part.RE)}
    out["ham"] = (_traces(states, terms @ rho).imag, Part.IM)
    out["z"] = (_traces(states, site_ops["Z"] @ rho).real, Part.RE)
    x, y = site_ops["X"], site_ops["Y"]
    out["xx"] = (_traces(states, x @ rho @ x).real, Part.RE)
    out["yy"] = (_traces(states, y @ rho @ y).real, Part.RE)
    out["xy"] = (_traces(states, x @ rho @ y).imag, Part.IM)
    out["yx"] = (_traces(states, y @ rho @ x).imag, Part.IM)
    return out


def _combine(m: LindbladModel, v: dict[str, np.ndarray], weights: np.ndarray):
    """``S`` and ``f`` from (possibly sampled) circuit readouts.

    Row ``2 mu`` / ``2 mu + 1`` of each readout belongs to the +/- mixture of
    parameter ``mu``, the last row to ``rho``; ``weights[mu]`` is the number
    of gate occurrences behind the mixture.
    """
    g = v["gram"]
    p = weights.shape[0]
    norm2 = g[-1, -1]
    coeffs = np.array([float(np.real(t.coeff)) for t in m.ham_terms])
    gammas = np.array([gm for _, gm in m.jumps])
    jump = 0.25 * (v["xx"] + v["yy"] - v["xy"] + v["yx"])
    lterm = 2.0 * v["ham"] @ coeffs - 0.5 * ((g[:, -1:] + v["z"] - 2.0 * jump) @ gammas)
    plus, minus = np.arange(0, 2 * p, 2), np.arange(1, 2 * p, 2)
    gpp, gpm = g[np.ix_(plus, plus)], g[np.ix_(plus, minus)]
    gmp, gmm = g[np.ix_(minus, plus)], g[np.ix_(minus, minus)]
    w = 0.5 * weights
    d_d = np.outer(w, w) * (gpp - gpm - gmp + gmm)
    d_rho = w * (g[plus, -1] - g[minus, -1])
    d_l = w * (lterm[plus] - lterm[minus])
    s = d_d / norm2 - np.outer(d_rho, d_rho) / norm2**2
    f = d_l / norm2 - d_rho * lterm[-1] / norm2**2
    return 0.5 * (s + s.T), f


def assemble_shots(m: LindbladModel, topo: NetworkTopology, theta, cfg: ShotConfig):
    """Assemble ``S`` and ``f`` from circuit readouts with ``cfg.shots`` shots each.

    Tied parameters act on several gates; the occurrence-summed shifted
    output equals ``k`` times the uniform mixture of the ``k`` shifted
    states, which is itself a preparable state. Standard errors come from a
    parametric bootstrap of the binomial readouts.
    """
    from .sr_solver import SolverError, SrSystem

    st = shift_states(topo, theta)
    shifted = st.shifted()  # (P, 2, d, d), traces equal occurrence counts
    weights = np.trace(shifted, axis1=-2, axis2=-1).real[:, 0]
    mixtures = shifted / weights[:, None, None, None]
    states = np.concatenate([mixtures.reshape((-1,) + st.rho.shape), st.rho[None]])
    exact = circuit_values(m, states, st.rho)

    def draw(source: dict[str, tuple[np.ndarray, Part]], c: ShotConfig):
        return {k: _sample(val, part, c, symmetric=(k == "gram")) for k, (val, part) in source.items()}

    sampled = draw(exact, cfg)
    if sampled["gram"][-1, -1] <= 0:
        raise SolverError(f"purity readout {sampled['gram'][-1, -1]} is not positive; too few shots to normalize")
    s, f = _combine(m, sampled, weights)
    sys = SrSystem(S=s, f=f)
    if not cfg.exact:
        # resample around the observed readouts
        boot_src = {k: (sampled[k], part) for k, (_, part) in exact.items()}
        reps = [_combine(m, draw(boot_src, cfg), weights) for _ in range(N_BOOTSTRAP)]
        sys.S_stderr = np.std([r[0] for r in reps], axis=0, ddof=1)
        sys.f_stderr = np.std([r[1] for r in reps], axis=0, ddof=1)
    sys.info["rho"] = st.rho
    return sys
