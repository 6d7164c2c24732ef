"""Layered quantum feedforward network producing the variational density matrix.

Each perceptron is a 3-qubit unitary acting on two qubits of layer ``i`` and
one qubit of layer ``i + 1``; after all perceptrons of a transition are applied
the layer-``i`` qubits are traced out. Two evaluation routes exist:

* a dense route (:func:`layer_map`, ``feedforward(..., dense=True)``) that
  builds the joint density matrix explicitly, used as the reference;
* a factored route that carries ``rho = F.T @ F.conj()`` through the network,
  so a transition only ever simulates state vectors on ``n_i + n_{i+1}``
  qubits. Parameter-shift derivatives for all parameters are computed on this
  route in batches.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from math import comb
from typing import Sequence

import numpy as np

from .qcore import PLUS, apply_local, n_qubits_of

N_EULER = 12
N_ANGLES = 3 * N_EULER
SHIFT = np.pi / 2

_CNOT_02 = np.eye(8, dtype=complex)[[0, 1, 2, 3, 5, 4, 7, 6]]
_CNOT_12 = np.eye(8, dtype=complex)[[0, 1, 3, 2, 4, 5, 7, 6]]

_CNOT_PAIR = _CNOT_12 @ _CNOT_02  # CNOT(a->out) first


class Connectivity(str, enum.Enum):
    LOCAL_MODULO = "local_modulo"
    FULL = "full"


class Tying(str, enum.Enum):
    UNTIED = "untied"
    TIED_PER_LAYER = "tied_per_layer"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkTopology:
    """Layer sizes plus perceptron wiring and parameter sharing.

    Transition ``t`` maps layer ``t`` (``n_in`` qubits) to layer ``t + 1``
    (``n_out`` qubits). In the joint register the input qubits come first.
    Perceptrons are ``(in_a, in_b, out)`` triples with ``out`` counted within
    the output layer, listed in application order (ascending output qubit).
    """

    layer_sizes: tuple[int, ...]
    connectivity: Connectivity = Connectivity.LOCAL_MODULO
    tying: Tying = Tying.TIED_PER_LAYER

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "connectivity", Connectivity(self.connectivity))
        object.__setattr__(self, "tying", Tying(self.tying))
        if len(sizes) < 2:
            raise TopologyError("a network needs at least an input and an output layer")
        if any(n < 1 for n in sizes):
            raise TopologyError(f"layer sizes must be positive, got {sizes}")
        if any(n < 2 for n in sizes[:-1]):
            raise TopologyError(f"perceptrons need two distinct input qubits; non-output layers must have >= 2 qubits, got {sizes}")

    @property
    def n_transitions(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_output(self) -> int:
        return self.layer_sizes[-1]

    @cached_property
    def wiring(self) -> tuple[tuple[tuple[int, int, int], ...], ...]:
        out = []
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            if self.connectivity is Connectivity.LOCAL_MODULO:
                layer = tuple((j % n_in, (j + 1) % n_in, j) for j in range(n_out))
            else:
                layer = tuple((a, b, j) for j in range(n_out) for a, b in combinations(range(n_in), 2))
            out.append(layer)
        return tuple(out)

    @cached_property
    def perceptron_counts(self) -> tuple[int, ...]:
        return tuple(len(w) for w in self.wiring)

    @property
    def n_perceptrons(self) -> int:
        return sum(self.perceptron_counts)

    @property
    def n_params(self) -> int:
        if self.tying is Tying.TIED_PER_LAYER:
            return self.n_transitions * N_ANGLES
        return self.n_perceptrons * N_ANGLES

    @cached_property
    def _offsets(self) -> tuple[int, ...]:
        offs, acc = [], 0
        for count in self.perceptron_counts:
            offs.append(acc)
            acc += count if self.tying is Tying.UNTIED else 1
        return tuple(offs)

    def param_index(self, transition: int, perceptron: int, slot: int) -> int:
        """Flat index of angle ``slot`` of a perceptron."""
        if self.tying is Tying.TIED_PER_LAYER:
            return transition * N_ANGLES + slot
        return (self._offsets[transition] + perceptron) * N_ANGLES + slot

    @cached_property
    def index_map(self) -> tuple[tuple[int, int | None, int], ...]:
        """``(transition, perceptron or None when tied, slot)`` per flat index."""
        out = []
        for t, count in enumerate(self.perceptron_counts):
            if self.tying is Tying.TIED_PER_LAYER:
                out += [(t, None, s) for s in range(N_ANGLES)]
            else:
                out += [(t, k, s) for k in range(count) for s in range(N_ANGLES)]
        return tuple(out)

    def occurrences(self, idx: int) -> list[tuple[int, int, int]]:
        """Every ``(transition, perceptron, slot)`` gate reading parameter ``idx``."""
        if not 0 <= idx < self.n_params:
            raise IndexError(f"parameter index {idx} out of range [0, {self.n_params})")
        t, k, s = self.index_map[idx]
        if k is None:
            return [(t, j, s) for j in range(self.perceptron_counts[t])]
        return [(t, k, s)]

    def full_perceptron_count(self) -> int:
        """Perceptron count of the fully connected network with these layer sizes."""
        return sum(comb(a, 2) * b for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def perceptron_angles(self, theta: np.ndarray) -> list[np.ndarray]:
        """Per transition, an array ``(n_perceptrons, 36)`` of angles."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise TopologyError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        out = []
        for t, count in enumerate(self.perceptron_counts):
            if self.tying is Tying.TIED_PER_LAYER:
                block = theta[t * N_ANGLES:(t + 1) * N_ANGLES]
                out.append(np.broadcast_to(block, (count, N_ANGLES)).copy())
            else:
                start = self._offsets[t] * N_ANGLES
                out.append(theta[start:start + count * N_ANGLES].reshape(count, N_ANGLES))
        return out


def euler_rotation(t1, t2, t3) -> np.ndarray:
    """``exp(i t1 Z/2) exp(i t2 X/2) exp(i t3 Z/2)``; broadcasts over angle arrays."""
    t1, t2, t3 = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (t1, t2, t3)))
    rz1 = np.exp(0.5j * t1)
    rz3 = np.exp(0.5j * t3)
    c, s = np.cos(t2 / 2), 1j * np.sin(t2 / 2)
    out = np.empty(t1.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = rz1 * c * rz3
    out[..., 0, 1] = rz1 * s * rz3.conj()
    out[..., 1, 0] = rz1.conj() * s * rz3
    out[..., 1, 1] = rz1.conj() * c * rz3.conj()
    return out


def _rotation_layer(rots: np.ndarray) -> np.ndarray:
    """Batched ``ra (x) rb (x) rc`` from ``rots`` of shape ``(B, 3, 2, 2)``."""
    a, b, c = rots[:, 0], rots[:, 1], rots[:, 2]
    batch = rots.shape[0]
    ab = (a[:, :, None, :, None] * b[:, None, :, None, :]).reshape(batch, 4, 4)
    return (ab[:, :, None, :, None] * c[:, None, :, None, :]).reshape(batch, 8, 8)


def perceptron_unitaries(angles: np.ndarray) -> np.ndarray:
    """Vectorized :func:`perceptron_unitary` over leading axes of ``angles``."""
    angles = np.asarray(angles, dtype=float)
    lead = angles.shape[:-1]
    if angles.shape[-1] != N_ANGLES:
        raise ValueError(f"a perceptron takes {N_ANGLES} angles, got {angles.shape[-1]}")
    flat = angles.reshape(-1, N_ANGLES)
    rots = euler_rotation(flat[:, 0::3], flat[:, 1::3], flat[:, 2::3])  # (B, 12, 2, 2)
    u = _rotation_layer(rots[:, 0:3])
    for block in range(3):
        u = _rotation_layer(rots[:, 3 + 3 * block:6 + 3 * block]) @ (_CNOT_PAIR @ u)
    return u.reshape(lead + (8, 8))


def perceptron_unitary(angles: Sequence[float]) -> np.ndarray:
    """8x8 perceptron unitary; qubit order (input a, input b, output).

    Gate layout in application order: one Euler rotation per qubit, then three
    blocks of ``CNOT(a->out), CNOT(b->out)`` followed by one Euler rotation per
    qubit. Euler triples are consumed in that order.
    """
    return perceptron_unitaries(np.asarray(angles, dtype=float))


def _joint_wiring(wiring, n_in):
    return [(a, b, n_in + j) for a, b, j in wiring]


def layer_map(rho_in: np.ndarray, unitaries: Sequence[np.ndarray], wiring: Sequence[tuple[int, int, int]],
              n_out: int, fresh: np.ndarray = PLUS) -> np.ndarray:
    """Dense one-layer map ``Tr_in[U (rho_in (x) fresh^n_out) U^dag]``.

    ``unitaries[k]`` acts on ``wiring[k] = (in_a, in_b, out)``; they are
    applied in list order.
    """
    n_in = n_qubits_of(rho_in)
    if len(unitaries) != len(wiring):
        raise TopologyError(f"{len(unitaries)} unitaries for {len(wiring)} perceptrons")
    for a, b, j in wiring:
        if not (0 <= a < n_in and 0 <= b < n_in and 0 <= j < n_out) or a == b:
            raise TopologyError(f"perceptron wiring {(a, b, j)} invalid for layers of size {n_in} -> {n_out}")
    n = n_in + n_out
    sigma = rho_in
    for _ in range(n_out):
        sigma = np.kron(sigma, fresh)
    for u, qubits in zip(unitaries, _joint_wiring(wiring, n_in)):
        # apply_local(A, u) == A @ u.T on the full space
        sigma = apply_local(sigma.T, u, qubits, n).T
        sigma = apply_local(sigma, u.conj(), qubits, n)
    dim_in, dim_out = 1 << n_in, 1 << n_out
    sigma = sigma.reshape(dim_in, dim_out, dim_in, dim_out)
    return np.einsum("iaib->ab", sigma)


def _fresh_vector(fresh_qubit: np.ndarray | None) -> np.ndarray:
    if fresh_qubit is None:
        return np.full(2, 2 ** -0.5, dtype=complex)
    v = np.asarray(fresh_qubit, dtype=complex).reshape(2)
    return v / np.linalg.norm(v)


def _product_vector(v: np.ndarray, n: int) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for _ in range(n):
        out = np.kron(out, v)
    return out


def _compress(factor: np.ndarray) -> np.ndarray:
    """Shrink a factor ``(..., m, d)`` with ``m > d`` to ``(..., d, d)`` keeping ``F.T F*``."""
    m, d = factor.shape[-2:]
    if m <= d:
        return factor
    return np.linalg.qr(factor, mode="r")


def _expand(factor: np.ndarray, n_out: int, fresh: np.ndarray) -> np.ndarray:
    """Attach fresh output qubits: rows ``v`` become ``v (x) fresh^n_out``."""
    vec = _product_vector(fresh, n_out)
    out = factor[..., :, :, None] * vec
    return out.reshape(factor.shape[:-1] + (-1,))


def _to_factor(psi: np.ndarray, n_in: int, n_out: int) -> np.ndarray:
    """Trace out the input register of row states ``psi (..., m, 2**(n_in+n_out))``."""
    lead = psi.shape[:-2]
    m = psi.shape[-2]
    return _compress(psi.reshape(lead + (m << n_in, 1 << n_out)))


def _forward_transition(factor, unitaries, wiring, n_in, n_out, fresh):
    n = n_in + n_out
    psi = _expand(factor, n_out, fresh)
    for u, qubits in zip(unitaries, _joint_wiring(wiring, n_in)):
        psi = apply_local(psi, u, qubits, n)
    return _to_factor(psi, n_in, n_out)


def _factor_to_rho(factor: np.ndarray) -> np.ndarray:
    rho = np.swapaxes(factor, -1, -2) @ factor.conj()
    return 0.5 * (rho + np.swapaxes(rho, -1, -2).conj())


def _validate_theta(topo: NetworkTopology, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (topo.n_params,):
        raise TopologyError(f"topology expects {topo.n_params} parameters, got shape {theta.shape}")
    return theta


def feedforward(topo: NetworkTopology, theta, *, dense: bool = False, fresh_qubit: np.ndarray | None = None,
                stats: dict | None = None) -> np.ndarray:
    """Output-layer density matrix of the network at parameters ``theta``.

    The input layer and every fresh layer start in ``|+>`` unless
    ``fresh_qubit`` overrides the single-qubit state. ``stats`` (if given)
    receives ``peak_qubits``, the largest register simulated at once.
    """
    theta = _validate_theta(topo, theta)
    fresh = _fresh_vector(fresh_qubit)
    angles = topo.perceptron_angles(theta)
    sizes = topo.layer_sizes
    peak = 0
    if dense:
        v0 = _product_vector(fresh, sizes[0])
        rho = np.outer(v0, v0.conj())
        fresh_dm = np.outer(fresh, fresh.conj())
        for t in range(topo.n_transitions):
            peak = max(peak, sizes[t] + sizes[t + 1])
            us = perceptron_unitaries(angles[t])
            rho = layer_map(rho, list(us), topo.wiring[t], sizes[t + 1], fresh=fresh_dm)
    else:
        factor = _product_vector(fresh, sizes[0])[None, :]
        for t in range(topo.n_transitions):
            peak = max(peak, sizes[t] + sizes[t + 1])
            us = perceptron_unitaries(angles[t])
            factor = _forward_transition(factor, us, topo.wiring[t], sizes[t], sizes[t + 1], fresh)
        rho = _factor_to_rho(factor)
    if stats is not None:
        stats["peak_qubits"] = peak
    return rho


def _shifted_angles(angles: np.ndarray, slots: Sequence[int]) -> np.ndarray:
    """Angle sets ``(len(slots), 2, 36)``: slot shifted by +pi/2 and -pi/2."""
    out = np.repeat(angles[None, None, :], len(slots), axis=0).repeat(2, axis=1)
    for i, s in enumerate(slots):
        out[i, 0, s] += SHIFT
        out[i, 1, s] -= SHIFT
    return out


def shifted_output(topo: NetworkTopology, theta, occurrence: tuple[int, int, int], delta: float,
                   *, dense: bool = False, fresh_qubit: np.ndarray | None = None) -> np.ndarray:
    """Network output with a single gate occurrence's angle moved by ``delta``."""
    t0, k0, s0 = occurrence
    theta = _validate_theta(topo, theta)
    angles = topo.perceptron_angles(theta)
    angles[t0] = angles[t0].copy()
    angles[t0][k0, s0] += delta
    fresh = _fresh_vector(fresh_qubit)
    sizes = topo.layer_sizes
    if dense:
        v0 = _product_vector(fresh, sizes[0])
        rho = np.outer(v0, v0.conj())
        for t in range(topo.n_transitions):
            rho = layer_map(rho, list(perceptron_unitaries(angles[t])), topo.wiring[t], sizes[t + 1],
                            fresh=np.outer(fresh, fresh.conj()))
        return rho
    factor = _product_vector(fresh, sizes[0])[None, :]
    for t in range(topo.n_transitions):
        factor = _forward_transition(factor, perceptron_unitaries(angles[t]), topo.wiring[t], sizes[t],
                                     sizes[t + 1], fresh)
    return _factor_to_rho(factor)


def parameter_shift_derivative(topo: NetworkTopology, theta, idx: int, *, dense: bool = False,
                               fresh_qubit: np.ndarray | None = None) -> np.ndarray:
    """``d rho / d theta[idx]`` by the two-point shift rule, summed over tied occurrences."""
    occ = topo.occurrences(idx)
    out = 0
    for o in occ:
        plus = shifted_output(topo, theta, o, SHIFT, dense=dense, fresh_qubit=fresh_qubit)
        minus = shifted_output(topo, theta, o, -SHIFT, dense=dense, fresh_qubit=fresh_qubit)
        out = out + 0.5 * (plus - minus)
    return out


def _gram_batch(factors: np.ndarray) -> np.ndarray:
    return np.swapaxes(factors, -1, -2) @ factors.conj()


@dataclass
class ShiftStates:
    """Output of :func:`shift_states`.

    ``groups`` holds ``(first_param, factors)`` pairs; ``factors`` has shape
    ``(36, 2, m, d)`` and entry ``[s, 0]`` (``[s, 1]``) is a factor whose Gram
    matrix is the sum over occurrences of the +pi/2 (-pi/2) shifted outputs of
    parameter ``first_param + s``.
    """

    rho: np.ndarray
    factor: np.ndarray
    groups: list[tuple[int, np.ndarray]]

    @property
    def n_params(self) -> int:
        return sum(f.shape[0] for _, f in self.groups)

    def shifted(self) -> np.ndarray:
        """``(P, 2, d, d)``: occurrence-summed +/- shifted outputs per parameter."""
        d = self.rho.shape[0]
        out = np.empty((self.n_params, 2, d, d), dtype=complex)
        for start, f in self.groups:
            out[start:start + f.shape[0]] = _gram_batch(f)
        return out

    def derivatives(self) -> np.ndarray:
        """Stack ``(P, d, d)`` of ``d rho / d theta_mu``."""
        d = self.rho.shape[0]
        out = np.empty((self.n_params, d, d), dtype=complex)
        for start, f in self.groups:
            g = _gram_batch(f)
            out[start:start + f.shape[0]] = 0.5 * (g[:, 0] - g[:, 1])
        return 0.5 * (out + np.swapaxes(out, -1, -2).conj())


def shift_states(topo: NetworkTopology, theta, fresh_qubit: np.ndarray | None = None) -> ShiftStates:
    """Forward pass plus every parameter's shifted outputs, batched per transition.

    Per transition, intermediate states after each perceptron are cached; a
    shifted perceptron is applied to the cached state, followed by the
    unshifted remainder of that transition and then the downstream
    transitions. Zero-padded rows in factors are harmless.
    """
    theta = _validate_theta(topo, theta)
    fresh = _fresh_vector(fresh_qubit)
    angles = topo.perceptron_angles(theta)
    sizes = topo.layer_sizes
    n_t = topo.n_transitions
    us_all = [perceptron_unitaries(a) for a in angles]

    factor = _product_vector(fresh, sizes[0])[None, :]
    factors_in = []
    for t in range(n_t):
        factors_in.append(factor)
        factor = _forward_transition(factor, us_all[t], topo.wiring[t], sizes[t], sizes[t + 1], fresh)
    out_factor = factor

    out_groups: list[tuple[int, np.ndarray]] = []
    slots = list(range(N_ANGLES))
    for t in range(n_t):
        n_in, n_out = sizes[t], sizes[t + 1]
        n = n_in + n_out
        joint = _joint_wiring(topo.wiring[t], n_in)
        psi = _expand(factors_in[t], n_out, fresh)
        # per perceptron k: shifted factors (36, 2, m, d_out) after transition t
        per_k = []
        shifted_all = perceptron_unitaries(np.stack([_shifted_angles(a, slots) for a in angles[t]]))
        for k, qubits in enumerate(joint):
            shifted_u = shifted_all[k].reshape(-1, 8, 8)
            batch = np.broadcast_to(psi, (shifted_u.shape[0],) + psi.shape)
            batch = apply_local(batch, shifted_u, qubits, n)
            for u_after, q_after in zip(us_all[t][k + 1:], joint[k + 1:]):
                batch = apply_local(batch, u_after, q_after, n)
            per_k.append(_to_factor(batch, n_in, n_out).reshape((N_ANGLES, 2) + (-1, 1 << n_out)))
            psi = apply_local(psi, us_all[t][k], qubits, n)
        if topo.tying is Tying.TIED_PER_LAYER:
            # sum over occurrences == concatenating factor rows
            stacked = _compress(np.concatenate(per_k, axis=-2))
            groups = [(t * N_ANGLES, stacked)]
        else:
            groups = [(topo.param_index(t, k, 0), f) for k, f in enumerate(per_k)]
        for start, f in groups:
            f = f.reshape((2 * N_ANGLES,) + f.shape[-2:])
            for t2 in range(t + 1, n_t):
                f = _forward_transition(f, us_all[t2], topo.wiring[t2], sizes[t2], sizes[t2 + 1], fresh)
            out_groups.append((start, f.reshape((N_ANGLES, 2) + f.shape[-2:])))
    out_groups.sort(key=lambda g: g[0])
    return ShiftStates(rho=_factor_to_rho(out_factor), factor=out_factor, groups=out_groups)


def all_derivatives(topo: NetworkTopology, theta, fresh_qubit: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(rho, drho)`` with ``drho`` of shape ``(P, d, d)``."""
    st = shift_states(topo, theta, fresh_qubit)
    return st.rho, st.derivatives()
