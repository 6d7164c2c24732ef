"""Exact reference: Liouvillian superoperator, steady state and RK4 dynamics.

Vectorization is column-major, ``vec(|a><b|) = |b> (x) |a>``, so
``vec(A X B) = (B.T (x) A) vec(X)``.
"""
from __future__ import annotations

import csv
import io
import warnings

import numpy as np
import scipy.linalg

from .lindblad import LindbladModel, apply_liouvillian
from .qcore import PauliString, expectation

MAX_SITES = 6


class SizeGuardError(ValueError):
    pass


class DegenerateSteadyStateWarning(RuntimeWarning):
    pass


def _guard(m: LindbladModel):
    if m.n_sites > MAX_SITES:
        raise SizeGuardError(f"exact superoperator limited to {MAX_SITES} sites, model has {m.n_sites}")


def vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return v.reshape(d, d, order="F")


def liouvillian_matrix(m: LindbladModel) -> np.ndarray:
    _guard(m)
    eye = np.eye(m.dim, dtype=complex)
    h = m.hamiltonian
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for f, gamma in m.jump_matrices:
        ff = f.conj().T @ f
        sup += gamma * (np.kron(f.conj(), f) - 0.5 * np.kron(eye, ff) - 0.5 * np.kron(ff.T, eye))
    return sup


def steady_state(m: LindbladModel, tol: float = 1e-10) -> np.ndarray:
    """Unit-trace kernel element of the Liouvillian.

    The eigenvector nearest zero seeds the solution; it is then polished by a
    least-squares solve of ``L vec(rho) = 0`` with the trace constraint. A
    warning is emitted when more than one eigenvalue lies within ``tol``
    (scaled by the operator norm) of zero.
    """
    sup = liouvillian_matrix(m)
    vals, vecs = scipy.linalg.eig(sup)
    order = np.argsort(np.abs(vals))
    scale = max(1.0, np.abs(sup).max())
    n_zero = int(np.sum(np.abs(vals) <= tol * scale * 1e2))
    if n_zero > 1:
        warnings.warn(f"steady-state manifold has dimension {n_zero}; returning one element",
                      DegenerateSteadyStateWarning, stacklevel=2)
    rho = unvec(vecs[:, order[0]])
    rho = rho / np.trace(rho)
    if n_zero <= 1:
        trace_row = vec(np.eye(m.dim, dtype=complex))[None, :]
        system = np.vstack([sup, trace_row])
        rhs = np.zeros(system.shape[0], dtype=complex)
        rhs[-1] = 1.0
        sol, *_ = scipy.linalg.lstsq(system, rhs, cond=None)
        rho = unvec(sol)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def evolve_rk4(m: LindbladModel, rho0: np.ndarray, dt: float, steps: int) -> list[np.ndarray]:
    """Classic RK4 on ``d rho/dt = L rho``; returns ``steps + 1`` states including ``rho0``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    _guard(m)
    rho = np.array(rho0, dtype=complex)
    out = [rho.copy()]
    for _ in range(steps):
        k1 = apply_liouvillian(m, rho)
        k2 = apply_liouvillian(m, rho + 0.5 * dt * k1)
        k3 = apply_liouvillian(m, rho + 0.5 * dt * k2)
        k4 = apply_liouvillian(m, rho + dt * k3)
        rho = rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        out.append(rho.copy())
    return out


def standard_observables(n_sites: int) -> dict[str, list[PauliString]]:
    """Site-averaged sigma_x, sigma_z and the sigma_x sigma_x correlator of sites 0 and 1."""
    out = {
        "sx_mean": [PauliString.from_sites(n_sites, {j: "X"}, 1.0 / n_sites) for j in range(n_sites)],
        "sz_mean": [PauliString.from_sites(n_sites, {j: "Z"}, 1.0 / n_sites) for j in range(n_sites)],
    }
    if n_sites >= 2:
        out["sxsx_01"] = [PauliString.from_sites(n_sites, {0: "X", 1: "X"})]
    return out


def measure(rho: np.ndarray, observables: dict[str, list[PauliString]]) -> dict[str, float]:
    return {name: float(sum(expectation(rho, t) for t in terms)) for name, terms in observables.items()}


def reference_csv(m: LindbladModel, values: dict[str, float]) -> str:
    """Golden-fixture CSV text: ``observable,value,model_hash``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["observable", "value", "model_hash"])
    fp = m.fingerprint()
    for name, value in values.items():
        w.writerow([name, repr(float(value)), fp])
    return buf.getvalue()
