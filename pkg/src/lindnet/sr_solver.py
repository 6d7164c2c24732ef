"""Stochastic-reconfiguration assembly, update rule and the training loop.

With ``r = vec(rho) / ||rho||`` the linear system reads ``S dtheta/dt = f``,

    S_{mu nu} = Re<d_mu r, d_nu r> - Re[<d_mu r, r><r, d_nu r>]
    f_mu      = Re<d_mu r, L r>    - Re[<d_mu r, r><r, L r>]

and parameters move by ``lr * (S + eps I)^-1 f`` per iteration.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg

from .lindblad import LindbladModel, apply_liouvillian
from .network import NetworkTopology, all_derivatives, feedforward
from .qcore import PauliString, expectation

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    STEADY = "steady"
    DYNAMICS = "dynamics"


class Backend(str, enum.Enum):
    EXACT = "exact"
    MCMC = "mcmc"
    SHOTS = "shots"


class NoiseTarget(str, enum.Enum):
    DERIVATIVES = "derivatives"
    SR = "sr"


class SolverError(RuntimeError):
    pass


@dataclass
class SrSystem:
    """Real SR matrix ``S`` and force ``f``; stderr arrays for sampled backends."""

    S: np.ndarray
    f: np.ndarray
    S_stderr: np.ndarray | None = None
    f_stderr: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return self.f.shape[0]


@dataclass(frozen=True)
class SolverConfig:
    mode: Mode = Mode.STEADY
    lr0: float = 0.01
    lr_decay: float = 0.999
    dt: float = 5e-3
    max_steps: int = 3000
    tikhonov_eps: float = 1e-4
    noise_eps: float = 0.0
    noise_target: NoiseTarget = NoiseTarget.DERIVATIVES
    seed: int = 0
    backend: Backend = Backend.EXACT
    n_samples: int = 50_000
    burn_in: int | None = None
    shots: int = 100_000
    convergence_tol: float | None = None
    init_scale: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "backend", Backend(self.backend))
        object.__setattr__(self, "noise_target", NoiseTarget(self.noise_target))
        problems = []
        if not self.lr0 > 0:
            problems.append("lr0 must be > 0")
        if self.mode is Mode.DYNAMICS and not self.dt > 0:
            problems.append("dt must be > 0 in dynamics mode")
        if self.tikhonov_eps < 0:
            problems.append("tikhonov_eps must be >= 0")
        if self.noise_eps < 0:
            problems.append("noise_eps must be >= 0")
        if self.max_steps < 1:
            problems.append("max_steps must be >= 1")
        if self.backend is Backend.SHOTS and self.noise_eps > 0 and self.noise_target is NoiseTarget.DERIVATIVES:
            problems.append("the shots backend has no derivative matrices; use noise_target = 'sr'")
        if problems:
            raise ValueError("; ".join(problems))

    def learning_rate(self, step: int) -> float:
        if self.mode is Mode.DYNAMICS:
            return self.dt
        return self.lr0 * self.lr_decay ** step


@dataclass
class TrajectoryRecord:
    step: int
    time: float | None
    observables: dict[str, float]
    deltaL_re: float
    deltaL_im: float
    sr_residual: float
    flags: tuple[str, ...] = ()


@dataclass
class RunResult:
    records: list[TrajectoryRecord]
    theta: np.ndarray
    rho: np.ndarray
    converged: bool
    status: str = "ok"
    states: list[np.ndarray] | None = None


def normalized_derivatives(rho: np.ndarray, drho: np.ndarray):
    """``(r, dr, norm)``: unit-HS-norm ``rho`` and its quotient-rule derivatives."""
    norm = math.sqrt(float(np.vdot(rho, rho).real))
    if norm == 0:
        raise SolverError("density matrix has zero Hilbert-Schmidt norm")
    r = rho / norm
    proj = np.einsum("ij,mij->m", rho.conj(), drho).real / norm**3
    dr = drho / norm - proj[:, None, None] * rho[None]
    return r, dr, norm


def contract_sr(r: np.ndarray, dr: np.ndarray, lr_vec: np.ndarray) -> SrSystem:
    """Form ``S`` and ``f`` from a unit-norm state, its derivatives and ``L r``."""
    d = dr.reshape(dr.shape[0], -1)
    rv = r.reshape(-1)
    lv = lr_vec.reshape(-1)
    overlap = d.conj() @ rv  # <d_mu r, r>
    gram = d.conj() @ d.T
    S = gram.real - np.real(np.outer(overlap, overlap.conj()))
    rl = np.vdot(rv, lv)
    f = np.real(d.conj() @ lv) - np.real(overlap * rl)
    S = 0.5 * (S + S.T)
    return SrSystem(S=S, f=f)


def inject_noise(derivs: np.ndarray, eps_r: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. N(0, eps_r^2) to real and imaginary parts of every derivative entry."""
    if eps_r < 0:
        raise ValueError("noise strength must be >= 0")
    if eps_r == 0:
        return derivs
    noise = rng.normal(0.0, eps_r, size=derivs.shape) + 1j * rng.normal(0.0, eps_r, size=derivs.shape)
    return derivs + noise


def inject_sr_noise(sys: SrSystem, eps_r: float, rng: np.random.Generator) -> SrSystem:
    """Alternative noise model: symmetric Gaussian perturbation of ``S`` and ``f``."""
    if eps_r == 0:
        return sys
    p = sys.n_params
    a = rng.normal(0.0, eps_r, size=(p, p))
    return replace(sys, S=sys.S + 0.5 * (a + a.T), f=sys.f + rng.normal(0.0, eps_r, size=p))


def assemble_exact(m: LindbladModel, topo: NetworkTopology, theta, *, noise_eps: float = 0.0,
                   rng: np.random.Generator | None = None) -> SrSystem:
    """Dense-trace assembly from parameter-shift derivatives."""
    if topo.n_output != m.n_sites:
        raise ValueError(f"network outputs {topo.n_output} qubits, model has {m.n_sites} sites")
    rho, drho = all_derivatives(topo, theta)
    if noise_eps:
        drho = inject_noise(drho, noise_eps, rng if rng is not None else np.random.default_rng())
    return assemble_from_derivatives(m, rho, drho)


def assemble_from_derivatives(m: LindbladModel, rho: np.ndarray, drho: np.ndarray) -> SrSystem:
    r, dr, norm = normalized_derivatives(rho, drho)
    sys = contract_sr(r, dr, apply_liouvillian(m, r))
    sys.info["rho"] = rho
    return sys


def solve_update(sys: SrSystem, lr: float, eps: float) -> tuple[np.ndarray, dict]:
    """``lr (S + eps I)^-1 f`` with a pseudo-inverse fallback for singular systems."""
    if eps < 0:
        raise ValueError("Tikhonov shift must be >= 0")
    if not (np.all(np.isfinite(sys.S)) and np.all(np.isfinite(sys.f))):
        raise SolverError("non-finite entries in S or f")
    a = sys.S + eps * np.eye(sys.n_params)
    info = {"pinv": False}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            x = scipy.linalg.solve(a, sys.f, assume_a="sym")
        if not np.all(np.isfinite(x)):
            raise np.linalg.LinAlgError("non-finite solution")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
        x = scipy.linalg.pinvh(a, rtol=1e-10) @ sys.f
        info["pinv"] = True
    info["residual"] = float(np.linalg.norm(a @ x - sys.f))
    with np.errstate(over="ignore"):
        # overflow surfaces as non-finite parameters, which run() reports
        return lr * x, info


def delta_L(m: LindbladModel, rho: np.ndarray) -> complex:
    """``<rho, L rho> / <rho, rho>`` under the Hilbert-Schmidt product."""
    return complex(np.vdot(rho, apply_liouvillian(m, rho)) / np.vdot(rho, rho))


def _observe(rho, observables: dict[str, list[PauliString]]) -> dict[str, float]:
    return {name: float(sum(expectation(rho, t) for t in terms)) for name, terms in observables.items()}


Assembler = Callable[[LindbladModel, NetworkTopology, np.ndarray, np.random.Generator], SrSystem]


def make_assembler(cfg: SolverConfig) -> Assembler:
    """Backend-specific ``(model, topo, theta, rng) -> SrSystem``; ``info['rho']`` holds the state."""
    if cfg.backend is Backend.EXACT:
        def assemble(m, topo, theta, rng):
            rho, drho = all_derivatives(topo, theta)
            if cfg.noise_target is NoiseTarget.DERIVATIVES:
                drho = inject_noise(drho, cfg.noise_eps, rng)
            return assemble_from_derivatives(m, rho, drho)
        return assemble
    if cfg.backend is Backend.MCMC:
        from .mcmc import estimate_sr

        def assemble(m, topo, theta, rng):
            noise = cfg.noise_eps if cfg.noise_target is NoiseTarget.DERIVATIVES else 0.0
            return estimate_sr(m, topo, theta, cfg.n_samples, cfg.burn_in, rng, noise_eps=noise)
        return assemble
    from .shotsim import ShotConfig, assemble_shots

    def assemble(m, topo, theta, rng):
        return assemble_shots(m, topo, theta, ShotConfig(shots=cfg.shots, rng=rng))
    return assemble


def init_params(topo: NetworkTopology, scale: float, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-scale, scale, size=topo.n_params)


def run(cfg: SolverConfig, m: LindbladModel, topo: NetworkTopology, observables: dict[str, list[PauliString]],
        theta0: np.ndarray | None = None, callback: Callable[[TrajectoryRecord], None] | None = None,
        keep_states: bool = False) -> RunResult:
    """Iterate feedforward -> assembly -> (noise) -> update, one record per iteration.

    Records describe the state *before* that iteration's update, so record 0
    is the initial network state at time 0. With ``keep_states`` the density
    matrix behind every record is kept as well.
    """
    if topo.n_output != m.n_sites:
        raise ValueError(f"network outputs {topo.n_output} qubits, model has {m.n_sites} sites")
    init_ss, noise_ss, backend_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng = np.random.default_rng(init_ss)
    noise_rng = np.random.default_rng(noise_ss)
    backend_rng = np.random.default_rng(backend_ss)
    theta = init_params(topo, cfg.init_scale, init_rng) if theta0 is None else np.array(theta0, dtype=float)
    assemble = make_assembler(cfg)

    records: list[TrajectoryRecord] = []
    states: list[np.ndarray] | None = [] if keep_states else None
    converged = False
    status = "ok"
    rho = feedforward(topo, theta)
    for step in range(cfg.max_steps):
        # exact-backend noise draws from the noise stream; sampled backends from their own
        rng = noise_rng if cfg.backend is Backend.EXACT else backend_rng
        sys = assemble(m, topo, theta, rng)
        if cfg.noise_target is NoiseTarget.SR:
            sys = inject_sr_noise(sys, cfg.noise_eps, noise_rng)
        rho = sys.info.get("rho")
        if rho is None:
            rho = feedforward(topo, theta)
        dl = delta_L(m, rho)
        obs = _observe(rho, observables)
        time = step * cfg.dt if cfg.mode is Mode.DYNAMICS else None
        if cfg.mode is Mode.STEADY and cfg.convergence_tol is not None and abs(dl) < cfg.convergence_tol:
            rec = TrajectoryRecord(step, time, obs, dl.real, dl.imag, 0.0, ("converged",))
            records.append(rec)
            if states is not None:
                states.append(rho)
            if callback:
                callback(rec)
            converged = True
            break
        try:
            dtheta, info = solve_update(sys, cfg.learning_rate(step), cfg.tikhonov_eps)
        except SolverError as exc:
            status = f"aborted at step {step}: {exc}"
            break
        flags = ("pinv",) if info["pinv"] else ()
        rec = TrajectoryRecord(step, time, obs, dl.real, dl.imag, info["residual"], flags)
        records.append(rec)
        if states is not None:
            states.append(rho)
        if callback:
            callback(rec)
        theta = theta + dtheta
        if not np.all(np.isfinite(theta)):
            # the last finite record stays; nothing non-finite is emitted
            status = f"aborted at step {step + 1}: non-finite parameters"
            break
    else:
        rho = feedforward(topo, theta)
        dl = delta_L(m, rho)
        time = cfg.max_steps * cfg.dt if cfg.mode is Mode.DYNAMICS else None
        records.append(TrajectoryRecord(cfg.max_steps, time, _observe(rho, observables), dl.real, dl.imag, 0.0,
                                        ("final",)))
        if states is not None:
            states.append(rho)
        if cfg.mode is Mode.STEADY and cfg.convergence_tol is not None:
            converged = abs(dl) < cfg.convergence_tol
    log.debug("run finished after %d records, status %s", len(records), status)
    return RunResult(records=records, theta=theta, rho=rho, converged=converged, status=status, states=states)
