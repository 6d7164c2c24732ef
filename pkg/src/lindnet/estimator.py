"""scikit-learn style front end over :func:`lindnet.sr_solver.run`.

``fit`` takes a :class:`~lindnet.lindblad.LindbladModel`; ``predict`` takes
observables (a Pauli string, a list of them, or a name -> terms mapping)
and returns expectation values in the fitted state(s).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ed_oracle import standard_observables
from .lindblad import LindbladModel
from .network import NetworkTopology
from .qcore import PauliString, expectation
from .sr_solver import Mode, SolverConfig, run


def check_model(model) -> LindbladModel:
    if not isinstance(model, LindbladModel):
        raise TypeError(f"expected a LindbladModel, got {type(model).__name__}")
    return model


def check_topology(layer_sizes, connectivity, tying, model: LindbladModel) -> NetworkTopology:
    topo = NetworkTopology(tuple(int(s) for s in layer_sizes), connectivity, tying)
    if topo.n_output != model.n_sites:
        raise ValueError(f"layer_sizes[-1] = {topo.n_output} but the model has {model.n_sites} sites")
    return topo


def check_observables(obs, n_sites: int) -> dict[str, list[PauliString]]:
    """Normalize ``obs`` into a name -> terms mapping acting on ``n_sites`` qubits."""
    if isinstance(obs, PauliString):
        obs = {obs.letters: [obs]}
    elif isinstance(obs, dict):
        obs = {name: [t] if isinstance(t, PauliString) else list(t) for name, t in obs.items()}
    else:
        obs = {t.letters: [t] for t in obs}
    for name, terms in obs.items():
        for t in terms:
            if not isinstance(t, PauliString):
                raise TypeError(f"observable {name!r} holds {type(t).__name__}, expected PauliString")
            if t.n_qubits != n_sites:
                raise ValueError(f"observable {name!r} acts on {t.n_qubits} qubits, model has {n_sites}")
    return obs


class _SolverBase(BaseEstimator):
    _mode: Mode

    def _solver_config(self, **extra) -> SolverConfig:
        return SolverConfig(
            mode=self._mode,
            max_steps=self.max_steps,
            tikhonov_eps=self.tikhonov_eps,
            noise_eps=self.noise_eps,
            seed=self.random_state,
            backend=self.backend,
            n_samples=self.n_samples,
            shots=self.shots,
            **extra,
        )

    def _fit(self, model, cfg: SolverConfig, keep_states: bool):
        model = check_model(model)
        topo = check_topology(self.layer_sizes, self.connectivity, self.tying, model)
        result = run(cfg, model, topo, standard_observables(model.n_sites), keep_states=keep_states)
        self.model_ = model
        self.topology_ = topo
        self.theta_ = result.theta
        self.rho_ = result.rho
        self.records_ = result.records
        self.status_ = result.status
        self.n_iter_ = len(result.records) - 1
        return result

    @property
    def delta_L_(self) -> complex:
        check_is_fitted(self, "records_")
        last = self.records_[-1]
        return complex(last.deltaL_re, last.deltaL_im)

    def score(self, X=None, y=None) -> float:
        """Negative ``|deltaL|`` of the fitted state; higher is better."""
        return -abs(self.delta_L_)


class SteadyStateSolver(_SolverBase):
    """Variational steady state of a Lindblad model.

    Args:
        layer_sizes: Qubits per network layer; the last entry must equal the site count.
        lr0: Initial learning rate.
        lr_decay: Per-step geometric decay of the learning rate.
        convergence_tol: Stop once ``|deltaL|`` drops below this (``None`` runs all steps).
        random_state: Seed for initialization, noise and sampling.

    Example:
        >>> from lindnet.ed_oracle import standard_observables
        >>> from lindnet.lindblad import build_ising1d
        >>> est = SteadyStateSolver(layer_sizes=(2, 2, 3), max_steps=10).fit(build_ising1d(3))
        >>> est.predict(standard_observables(3)).shape
        (3,)
    """

    _mode = Mode.STEADY

    def __init__(self, layer_sizes=(2, 2, 3), connectivity="local_modulo", tying="tied_per_layer",
                 backend="exact", lr0=0.01, lr_decay=0.999, max_steps=3000, tikhonov_eps=1e-4, noise_eps=0.0,
                 n_samples=50_000, shots=100_000, convergence_tol=None, random_state=0):
        self.layer_sizes = layer_sizes
        self.connectivity = connectivity
        self.tying = tying
        self.backend = backend
        self.lr0 = lr0
        self.lr_decay = lr_decay
        self.max_steps = max_steps
        self.tikhonov_eps = tikhonov_eps
        self.noise_eps = noise_eps
        self.n_samples = n_samples
        self.shots = shots
        self.convergence_tol = convergence_tol
        self.random_state = random_state

    def fit(self, X, y=None):
        cfg = self._solver_config(lr0=self.lr0, lr_decay=self.lr_decay, convergence_tol=self.convergence_tol)
        self.converged_ = self._fit(X, cfg, keep_states=False).converged
        return self

    def predict(self, X) -> np.ndarray:
        """Expectation values ``Tr(rho O)`` in the fitted state, one per observable."""
        check_is_fitted(self, "rho_")
        obs = check_observables(X, self.model_.n_sites)
        return np.array([sum(expectation(self.rho_, t) for t in terms) for terms in obs.values()])


class DynamicsSolver(_SolverBase):
    """Variational real-time evolution from the network's initial state.

    ``predict`` returns an array of shape ``(n_times, n_observables)``;
    ``times_`` holds the matching time stamps.
    """

    _mode = Mode.DYNAMICS

    def __init__(self, layer_sizes=(2, 2, 3), connectivity="local_modulo", tying="tied_per_layer",
                 backend="exact", dt=5e-3, max_steps=800, tikhonov_eps=1e-4, noise_eps=0.0, n_samples=50_000,
                 shots=100_000, random_state=0):
        self.layer_sizes = layer_sizes
        self.connectivity = connectivity
        self.tying = tying
        self.backend = backend
        self.dt = dt
        self.max_steps = max_steps
        self.tikhonov_eps = tikhonov_eps
        self.noise_eps = noise_eps
        self.n_samples = n_samples
        self.shots = shots
        self.random_state = random_state

    def fit(self, X, y=None):
        result = self._fit(X, self._solver_config(dt=self.dt), keep_states=True)
        self.states_ = result.states
        self.times_ = np.array([r.time for r in result.records])
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "states_")
        obs = check_observables(X, self.model_.n_sites)
        return np.array([[sum(expectation(rho, t) for t in terms) for terms in obs.values()]
                         for rho in self.states_])
