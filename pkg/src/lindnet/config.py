"""Experiment configuration documents (TOML).

Grammar (every section optional except ``model``, ``network`` and ``solver``)::

    [model]
    kind = "ising1d"          # ising1d | j1j2_2d | decay
    n_sites = 3               # ising1d
    lx = 2                    # j1j2_2d
    ly = 2                    # j1j2_2d
    j = 1.0                   # ising1d
    j1 = 1.0                  # j1j2_2d
    j2 = 0.5                  # j1j2_2d
    h = 0.6
    gamma = 1.0
    periodic = true

    [network]
    layer_sizes = [2, 2, 3]
    connectivity = "local_modulo"     # local_modulo | full
    tying = "tied_per_layer"          # tied_per_layer | untied

    [solver]
    seed = 7                  # mandatory
    mode = "steady"           # steady | dynamics
    backend = "exact"         # exact | mcmc | shots
    ...                       # any SolverConfig field

    [sweep]
    parameter = "model.h"
    values = [0.2, 0.6, 1.0]
    workers = 1

    [output]
    directory = "runs"
    every = 1                 # write every n-th record to trajectory.csv
"""
from __future__ import annotations

import dataclasses
import difflib
import hashlib
import json
import sys
from dataclasses import dataclass, field
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .lindblad import LindbladModel, build_decay, build_ising1d, build_j1j2_2d
from .network import Connectivity, NetworkTopology, TopologyError, Tying
from .sr_solver import Backend, Mode, NoiseTarget, SolverConfig

MODEL_KEYS = {
    "ising1d": {"kind", "n_sites", "j", "h", "gamma", "periodic"},
    "j1j2_2d": {"kind", "lx", "ly", "j1", "j2", "h", "gamma", "periodic"},
    "decay": {"kind", "gamma", "h"},
}
MODEL_DEFAULTS = {"j": 1.0, "j1": 1.0, "j2": 0.5, "h": 1.0, "gamma": 1.0, "periodic": True}
NETWORK_KEYS = {"layer_sizes", "connectivity", "tying"}
SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}
SWEEP_KEYS = {"parameter", "values", "workers"}
OUTPUT_KEYS = {"directory", "every"}
SECTIONS = {"model": None, "network": NETWORK_KEYS, "solver": SOLVER_KEYS, "sweep": SWEEP_KEYS,
            "output": OUTPUT_KEYS}
ENUMS = {"mode": Mode, "backend": Backend, "noise_target": NoiseTarget}

# spelled-out forms used when matching misspelled keys
_SYNONYMS = {"lr": "learning_rate", "eps": "epsilon", "n": "num", "dt": "time_step"}


class ConfigError(ValueError):
    """Every violation found in a document, each prefixed by its key path."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    workers: int = 1


@dataclass(frozen=True)
class OutputSpec:
    directory: str | None = None
    every: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    network: dict
    solver: SolverConfig
    sweep: SweepSpec | None = None
    output: OutputSpec = field(default_factory=OutputSpec)

    def build_model(self) -> LindbladModel:
        return build_model(self.model)

    def build_topology(self) -> NetworkTopology:
        return NetworkTopology(tuple(self.network["layer_sizes"]), self.network["connectivity"],
                               self.network["tying"])

    def to_dict(self) -> dict:
        """Effective configuration with every default materialized (JSON-ready)."""
        solver = {k: (v.value if isinstance(v, enum_types()) else v)
                  for k, v in dataclasses.asdict(self.solver).items()}
        out = {"model": dict(self.model), "network": dict(self.network), "solver": solver,
               "output": dataclasses.asdict(self.output)}
        if self.sweep is not None:
            out["sweep"] = {"parameter": self.sweep.parameter, "values": list(self.sweep.values),
                            "workers": self.sweep.workers}
        return out

    def digest(self) -> str:
        """Short hash of everything that affects results (output placement excluded)."""
        payload = self.to_dict()
        payload.pop("output")
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]

    def with_overrides(self, **solver_fields) -> "ExperimentConfig":
        fields = {k: v for k, v in solver_fields.items() if v is not None}
        return dataclasses.replace(self, solver=dataclasses.replace(self.solver, **fields)) if fields else self

    def at_point(self, value) -> "ExperimentConfig":
        """The single-run config for one sweep value."""
        section, key = self.sweep.parameter.split(".", 1)
        if section == "model":
            return dataclasses.replace(self, model={**self.model, key: value}, sweep=None)
        if section == "solver":
            return dataclasses.replace(self, solver=dataclasses.replace(self.solver, **{key: value}), sweep=None)
        raise ConfigError([f"sweep.parameter: cannot sweep {self.sweep.parameter!r}"])


def enum_types():
    return (Mode, Backend, NoiseTarget, Connectivity, Tying)


def build_model(spec: dict) -> LindbladModel:
    kind = spec["kind"]
    if kind == "ising1d":
        return build_ising1d(spec["n_sites"], spec["j"], spec["h"], spec["gamma"], spec["periodic"])
    if kind == "j1j2_2d":
        return build_j1j2_2d(spec["lx"], spec["ly"], spec["j1"], spec["j2"], spec["h"], spec["gamma"],
                             spec["periodic"])
    return build_decay(spec["gamma"], spec["h"])


def model_sites(spec: dict) -> int:
    if spec["kind"] == "ising1d":
        return spec["n_sites"]
    if spec["kind"] == "j1j2_2d":
        return spec["lx"] * spec["ly"]
    return 1


def _expand(key: str) -> str:
    return "_".join(_SYNONYMS.get(part, part) for part in key.split("_"))


def suggest(key: str, candidates) -> str | None:
    """Closest known key, also matching spelled-out abbreviations (``lr`` -> ``learning_rate``)."""
    best, score = None, 0.0
    for cand in sorted(candidates):
        for form in {cand, _expand(cand)}:
            ratio = difflib.SequenceMatcher(None, key, form).ratio()
            if ratio > score:
                best, score = cand, ratio
    return best if score >= 0.6 else None


def _unknown(path: str, key: str, known) -> str:
    hint = suggest(key, known)
    return f"{path}{key}: unknown key" + (f" (did you mean {hint!r}?)" if hint else "")


def _check_number(problems, path, value, *, integer=False, positive=False, nonneg=False):
    kind = int if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kind):
        problems.append(f"{path}: expected {'an integer' if integer else 'a number'}, got {value!r}")
        return False
    if positive and not value > 0:
        problems.append(f"{path}: must be > 0, got {value!r}")
        return False
    if nonneg and value < 0:
        problems.append(f"{path}: must be >= 0, got {value!r}")
        return False
    return True


def _validate_model(raw: dict, problems: list[str]) -> dict | None:
    kind = raw.get("kind")
    if kind not in MODEL_KEYS:
        problems.append(f"model.kind: expected one of {sorted(MODEL_KEYS)}, got {kind!r}")
        return None
    spec = {"kind": kind}
    for key in raw:
        if key not in MODEL_KEYS[kind]:
            problems.append(_unknown("model.", key, MODEL_KEYS[kind]))
    for key in sorted(MODEL_KEYS[kind] - {"kind"}):
        if key in raw:
            spec[key] = raw[key]
        elif key in MODEL_DEFAULTS:
            spec[key] = MODEL_DEFAULTS[key]
        else:
            problems.append(f"model.{key}: required for kind {kind!r}")
    for key in ("n_sites", "lx", "ly"):
        if key in spec:
            _check_number(problems, f"model.{key}", spec[key], integer=True, positive=True)
    for key in ("j", "j1", "j2", "h"):
        if key in spec:
            _check_number(problems, f"model.{key}", spec[key])
    if "gamma" in spec:
        _check_number(problems, "model.gamma", spec["gamma"], nonneg=True)
    if "periodic" in spec and not isinstance(spec["periodic"], bool):
        problems.append(f"model.periodic: expected true/false, got {spec['periodic']!r}")
    return spec


def _validate_network(raw: dict, problems: list[str]) -> dict:
    spec = {"connectivity": Connectivity.LOCAL_MODULO.value, "tying": Tying.TIED_PER_LAYER.value}
    for key in raw:
        if key not in NETWORK_KEYS:
            problems.append(_unknown("network.", key, NETWORK_KEYS))
    sizes = raw.get("layer_sizes")
    if sizes is None:
        problems.append("network.layer_sizes: required")
    elif not isinstance(sizes, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in sizes):
        problems.append(f"network.layer_sizes: expected a list of integers, got {sizes!r}")
    else:
        spec["layer_sizes"] = list(sizes)
    for key, enum_cls in (("connectivity", Connectivity), ("tying", Tying)):
        if key in raw:
            try:
                spec[key] = enum_cls(raw[key]).value
            except ValueError:
                problems.append(f"network.{key}: expected one of {[e.value for e in enum_cls]}, got {raw[key]!r}")
    return spec


def _validate_solver(raw: dict, problems: list[str]) -> SolverConfig | None:
    for key in raw:
        if key not in SOLVER_KEYS:
            problems.append(_unknown("solver.", key, SOLVER_KEYS))
    if "seed" not in raw:
        problems.append("solver.seed: required")
    kwargs = {}
    for key, value in raw.items():
        if key not in SOLVER_KEYS:
            continue
        if key in ENUMS:
            try:
                kwargs[key] = ENUMS[key](value)
            except ValueError:
                problems.append(f"solver.{key}: expected one of {[e.value for e in ENUMS[key]]}, got {value!r}")
            continue
        if key in ("seed", "max_steps", "n_samples", "shots", "burn_in"):
            ok = _check_number(problems, f"solver.{key}", value, integer=True, nonneg=True)
        elif key == "convergence_tol":
            ok = _check_number(problems, f"solver.{key}", value, positive=True)
        else:
            ok = _check_number(problems, f"solver.{key}", value)
        if ok:
            kwargs[key] = value
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        problems.extend(f"solver: {p}" for p in str(exc).split("; "))
        return None


def _validate_sweep(raw: dict, problems: list[str], model: dict | None) -> SweepSpec | None:
    for key in raw:
        if key not in SWEEP_KEYS:
            problems.append(_unknown("sweep.", key, SWEEP_KEYS))
    param, values = raw.get("parameter"), raw.get("values")
    if not isinstance(param, str) or "." not in param:
        problems.append(f"sweep.parameter: expected 'section.key', got {param!r}")
        return None
    section, key = param.split(".", 1)
    if section == "model":
        if model is not None and key not in MODEL_KEYS[model["kind"]] - {"kind", "n_sites", "lx", "ly"}:
            problems.append(f"sweep.parameter: {param!r} is not a sweepable model parameter")
    elif section == "solver":
        if key not in SOLVER_KEYS or key in ENUMS:
            problems.append(f"sweep.parameter: {param!r} is not a sweepable solver parameter")
    else:
        problems.append(f"sweep.parameter: only model.* and solver.* can be swept, got {param!r}")
    if not isinstance(values, list) or not values:
        problems.append("sweep.values: expected a non-empty list")
        return None
    workers = raw.get("workers", 1)
    _check_number(problems, "sweep.workers", workers, integer=True, positive=True)
    return SweepSpec(param, tuple(values), workers)


def _validate_output(raw: dict, problems: list[str]) -> OutputSpec:
    for key in raw:
        if key not in OUTPUT_KEYS:
            problems.append(_unknown("output.", key, OUTPUT_KEYS))
    every = raw.get("every", 1)
    _check_number(problems, "output.every", every, integer=True, positive=True)
    directory = raw.get("directory")
    if directory is not None and not isinstance(directory, str):
        problems.append(f"output.directory: expected a string, got {directory!r}")
    return OutputSpec(directory=directory, every=every)


def _sizes_ok(model: dict) -> bool:
    keys = {"ising1d": ("n_sites",), "j1j2_2d": ("lx", "ly")}.get(model["kind"], ())
    return all(isinstance(model.get(k), int) and not isinstance(model.get(k), bool) for k in keys)


def validate_config(doc: dict) -> ExperimentConfig:
    """Validate a parsed document; raises :class:`ConfigError` listing every problem."""
    problems: list[str] = []
    for name in doc:
        if name not in SECTIONS:
            problems.append(_unknown("", name, SECTIONS))
        elif not isinstance(doc[name], dict):
            problems.append(f"{name}: expected a table")
    for name in ("model", "network", "solver"):
        if name not in doc:
            problems.append(f"{name}: section required")

    def section(name):
        value = doc.get(name, {})
        return value if isinstance(value, dict) else {}

    model = _validate_model(section("model"), problems) if "model" in doc else None
    network = _validate_network(section("network"), problems) if "network" in doc else None
    solver = _validate_solver(section("solver"), problems) if "solver" in doc else None
    sweep = _validate_sweep(section("sweep"), problems, model) if "sweep" in doc else None
    output = _validate_output(section("output"), problems)

    if model is not None and network is not None and "layer_sizes" in network and _sizes_ok(model):
        try:
            topo = NetworkTopology(tuple(network["layer_sizes"]), network["connectivity"], network["tying"])
        except (TopologyError, ValueError) as exc:
            problems.append(f"network.layer_sizes: {exc}")
        else:
            n = model_sites(model)
            if topo.n_output != n:
                key = {"ising1d": "model.n_sites", "j1j2_2d": "model.lx * model.ly"}.get(model["kind"], "model.kind")
                problems.append(f"network.layer_sizes[-1] = {topo.n_output} does not match {key} = {n}")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(model=model, network=network, solver=solver, sweep=sweep, output=output)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    return validate_config(doc)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text)


def config_value(cfg: ExperimentConfig, dotted: str) -> Any:
    section, key = dotted.split(".", 1)
    return cfg.model[key] if section == "model" else getattr(cfg.solver, key)
