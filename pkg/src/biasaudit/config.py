"""Experiment configuration: TOML files in, validated frozen dataclasses out.

A config file has a top-level ``kind``, ``reps`` and ``master_seed`` plus
optional sections ``[scenario]``, ``[pilot]``, ``[pilot2]``, ``[estimator]``,
``[test]``, ``[ensemble]`` and ``[universal]``. Unknown keys are rejected so
that typos do not silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .basis import BASIS_KINDS
from .dgp import DESIGN_KINDS
from .ensemble_basis import BASIS_MODES, RegressorSpec
from .functionals import ESTIMATOR_KINDS
from .universal import ESTIMATORS

KINDS = ("coverage", "bias_test", "ensemble_test", "universal")
FUNCTIONALS = ("density", "cond_variance")
PILOT_SOURCES = ("truth", "fit")
UNIVERSAL_FUNCTIONALS = ("identity", "square", "cos")
MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    """The configuration violates a documented constraint."""


@dataclass(frozen=True)
class ScenarioConfig:
    functional: str = "density"
    truth: tuple[float, ...] = (1.0, 0.3)
    p_min: float = 0.1
    clip: float = 0.05
    jumps: tuple[tuple[float, float], ...] = ()
    design: str = "iid_uniform"
    n: int = 200


@dataclass(frozen=True)
class PilotConfig:
    source: str = "truth"
    J: int = 4
    deltas: tuple[float, ...] = ()
    bias_ratio: float | None = None
    bias_coord: int = 2
    ridge: float = 1e-8


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "first_order"
    alpha: float = 0.05


@dataclass(frozen=True)
class TestConfig:
    basis: str = "cosine"
    k: int = 0
    delta: float = 0.25
    alpha: float = 0.05


@dataclass(frozen=True)
class EnsembleConfig:
    regressors: tuple[str, ...] = ("knn:25", "kernel_nw:0.2", "series_ols:5", "boosted_stumps:50:0.1")
    concat_fixed: int = 0
    basis_mode: str = "test"
    drop_tol: float = 1e-6
    compare_fixed: bool = False


@dataclass(frozen=True)
class UniversalSection:
    theta_star: float = 1.0
    B: int = 1
    alpha: float = 0.05
    grid_hi: float = 3.0
    grid_step: float = 0.01
    estimator: str = "moment"
    functional: str = "identity"
    split_fraction: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    reps: int = 100
    master_seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    pilot: PilotConfig = field(default_factory=PilotConfig)
    pilot2: PilotConfig | None = None
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    test: TestConfig = field(default_factory=TestConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    universal: UniversalSection = field(default_factory=UniversalSection)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        if out["pilot2"] is None:
            del out["pilot2"]
        return _listify(out)

    def replace(self, **changes) -> "ExperimentConfig":
        return validate(dataclasses.replace(self, **changes))


ExperimentConfig.__test__ = False
TestConfig.__test__ = False

_SECTIONS = {
    "scenario": ScenarioConfig,
    "pilot": PilotConfig,
    "pilot2": PilotConfig,
    "estimator": EstimatorConfig,
    "test": TestConfig,
    "ensemble": EnsembleConfig,
    "universal": UniversalSection,
}


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    return obj


def _tupleify(value):
    if isinstance(value, list):
        return tuple(_tupleify(v) for v in value)
    return value


def _build_section(name: str, cls, raw) -> Any:
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, value in raw.items():
        default = known[key].default
        value = _tupleify(value)
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        kwargs[key] = value
    return cls(**kwargs)


def from_dict(raw: dict[str, Any]) -> ExperimentConfig:
    raw = dict(raw)
    top = {"kind", "reps", "master_seed"}
    unknown = set(raw) - top - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    if "kind" not in raw:
        raise ConfigError("config is missing 'kind'")
    kwargs: dict[str, Any] = {k: raw[k] for k in top if k in raw}
    for name, cls in _SECTIONS.items():
        if name in raw:
            kwargs[name] = _build_section(name, cls, raw[name])
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate(cfg)


def load(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(raw)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_pilot(name: str, p: PilotConfig, sc: ScenarioConfig) -> None:
    _require(p.source in PILOT_SOURCES, f"{name}.source must be one of {PILOT_SOURCES}")
    _require(_is_int(p.J) and p.J >= 1, f"{name}.J must be an integer >= 1")
    _require(all(isinstance(d, (int, float)) for d in p.deltas), f"{name}.deltas must be numbers")
    _require(p.ridge >= 0, f"{name}.ridge must be nonnegative")
    if p.source == "fit":
        _require(len(p.deltas) <= p.J, f"{name}.deltas longer than J={p.J}")
    if p.bias_ratio is not None:
        _require(p.bias_ratio >= 0, f"{name}.bias_ratio must be nonnegative")
        _require(p.source == "truth", f"{name}.bias_ratio needs source = 'truth'")
        _require(not p.deltas, f"{name}: give either deltas or bias_ratio, not both")
        _require(_is_int(p.bias_coord) and p.bias_coord >= 2, f"{name}.bias_coord must be an integer >= 2")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every documented constraint; raise :class:`ConfigError` on the first violation."""
    _require(cfg.kind in KINDS, f"kind must be one of {KINDS}, got {cfg.kind!r}")
    _require(_is_int(cfg.reps) and cfg.reps >= 1, f"reps must be an integer >= 1, got {cfg.reps!r}")
    _require(_is_int(cfg.master_seed) and 0 <= cfg.master_seed <= MAX_SEED, "master_seed must be an unsigned 64-bit integer")

    sc = cfg.scenario
    _require(sc.functional in FUNCTIONALS, f"scenario.functional must be one of {FUNCTIONALS}")
    _require(sc.design in DESIGN_KINDS, f"scenario.design must be one of {DESIGN_KINDS}")
    _require(_is_int(sc.n) and sc.n >= 2, "scenario.n must be an integer >= 2")
    _require(len(sc.truth) >= 1 and all(isinstance(t, (int, float)) for t in sc.truth), "scenario.truth must be a list of numbers")
    _require(0 < sc.clip < 0.5, "scenario.clip must lie in (0, 1/2)")
    _require(sc.p_min > 0, "scenario.p_min must be positive")
    for j in sc.jumps:
        _require(len(j) == 2 and 0 < j[0] < 1, "scenario.jumps entries must be [location in (0,1), height]")
    if sc.functional == "density":
        _require(sc.design == "iid_uniform", "the density functional has no fixed-design analog")
        _require(not sc.jumps, "scenario.jumps only applies to the cond_variance functional")
        _require(abs(sc.truth[0] - 1.0) < 1e-12, "density truth must start with theta_1 = 1")

    _check_pilot("pilot", cfg.pilot, sc)
    if cfg.pilot2 is not None:
        _check_pilot("pilot2", cfg.pilot2, sc)

    est, test = cfg.estimator, cfg.test
    _require(est.kind in ESTIMATOR_KINDS, f"estimator.kind must be one of {ESTIMATOR_KINDS}")
    _require(0 < est.alpha < 1, "estimator.alpha must lie in (0, 1)")
    _require(test.basis in BASIS_KINDS, f"test.basis must be one of {BASIS_KINDS}")
    _require(_is_int(test.k) and test.k >= 0, "test.k must be a nonnegative integer (0 = default)")
    _require(test.delta >= 0, "test.delta must be nonnegative")
    _require(0 < test.alpha < 1, "test.alpha must lie in (0, 1)")

    if cfg.kind == "coverage":
        if est.kind == "split":
            _require(cfg.pilot2 is not None, "the split estimator needs a [pilot2] section")
        if est.kind == "plugin":
            _require(sc.functional == "density", "the plug-in estimator is only defined for the density functional")
    if cfg.kind in ("bias_test", "ensemble_test") and sc.functional == "cond_variance":
        _require(sc.design == "iid_uniform", "the conditional-variance bias test assumes uniform random covariates")
    if cfg.kind == "ensemble_test":
        _require(sc.functional == "cond_variance", "ensemble_test runs on the cond_variance functional")
        _require(sc.n >= 6, "ensemble_test needs n >= 6 for three folds")
        en = cfg.ensemble
        _require(len(en.regressors) >= 1, "ensemble.regressors must list at least one regressor")
        for r in en.regressors:
            try:
                RegressorSpec.parse(r)
            except ValueError as exc:
                raise ConfigError(f"ensemble.regressors: {exc}") from exc
        _require(_is_int(en.concat_fixed) and en.concat_fixed >= 0, "ensemble.concat_fixed must be a nonnegative integer")
        _require(en.basis_mode in BASIS_MODES, f"ensemble.basis_mode must be one of {BASIS_MODES}")
        _require(0 < en.drop_tol < 1, "ensemble.drop_tol must lie in (0, 1)")
    if cfg.kind == "universal":
        u = cfg.universal
        _require(_is_int(u.B) and u.B >= 1, "universal.B must be an integer >= 1")
        _require(0 < u.alpha < 1, "universal.alpha must lie in (0, 1)")
        _require(u.grid_hi > 0 and u.grid_step > 0, "universal grid needs grid_hi > 0 and grid_step > 0")
        _require(u.estimator in ESTIMATORS, f"universal.estimator must be one of {ESTIMATORS}")
        _require(0 < u.split_fraction < 1, "universal.split_fraction must lie in (0, 1)")
        _require(u.functional in UNIVERSAL_FUNCTIONALS, f"universal.functional must be one of {UNIVERSAL_FUNCTIONALS}")
        ratio = u.theta_star / u.grid_step
        _require(
            0 <= u.theta_star <= u.grid_hi and abs(ratio - round(ratio)) < 1e-6,
            "universal.theta_star must be a point of the theta grid",
        )
    return cfg
