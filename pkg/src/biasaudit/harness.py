"""Deterministic Monte Carlo engine.

Every replication draws from its own random stream, derived from
``(master_seed, rep)`` by numpy's ``SeedSequence`` hashing, so a replication's
output depends only on the config, the master seed and its index. Worker count
and execution order cannot change results.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Iterable

import numpy as np
from scipy.optimize import brentq

from . import bias_test as bt
from .basis import FixedBasis
from .config import ConfigError, ExperimentConfig, PilotConfig, validate
from .dgp import (
    Design,
    ModelError,
    PropensityModel,
    SeriesDensity,
    sample_conditional,
    sample_density,
    true_expected_cond_variance,
    true_expected_density,
)
from .ensemble_basis import RegressorSpec, build_estimated_basis, fit_regressor
from .functionals import (
    conditional_bias_oracle_cv,
    conditional_bias_oracle_density,
    first_order_cond_variance,
    first_order_expected_density,
    plugin_expected_density,
    split_cond_variance,
    split_expected_density,
)
from .pilots import (
    Fold,
    PilotDensity,
    PilotRegression,
    corrupt_pilot,
    fit_series_density,
    fit_series_regression,
)
from .quadrature import integrate
from .universal import UniversalConfig, log_tbar, profile_from_log_tbar, set_from_log_tbar

log = logging.getLogger(__name__)

FIXED_BASIS_SIZE = 64

UNIVERSAL_MAPS = {
    "identity": lambda t: t,
    "square": lambda t: t * t,
    "cos": math.cos,
}

# metric name -> record field, per experiment kind
_METRICS = {
    "coverage": {
        "psi_hat": "psi_hat",
        "se": "se",
        "error": "error",
        "bias_oracle": "bias_oracle",
        "coverage": "covered",
        "ci_width": "ci_width",
    },
    "bias_test": {
        "bias_k_hat": "bias_k_hat",
        "bias_k_se": "bias_k_se",
        "bias_oracle": "bias_oracle",
        "psi_hat": "psi_hat",
        "psi_se": "psi_se",
        "rejection_rate": "reject",
        "ci_coverage": "ci_covered",
    },
    "universal": {
        "coverage": "covered",
        "set_lo": "set_lo",
        "set_hi": "set_hi",
        "set_width": "set_width",
        "clip_rate": "clipped",
        "functional_coverage": "f_covered",
    },
}
_METRICS["ensemble_test"] = {
    **_METRICS["bias_test"],
    "retained": "retained",
    "gram_error": "gram_error",
    "rejection_rate_fixed": "reject_fixed",
}


class ReplicationError(RuntimeError):
    def __init__(self, rep: int, master_seed: int, cause: BaseException):
        super().__init__(f"replication {rep} (master_seed={master_seed}) failed: {cause!r}")
        self.rep, self.master_seed, self.cause = rep, master_seed, cause


def rep_stream(master_seed: int, rep: int) -> np.random.Generator:
    """Independent generator for replication ``rep``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(rep,))))


def mc_se(values) -> float:
    """Monte Carlo standard error ``sd / sqrt(count)``."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise ValueError("MC standard error needs at least two values")
    return _sd(v) / math.sqrt(len(v))


def _sd(v: np.ndarray) -> float:
    m = math.fsum(v) / len(v)
    return math.sqrt(math.fsum((v - m) ** 2) / (len(v) - 1))


@dataclass(frozen=True)
class Metric:
    mean: float
    sd: float
    mc_se: float
    count: int

    def to_dict(self) -> dict[str, Any]:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class MetricsSummary:
    kind: str
    reps: int
    master_seed: int
    metrics: dict[str, Metric]

    def __getitem__(self, name: str) -> Metric:
        return self.metrics[name]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "metrics": {k: m.to_dict() for k, m in self.metrics.items()},
        }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[dict[str, Any]]
    summary: MetricsSummary


def summarize(config: ExperimentConfig, records: list[dict[str, Any]]) -> MetricsSummary:
    metrics = {}
    for name, key in _METRICS[config.kind].items():
        vals = np.array([float(r[key]) for r in records if key in r], dtype=float)
        if len(vals) == 0:
            continue
        mean = math.fsum(vals) / len(vals)
        sd = _sd(vals) if len(vals) > 1 else float("nan")
        metrics[name] = Metric(mean, sd, sd / math.sqrt(len(vals)), len(vals))
    return MetricsSummary(config.kind, len(records), config.master_seed, metrics)


def fold_sizes(n: int, parts: int) -> list[int]:
    """Equal parts; the remainder goes to the last (test) fold."""
    base = n // parts
    return [base] * (parts - 1) + [n - base * (parts - 1)]


def fold_indices(n: int, parts: int, design_kind: str) -> list[np.ndarray]:
    """Disjoint index sets covering ``range(n)``.

    Random designs use contiguous blocks (the draws are exchangeable); fixed
    grids are dealt out round-robin so that each fold still spans [0, 1].
    """
    sizes = fold_sizes(n, parts)
    if parts == 1:
        return [np.arange(n)]
    if design_kind == "fixed_grid":
        order = np.lexsort((np.arange(n), np.arange(n) % parts))
    else:
        order = np.arange(n)
    cuts = np.cumsum([0] + sizes)
    folds = [np.sort(order[a:b]) for a, b in zip(cuts[:-1], cuts[1:])]
    if np.bincount(np.concatenate(folds), minlength=n).max(initial=0) > 1:
        raise AssertionError("folds do not partition the sample")
    return folds


def _pad(a, size: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = np.zeros(max(size, len(a)))
    out[: len(a)] = a
    return out


class _Scenario:
    """Everything about a config that does not change across replications."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        sc = cfg.scenario
        self.kind = cfg.kind
        self.functional = sc.functional
        self.design = Design(sc.design, sc.n)
        if cfg.kind == "universal":
            u = cfg.universal
            self.ucfg = UniversalConfig(u.B, u.alpha, u.grid_hi, u.grid_step, u.estimator, u.split_fraction)
            self.umap = UNIVERSAL_MAPS[u.functional]
            return
        if self.functional == "density":
            self.truth = SeriesDensity(sc.truth, p_min=sc.p_min)
        else:
            self.truth = PropensityModel(sc.truth, clip=sc.clip, jumps=sc.jumps)

        self.pilot_cfgs = [cfg.pilot]
        if cfg.kind == "coverage" and cfg.estimator.kind == "split":
            self.pilot_cfgs.append(cfg.pilot2)
        if cfg.kind == "ensemble_test":
            self.fold_names = ["pilot", "ensemble", "test"]
        else:
            fitted = sum(p.source == "fit" for p in self.pilot_cfgs)
            self.fold_names = [f"aux{i + 1}" for i in range(fitted)] + ["main"]
        self.main_n = fold_sizes(sc.n, len(self.fold_names))[-1]

        if cfg.kind in ("bias_test", "ensemble_test"):
            self.k = cfg.test.k or bt.default_k(self.main_n)
            self.basis = FixedBasis(cfg.test.basis, max(FIXED_BASIS_SIZE, self.k))
        if cfg.kind == "ensemble_test":
            self.specs = [RegressorSpec.parse(r) for r in cfg.ensemble.regressors]
            self.cosine = FixedBasis("cosine", FIXED_BASIS_SIZE)

        self.pilot_cfgs = [self._resolve_ratio(p) for p in self.pilot_cfgs]
        # pilots built from the truth are the same in every replication
        self.fixed_pilots = [self._truth_pilot(p) if p.source == "truth" else None for p in self.pilot_cfgs]
        if self.functional == "cond_variance" and self.design.kind == "iid_uniform":
            self.psi_true = true_expected_cond_variance(self.truth, self.design)
        elif self.functional == "density":
            self.psi_true = true_expected_density(self.truth)
        self.fixed_bias_k = None
        if cfg.kind == "bias_test" and self.fixed_pilots[0] is not None:
            self.fixed_bias_k = self.projected_bias(self.fixed_pilots[0], self.basis, self.k)

    # -- pilots -----------------------------------------------------------
    def _truth_pilot(self, p: PilotConfig, deltas=None):
        deltas = p.deltas if deltas is None else deltas
        if self.functional == "density":
            base = PilotDensity(_pad(self.truth.coefficients, len(deltas)))
        else:
            base = PilotRegression(_pad(self.truth.raw_coefficients, len(deltas)), clip=self.truth.clip)
        return corrupt_pilot(base, deltas) if len(deltas) else base

    def _fit_pilot(self, p: PilotConfig, fold: Fold):
        if self.functional == "density":
            pilot = fit_series_density(fold, p.J)
        else:
            pilot = fit_series_regression(fold, p.J, ridge=p.ridge, clip=self.truth.clip)
        return corrupt_pilot(pilot, p.deltas) if len(p.deltas) else pilot

    def projected_bias(self, pilot, basis, k: int) -> float:
        if self.functional == "density":
            return bt.projected_bias_density(pilot, self.truth, basis, k)
        return bt.projected_bias_cv(pilot, self.truth, basis, k)

    def population_psi_se(self, pilot) -> float:
        """Standard error of the first-order estimator under the true law, by quadrature."""
        if self.functional == "density":
            p = self.truth.pdf
            m1 = integrate(lambda x: pilot(x) * p(x))
            m2 = integrate(lambda x: pilot(x) ** 2 * p(x))
            var = 4.0 * (m2 - m1 * m1)
        else:
            pi = self.truth
            cuts = sorted(set(pi.breakpoints()) | set(pilot.breakpoints()))
            m1 = integrate(lambda x: pi(x) * (1 - pilot(x)) ** 2 + (1 - pi(x)) * pilot(x) ** 2, breakpoints=cuts)
            m2 = integrate(lambda x: pi(x) * (1 - pilot(x)) ** 4 + (1 - pi(x)) * pilot(x) ** 4, breakpoints=cuts)
            var = m2 - m1 * m1
        return math.sqrt(max(var, 0.0) / self.main_n)

    def _resolve_ratio(self, p: PilotConfig) -> PilotConfig:
        if p.bias_ratio is None:
            return p
        c = calibrate_corruption(self, p.bias_ratio, p.bias_coord)
        deltas = tuple(float(v) for v in c * np.eye(p.bias_coord)[p.bias_coord - 1])
        return replace(p, deltas=deltas, bias_ratio=None)

    # -- data ---------------------------------------------------------------
    def draw(self, rng: np.random.Generator) -> list[Fold]:
        n = self.design.n
        if self.functional == "density":
            x, a = sample_density(self.truth, n, rng), None
        else:
            x, a = sample_conditional(self.design, self.truth, rng)
        idx = fold_indices(n, len(self.fold_names), self.design.kind)
        return [Fold(x[i], name, None if a is None else a[i]) for name, i in zip(self.fold_names, idx)]

    def pilots_for(self, folds: list[Fold]) -> list:
        aux = iter(folds)
        out = []
        for p, fixed in zip(self.pilot_cfgs, self.fixed_pilots):
            out.append(fixed if fixed is not None else self._fit_pilot(p, next(aux)))
        return out


def calibrate_corruption(scn: _Scenario, ratio: float, coord: int) -> float:
    """Size ``c`` of a shift in coefficient ``coord`` making ``Bias_k = ratio * delta * se(psi_hat)``."""
    if scn.kind not in ("bias_test", "ensemble_test"):
        raise ConfigError("bias_ratio calibration only applies to bias tests")
    if coord > scn.k:
        raise ConfigError(f"bias_coord={coord} lies outside the tested span k={scn.k}")
    delta = scn.cfg.test.delta
    if ratio == 0:
        return 0.0
    base = PilotConfig(source="truth")

    def gap(c):
        pilot = scn._truth_pilot(base, deltas=c * np.eye(coord)[coord - 1])
        return scn.projected_bias(pilot, scn.basis, scn.k) - ratio * delta * scn.population_psi_se(pilot)

    hi = 0.05
    while gap(hi) <= 0:
        hi *= 2.0
        if hi > 10:
            raise ConfigError("could not calibrate the corruption size")
    return float(brentq(gap, 0.0, hi, xtol=1e-14))


def _replicate(scn: _Scenario, rep: int) -> dict[str, Any]:
    cfg = scn.cfg
    rng = rep_stream(cfg.master_seed, rep)
    if scn.kind == "universal":
        return _universal_rep(scn, rng, rep)
    folds = scn.draw(rng)
    main = folds[-1]
    if scn.kind == "coverage":
        return _coverage_rep(scn, folds, main, rep)
    if scn.kind == "bias_test":
        return _bias_rep(scn, folds, main, rep)
    return _ensemble_rep(scn, folds, rep)


def _coverage_rep(scn, folds, main, rep):
    cfg = scn.cfg
    pilots = scn.pilots_for(folds)
    kind = cfg.estimator.kind
    if scn.functional == "density":
        if kind == "first_order":
            est = first_order_expected_density(pilots[0], main)
            oracle = conditional_bias_oracle_density(pilots[0], scn.truth)
        elif kind == "plugin":
            est = plugin_expected_density(pilots[0], main)
            oracle = est.value - scn.psi_true
        else:
            est = split_expected_density(pilots[0], pilots[1], main)
            oracle = conditional_bias_oracle_density(tuple(pilots), scn.truth)
        psi_true = scn.psi_true
    else:
        fixed = scn.design.kind == "fixed_grid"
        if kind == "first_order":
            est = first_order_cond_variance(pilots[0], main)
            pair = pilots[0]
        else:
            est = split_cond_variance(pilots[0], pilots[1], main)
            pair = tuple(pilots)
        oracle = conditional_bias_oracle_cv(pair, scn.truth, scn.design, x=main.x if fixed else None)
        if fixed:
            p = scn.truth(main.x)
            psi_true = float(np.mean(p * (1 - p)))
        else:
            psi_true = scn.psi_true
    z = bt.z_quantile(1 - cfg.estimator.alpha / 2)
    return {
        "rep": rep,
        "n": len(main),
        "estimator": kind,
        "psi_hat": est.value,
        "se": est.se,
        "psi_true": psi_true,
        "covered": bool(abs(est.value - psi_true) <= z * est.se),
        "bias_oracle": oracle,
        "error": est.value - psi_true,
        "ci_width": 2 * z * est.se,
    }


def _test_fields(report: bt.BiasTestReport, psi, oracle: float) -> dict[str, Any]:
    b = report.bias_estimate
    return {
        "bias_k_hat": b.value,
        "bias_k_se": b.se,
        "bias_oracle": oracle,
        "psi_hat": psi.value,
        "psi_se": psi.se,
        "statistic": report.statistic,
        "reject": report.reject,
        "ci_covered": bool(report.ci[0] <= oracle <= report.ci[1]),
    }


def _bias_rep(scn, folds, main, rep):
    cfg = scn.cfg
    pilot = scn.pilots_for(folds)[0]
    if scn.functional == "density":
        psi = first_order_expected_density(pilot, main)
        est = bt.estimate_bias_k_density(pilot, main, scn.basis, scn.k)
    else:
        psi = first_order_cond_variance(pilot, main)
        est = bt.estimate_bias_k_cv(pilot, main, scn.basis, scn.k)
    oracle = scn.fixed_bias_k if scn.fixed_bias_k is not None else scn.projected_bias(pilot, scn.basis, scn.k)
    report = bt.test_bias(est, psi.se, cfg.test.delta, cfg.test.alpha)
    return {"rep": rep, "n": len(main), "k": scn.k, "basis": scn.basis.name, **_test_fields(report, psi, oracle)}


def _ensemble_rep(scn, folds, rep):
    cfg, en = scn.cfg, scn.cfg.ensemble
    pilot_fold, ens_fold, test_fold = folds
    pihat = scn.fixed_pilots[0] if scn.fixed_pilots[0] is not None else scn._fit_pilot(scn.pilot_cfgs[0], pilot_fold)
    residuals = ens_fold.a - pihat(ens_fold.x)
    predictors = [fit_regressor(spec, ens_fold, residuals) for spec in scn.specs]
    concat = (scn.cosine, en.concat_fixed) if en.concat_fixed else None
    ip_fold = test_fold if en.basis_mode == "test" else ens_fold
    basis = build_estimated_basis(predictors, ip_fold, concat_fixed=concat, drop_tol=en.drop_tol, mode=en.basis_mode)
    k = basis.size
    gram_error = float(np.max(np.abs(basis.empirical_gram() - np.eye(k))))
    psi = first_order_cond_variance(pihat, test_fold)
    est = bt.estimate_bias_k_cv(pihat, test_fold, basis, k)
    oracle = bt.projected_bias_cv(pihat, scn.truth, basis, k)
    report = bt.test_bias(est, psi.se, cfg.test.delta, cfg.test.alpha)
    record = {
        "rep": rep,
        "n": len(test_fold),
        "k": k,
        "basis": basis.name,
        **_test_fields(report, psi, oracle),
        "m": len(predictors),
        "retained": k,
        "basis_mode": en.basis_mode,
        "gram_error": gram_error,
    }
    if en.compare_fixed:
        kf = min(k, FIXED_BASIS_SIZE)
        fixed_est = bt.estimate_bias_k_cv(pihat, test_fold, scn.cosine, kf)
        record["reject_fixed"] = bt.test_bias(fixed_est, psi.se, cfg.test.delta, cfg.test.alpha).reject
    return record


def _universal_rep(scn, rng, rep):
    u = scn.cfg.universal
    n = scn.design.n
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    data = signs * u.theta_star + rng.standard_normal(n)
    grid = scn.ucfg.grid()
    lt = log_tbar(data, scn.ucfg, rng)
    cs = set_from_log_tbar(grid, lt, u.alpha)
    lo, hi = cs.hull
    record = {
        "rep": rep,
        "n": n,
        "B": u.B,
        "alpha": u.alpha,
        "set_lo": lo,
        "set_hi": hi,
        "covered": cs.contains(u.theta_star, tol=1e-9 + 1e-6 * u.grid_step),
        "set_width": hi - lo if len(cs.values) else 0.0,
        "clipped": cs.clipped,
    }
    if u.functional != "identity":
        fs = profile_from_log_tbar(scn.umap, grid, lt, u.alpha)
        record["f_covered"] = fs.contains(scn.umap(u.theta_star))
    return record


def build_scenario(config: ExperimentConfig) -> _Scenario:
    config = validate(config)
    try:
        return _Scenario(config)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc


def run_replications(config: ExperimentConfig, reps: Iterable[int], threads: int = 1, scenario=None) -> list[dict[str, Any]]:
    """Records for the given replication indices, in the order given."""
    scn = scenario or build_scenario(config)
    reps = list(reps)

    def one(rep):
        try:
            return _replicate(scn, rep)
        except Exception as exc:
            raise ReplicationError(rep, config.master_seed, exc) from exc

    if threads <= 1:
        return [one(r) for r in reps]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, reps))


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    scn = build_scenario(config)
    log.info("running %s: %d reps, seed %d, %d thread(s)", config.kind, config.reps, config.master_seed, threads)
    records = run_replications(config, range(config.reps), threads, scenario=scn)
    return ExperimentResult(config, records, summarize(config, records))


def power_curve(config: ExperimentConfig, ratios: Iterable[float], threads: int = 1) -> list[dict[str, Any]]:
    """Rejection rate of the bias test as the injected ``Bias_k / (delta * se)`` ratio grows."""
    if config.kind != "bias_test":
        raise ConfigError("power curves are computed for bias_test configs")
    rows = []
    for ratio in ratios:
        pilot = replace(config.pilot, source="truth", deltas=(), bias_ratio=float(ratio))
        cfg = validate(replace(config, pilot=pilot))
        scn = build_scenario(cfg)
        res = run_experiment(cfg, threads)
        rej = res.summary["rejection_rate"]
        rows.append(
            {
                "ratio": float(ratio),
                "corruption": float(scn.pilot_cfgs[0].deltas[-1]) if scn.pilot_cfgs[0].deltas else 0.0,
                "bias_k": scn.fixed_bias_k,
                "threshold": cfg.test.delta * scn.population_psi_se(scn.fixed_pilots[0]),
                "rejection_rate": rej.mean,
                "mc_se": rej.mc_se,
                "reps": rej.count,
            }
        )
    return rows
