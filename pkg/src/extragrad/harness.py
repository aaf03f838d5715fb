"""Experiment runner: JSON configs in, CSV trajectories and JSONL ledgers out.

Everything written to disk is deterministic for a fixed config: per-seed
random streams are keyed by (seed, sha256(run_id, seed)), floats are
serialized with round-trip precision, and volatile quantities (wall time)
stay out of the output files. Seeds may run concurrently; files are written
by a single writer after all runs complete.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConvergenceError, DivergenceError, EvaluationError
from .numkit import RngStream, Vector
from .optimizers import (GdeConfig, SgdeConfig, StagewiseConfig, StageRecord,
                         Trajectory, run_gd, run_gde, run_minibatch_sgde,
                         run_stagewise, stage_probabilities, stage_schedule)
from .problems import (ObjectiveSpec, PROBLEM_NAMES, StochasticOracle, build_problem,
                       check_grad, deterministic_oracle, eval_f, eval_grad,
                       finite_sum_oracle, gaussian_oracle, sigmoid_components)
from .theory import (BoundReport, MoreauConfig, bound_thm1, bound_thm2, bound_thm3,
                     check_lemma31, check_moreau_relations)

SCHEMA_VERSION = 1
ALGORITHMS = ("gd", "sgd", "gde", "minibatch_sgde", "stagewise_sgde", "stagewise_sgd")
CHECK_NAMES = ("bound_thm1", "bound_thm2", "bound_thm3", "moreau", "lemma31")

_X0_STREAM_ID = 0xB07
_LEMMA_DEFAULTS = {"dims": [1, 5, 20], "radii": [1.0, 10.0],
                   "gammas": [0.1, 1.0], "n_trials": 10000, "seed": 0}


@dataclass
class ExperimentConfig:
    run_id: str
    problem_name: str
    problem_params: dict
    noise_model: str
    noise_sigma: float
    algorithm: str
    algo_params: dict
    x0_mode: str
    x0_values: list | None
    x0_seed: int | None
    seeds: list[int]
    trajectory_path: str
    ledger_path: str
    record_every: int
    checks: dict[str, bool]
    check_params: dict
    eta_admissible: bool | None
    schema_version: int = SCHEMA_VERSION
    source_path: str | None = None


@dataclass
class RunRecord:
    """One seed's run: per-iteration rows plus exact summary statistics.

    Gradient-oracle counts follow each algorithm's definition (including
    the extrapolated solvers' initial stochastic sample); the true-gradient
    diagnostics recorded in trajectories are tallied separately.
    """

    run_id: str
    seed: int
    algorithm: str
    rows: list[tuple]                    # (stage | None, t, f, grad_norm, step_sq)
    min_grad_norm: float
    sum_step_diff_sq: float
    grad_oracle_calls: int
    diag_oracle_calls: int
    wall_time_s: float
    x_final: Vector | None
    reports: list[BoundReport] = field(default_factory=list)
    tau: int | None = None
    stage_records: list[StageRecord] | None = None
    grad_norm_selected: float | None = None
    trajectory: Trajectory | None = None
    error: str | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]
    ledger_entries: list[dict]
    check_failures: int
    run_failures: int


def stream_id_for(run_id: str, seed: int) -> int:
    """Per-seed stream id: first 8 bytes (little-endian) of
    sha256(utf8(run_id) || seed as 8-byte little-endian)."""
    h = hashlib.sha256(run_id.encode("utf-8") + int(seed).to_bytes(8, "little",
                                                                   signed=False))
    return int.from_bytes(h.digest()[:8], "little")


# ---------------------------------------------------------------------------
# config parsing


def _get(d: dict, key: str, path: str, required: bool = True, default=None):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    return d[key]


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def parse_config(path: str | Path) -> ExperimentConfig:
    """Load and eagerly validate an experiment config file.

    Builds the problem once to certify constants, checks every schedule and
    check invariant, and records whether the configured step size is inside
    the 1/(12L) guarantee (flagged, not rejected).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "config file does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(str(path), f"invalid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top-level JSON value must be an object")

    version = _get(raw, "schema_version", "", required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}, "
                                            f"expected {SCHEMA_VERSION}")
    run_id = raw.get("run_id", path.stem)
    if not isinstance(run_id, str) or not run_id:
        raise ConfigError("run_id", "must be a non-empty string")

    prob = _get(raw, "problem", "")
    if not isinstance(prob, dict):
        raise ConfigError("problem", "must be an object")
    problem_name = _get(prob, "name", "problem")
    if problem_name not in PROBLEM_NAMES:
        raise ConfigError("problem.name",
                          f"unknown problem {problem_name!r}; choose from {PROBLEM_NAMES}")
    problem_params = prob.get("params", {})
    if not isinstance(problem_params, dict):
        raise ConfigError("problem.params", "must be an object")
    try:
        spec = build_problem(problem_name, problem_params)
    except ValueError as err:
        raise ConfigError("problem.params", str(err)) from err

    noise = raw.get("noise", {"model": "none"})
    if not isinstance(noise, dict):
        raise ConfigError("noise", "must be an object")
    noise_model = noise.get("model", "none")
    noise_sigma = 0.0
    if noise_model == "additive_gaussian":
        noise_sigma = _as_number(_get(noise, "sigma", "noise"), "noise.sigma")
        if noise_sigma < 0:
            raise ConfigError("noise.sigma", "must be nonnegative")
    elif noise_model == "finite_sum":
        if problem_name != "sigmoid_loss":
            raise ConfigError("noise.model",
                              "finite_sum noise needs a per-sample problem "
                              "(sigmoid_loss)")
    elif noise_model != "none":
        raise ConfigError("noise.model", f"unknown noise model {noise_model!r}")

    algo = _get(raw, "algorithm", "")
    if not isinstance(algo, dict):
        raise ConfigError("algorithm", "must be an object")
    algorithm = _get(algo, "name", "algorithm")
    if algorithm not in ALGORITHMS:
        raise ConfigError("algorithm.name",
                          f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    algo_params = _parse_algo_params(algo, algorithm, spec)

    x0_mode, x0_values, x0_seed = _parse_x0(raw, spec)

    seeds = _get(raw, "seeds", "")
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)):
        raise ConfigError("seeds", "must be a non-empty list of integers")

    outputs = raw.get("outputs", {})
    if not isinstance(outputs, dict):
        raise ConfigError("outputs", "must be an object")
    trajectory_path = outputs.get("trajectory_path", "trajectories.csv")
    ledger_path = outputs.get("ledger_path", "ledger.jsonl")
    record_every = outputs.get("record_every", 1)
    record_every = _as_int(record_every, "outputs.record_every")
    if record_every < 1:
        raise ConfigError("outputs.record_every", "must be >= 1")

    checks = {name: False for name in CHECK_NAMES}
    for name, value in raw.get("checks", {}).items():
        if name not in CHECK_NAMES:
            raise ConfigError(f"checks.{name}", f"unknown check; choose from {CHECK_NAMES}")
        if not isinstance(value, bool):
            raise ConfigError(f"checks.{name}", "must be a boolean")
        checks[name] = value
    check_params = raw.get("check_params", {})
    if not isinstance(check_params, dict):
        raise ConfigError("check_params", "must be an object")

    eta_admissible = None
    if "eta" in algo_params:
        eta_admissible = algo_params["eta"] <= (1.0 + 1e-12) / (12.0 * spec.lipschitz_L)

    _validate_checks(checks, algorithm, spec, eta_admissible, algo_params)

    return ExperimentConfig(
        run_id=run_id, problem_name=problem_name, problem_params=problem_params,
        noise_model=noise_model, noise_sigma=noise_sigma, algorithm=algorithm,
        algo_params=algo_params, x0_mode=x0_mode, x0_values=x0_values,
        x0_seed=x0_seed, seeds=list(seeds), trajectory_path=trajectory_path,
        ledger_path=ledger_path, record_every=record_every, checks=checks,
        check_params=check_params, eta_admissible=eta_admissible,
        source_path=str(path))


def _parse_algo_params(algo: dict, algorithm: str, spec: ObjectiveSpec) -> dict:
    params: dict = {}
    if algorithm in ("gd", "sgd", "gde", "minibatch_sgde"):
        params["eta"] = _as_number(_get(algo, "eta", "algorithm"), "algorithm.eta")
        if params["eta"] <= 0:
            raise ConfigError("algorithm.eta", "must be positive")
        params["T"] = _as_int(_get(algo, "T", "algorithm"), "algorithm.T")
        if params["T"] < 0:
            raise ConfigError("algorithm.T", "must be >= 0")
    if algorithm in ("sgd", "minibatch_sgde"):
        params["m"] = _as_int(algo.get("m", 1), "algorithm.m")
        if params["m"] < 1:
            raise ConfigError("algorithm.m", "must be >= 1")
    if algorithm in ("gde", "minibatch_sgde"):
        params["g0_mode"] = algo.get("g0_mode", "zero")
        if params["g0_mode"] not in ("zero", "gradient"):
            raise ConfigError("algorithm.g0_mode", "must be 'zero' or 'gradient'")
    if algorithm.startswith("stagewise"):
        c = _as_number(algo.get("c", 1.0), "algorithm.c")
        if not 0.0 < c <= 1.0:
            raise ConfigError("algorithm.c", f"must lie in (0, 1], got {c}")
        alpha = _as_number(algo.get("alpha", 2.0), "algorithm.alpha")
        if alpha <= 0:
            raise ConfigError("algorithm.alpha", "must be positive")
        S = _as_int(_get(algo, "S", "algorithm"), "algorithm.S")
        if S < 1:
            raise ConfigError("algorithm.S", "must be >= 1")
        gamma = algo.get("gamma")
        if gamma is not None:
            gamma = _as_number(gamma, "algorithm.gamma")
            if gamma <= 0:
                raise ConfigError("algorithm.gamma", "must be positive")
            if gamma * spec.lipschitz_L >= 1.0:
                raise ConfigError("algorithm.gamma",
                                  f"must be < 1/L = {1.0 / spec.lipschitz_L} so stage "
                                  "objectives are strongly convex")
        params.update({"c": c, "alpha": alpha, "S": S, "gamma": gamma})
    return params


def _parse_x0(raw: dict, spec: ObjectiveSpec):
    x0 = _get(raw, "x0", "")
    if not isinstance(x0, dict):
        raise ConfigError("x0", "must be an object")
    mode = _get(x0, "mode", "x0")
    if mode == "explicit":
        values = _get(x0, "values", "x0")
        if not isinstance(values, list) or len(values) != spec.dim:
            raise ConfigError("x0.values", f"must be a list of {spec.dim} numbers")
        values = [_as_number(v, "x0.values") for v in values]
        return mode, values, None
    if mode == "seeded_box":
        seed = _as_int(_get(x0, "seed", "x0"), "x0.seed")
        return mode, None, seed
    raise ConfigError("x0.mode", f"must be 'explicit' or 'seeded_box', got {mode!r}")


def _validate_checks(checks: dict, algorithm: str, spec: ObjectiveSpec,
                     eta_admissible: bool | None, algo_params: dict) -> None:
    if checks["bound_thm1"]:
        if algorithm != "gde":
            raise ConfigError("checks.bound_thm1", "only applies to gde runs")
        if spec.f_opt is None:
            raise ConfigError("checks.bound_thm1",
                              f"problem {spec.name} has no known optimum value")
        if eta_admissible is False:
            raise ConfigError("checks.bound_thm1", "eta exceeds 1/(12L)")
        if algo_params.get("T", 0) < 1:
            raise ConfigError("checks.bound_thm1", "needs T >= 1")
        if algo_params.get("g0_mode") != "zero":
            raise ConfigError("checks.bound_thm1",
                              "the guarantee assumes g0_mode='zero' (x1 = x0)")
    if checks["bound_thm2"]:
        if algorithm != "minibatch_sgde":
            raise ConfigError("checks.bound_thm2", "only applies to minibatch_sgde runs")
        if spec.f_opt is None:
            raise ConfigError("checks.bound_thm2",
                              f"problem {spec.name} has no known optimum value")
        if eta_admissible is False:
            raise ConfigError("checks.bound_thm2", "eta exceeds 1/(12L)")
        if algo_params.get("T", 0) < 1:
            raise ConfigError("checks.bound_thm2", "needs T >= 1")
        if algo_params.get("g0_mode") != "zero":
            raise ConfigError("checks.bound_thm2",
                              "the guarantee assumes g0_mode='zero' (x1 = x0)")
    if checks["bound_thm3"]:
        if not algorithm.startswith("stagewise"):
            raise ConfigError("checks.bound_thm3", "only applies to stagewise runs")
        if spec.gap_bound is None and spec.f_opt is None:
            raise ConfigError("checks.bound_thm3",
                              f"problem {spec.name} has neither a gap bound nor a "
                              "known optimum to derive one from")


# ---------------------------------------------------------------------------
# execution


def build_oracle(cfg: ExperimentConfig, spec: ObjectiveSpec) -> StochasticOracle:
    if cfg.noise_model == "none":
        return deterministic_oracle(spec)
    if cfg.noise_model == "additive_gaussian":
        return gaussian_oracle(spec, cfg.noise_sigma)
    return finite_sum_oracle(spec, sigmoid_components(spec))


def resolve_x0(cfg: ExperimentConfig, spec: ObjectiveSpec) -> Vector:
    """Starting point shared by every seed, so gap constants in the bound
    checks are well-defined quantities of the experiment."""
    if cfg.x0_mode == "explicit":
        return np.array(cfg.x0_values, dtype=np.float64)
    rng = RngStream(cfg.x0_seed, stream_id=_X0_STREAM_ID)
    lo, hi = spec.test_box
    return rng.uniform(lo, hi, size=spec.dim)


def _run_single(cfg: ExperimentConfig, spec: ObjectiveSpec,
                oracle: StochasticOracle, x0: Vector, seed: int) -> RunRecord:
    rng = RngStream(seed, stream_id=stream_id_for(cfg.run_id, seed))
    p = cfg.algo_params
    start = time.perf_counter()
    try:
        if cfg.algorithm == "gd":
            traj = run_gd(spec, x0, p["eta"], p["T"], record_every=cfg.record_every)
            return _record_from_trajectory(cfg, seed, traj, start)
        if cfg.algorithm == "sgd":
            traj = run_gd(spec, x0, p["eta"], p["T"], oracle=oracle, batch_m=p["m"],
                          rng=rng, record_every=cfg.record_every)
            return _record_from_trajectory(cfg, seed, traj, start)
        if cfg.algorithm == "gde":
            traj = run_gde(spec, x0, GdeConfig(eta=p["eta"], T=p["T"],
                                               g0_mode=p["g0_mode"]),
                           record_every=cfg.record_every)
            return _record_from_trajectory(cfg, seed, traj, start)
        if cfg.algorithm == "minibatch_sgde":
            traj = run_minibatch_sgde(oracle, x0,
                                      SgdeConfig(eta=p["eta"], T=p["T"],
                                                 batch_m=p["m"], g0_mode=p["g0_mode"]),
                                      rng, record_every=cfg.record_every)
            return _record_from_trajectory(cfg, seed, traj, start)
        # stagewise_sgde / stagewise_sgd
        sw_cfg = StagewiseConfig(c=p["c"], alpha=p["alpha"], S=p["S"],
                                 gamma=p["gamma"],
                                 inner="sgde" if cfg.algorithm.endswith("sgde") else "sgd")
        result = run_stagewise(oracle, x0, sw_cfg, rng, record_every=cfg.record_every)
        return _record_from_stagewise(cfg, spec, seed, result, start)
    except (DivergenceError, ConvergenceError, EvaluationError) as err:
        traj = getattr(err, "trajectory", None)
        rec = RunRecord(run_id=cfg.run_id, seed=seed, algorithm=cfg.algorithm,
                        rows=_rows_from_trajectory(traj) if traj is not None else [],
                        min_grad_norm=math.nan, sum_step_diff_sq=math.nan,
                        grad_oracle_calls=0, diag_oracle_calls=0,
                        wall_time_s=time.perf_counter() - start, x_final=None,
                        error=f"{type(err).__name__}: {err}")
        return rec


def _rows_from_trajectory(traj: Trajectory, stage: int | None = None) -> list[tuple]:
    return [(stage, int(t), float(f), float(gn), float(sq))
            for t, f, gn, sq in zip(traj.ts, traj.fs, traj.grad_norms,
                                    traj.step_diff_sqs)]


def _record_from_trajectory(cfg, seed, traj: Trajectory, start) -> RunRecord:
    return RunRecord(run_id=cfg.run_id, seed=seed, algorithm=cfg.algorithm,
                     rows=_rows_from_trajectory(traj),
                     min_grad_norm=traj.min_grad_norm,
                     sum_step_diff_sq=traj.sum_step_diff_sq,
                     grad_oracle_calls=traj.grad_oracle_calls,
                     diag_oracle_calls=traj.diag_oracle_calls,
                     wall_time_s=time.perf_counter() - start,
                     x_final=traj.x_final, trajectory=traj)


def _record_from_stagewise(cfg, spec, seed, result, start) -> RunRecord:
    rows: list[tuple] = []
    grad_calls = diag_calls = 0
    sum_step = 0.0
    min_gn = math.inf
    for st in result.stages:
        rows.extend(_rows_from_trajectory(st.trajectory, stage=st.s))
        grad_calls += st.trajectory.grad_oracle_calls
        diag_calls += st.trajectory.diag_oracle_calls
        sum_step += st.trajectory.sum_step_diff_sq
        min_gn = min(min_gn, st.trajectory.min_grad_norm)
    selected_gn = float(np.linalg.norm(eval_grad(spec, result.selected)))
    diag_calls += 1
    return RunRecord(run_id=cfg.run_id, seed=seed, algorithm=cfg.algorithm,
                     rows=rows, min_grad_norm=min_gn, sum_step_diff_sq=sum_step,
                     grad_oracle_calls=grad_calls, diag_oracle_calls=diag_calls,
                     wall_time_s=time.perf_counter() - start,
                     x_final=result.selected, tau=result.tau,
                     stage_records=result.stages, grad_norm_selected=selected_gn)


def execute(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run every seed, evaluate enabled checks, and write the output files."""
    spec = build_problem(cfg.problem_name, cfg.problem_params)
    oracle = build_oracle(cfg, spec)
    x0 = resolve_x0(cfg, spec)

    if threads > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_single, cfg, spec, oracle, x0, seed)
                       for seed in cfg.seeds]
            records = [f.result() for f in futures]
    else:
        records = [_run_single(cfg, spec, oracle, x0, seed) for seed in cfg.seeds]

    run_failures = sum(1 for r in records if r.error is not None)
    entries: list[dict] = [_summary_entry(r) for r in records]
    check_failures = 0
    if run_failures == 0:
        check_entries, check_failures = _evaluate_checks(cfg, spec, oracle, x0, records)
        entries.extend(check_entries)

    write_trajectories_csv(cfg.trajectory_path, records)
    write_ledger(cfg.ledger_path, entries)
    return ExperimentResult(config=cfg, records=records, ledger_entries=entries,
                            check_failures=check_failures, run_failures=run_failures)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[RunRecord]:
    """Spec-level entry point; see execute() for the full result object."""
    return execute(cfg, threads=threads).records


# ---------------------------------------------------------------------------
# checks


def _sem(samples: np.ndarray) -> float:
    # standard error of the mean; zero for a single sample
    n = samples.size
    if n < 2:
        return 0.0
    return float(np.std(samples, ddof=1)) / math.sqrt(n)


def _evaluate_checks(cfg: ExperimentConfig, spec: ObjectiveSpec,
                     oracle: StochasticOracle, x0: Vector,
                     records: list[RunRecord]) -> tuple[list[dict], int]:
    entries: list[dict] = []
    failures = 0
    p = cfg.algo_params

    if cfg.checks["bound_thm1"]:
        delta0 = eval_f(spec, x0) - spec.f_opt
        for rec in records:
            report = bound_thm1(delta0, p["eta"], rec.trajectory.n_iters,
                                spec.lipschitz_L, rec.sum_step_diff_sq,
                                rec.min_grad_norm ** 2)
            rec.reports.append(report)
            entries.append(_bound_entry(rec.run_id, rec.seed, report))
            failures += 0 if report.passed else 1

    if cfg.checks["bound_thm2"]:
        delta0 = eval_f(spec, x0) - spec.f_opt
        lhs = np.array([rec.min_grad_norm ** 2 for rec in records])
        sums = np.array([rec.sum_step_diff_sq for rec in records])
        report = bound_thm2(delta0, p["eta"], p["T"], spec.lipschitz_L,
                            oracle.variance_bound_G2, p["m"], float(sums.mean()),
                            float(lhs.mean()), stat_slack=3.0 * _sem(lhs))
        for rec in records:
            rec.reports.append(report)
        entries.append(_bound_entry(cfg.run_id, None, report,
                                    extra={"n_seeds": len(records),
                                           "stderr": _sem(lhs)}))
        failures += 0 if report.passed else 1

    if cfg.checks["bound_thm3"]:
        gamma = p["gamma"]
        if gamma is None:
            gamma = 1.0 / (4.0 * spec.lipschitz_L)
        delta = spec.gap_bound
        if delta is None:
            delta = eval_f(spec, x0) - spec.f_opt
        lhs = np.array([rec.grad_norm_selected ** 2 for rec in records])
        mean_records = _mean_stage_records(records)
        report = bound_thm3(delta, gamma, p["c"], p["alpha"], p["S"],
                            oracle.variance_bound_G2, mean_records,
                            float(lhs.mean()), stat_slack=3.0 * _sem(lhs))
        for rec in records:
            rec.reports.append(report)
        entries.append(_bound_entry(cfg.run_id, None, report,
                                    extra={"n_seeds": len(records),
                                           "stderr": _sem(lhs)}))
        failures += 0 if report.passed else 1

    if cfg.checks["moreau"]:
        entry, ok = run_moreau_check(cfg, spec)
        entries.append(entry)
        failures += 0 if ok else 1

    if cfg.checks["lemma31"]:
        new_entries, n_fail = run_lemma31_check(cfg.check_params.get("lemma31", {}))
        entries.extend(new_entries)
        failures += n_fail

    return entries, failures


def _mean_stage_records(records: list[RunRecord]) -> list[StageRecord]:
    """Seed-averaged stage diagnostics (schedule columns are identical
    across seeds; D and the stage outputs are averaged)."""
    base = records[0].stage_records
    out = []
    for idx, st in enumerate(base):
        d_mean = float(np.mean([r.stage_records[idx].D_Ts for r in records]))
        x_mean = np.mean([r.stage_records[idx].x_end for r in records], axis=0)
        out.append(StageRecord(s=st.s, eta_s=st.eta_s, T_s=st.T_s, w_s=st.w_s,
                               x_end=x_mean, D_Ts=d_mean, trajectory=st.trajectory))
    return out


def run_moreau_check(cfg: ExperimentConfig, spec: ObjectiveSpec) -> tuple[dict, bool]:
    params = cfg.check_params.get("moreau", {})
    gamma = params.get("gamma", 1.0 / (4.0 * spec.lipschitz_L))
    n_points = params.get("n_points", 100)
    seed = params.get("seed", 0)
    rng = RngStream(seed, stream_id=0x30E)
    lo, hi = spec.test_box
    points = [rng.uniform(lo, hi, size=spec.dim) for _ in range(n_points)]
    report = check_moreau_relations(spec, points, MoreauConfig(gamma=gamma))
    entry = {"kind": "check", "name": "moreau", "problem": spec.name,
             "gamma": gamma, "n_points": n_points,
             "max_value_violation": report.max_value_violation,
             "max_norm_identity_error": report.max_norm_identity_error,
             "max_grad_violation": report.max_grad_violation,
             "slack": report.slack, "pass": report.passed}
    return entry, report.passed


def run_lemma31_check(params: dict) -> tuple[list[dict], int]:
    merged = dict(_LEMMA_DEFAULTS, **params)
    entries = []
    failures = 0
    for dim in merged["dims"]:
        for radius in merged["radii"]:
            for gamma in merged["gammas"]:
                rng = RngStream(merged["seed"],
                                stream_id=stream_id_for(f"lemma31/{dim}/{radius}/{gamma}",
                                                        merged["seed"]))
                rep = check_lemma31(dim, radius, gamma, merged["n_trials"], rng)
                entries.append({"kind": "check", "name": "lemma31", "dim": dim,
                                "radius": radius, "gamma": gamma,
                                "n_trials": merged["n_trials"],
                                "worst_slack": rep.worst_slack, "pass": rep.passed})
                failures += 0 if rep.passed else 1
    return entries, failures


def run_grad_check(cfg: ExperimentConfig, spec: ObjectiveSpec) -> tuple[dict, bool]:
    params = cfg.check_params.get("grad", {})
    n_points = params.get("n_points", 100)
    rel_tol = params.get("rel_tol", 1e-4)
    seed = params.get("seed", 0)
    rng = RngStream(seed, stream_id=0x6AD)
    lo, hi = spec.test_box
    worst = 0.0
    ok = True
    for _ in range(n_points):
        x = rng.uniform(lo, hi, size=spec.dim)
        rep = check_grad(spec, x, rel_tol=rel_tol)
        worst = max(worst, rep.max_rel_err)
        ok = ok and rep.passed
    entry = {"kind": "check", "name": "grad", "problem": spec.name,
             "n_points": n_points, "rel_tol": rel_tol, "max_rel_err": worst,
             "pass": ok}
    return entry, ok


# ---------------------------------------------------------------------------
# ledger / CSV / summary


def _summary_entry(rec: RunRecord) -> dict:
    entry = {"kind": "run_summary", "run_id": rec.run_id, "seed": rec.seed,
             "algorithm": rec.algorithm, "n_rows": len(rec.rows),
             "min_grad_norm": rec.min_grad_norm,
             "sum_step_diff_sq": rec.sum_step_diff_sq,
             "grad_oracle_calls": rec.grad_oracle_calls,
             "diag_oracle_calls": rec.diag_oracle_calls}
    if rec.tau is not None:
        entry["tau"] = rec.tau
        entry["grad_norm_selected"] = rec.grad_norm_selected
        entry["stage_D"] = [st.D_Ts for st in rec.stage_records]
    if rec.error is not None:
        entry["error"] = rec.error
    return entry


def _bound_entry(run_id: str, seed: int | None, report: BoundReport,
                 extra: dict | None = None) -> dict:
    entry = {"kind": "bound_report", "run_id": run_id, "seed": seed,
             "theorem_id": report.theorem_id, "lhs": report.lhs, "rhs": report.rhs,
             "negative_term": report.negative_term, "slack": report.slack,
             "pass": report.passed, "inputs": dict(report.inputs_echo)}
    if extra:
        entry.update(extra)
    return entry


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trajectories_csv(path: str | Path, records: list[RunRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run_id", "seed", "stage", "t", "f", "grad_norm",
                         "step_diff_sq"])
        for rec in records:
            for stage, t, f, gn, sq in rec.rows:
                writer.writerow([rec.run_id, rec.seed,
                                 "" if stage is None else stage, t,
                                 _fmt(f), _fmt(gn), _fmt(sq)])


def write_ledger(path: str | Path, entries: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def summarize(records: list[RunRecord]) -> dict:
    """Per-seed and aggregate statistics with stable row ordering.

    Aggregate std uses the population convention (ddof=0) so a single run
    yields zeros rather than NaNs; the standard error of the mean squared
    minimum gradient (used as statistical slack by the bound checks) uses
    the sample convention.
    """
    if not records:
        raise ValueError("need at least one record")
    algs = {r.algorithm for r in records}
    if len(algs) > 1:
        raise ValueError(f"records mix algorithms: {sorted(algs)}")
    per_seed = [{"run_id": r.run_id, "seed": r.seed,
                 "min_grad_norm": r.min_grad_norm,
                 "sum_step_diff_sq": r.sum_step_diff_sq,
                 "grad_oracle_calls": r.grad_oracle_calls,
                 "diag_oracle_calls": r.diag_oracle_calls,
                 "wall_time_s": r.wall_time_s, "error": r.error}
                for r in records]
    ok = [r for r in records if r.error is None]
    if not ok:
        return {"per_seed": per_seed, "aggregate": {"n_runs": len(records),
                                                    "n_failed": len(records)}}
    mins = np.array([r.min_grad_norm for r in ok])
    min_sqs = mins ** 2
    sums = np.array([r.sum_step_diff_sq for r in ok])
    aggregate = {
        "n_runs": len(records),
        "n_failed": len(records) - len(ok),
        "mean_min_grad_norm": float(mins.mean()),
        "std_min_grad_norm": float(mins.std(ddof=0)),
        "mean_min_grad_sq": float(min_sqs.mean()),
        "stderr_min_grad_sq": _sem(min_sqs),
        "mean_sum_step_diff_sq": float(sums.mean()),
        "total_grad_oracle_calls": int(sum(r.grad_oracle_calls for r in ok)),
        "total_diag_oracle_calls": int(sum(r.diag_oracle_calls for r in ok)),
        "total_wall_time_s": float(sum(r.wall_time_s for r in ok)),
    }
    return {"per_seed": per_seed, "aggregate": aggregate}


def summarize_csv_rows(path: str | Path) -> dict:
    """Row-level summary of a trajectories CSV (per run_id/seed pair).

    Works from whatever rows were recorded; exact aggregates for decimated
    runs live in the ledger's run_summary lines.
    """
    path = Path(path)
    groups: dict[tuple, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["run_id"], int(row["seed"]))
            g = groups.setdefault(key, {"min_grad_norm": math.inf,
                                        "sum_step_diff_sq": 0.0, "n_rows": 0,
                                        "last_f": math.nan})
            t = int(row["t"])
            gn = float(row["grad_norm"])
            if t >= 1 and gn < g["min_grad_norm"]:
                g["min_grad_norm"] = gn
            g["sum_step_diff_sq"] += float(row["step_diff_sq"])
            g["n_rows"] += 1
            g["last_f"] = float(row["f"])
    if not groups:
        raise ValueError(f"no rows in {path}")
    per_run = [{"run_id": k[0], "seed": k[1], **v} for k, v in sorted(groups.items())]
    mins = np.array([g["min_grad_norm"] for g in per_run])
    return {"per_seed": per_run,
            "aggregate": {"n_runs": len(per_run),
                          "mean_min_grad_norm": float(mins.mean()),
                          "std_min_grad_norm": float(mins.std(ddof=0))}}


def schedule_table(L: float, c: float, S: int, alpha: float = 2.0,
                   gamma: float | None = None) -> list[dict]:
    """Stage schedule rows (s, eta_s, T_s, w_s, p_s) for given constants."""
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    if gamma is None:
        gamma = 1.0 / (4.0 * L)
    probs = stage_probabilities(alpha, S)
    rows = []
    for s in range(1, S + 1):
        eta_s, T_s = stage_schedule(gamma, c, s)
        rows.append({"s": s, "eta_s": eta_s, "T_s": T_s, "w_s": float(s) ** alpha,
                     "p_s": float(probs[s - 1])})
    return rows
