"""First-order optimizers: GD/SGD baselines and extrapolated gradient descent.

The extrapolated methods keep two sequences and reuse the previous gradient,
so each iteration costs one (possibly mini-batched) gradient:

    x_t = z_{t-1} - eta * g_{t-1}
    g_t = gradient estimate at x_t
    z_t = z_{t-1} - eta * g_t

Those two update lines are evaluated exactly as written, so recorded
trajectories satisfy the update identities bitwise when recomputed with the
same expressions. The stagewise variant repeatedly solves the shifted
problem f(x) + ||x - x_prev||^2 / (2*gamma) with a growing iteration budget
and a shrinking step size, then returns a stage output sampled with
probability proportional to s**alpha.

A single run is strictly sequential; concurrent runs must each own their
RngStream and may share specs/oracles read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError
from .numkit import RngStream, Vector, as_vector
from .problems import ObjectiveSpec, StochasticOracle, eval_grad, prox_shifted, stoch_grad

G0_MODES = ("zero", "gradient")


@dataclass(frozen=True)
class GdeConfig:
    """Step size, horizon, and first-gradient convention for extrapolated GD.

    g0_mode "zero" starts with a zero gradient so the first step stays put
    (x_1 = z_0 = x_0), which is the convention every bound check assumes;
    "gradient" evaluates the gradient at x_0 as in the plain pseudocode.
    Step sizes above 1/(12L) are allowed for exploration; bound checks flag
    them instead of rejecting.
    """

    eta: float
    T: int
    g0_mode: str = "zero"

    def __post_init__(self):
        _validate_common(self.eta, self.T, self.g0_mode)


@dataclass(frozen=True)
class SgdeConfig:
    """GdeConfig plus a mini-batch size."""

    eta: float
    T: int
    batch_m: int = 1
    g0_mode: str = "zero"

    def __post_init__(self):
        _validate_common(self.eta, self.T, self.g0_mode)
        if self.batch_m < 1:
            raise ValueError(f"batch_m must be >= 1, got {self.batch_m}")


def _validate_common(eta: float, T: int, g0_mode: str) -> None:
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if g0_mode not in G0_MODES:
        raise ValueError(f"g0_mode must be one of {G0_MODES}, got {g0_mode!r}")


@dataclass(frozen=True)
class StagewiseConfig:
    """Schedule parameters for the stagewise solver.

    gamma defaults (None) to 1/(4L) of the oracle's base objective at run
    time and must stay below 1/L so each stage objective is strongly convex
    with modulus 1/gamma - L. Stage s runs T_s = ceil(36*s/c) iterations at
    step eta_s = c*gamma/(3*s); c is restricted to (0, 1] so eta_s never
    exceeds gamma/3. Weights w_s = s**alpha bias the returned stage towards
    late stages; any alpha > 0 is accepted and the bound check reports which
    branch applies.
    """

    c: float = 1.0
    alpha: float = 2.0
    S: int = 1
    gamma: float | None = None
    inner: str = "sgde"

    def __post_init__(self):
        if not 0.0 < self.c <= 1.0:
            raise ValueError(f"c must lie in (0, 1], got {self.c}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.S < 1:
            raise ValueError(f"S must be >= 1, got {self.S}")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.inner not in ("sgde", "sgd"):
            raise ValueError(f"inner must be 'sgde' or 'sgd', got {self.inner!r}")


def stage_schedule(gamma: float, c: float, s: int) -> tuple[float, int]:
    """Per-stage step size and iteration count: (c*gamma/(3s), ceil(36s/c))."""
    if s < 1:
        raise ValueError(f"stage index must be >= 1, got {s}")
    return c * gamma / (3.0 * s), int(math.ceil(36.0 * s / c))


def stage_probabilities(alpha: float, S: int) -> np.ndarray:
    """Sampling distribution over stages: p_s proportional to s**alpha."""
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    w = np.arange(1, S + 1, dtype=np.float64) ** alpha
    return w / w.sum()


def sample_stage_index(alpha: float, S: int, rng: RngStream) -> int:
    """Draw a stage index in {1..S} with probability proportional to s**alpha."""
    p = stage_probabilities(alpha, S)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(idx, S - 1) + 1


@dataclass
class Trajectory:
    """Per-iteration record of one optimizer run.

    Rows may be decimated (every record_every-th iteration plus the first
    and last), but min_grad_norm, sum_step_diff_sq and the oracle-call
    counters are accumulated exactly over every iteration. grad_norms hold
    the true (noiseless) gradient norm of the run's effective objective;
    for stochastic runs that is a diagnostic oracle call counted separately
    from the algorithm's budget. f values are evaluated on recorded rows
    only. min_grad_norm is taken over t >= 1 (the quantity bound checks
    use); the running-min column starts from the t = 0 row.
    """

    eta: float
    n_iters: int
    requested_T: int
    record_every: int
    min_grad_norm: float
    sum_step_diff_sq: float
    x_final: Vector
    z_final: Vector
    grad_oracle_calls: int
    diag_oracle_calls: int
    rng_key: tuple[int, int] | None
    stop_grad_norm: float | None
    ts: np.ndarray
    fs: np.ndarray
    grad_norms: np.ndarray
    running_min_grad_norms: np.ndarray
    step_diff_sqs: np.ndarray
    xs: np.ndarray
    zs: np.ndarray
    gs: np.ndarray
    first_hits: dict = field(default_factory=dict)

    @property
    def n_records(self) -> int:
        return len(self.ts)

    @property
    def min_grad_norm_sq(self) -> float:
        return self.min_grad_norm ** 2


class _Recorder:
    """Accumulates rows and exact aggregates while a run is in flight."""

    def __init__(self, eta, requested_T, record_every, rng_key, stop_grad_norm):
        self.eta = eta
        self.requested_T = requested_T
        self.record_every = max(1, int(record_every))
        self.rng_key = rng_key
        self.stop_grad_norm = stop_grad_norm
        self.ts, self.fs, self.gns, self.rmins, self.steps = [], [], [], [], []
        self.xs, self.zs, self.gs = [], [], []
        self.sum_step = 0.0
        self.min_grad = math.inf      # over t >= 1
        self.run_min = math.inf       # over t >= 0 (recorded column)
        self.grad_calls = 0
        self.diag_calls = 0
        self.first_hits: dict = {}

    def add_row(self, t, x, z, g, f_val, grad_norm, step_sq):
        self.run_min = min(self.run_min, grad_norm)
        self.ts.append(t)
        self.fs.append(f_val)
        self.gns.append(grad_norm)
        self.rmins.append(self.run_min)
        self.steps.append(step_sq)
        self.xs.append(x.copy())
        self.zs.append(z.copy())
        self.gs.append(g.copy())

    def wants_row(self, t, is_last):
        return is_last or t % self.record_every == 0

    def build(self, n_iters, x_final, z_final) -> Trajectory:
        d = x_final.shape[0]

        def stack(rows):
            return np.array(rows) if rows else np.empty((0, d))

        return Trajectory(
            eta=self.eta, n_iters=n_iters, requested_T=self.requested_T,
            record_every=self.record_every, min_grad_norm=self.min_grad,
            sum_step_diff_sq=self.sum_step, x_final=x_final.copy(),
            z_final=z_final.copy(), grad_oracle_calls=self.grad_calls,
            diag_oracle_calls=self.diag_calls, rng_key=self.rng_key,
            stop_grad_norm=self.stop_grad_norm,
            ts=np.array(self.ts, dtype=np.int64), fs=np.array(self.fs),
            grad_norms=np.array(self.gns), running_min_grad_norms=np.array(self.rmins),
            step_diff_sqs=np.array(self.steps), xs=stack(self.xs), zs=stack(self.zs),
            gs=stack(self.gs), first_hits=dict(self.first_hits))


def _extrapolated_run(*, x0: Vector, eta: float, T: int, g0: Vector,
                      algo_grad: Callable[[Vector], Vector], grad_cost: int,
                      init_grad_calls: int, f_val: Callable[[Vector], float],
                      true_grad: Callable[[Vector], Vector] | None,
                      g0_is_true_grad: bool, record_every: int,
                      rng_key: tuple[int, int] | None,
                      stop_grad_norm: float | None = None,
                      hit_thresholds=(), accumulate_sum: bool = False,
                      stage: int | None = None) -> tuple[Trajectory, Vector | None]:
    """Shared extrapolated-descent loop.

    true_grad=None marks a deterministic run whose algorithm gradient is the
    true gradient, so diagnostics reuse it at zero extra oracle cost.
    hit_thresholds get the first iteration whose gradient norm reaches them
    recorded in trajectory.first_hits (tracked exactly, every iteration).
    Returns the trajectory and, when accumulate_sum, the sum of x_1..x_T.
    """
    rec = _Recorder(eta, T, record_every, rng_key, stop_grad_norm)
    rec.grad_calls = init_grad_calls
    z = x0.copy()
    x_prev = x0
    g = g0

    if true_grad is None and g0_is_true_grad:
        gn0 = math.sqrt(float(g0 @ g0))
    else:
        tg = algo_grad(x0) if true_grad is None else true_grad(x0)
        rec.diag_calls += 1
        gn0 = math.sqrt(float(tg @ tg))
    rec.add_row(0, x0, z, g, f_val(x0), gn0, 0.0)

    x_sum = np.zeros_like(x0) if accumulate_sum else None
    thresholds = sorted(hit_thresholds, reverse=True)
    thr_idx = 0
    # hot loop: aggregates live in locals and are synced into the recorder
    # at exits so partial trajectories inside errors stay consistent
    sum_step = 0.0
    min_grad = math.inf
    record_k = rec.record_every
    isfinite = math.isfinite
    sqrt = math.sqrt
    n_done = 0
    deterministic = true_grad is None
    for t in range(1, T + 1):
        x = z - eta * g
        d = x - x_prev
        step_sq = float(d @ d)
        if not isfinite(step_sq):
            rec.sum_step, rec.min_grad = sum_step, min_grad
            raise DivergenceError(
                f"non-finite iterate at t={t}", iteration=t, stage=stage,
                trajectory=rec.build(t - 1, x_prev, z))
        sum_step += step_sq
        g = algo_grad(x)
        rec.grad_calls += grad_cost
        z = z - eta * g
        if deterministic:
            gn = sqrt(float(g @ g))
        else:
            tg = true_grad(x)
            rec.diag_calls += 1
            gn = sqrt(float(tg @ tg))
        if not isfinite(gn):
            rec.sum_step, rec.min_grad = sum_step, min_grad
            raise DivergenceError(
                f"non-finite gradient at t={t}", iteration=t, stage=stage,
                trajectory=rec.build(t - 1, x_prev, z))
        if gn < min_grad:
            min_grad = gn
        while thr_idx < len(thresholds) and gn <= thresholds[thr_idx]:
            rec.first_hits[thresholds[thr_idx]] = t
            thr_idx += 1
        if accumulate_sum:
            x_sum += x
        n_done = t
        stopping = stop_grad_norm is not None and gn <= stop_grad_norm
        if stopping or t == T or t % record_k == 0:
            rec.sum_step, rec.min_grad = sum_step, min_grad
            rec.add_row(t, x, z, g, f_val(x), gn, step_sq)
        x_prev = x
        if stopping:
            break
    rec.sum_step, rec.min_grad = sum_step, min_grad
    return rec.build(n_done, x_prev, z), x_sum


def run_gde(spec: ObjectiveSpec, x0: Vector, cfg: GdeConfig, *, record_every: int = 1,
            stop_grad_norm: float | None = None, hit_thresholds=()) -> Trajectory:
    """Deterministic extrapolated gradient descent.

    Exactly one gradient evaluation per iteration; g0 follows cfg.g0_mode.
    stop_grad_norm ends the run early at the first iterate whose gradient
    norm falls below it, and hit_thresholds records first-passage iterations
    (both used by complexity-realization checks).
    """
    x0 = as_vector(x0, name="x0")
    if x0.shape != (spec.dim,):
        raise ValueError(f"x0 must have dim {spec.dim}, got {x0.shape[0]}")
    if cfg.g0_mode == "zero":
        g0, init_calls, g0_true = np.zeros_like(x0), 0, False
    else:
        g0, init_calls, g0_true = eval_grad(spec, x0), 1, True
    traj, _ = _extrapolated_run(
        x0=x0, eta=cfg.eta, T=cfg.T, g0=g0, algo_grad=spec.grad, grad_cost=1,
        init_grad_calls=init_calls, f_val=spec.f, true_grad=None,
        g0_is_true_grad=g0_true, record_every=record_every, rng_key=None,
        stop_grad_norm=stop_grad_norm, hit_thresholds=hit_thresholds)
    return traj


def run_minibatch_sgde(oracle: StochasticOracle, x0: Vector, cfg: SgdeConfig,
                       rng: RngStream, *, record_every: int = 1) -> Trajectory:
    """Mini-batch stochastic extrapolated descent (one batch per iteration).

    With a noiseless oracle and any batch size this reproduces run_gde
    bitwise (given the same g0_mode), since the update expressions and the
    gradient values coincide.
    """
    x0 = as_vector(x0, name="x0")
    spec = oracle.base
    if x0.shape != (spec.dim,):
        raise ValueError(f"x0 must have dim {spec.dim}, got {x0.shape[0]}")
    m = cfg.batch_m
    noiseless = oracle.noise_model == "none"
    if cfg.g0_mode == "zero":
        g0, init_calls, g0_true = np.zeros_like(x0), 0, False
    else:
        g0 = stoch_grad(oracle, x0, m, rng)
        init_calls, g0_true = m, noiseless
    traj, _ = _extrapolated_run(
        x0=x0, eta=cfg.eta, T=cfg.T, g0=g0,
        algo_grad=lambda x: stoch_grad(oracle, x, m, rng), grad_cost=m,
        init_grad_calls=init_calls, f_val=spec.f,
        true_grad=None if noiseless else spec.grad, g0_is_true_grad=g0_true,
        record_every=record_every, rng_key=rng.key)
    return traj


@dataclass
class AveragedRun:
    avg: Vector
    trajectory: Trajectory


def run_sgde_avg(oracle: StochasticOracle, x0: Vector, eta: float, T: int,
                 rng: RngStream, prox_center: Vector | None = None,
                 prox_gamma: float | None = None, *,
                 record_every: int = 1) -> AveragedRun:
    """Single-sample stochastic extrapolated descent returning the average
    of x_1..x_T (the stagewise inner solver).

    The first gradient is a stochastic sample at x0. When prox_center is
    given the run minimizes f(x) + ||x - prox_center||^2 / (2*prox_gamma),
    with the quadratic term added deterministically to every sampled
    gradient; at x = prox_center that term vanishes exactly.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1 to average iterates, got {T}")
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    x0 = as_vector(x0, name="x0")
    if prox_center is not None:
        if prox_gamma is None or prox_gamma <= 0:
            raise ValueError("prox_gamma must be positive when prox_center is given")
        oracle = prox_shifted(oracle, prox_center, prox_gamma)
    spec = oracle.base
    if x0.shape != (spec.dim,):
        raise ValueError(f"x0 must have dim {spec.dim}, got {x0.shape[0]}")
    noiseless = oracle.noise_model == "none"
    g0 = stoch_grad(oracle, x0, 1, rng)
    traj, x_sum = _extrapolated_run(
        x0=x0, eta=eta, T=T, g0=g0,
        algo_grad=lambda x: stoch_grad(oracle, x, 1, rng), grad_cost=1,
        init_grad_calls=1, f_val=spec.f,
        true_grad=None if noiseless else spec.grad, g0_is_true_grad=noiseless,
        record_every=record_every, rng_key=rng.key, accumulate_sum=True)
    return AveragedRun(avg=x_sum / traj.n_iters, trajectory=traj)


def run_gd(spec: ObjectiveSpec, x0: Vector, eta: float, T: int,
           oracle: StochasticOracle | None = None, batch_m: int | None = None,
           rng: RngStream | None = None, *, record_every: int = 1,
           stop_grad_norm: float | None = None) -> Trajectory:
    """Plain (stochastic) gradient descent baseline: x_{t+1} = x_t - eta*g_t.

    Trajectories mirror the extrapolated runners' layout with z = x; the g
    column holds the gradient evaluated at x_t (the true gradient on the
    final row, where the algorithm itself evaluates nothing).
    """
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    x0 = as_vector(x0, name="x0")
    if x0.shape != (spec.dim,):
        raise ValueError(f"x0 must have dim {spec.dim}, got {x0.shape[0]}")
    if oracle is not None and (batch_m is None or rng is None):
        raise ValueError("stochastic run_gd needs batch_m and rng")
    deterministic = oracle is None

    rec = _Recorder(eta, T, record_every, rng.key if rng is not None else None,
                    stop_grad_norm)
    x = x0.copy()
    if deterministic:
        g = spec.grad(x0)
        if T >= 1:
            rec.grad_calls += 1       # doubles as the first algorithm gradient
        else:
            rec.diag_calls += 1
        gn = math.sqrt(float(g @ g))
    else:
        tg = spec.grad(x0)
        rec.diag_calls += 1
        gn = math.sqrt(float(tg @ tg))
        if T >= 1:
            g = stoch_grad(oracle, x0, batch_m, rng)
            rec.grad_calls += batch_m
        else:
            g = tg
    rec.add_row(0, x0, x0, g, spec.f(x0), gn, 0.0)

    n_done = 0
    for t in range(1, T + 1):
        x_new = x - eta * g
        d = x_new - x
        step_sq = float(d @ d)
        if not math.isfinite(step_sq):
            raise DivergenceError(f"non-finite iterate at t={t}", iteration=t,
                                  trajectory=rec.build(t - 1, x, x))
        rec.sum_step += step_sq
        if t < T:
            if deterministic:
                g = spec.grad(x_new)
                rec.grad_calls += 1
            else:
                g = stoch_grad(oracle, x_new, batch_m, rng)
                rec.grad_calls += batch_m
        if deterministic and t < T:
            gn = math.sqrt(float(g @ g))
            g_row = g
        else:
            tg = spec.grad(x_new)
            rec.diag_calls += 1
            gn = math.sqrt(float(tg @ tg))
            g_row = g if t < T else tg
        if not math.isfinite(gn):
            raise DivergenceError(f"non-finite gradient at t={t}", iteration=t,
                                  trajectory=rec.build(t - 1, x, x))
        if gn < rec.min_grad:
            rec.min_grad = gn
        n_done = t
        stopping = stop_grad_norm is not None and gn <= stop_grad_norm
        if rec.wants_row(t, t == T or stopping):
            rec.add_row(t, x_new, x_new, g_row, spec.f(x_new), gn, step_sq)
        x = x_new
        if stopping:
            break
    return rec.build(n_done, x, x)


@dataclass
class StageRecord:
    """One stage of the stagewise run: schedule values, the stage output,
    the step-sum diagnostic D = sum ||x_t - x_{t-1}||^2 / (16 T eta), and
    the inner trajectory it was computed from."""

    s: int
    eta_s: float
    T_s: int
    w_s: float
    x_end: Vector
    D_Ts: float
    trajectory: Trajectory


@dataclass
class StagewiseResult:
    selected: Vector
    tau: int
    stages: list[StageRecord]


def run_stagewise(oracle: StochasticOracle, x0: Vector, cfg: StagewiseConfig,
                  rng: RngStream, *, record_every: int = 1) -> StagewiseResult:
    """Stagewise stochastic extrapolated descent.

    Stage s minimizes f(x) + ||x - x_prev||^2 / (2*gamma) for T_s iterations
    at step eta_s, warm-started at the previous stage's output; the final
    answer is the output of a stage sampled with p_s proportional to
    s**alpha. inner="sgde" uses the averaging extrapolated solver,
    inner="sgd" the plain SGD baseline (last iterate).
    """
    x_prev = as_vector(x0, name="x0")
    L = oracle.base.lipschitz_L
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / (4.0 * L)
    if gamma * L >= 1.0:
        raise ValueError(
            f"gamma={gamma} must be < 1/L={1.0 / L} so the stage objective is "
            "strongly convex (modulus 1/gamma - L)")
    stages: list[StageRecord] = []
    for s in range(1, cfg.S + 1):
        eta_s, T_s = stage_schedule(gamma, cfg.c, s)
        try:
            if cfg.inner == "sgde":
                res = run_sgde_avg(oracle, x_prev, eta_s, T_s, rng,
                                   prox_center=x_prev, prox_gamma=gamma,
                                   record_every=record_every)
                x_s, traj = res.avg, res.trajectory
            else:
                shifted = prox_shifted(oracle, x_prev, gamma)
                traj = run_gd(shifted.base, x_prev, eta_s, T_s, oracle=shifted,
                              batch_m=1, rng=rng, record_every=record_every)
                x_s = traj.x_final
        except DivergenceError as err:
            raise DivergenceError(
                f"non-finite iterate at stage {s}, t={err.iteration}",
                iteration=err.iteration, stage=s, trajectory=err.trajectory) from err
        d_stat = traj.sum_step_diff_sq / (16.0 * T_s * eta_s)
        stages.append(StageRecord(s=s, eta_s=eta_s, T_s=T_s,
                                  w_s=float(s) ** cfg.alpha, x_end=x_s,
                                  D_Ts=d_stat, trajectory=traj))
        x_prev = x_s
    tau = sample_stage_index(cfg.alpha, cfg.S, rng)
    return StagewiseResult(selected=stages[tau - 1].x_end, tau=tau, stages=stages)
