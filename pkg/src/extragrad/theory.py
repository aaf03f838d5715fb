"""Numerical verification layer: envelope identities, the ball-projection
inequality behind the extrapolated update, and the convergence-bound ledgers.

The envelope of f at x with parameter gamma is min_y f(y) + ||y-x||^2/(2*gamma);
its minimizer x_hat satisfies grad_env(x) = (x - x_hat)/gamma, and three
relations tie the envelope gradient to the true one:

    f(x_hat) <= f(x),
    ||x - x_hat|| = gamma * ||grad_env(x)||,
    ||grad f(x_hat)|| <= ||grad_env(x)||.

The bound evaluators are pure arithmetic on the constants plus observed
trajectory sums; identical inputs give bit-identical outputs, which the
harness relies on for reproducible ledgers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .numkit import RngStream, Vector, as_vector, bregman_euclid, project_ball
from .optimizers import StageRecord, stage_schedule
from .problems import ObjectiveSpec


@dataclass(frozen=True)
class MoreauConfig:
    """Envelope parameter and inner-solver controls.

    inner_tol=None uses 1e-10*(1 + ||x||) per query point. On non-convex
    objectives gamma must stay below 1/L so the inner problem is strongly
    convex with modulus 1/gamma - L.
    """

    gamma: float
    inner_tol: float | None = None
    max_inner: int = 10 ** 6

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.inner_tol is not None and self.inner_tol <= 0:
            raise ValueError(f"inner_tol must be positive, got {self.inner_tol}")
        if self.max_inner < 1:
            raise ValueError(f"max_inner must be >= 1, got {self.max_inner}")


@dataclass(frozen=True)
class ProxResult:
    x_hat: Vector
    f_gamma: float
    grad_f_gamma: Vector
    inner_iters: int
    inner_residual: float
    inner_tol: float


def _resolve_inner_tol(cfg: MoreauConfig, x: Vector) -> float:
    if cfg.inner_tol is not None:
        return cfg.inner_tol
    return 1e-10 * (1.0 + float(np.linalg.norm(x)))


def prox_moreau(spec: ObjectiveSpec, x: Vector, cfg: MoreauConfig) -> ProxResult:
    """Solve min_y f(y) + ||y - x||^2/(2*gamma) by gradient descent.

    The inner objective is (1/gamma - L)-strongly convex and (L + 1/gamma)-
    smooth, so fixed step 1/(L + 1/gamma) converges linearly; we stop at
    inner gradient norm <= tol or raise ConvergenceError with the residual.
    """
    x = as_vector(x, name="x")
    if x.shape != (spec.dim,):
        raise ValueError(f"x must have dim {spec.dim}, got {x.shape[0]}")
    gamma = cfg.gamma
    L = spec.lipschitz_L
    if not spec.convex and gamma * L >= 1.0:
        raise ValueError(
            f"gamma={gamma} must be < 1/L={1.0 / L} on non-convex objectives")
    tol = _resolve_inner_tol(cfg, x)
    inv_gamma = 1.0 / gamma
    step = 1.0 / (L + inv_gamma)
    y = x.copy()
    residual = math.inf
    for it in range(cfg.max_inner):
        gi = spec.grad(y) + inv_gamma * (y - x)
        residual = float(np.linalg.norm(gi))
        if residual <= tol:
            break
        y = y - step * gi
    else:
        raise ConvergenceError(
            f"prox inner solve stalled: residual {residual:.3e} > tol {tol:.3e} "
            f"after {cfg.max_inner} iterations",
            residual=residual, tol=tol, iterations=cfg.max_inner)
    diff = x - y
    f_gamma = float(spec.f(y)) + 0.5 * inv_gamma * float(diff @ diff)
    return ProxResult(x_hat=y, f_gamma=f_gamma, grad_f_gamma=inv_gamma * diff,
                      inner_iters=it, inner_residual=residual, inner_tol=tol)


@dataclass(frozen=True)
class MoreauReport:
    """Worst-case violations of the three envelope relations over the
    queried points. Each must stay below its slack (2*inner_tol for the
    value and gradient relations, 1e-12 for the norm identity, which holds
    by construction up to rounding)."""

    n_points: int
    max_value_violation: float       # f(x_hat) - f(x)
    max_norm_identity_error: float   # | ||x-x_hat|| - gamma*||grad_env|| |
    max_grad_violation: float        # ||grad f(x_hat)|| - ||grad_env||
    slack: float
    norm_identity_tol: float
    passed: bool


def check_moreau_relations(spec: ObjectiveSpec, points, cfg: MoreauConfig) -> MoreauReport:
    """Verify the three envelope relations at each point, with slack
    2*inner_tol on the two inequalities."""
    points = [as_vector(p, name="point") for p in points]
    if not points:
        raise ValueError("need at least one point")
    norm_tol = 1e-12
    worst_value = -math.inf
    worst_norm = -math.inf
    worst_grad = -math.inf
    slack_used = 0.0
    passed = True
    for p in points:
        res = prox_moreau(spec, p, cfg)
        slack = 2.0 * res.inner_tol
        slack_used = max(slack_used, slack)
        v1 = spec.f(res.x_hat) - spec.f(p)
        v2 = abs(float(np.linalg.norm(p - res.x_hat))
                 - cfg.gamma * float(np.linalg.norm(res.grad_f_gamma)))
        v3 = (float(np.linalg.norm(spec.grad(res.x_hat)))
              - float(np.linalg.norm(res.grad_f_gamma)))
        worst_value = max(worst_value, v1)
        worst_norm = max(worst_norm, v2)
        worst_grad = max(worst_grad, v3)
        if v1 > slack or v2 > norm_tol or v3 > slack:
            passed = False
    return MoreauReport(n_points=len(points), max_value_violation=worst_value,
                        max_norm_identity_error=worst_norm,
                        max_grad_violation=worst_grad, slack=slack_used,
                        norm_identity_tol=norm_tol, passed=passed)


def mirror_step_gap(z: Vector, xi: Vector, zeta: Vector, u: Vector,
                    gamma: float, radius: float,
                    center: Vector | None = None) -> tuple[float, float]:
    """Both sides of the two-projection inequality on a Euclidean ball.

    With x = proj(z - gamma*xi) and z_plus = proj(z - gamma*zeta) onto
    B(center, radius), returns

        lhs = gamma * <zeta, x - u>
        rhs = D(u,z) - D(u,z_plus) + gamma^2*||xi - zeta||^2
              - (||x - z||^2 + ||x - z_plus||^2) / 2

    where D is the Euclidean Bregman distance. The inequality lhs <= rhs
    holds for every u in the ball.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if center is None:
        center = np.zeros_like(z)
    x = project_ball(z - gamma * xi, center, radius)
    z_plus = project_ball(z - gamma * zeta, center, radius)
    lhs = gamma * float(zeta @ (x - u))
    dxz = x - z
    dxzp = x - z_plus
    dxizeta = xi - zeta
    rhs = (bregman_euclid(u, z) - bregman_euclid(u, z_plus)
           + gamma ** 2 * float(dxizeta @ dxizeta)
           - 0.5 * (float(dxz @ dxz) + float(dxzp @ dxzp)))
    return lhs, rhs


@dataclass(frozen=True)
class Lemma31Report:
    dim: int
    radius: float
    gamma: float
    n_trials: int
    worst_slack: float
    passed: bool
    tol: float = 1e-9


def _sample_in_ball(rng: RngStream, dim: int, radius: float) -> Vector:
    # uniform in the ball: Gaussian direction, radius ~ r*U^(1/d)
    v = rng.standard_normal(dim)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return np.zeros(dim)
    r = radius * rng.random() ** (1.0 / dim)
    return (r / norm) * v


def check_lemma31(dim: int, radius: float, gamma: float, n_trials: int,
                  rng: RngStream) -> Lemma31Report:
    """Randomized check of the two-projection inequality over a ball.

    Per trial: z and u uniform in B(0, radius); xi and zeta Gaussian with a
    per-trial scale log-uniform in [0.1, 10]*radius/gamma, so the projections
    exercise both the interior and the clipped regime. Passes when the worst
    slack (rhs - lhs) stays above -1e-9.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    worst = math.inf
    base_scale = radius / gamma
    for _ in range(n_trials):
        z = _sample_in_ball(rng, dim, radius)
        u = _sample_in_ball(rng, dim, radius)
        scale = base_scale * 10.0 ** rng.uniform(-1.0, 1.0)
        xi = scale * rng.standard_normal(dim)
        zeta = scale * rng.standard_normal(dim)
        lhs, rhs = mirror_step_gap(z, xi, zeta, u, gamma, radius)
        worst = min(worst, rhs - lhs)
    return Lemma31Report(dim=dim, radius=radius, gamma=gamma, n_trials=n_trials,
                         worst_slack=worst, passed=worst >= -1e-9)


@dataclass(frozen=True)
class BoundReport:
    """Computed bound right-hand side vs an observed left-hand side.

    negative_term is the magnitude of the subtracted step-sum term already
    included in rhs; slack = rhs - lhs; passed means lhs <= rhs + tolerance
    (a fixed 1e-9 for the per-run deterministic bound, caller-supplied
    statistical slack for the expectation-level ones). inputs_echo records
    every constant that entered the arithmetic.
    """

    theorem_id: int
    lhs: float
    rhs: float
    negative_term: float
    slack: float
    passed: bool
    inputs_echo: dict = field(default_factory=dict)


def bound_thm1(delta0: float, eta: float, T: int, L: float,
               sum_step_diff_sq: float, observed_min_grad_sq: float,
               tol: float = 1e-9) -> BoundReport:
    """Per-run deterministic bound:

        min_t ||grad f(x_t)||^2 <= 8*delta0/(eta*T) - sum_step/(eta^2*T).

    Requires eta <= 1/(12 L); larger steps are outside the guarantee and
    raise instead of producing a meaningless report.
    """
    _require_step_size(eta, L)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if delta0 < 0:
        raise ValueError(f"delta0 must be nonnegative, got {delta0}")
    if sum_step_diff_sq < 0:
        raise ValueError("sum_step_diff_sq must be nonnegative")
    negative = sum_step_diff_sq / (eta * eta * T)
    rhs = 8.0 * delta0 / (eta * T) - negative
    slack = rhs - observed_min_grad_sq
    return BoundReport(theorem_id=1, lhs=observed_min_grad_sq, rhs=rhs,
                       negative_term=negative, slack=slack,
                       passed=observed_min_grad_sq <= rhs + tol,
                       inputs_echo={"delta0": delta0, "eta": eta, "T": T, "L": L,
                                    "sum_step_diff_sq": sum_step_diff_sq,
                                    "tol": tol})


def bound_thm2(delta0: float, eta: float, T: int, L: float, G2: float, m: int,
               sum_step_diff_sq_mean: float, observed_mean_min_grad_sq: float,
               stat_slack: float = 0.0) -> BoundReport:
    """Expectation-level mini-batch bound:

        min_t E||grad f(x_t)||^2 <= 3*L*eta*G^2/(2T) + 8*delta0/(eta*T)
                                    + 72*G^2/m - mean_sum_step/(eta^2*T).

    Observations are seed averages; stat_slack (typically three standard
    errors of the observed mean, supplied by the caller) absorbs sampling
    noise in the pass verdict.
    """
    _require_step_size(eta, L)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if delta0 < 0 or G2 < 0 or sum_step_diff_sq_mean < 0:
        raise ValueError("delta0, G2 and sum_step_diff_sq_mean must be nonnegative")
    negative = sum_step_diff_sq_mean / (eta * eta * T)
    rhs = (3.0 * L * eta * G2 / (2.0 * T) + 8.0 * delta0 / (eta * T)
           + 72.0 * G2 / m - negative)
    slack = rhs - observed_mean_min_grad_sq
    return BoundReport(theorem_id=2, lhs=observed_mean_min_grad_sq, rhs=rhs,
                       negative_term=negative, slack=slack,
                       passed=observed_mean_min_grad_sq <= rhs + stat_slack,
                       inputs_echo={"delta0": delta0, "eta": eta, "T": T, "L": L,
                                    "G2": G2, "m": m,
                                    "sum_step_diff_sq_mean": sum_step_diff_sq_mean,
                                    "stat_slack": stat_slack})


def bound_thm3(delta: float, gamma: float, c: float, alpha: float, S: int,
               G2: float, stage_records: list[StageRecord],
               observed_mean_grad_sq_at_tau: float,
               stat_slack: float = 0.0) -> BoundReport:
    """Expectation-level stagewise bound on E||grad f(x_tau)||^2.

    rhs follows the stated bound with the weighted step-sum term over the S
    executed stages:

        alpha >= 1:   20*delta*(a+1)/(gamma*(S+1)) + 480*G^2*c*(a+1)/(S+1)
                      - 60*sum(w_s*D_s)/(gamma*sum(w_s))
        0 < alpha < 1: same with the G^2 term divided by alpha.

    Those constants are the envelope-level constants (8, 192, 24/gamma)
    scaled by 5/2, the factor converting envelope gradients to true
    gradients; the echo records the envelope form and its fully squared
    (5/2)^2 conversion alongside, since squaring the norm inequality
    ||grad f|| <= (5/2)*||grad_env|| scales bounds by 25/4.
    """
    if not 0.0 < c <= 1.0:
        raise ValueError(f"c must lie in (0, 1], got {c}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if delta < 0 or G2 < 0:
        raise ValueError("delta and G2 must be nonnegative")
    if len(stage_records) != S:
        raise ValueError(f"expected {S} stage records, got {len(stage_records)}")
    for rec in stage_records:
        eta_s, T_s = stage_schedule(gamma, c, rec.s)
        if not math.isclose(rec.eta_s, eta_s, rel_tol=1e-12):
            raise ValueError(f"stage {rec.s}: eta_s={rec.eta_s} != schedule {eta_s}")
        if rec.T_s != T_s:
            raise ValueError(f"stage {rec.s}: T_s={rec.T_s} != schedule {T_s}")
        if rec.D_Ts < 0:
            raise ValueError(f"stage {rec.s}: negative D")

    w = np.array([r.w_s for r in stage_records])
    wd = float(np.sum(w * np.array([r.D_Ts for r in stage_records])))
    sum_w = float(np.sum(w))
    branch = "alpha>=1" if alpha >= 1.0 else "0<alpha<1"
    gain = (alpha + 1.0) if alpha >= 1.0 else (alpha + 1.0) / alpha
    head = 20.0 * delta * (alpha + 1.0) / (gamma * (S + 1))
    noise = 480.0 * G2 * c * gain / (S + 1)
    negative = 60.0 * wd / (gamma * sum_w)
    rhs = head + noise - negative
    env_rhs = (8.0 * delta * (alpha + 1.0) / (gamma * (S + 1))
               + 192.0 * G2 * c * gain / (S + 1) - 24.0 * wd / (gamma * sum_w))
    slack = rhs - observed_mean_grad_sq_at_tau
    return BoundReport(theorem_id=3, lhs=observed_mean_grad_sq_at_tau, rhs=rhs,
                       negative_term=negative, slack=slack,
                       passed=observed_mean_grad_sq_at_tau <= rhs + stat_slack,
                       inputs_echo={"delta": delta, "gamma": gamma, "c": c,
                                    "alpha": alpha, "S": S, "G2": G2,
                                    "branch": branch, "stat_slack": stat_slack,
                                    "weighted_step_term": wd / sum_w,
                                    "rhs_envelope_form": env_rhs,
                                    "rhs_envelope_times_conversion_sq": 6.25 * env_rhs})


def _require_step_size(eta: float, L: float) -> None:
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    if eta > (1.0 + 1e-12) / (12.0 * L):
        raise ValueError(
            f"eta={eta} exceeds 1/(12L)={1.0 / (12.0 * L)}: outside the guarantee")
