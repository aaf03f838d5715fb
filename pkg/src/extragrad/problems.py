"""Smooth test objectives with certified constants and stochastic oracles.

Each registered problem ships an analytic gradient, a gradient-Lipschitz
constant that is either exact (quadratics, sigmoid loss) or certified over
the declared test box by dense Hessian-norm sampling (rosenbrock), and
optional knowledge of the global minimum. Stochastic oracles wrap a base
objective with a seeded noise model carrying a declared second-moment bound
on the gradient noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EvaluationError
from .numkit import RngStream, Vector, as_vector, default_fd_step, finite_diff_grad

PROBLEM_NAMES = ("quadratic", "rosenbrock", "saddle_quadratic", "sigmoid_loss")

# max |d^2/du^2 (1/(1+e^u))| over u, attained at u = log(2 +/- sqrt(3))
_SIGMOID_CURVATURE = math.sqrt(3.0) / 18.0


@dataclass(frozen=True)
class ObjectiveSpec:
    """A differentiable objective with certified smoothness metadata.

    lipschitz_L bounds the gradient's Lipschitz constant (over test_box for
    box-certified families, globally otherwise). f_opt is the global minimum
    value when known; gap_bound is a certified upper bound on f(x) - f_opt
    valid wherever stated in the family's docs (globally for sigmoid_loss).
    Immutable and safe for concurrent read-only use.
    """

    name: str
    dim: int
    f: Callable[[Vector], float]
    grad: Callable[[Vector], Vector]
    lipschitz_L: float
    f_opt: float | None = None
    gap_bound: float | None = None
    convex: bool = False
    test_box: tuple[float, float] = (-2.0, 2.0)
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StochasticOracle:
    """A base objective plus a seeded model of gradient noise.

    noise_model is one of "none", "additive_gaussian" (iid N(0, sigma^2) per
    coordinate) or "finite_sum" (uniform sampling over per-sample objectives
    whose mean gradient is the base gradient). variance_bound_G2 bounds
    E||g(x; xi) - grad(x)||^2: exact (dim * sigma^2) for the Gaussian model,
    estimated at build time with a 1.5x safety factor for finite sums.
    """

    base: ObjectiveSpec
    noise_model: str
    variance_bound_G2: float
    sigma: float = 0.0
    components: tuple = ()

    def __post_init__(self):
        if self.noise_model not in ("none", "additive_gaussian", "finite_sum"):
            raise ValueError(f"unknown noise model {self.noise_model!r}")
        if self.noise_model == "finite_sum" and not self.components:
            raise ValueError("finite_sum oracle needs at least one component")


def eval_f(spec: ObjectiveSpec, x: Vector) -> float:
    """Objective value; raises on dimension mismatch or non-finite result."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.dim,):
        raise ValueError(f"expected dim {spec.dim}, got shape {x.shape}")
    val = float(spec.f(x))
    if not np.isfinite(val):
        raise EvaluationError(f"{spec.name}: non-finite objective value at x")
    return val


def eval_grad(spec: ObjectiveSpec, x: Vector) -> Vector:
    """Analytic gradient; raises on dimension mismatch or non-finite result."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.dim,):
        raise ValueError(f"expected dim {spec.dim}, got shape {x.shape}")
    g = spec.grad(x)
    if not np.all(np.isfinite(g)):
        raise EvaluationError(f"{spec.name}: non-finite gradient at x")
    return g


def stoch_grad(oracle: StochasticOracle, x: Vector, batch_m: int, rng: RngStream) -> Vector:
    """Average of batch_m independent stochastic gradients at x.

    Advances rng deterministically; the "none" model consumes no randomness
    and returns the exact base gradient for any batch size.
    """
    if batch_m < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_m}")
    if oracle.noise_model == "none":
        return eval_grad(oracle.base, x)
    if oracle.noise_model == "additive_gaussian":
        g = eval_grad(oracle.base, x)
        noise = rng.standard_normal((batch_m, oracle.base.dim)).mean(axis=0)
        return g + oracle.sigma * noise
    # finite_sum: uniform with replacement over components
    idx = rng.integers(0, len(oracle.components), size=batch_m)
    grads = np.stack([oracle.components[i][1](x) for i in idx])
    return grads.mean(axis=0)


def deterministic_oracle(spec: ObjectiveSpec) -> StochasticOracle:
    return StochasticOracle(base=spec, noise_model="none", variance_bound_G2=0.0)


def gaussian_oracle(spec: ObjectiveSpec, sigma: float) -> StochasticOracle:
    """Additive iid Gaussian gradient noise; G^2 = dim * sigma^2 exactly."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    return StochasticOracle(base=spec, noise_model="additive_gaussian",
                            variance_bound_G2=spec.dim * sigma ** 2, sigma=sigma)


def finite_sum_oracle(spec: ObjectiveSpec, components, *, n_probe_points: int = 32,
                      probe_seed: int = 0, safety: float = 1.5) -> StochasticOracle:
    """Uniform-sampling oracle over per-sample (f_i, grad_i) pairs.

    The declared G^2 is the largest mean squared gradient deviation observed
    at seeded probe points in the test box, inflated by `safety`.
    """
    components = tuple(components)
    if not components:
        raise ValueError("need at least one component")
    rng = RngStream(probe_seed, stream_id=0xF1)
    lo, hi = spec.test_box
    g2 = 0.0
    for _ in range(n_probe_points):
        x = rng.uniform(lo, hi, size=spec.dim)
        base_g = eval_grad(spec, x)
        devs = [np.sum((comp_grad(x) - base_g) ** 2) for _, comp_grad in components]
        g2 = max(g2, float(np.mean(devs)))
    return StochasticOracle(base=spec, noise_model="finite_sum",
                            variance_bound_G2=safety * g2, components=components)


def prox_shifted(oracle: StochasticOracle, center: Vector, gamma: float) -> StochasticOracle:
    """Oracle for f(x) + ||x - center||^2 / (2*gamma).

    The quadratic term is deterministic, so it is added to the base gradient
    and to every finite-sum component alike; the noise bound is unchanged.
    Smoothness grows to L + 1/gamma, and the shifted objective is convex
    (indeed (1/gamma - L)-strongly convex) whenever gamma < 1/L.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    base = oracle.base
    center = np.array(center, dtype=np.float64)
    inv_gamma = 1.0 / gamma

    def f_shift(x, _f=base.f):
        d = x - center
        return _f(x) + 0.5 * inv_gamma * float(d @ d)

    def grad_shift(x, _g=base.grad):
        return _g(x) + inv_gamma * (x - center)

    shifted = ObjectiveSpec(
        name=f"{base.name}+prox", dim=base.dim, f=f_shift, grad=grad_shift,
        lipschitz_L=base.lipschitz_L + inv_gamma, f_opt=None,
        convex=gamma * base.lipschitz_L <= 1.0, test_box=base.test_box,
        params={"prox_gamma": gamma})

    if oracle.noise_model == "finite_sum":
        comps = tuple(
            (lambda x, _fi=fi: _fi(x) + 0.5 * inv_gamma * float((x - center) @ (x - center)),
             lambda x, _gi=gi: _gi(x) + inv_gamma * (x - center))
            for fi, gi in oracle.components)
    else:
        comps = ()
    return StochasticOracle(base=shifted, noise_model=oracle.noise_model,
                            variance_bound_G2=oracle.variance_bound_G2,
                            sigma=oracle.sigma, components=comps)


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    passed: bool
    h: float
    rel_tol: float


def check_grad(spec: ObjectiveSpec, x: Vector, h: float | None = None,
               rel_tol: float = 1e-4) -> GradCheckReport:
    """Compare the analytic gradient against central differences.

    The error is measured coordinate-wise relative to max(1, ||grad||_inf)
    so that near-stationary points do not blow up the ratio.
    """
    if rel_tol < 0:
        raise ValueError(f"rel_tol must be nonnegative, got {rel_tol}")
    x = as_vector(x, name="x")
    if h is None:
        h = default_fd_step(x)
    g = eval_grad(spec, x)
    g_fd = finite_diff_grad(spec.f, x, h)
    denom = max(1.0, float(np.max(np.abs(g))))
    max_rel_err = float(np.max(np.abs(g - g_fd))) / denom
    return GradCheckReport(max_rel_err=max_rel_err, passed=max_rel_err <= rel_tol,
                           h=h, rel_tol=rel_tol)


def build_problem(name: str, params: dict | None = None) -> ObjectiveSpec:
    """Instantiate a registered problem family with certified constants."""
    params = dict(params or {})
    if name == "quadratic":
        return _build_quadratic(params)
    if name == "rosenbrock":
        return _build_rosenbrock(params)
    if name == "saddle_quadratic":
        return _build_saddle_quadratic(params)
    if name == "sigmoid_loss":
        return _build_sigmoid_loss(params)
    raise ValueError(f"unknown problem {name!r}; choose from {PROBLEM_NAMES}")


def _build_quadratic(params: dict) -> ObjectiveSpec:
    # 0.5 x'Ax - b'x with symmetric A; L is the spectral norm of A.
    if "A" in params:
        A = np.asarray(params["A"], dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"quadratic: A must be square, got shape {A.shape}")
        A = 0.5 * (A + A.T)
        dim = A.shape[0]
    else:
        diag = params.get("diag", 1.0)
        if np.isscalar(diag):
            dim = int(params.get("dim", 0))
            if dim < 1:
                raise ValueError("quadratic: need dim when diag is scalar")
            diag = np.full(dim, float(diag))
        else:
            diag = np.asarray(diag, dtype=np.float64)
            dim = diag.size
        A = np.diag(diag)
    if "dim" in params and int(params["dim"]) != dim:
        raise ValueError(f"quadratic: dim {params['dim']} inconsistent with A ({dim})")
    b = np.asarray(params.get("b", np.zeros(dim)), dtype=np.float64)
    if b.shape != (dim,):
        raise ValueError(f"quadratic: b must have shape ({dim},), got {b.shape}")

    eigvals = np.linalg.eigvalsh(A)
    L = float(np.max(np.abs(eigvals)))
    if L == 0.0:
        raise ValueError("quadratic: A must be nonzero")
    convex = bool(eigvals[0] >= -1e-12 * L)
    f_opt = None
    if eigvals[0] > 1e-12 * L:
        x_star = np.linalg.solve(A, b)
        f_opt = float(0.5 * x_star @ (A @ x_star) - b @ x_star)

    if _is_diagonal(A):
        dvec = np.diag(A).copy()

        def f(x, _d=dvec, _b=b):
            return float(0.5 * np.sum(_d * x * x) - _b @ x)

        def grad(x, _d=dvec, _b=b):
            return _d * x - _b
    else:
        def f(x, _A=A, _b=b):
            return float(0.5 * (x @ (_A @ x)) - _b @ x)

        def grad(x, _A=A, _b=b):
            return _A @ x - _b

    return ObjectiveSpec(name="quadratic", dim=dim, f=f, grad=grad, lipschitz_L=L,
                         f_opt=f_opt, convex=convex,
                         params={"diag": np.diag(A).tolist() if _is_diagonal(A) else None})


def _is_diagonal(A: np.ndarray) -> bool:
    return bool(np.all(A == np.diag(np.diag(A))))


def _rosenbrock_f(x: Vector) -> float:
    xm, xp = x[:-1], x[1:]
    return float(np.sum(100.0 * (xp - xm ** 2) ** 2 + (1.0 - xm) ** 2))


def _rosenbrock_grad(x: Vector) -> Vector:
    xm, xp = x[:-1], x[1:]
    g = np.zeros_like(x)
    g[:-1] += -400.0 * xm * (xp - xm ** 2) - 2.0 * (1.0 - xm)
    g[1:] += 200.0 * (xp - xm ** 2)
    return g


def _rosenbrock2_grad(x: Vector) -> Vector:
    # two-dimensional special case without array slicing (hot path)
    a, b = x[0], x[1]
    t = b - a * a
    return np.array([-400.0 * a * t - 2.0 * (1.0 - a), 200.0 * t])


def _rosenbrock_hessian(x: Vector) -> np.ndarray:
    n = x.size
    H = np.zeros((n, n))
    for i in range(n - 1):
        H[i, i] += 1200.0 * x[i] ** 2 - 400.0 * x[i + 1] + 2.0
        H[i + 1, i + 1] += 200.0
        H[i, i + 1] -= 400.0 * x[i]
        H[i + 1, i] -= 400.0 * x[i]
    return H


def _build_rosenbrock(params: dict) -> ObjectiveSpec:
    dim = int(params.get("dim", 2))
    if dim < 2:
        raise ValueError(f"rosenbrock: dim must be >= 2, got {dim}")
    lo, hi = params.get("box", (-2.0, 2.0))
    if not lo < hi:
        raise ValueError(f"rosenbrock: invalid box ({lo}, {hi})")
    # Certify L over the box: spectral norm of the Hessian at every corner
    # (up to 1024 of them) plus seeded interior samples, with a 5% margin.
    rng = RngStream(0, stream_id=0xB0)
    pts = [rng.uniform(lo, hi, size=dim) for _ in range(2000)]
    if 2 ** dim <= 1024:
        corners = np.stack(np.meshgrid(*([[lo, hi]] * dim), indexing="ij"), axis=-1)
        pts.extend(corners.reshape(-1, dim))
    else:
        signs = rng.integers(0, 2, size=(1024, dim))
        pts.extend(np.where(signs == 0, lo, hi).astype(np.float64))
    L = 1.05 * max(float(np.linalg.norm(_rosenbrock_hessian(p), 2)) for p in pts)
    grad = _rosenbrock2_grad if dim == 2 else _rosenbrock_grad
    return ObjectiveSpec(name="rosenbrock", dim=dim, f=_rosenbrock_f,
                         grad=grad, lipschitz_L=L, f_opt=0.0,
                         convex=False, test_box=(float(lo), float(hi)),
                         params={"box": (float(lo), float(hi))})


def _build_saddle_quadratic(params: dict) -> ObjectiveSpec:
    # 0.5 x'Dx with an indefinite diagonal: non-convex, stationary at 0.
    if "diag" in params:
        diag = np.asarray(params["diag"], dtype=np.float64)
        dim = diag.size
    else:
        dim = int(params.get("dim", 2))
        if dim < 2:
            raise ValueError("saddle_quadratic: need dim >= 2")
        diag = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(dim)])
    if not (np.any(diag > 0) and np.any(diag < 0)):
        raise ValueError("saddle_quadratic: diagonal must be indefinite "
                         "(use quadratic for definite A)")
    if "dim" in params and int(params["dim"]) != dim:
        raise ValueError("saddle_quadratic: dim inconsistent with diag")

    def f(x, _d=diag):
        return float(0.5 * np.sum(_d * x * x))

    def grad(x, _d=diag):
        return _d * x

    return ObjectiveSpec(name="saddle_quadratic", dim=dim, f=f, grad=grad,
                         lipschitz_L=float(np.max(np.abs(diag))), f_opt=None,
                         convex=False, params={"diag": diag.tolist()})


def _sigmoid(u: np.ndarray) -> np.ndarray:
    # 1/(1+exp(u)) computed without overflow
    return 0.5 * (1.0 + np.tanh(-0.5 * u))


def _build_sigmoid_loss(params: dict) -> ObjectiveSpec:
    """Mean sigmoid loss on a planted synthetic binary dataset.

    Recipe: standard-normal features, labels from sign(features @ w_plant)
    with a seeded fraction flipped. Values lie strictly inside (0, 1), so
    f(x) - inf f < 1 everywhere: gap_bound = 1 holds globally.
    """
    dim = int(params.get("dim", 5))
    n = int(params.get("n_samples", 200))
    seed = int(params.get("seed", 0))
    flip_prob = float(params.get("flip_prob", 0.1))
    if dim < 1 or n < 1:
        raise ValueError("sigmoid_loss: dim and n_samples must be >= 1")
    if not 0.0 <= flip_prob < 0.5:
        raise ValueError(f"sigmoid_loss: flip_prob must be in [0, 0.5), got {flip_prob}")
    rng = RngStream(seed, stream_id=0x51)
    A = rng.standard_normal((n, dim))
    w_plant = rng.standard_normal(dim)
    y = np.where(A @ w_plant >= 0.0, 1.0, -1.0)
    flips = rng.uniform(size=n) < flip_prob
    y = np.where(flips, -y, y)

    def f(w, _A=A, _y=y):
        return float(np.mean(_sigmoid(_y * (_A @ w))))

    def grad(w, _A=A, _y=y):
        s = _sigmoid(_y * (_A @ w))
        return _A.T @ (s * (s - 1.0) * _y) / _A.shape[0]

    # |second derivative of the scalar loss| <= sqrt(3)/18, so the Hessian
    # norm is bounded by that times ||A'A/n||: a global certificate.
    L = _SIGMOID_CURVATURE * float(np.linalg.eigvalsh(A.T @ A / n)[-1])
    return ObjectiveSpec(name="sigmoid_loss", dim=dim, f=f, grad=grad, lipschitz_L=L,
                         f_opt=None, gap_bound=1.0, convex=False,
                         params={"n_samples": n, "seed": seed, "flip_prob": flip_prob,
                                 "_features": A, "_labels": y})


def sigmoid_components(spec: ObjectiveSpec):
    """Per-sample (f_i, grad_i) pairs for a sigmoid_loss spec, for use with
    finite_sum_oracle. The mean of the component gradients is the base
    gradient by construction."""
    if spec.name != "sigmoid_loss":
        raise ValueError("per-sample components only exist for sigmoid_loss")
    A = spec.params["_features"]
    y = spec.params["_labels"]

    def make(i):
        a_i, y_i = A[i], y[i]

        def f_i(w):
            return float(_sigmoid(np.array([y_i * (a_i @ w)]))[0])

        def grad_i(w):
            s = _sigmoid(np.array([y_i * (a_i @ w)]))[0]
            return (s * (s - 1.0) * y_i) * a_i

        return f_i, grad_i

    return tuple(make(i) for i in range(A.shape[0]))
