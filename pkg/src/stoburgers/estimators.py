"""Monte Carlo estimators built on the Galerkin dynamics.

Exponential moments ``log E exp(G)`` are accumulated with a shifted
log-sum-exp aggregate; every difference-type estimator couples its two
trajectories through the same noise (common random numbers).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .dynamics import (BlowUpError, ControlFunction, SimConfig, decompose_y, initial_condition,
                       simulate_batch)
from .montecarlo import map_paths
from .noise import exact_variance, sample_block
from .spectral import eigenvalues

BATCHES = 20
HEAVY_FRACTION = 0.5


# ---------------------------------------------------------------- aggregates

@dataclass
class LogMeanExpAggregate:
    """Streaming, mergeable accumulator for ``log mean exp(g)``.

    Stores ``sum exp(g_i - running_max)`` so that no exponential overflows.
    """

    count: int = 0
    running_max: float = -math.inf
    shifted_sum: float = 0.0
    sum_g: float = 0.0
    sum_g_sq: float = 0.0

    def add(self, values) -> "LogMeanExpAggregate":
        g = np.atleast_1d(np.asarray(values, dtype=float))
        if g.size == 0:
            return self
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite sample")
        new_max = max(self.running_max, float(g.max()))
        rescale = math.exp(self.running_max - new_max) if self.count else 0.0
        self.shifted_sum = self.shifted_sum * rescale + float(np.sum(np.exp(g - new_max)))
        self.running_max = new_max
        self.count += g.size
        self.sum_g += float(np.sum(g))
        self.sum_g_sq += float(np.sum(g * g))
        return self

    def merge(self, other: "LogMeanExpAggregate") -> "LogMeanExpAggregate":
        if other.count == 0:
            return LogMeanExpAggregate(**vars(self))
        if self.count == 0:
            return LogMeanExpAggregate(**vars(other))
        top = max(self.running_max, other.running_max)
        shifted = (self.shifted_sum * math.exp(self.running_max - top)
                   + other.shifted_sum * math.exp(other.running_max - top))
        return LogMeanExpAggregate(self.count + other.count, top, shifted,
                                   self.sum_g + other.sum_g, self.sum_g_sq + other.sum_g_sq)

    @property
    def mean(self) -> float:
        return self.sum_g / self.count

    @property
    def log_mean_exp(self) -> float:
        if self.count == 0:
            raise ValueError("empty aggregate")
        value = self.running_max + math.log(self.shifted_sum / self.count)
        # Jensen holds exactly; guard against last-ulp rounding of the mean
        return max(value, self.mean)


def log_mean_exp(values) -> float:
    return LogMeanExpAggregate().add(values).log_mean_exp


def batch_means_se(values, batches: int = BATCHES) -> float:
    """Standard error of log-mean-exp from contiguous batch estimates."""
    values = np.asarray(values, dtype=float)
    if len(values) < batches:
        raise ValueError(f"need at least {batches} samples")
    ests = [log_mean_exp(b) for b in np.array_split(values, batches)]
    return float(np.std(ests, ddof=1) / math.sqrt(batches))


def heaviness(values, top: float = 0.01) -> float:
    """Share of ``sum exp(g)`` carried by the largest ``top`` fraction of samples."""
    g = np.sort(np.asarray(values, dtype=float))[::-1]
    w = np.exp(g - g[0])
    k = max(1, math.ceil(top * len(g)))
    return float(w[:k].sum() / w.sum())


# ---------------------------------------------------------------- functionals

@dataclass(frozen=True)
class PathFunctional:
    """``G = scale * raw`` with raw one of ``sup_t ||X||^2``, ``||X_T||^2``,
    ``int ||grad Y||^2`` (``Y = X - z_alpha``) or a custom bounded function of
    the terminal state."""

    kind: str
    scale: float = 1.0
    alpha: float | None = None
    func: object = None

    def __post_init__(self):
        if self.kind not in ("sup_l2_sq", "terminal_l2_sq", "y_dissipation", "custom_bounded"):
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if not math.isfinite(self.scale):
            raise ValueError("scale must be finite")
        if self.kind == "y_dissipation" and (self.alpha is None or self.alpha < 1):
            raise ValueError("y_dissipation needs alpha >= 1")
        if self.kind == "custom_bounded" and self.func is None:
            raise ValueError("custom_bounded needs func")

    def raw(self, paths, increments, cfg: SimConfig) -> np.ndarray:
        if self.kind == "sup_l2_sq":
            return np.max(np.sum(paths**2, axis=-1), axis=-1)
        if self.kind == "terminal_l2_sq":
            return np.sum(paths[:, -1] ** 2, axis=-1)
        if self.kind == "y_dissipation":
            return decompose_y(paths, self.alpha, increments, cfg)[1]
        return np.asarray(self.func(paths[:, -1]), dtype=float)

    def with_scale(self, scale: float) -> "PathFunctional":
        return PathFunctional(self.kind, scale, self.alpha, self.func)


class GaussianWeight:
    """``phi(x) = exp(-c ||x||^2)``."""

    def __init__(self, c: float = 1.0):
        self.c = c

    def __call__(self, x):
        return np.exp(-self.c * np.sum(np.square(x), axis=-1))

    def __repr__(self):
        return f"GaussianWeight({self.c})"


class HalfSpace:
    """Indicator of ``{<x, e_k> > level}``."""

    def __init__(self, k: int = 1, level: float = 0.0):
        self.k = k
        self.level = level

    def __call__(self, x):
        return (np.asarray(x)[..., self.k - 1] > self.level).astype(float)

    def __repr__(self):
        return f"HalfSpace({self.k}, {self.level})"


class Constant:
    def __init__(self, value: float = 1.0):
        self.value = value

    def __call__(self, x):
        return np.full(np.shape(x)[:-1], float(self.value))

    def __repr__(self):
        return f"Constant({self.value})"


# ---------------------------------------------------------------- path tasks

def _simulate_chunk(cfg, x0, control, seed, start, count, stride=1):
    inc = sample_block(seed, start, count, cfg.dt, cfg.steps, cfg.n)
    paths, blowup = simulate_batch(cfg, x0, inc, control, stride=stride, check=False)
    return inc, paths, blowup


def _functional_task(cfg, x0, functional, control, seed, start, count):
    inc, paths, blowup = _simulate_chunk(cfg, x0, control, seed, start, count)
    ok = blowup < 0
    raw = np.full(count, np.nan)
    if ok.any():
        raw[ok] = functional.raw(paths[ok], inc[ok], cfg)
    return {"raw": raw, "blowup": blowup}


def sample_functional(cfg, x0, functional: PathFunctional, paths: int, seed: int = 0,
                      workers=None, control=None) -> np.ndarray:
    """Unscaled per-path functional values in path-index order.

    Raises :class:`BlowUpError` if any path left the finite range.
    """
    x0 = initial_condition(x0, cfg.n)
    task = partial(_functional_task, cfg, x0, functional, control, seed)
    out = map_paths(task, paths, workers)
    bad = np.flatnonzero(out["blowup"] >= 0)
    if bad.size:
        raise BlowUpError(out["blowup"][bad[0]], int(bad[0]))
    return out["raw"]


# ---------------------------------------------------------------- exponential moments

@dataclass
class ExpMomentResult:
    lam: float
    estimate: float
    se: float
    heaviness: float
    paths: int
    mean_g: float
    excluded: int = 0

    @property
    def unstable(self) -> bool:
        return self.heaviness > HEAVY_FRACTION

    def as_dict(self):
        return {"lambda": self.lam, "estimate": self.estimate, "se": self.se,
                "heaviness": self.heaviness, "paths": self.paths, "mean_g": self.mean_g,
                "excluded": self.excluded, "unstable": self.unstable}


def summarize_exp_moment(g, lam: float = 1.0) -> ExpMomentResult:
    g = np.asarray(g, dtype=float)
    agg = LogMeanExpAggregate().add(g)
    return ExpMomentResult(lam, agg.log_mean_exp, batch_means_se(g), heaviness(g), len(g), agg.mean)


def exp_moment(cfg, x0, functional: PathFunctional, paths: int, seed: int = 0,
               workers=None, control=None) -> ExpMomentResult:
    """Estimate ``log E exp(scale * raw)`` with batch-means standard error."""
    if paths < 100:
        raise ValueError("exp_moment needs at least 100 paths")
    raw = sample_functional(cfg, x0, functional, paths, seed, workers, control)
    return summarize_exp_moment(functional.scale * raw, functional.scale)


def linear_variances(gamma: float, alpha: float, n: int, horizon: float) -> np.ndarray:
    lam = eigenvalues(n)
    return exact_variance(lam + alpha, horizon, gamma, lam)


def critical_lambda(gamma: float, alpha: float, n: int, horizon: float) -> float:
    return float(1.0 / (2.0 * linear_variances(gamma, alpha, n, horizon).max()))


def linear_oracle_moment(gamma: float, alpha: float, n: int, horizon: float, lam: float,
                         x0=None) -> float:
    """Exact ``log E exp(lam ||X_T||^2)`` for the linear Galerkin system.

    Each mode is Gaussian with mean ``exp(-(alpha_k + alpha) T) x0_k`` and the
    exact OU variance, so the moment is ``sum -1/2 log(1 - 2 lam s2) + lam m^2 / (1 - 2 lam s2)``.
    """
    s2 = linear_variances(gamma, alpha, n, horizon)
    crit = 1.0 / (2.0 * s2.max())
    if lam >= crit:
        raise ValueError(f"lambda={lam} at or beyond the critical value {crit:.6g}")
    q = 1.0 - 2.0 * lam * s2
    value = -0.5 * np.sum(np.log(q))
    if x0 is not None:
        mean = np.exp(-(eigenvalues(n) + alpha) * horizon) * initial_condition(x0, n)
        value += lam * np.sum(mean**2 / q)
    return float(value)


@dataclass
class ScanRow:
    lam: float
    estimate: float
    se: float
    heaviness: float
    estimate_half: float
    se_half: float
    stable: bool


def lambda_scan(cfg, x0, kind: str, lambdas, paths: int, seed: int = 0, workers=None,
                alpha: float | None = None):
    """Estimate at ``paths`` and ``2 * paths`` for every lambda on one set of trajectories.

    A row is stable when the two estimates differ by less than two combined
    standard errors and the heaviness stays at or below one half.
    """
    lambdas = [float(v) for v in lambdas]
    if lambdas != sorted(lambdas):
        raise ValueError("lambda grid must be sorted ascending")
    raw = sample_functional(cfg, x0, PathFunctional(kind, 1.0, alpha), 2 * paths, seed, workers)
    rows = []
    for lam in lambdas:
        full = summarize_exp_moment(lam * raw, lam)
        half = summarize_exp_moment(lam * raw[:paths], lam)
        diff = abs(full.estimate - half.estimate)
        stable = bool(diff <= 2.0 * math.hypot(full.se, half.se) and not full.unstable)
        rows.append(ScanRow(lam, full.estimate, full.se, full.heaviness,
                            half.estimate, half.se, stable))
    return rows


# ---------------------------------------------------------------- variational check

def lq_oracle_control(cfg: SimConfig, lam: float, x0) -> ControlFunction:
    """Best deterministic control for ``G = lam ||X_T||^2`` on the linear system.

    Mode by mode, the terminal shift ``d`` costs ``d^2 / (2 G_k)`` with the
    discrete controllability Gramian ``G_k`` (backward Lyapunov recursion);
    maximizing ``lam (m + d)^2 - d^2 / (2 G_k)`` gives ``d = 2 lam G_k m / (1 - 2 lam G_k)``.
    """
    decay, phi_dt, _, frac = cfg.coefficients
    S = cfg.steps
    gain = np.empty((S, cfg.n))
    gram = np.zeros(cfg.n)
    for m in range(S - 1, -1, -1):
        # effect of u_m on X_T
        gain[m] = decay ** (S - 1 - m) * phi_dt * frac
        gram += gain[m] ** 2 / cfg.dt
    if np.any(2.0 * lam * gram >= 1.0):
        raise ValueError("lambda beyond the deterministic control radius")
    mean = decay**S * initial_condition(x0, cfg.n)
    shift = 2.0 * lam * gram * mean / (1.0 - 2.0 * lam * gram)
    return ControlFunction(gain * (shift / gram) / cfg.dt, cfg.dt)


@dataclass
class ControlScore:
    label: str
    value: float
    se: float
    control_cost: float
    ok: bool


@dataclass
class VariationalReport:
    log_mean_exp: float
    se: float
    scores: list = field(default_factory=list)

    @property
    def best(self) -> ControlScore:
        return max(self.scores, key=lambda s: s.value)

    @property
    def gap(self) -> float:
        return self.log_mean_exp - self.best.value

    @property
    def passed(self) -> bool:
        return all(s.ok for s in self.scores)


def variational_check(cfg, x0, functional: PathFunctional, controls, paths: int, seed: int = 0,
                      workers=None, labels=None) -> VariationalReport:
    """Check ``E[G(X^u) - 1/2 ||u||^2] <= log E exp G(X^0)`` for deterministic controls.

    All controls reuse the uncontrolled noise paths.
    """
    g0 = functional.scale * sample_functional(cfg, x0, functional, paths, seed, workers)
    base = summarize_exp_moment(g0)
    report = VariationalReport(base.estimate, base.se)
    labels = labels or [f"u{i}" for i in range(len(controls))]
    for label, u in zip(labels, controls):
        cost = 0.5 * u.sq_norm
        gu = functional.scale * sample_functional(cfg, x0, functional, paths, seed, workers, u)
        vals = gu - cost
        value = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(paths))
        ok = value <= base.estimate + 3.0 * math.hypot(se, base.se)
        report.scores.append(ControlScore(label, value, se, cost, bool(ok)))
    return report


# ---------------------------------------------------------------- gradients

@dataclass(frozen=True)
class GradientQuery:
    x: np.ndarray
    h: np.ndarray
    t: float
    phi: object

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("t must be positive")
        if not math.isclose(float(np.linalg.norm(self.h)), 1.0, rel_tol=1e-9):
            raise ValueError("direction h must have unit L2 norm")


@dataclass
class Estimate:
    value: float
    se: float
    paths: int

    def ci(self, z: float = 1.959963984540054):
        return self.value - z * self.se, self.value + z * self.se


def _mean_se(samples) -> Estimate:
    samples = np.asarray(samples, dtype=float)
    return Estimate(float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(len(samples))),
                    len(samples))


def _bel_task(cfg, x, h, phi, seed, start, count):
    from .dynamics import derivative_flow

    inc, paths, blowup = _simulate_chunk(cfg, x, None, seed, start, count)
    if np.any(blowup >= 0):
        raise BlowUpError(blowup[blowup >= 0][0], start + int(np.argmax(blowup >= 0)))
    eta = derivative_flow(paths, h, cfg).path
    smooth = eta[:, :-1] * cfg.basis.eigenvalues ** (-cfg.gamma)
    integral = np.sum(smooth * inc, axis=(1, 2))
    return {"weight": phi(paths[:, -1]) * integral / cfg.horizon}


def bel_weights(query: GradientQuery, cfg: SimConfig, paths: int, seed: int = 0,
                workers=None) -> np.ndarray:
    """Per-path Bismut-Elworthy-Li weights ``phi(X_t) (1/t) sum <(-A)^-gamma eta_m, dbeta_m>``."""
    run = cfg.replace(horizon=query.t)
    x = initial_condition(query.x, cfg.n)
    h = initial_condition(query.h, cfg.n)
    task = partial(_bel_task, run, x, h, query.phi, seed)
    return map_paths(task, paths, workers)["weight"]


def bel_gradient(query: GradientQuery, cfg: SimConfig, paths: int, seed: int = 0,
                 workers=None) -> Estimate:
    """Estimate ``D_h P_t phi(x)`` by the Bismut-Elworthy-Li formula (left-point Ito sum)."""
    return _mean_se(bel_weights(query, cfg, paths, seed, workers))


def _fd_task(cfg, x, h, eps, phi, seed, start, count):
    inc = sample_block(seed, start, count, cfg.dt, cfg.steps, cfg.n)
    plus, _ = simulate_batch(cfg, x + eps * h, inc, stride=cfg.steps)
    minus, _ = simulate_batch(cfg, x - eps * h, inc, stride=cfg.steps)
    return {"diff": (phi(plus[:, -1]) - phi(minus[:, -1])) / (2.0 * eps)}


def fd_gradient(query: GradientQuery, cfg: SimConfig, paths: int, eps: float = 1e-2,
                seed: int = 0, workers=None) -> Estimate:
    """Central finite difference of ``P_t phi`` along ``h`` with common random numbers."""
    run = cfg.replace(horizon=query.t)
    x = initial_condition(query.x, cfg.n)
    h = initial_condition(query.h, cfg.n)
    task = partial(_fd_task, run, x, h, eps, query.phi, seed)
    return _mean_se(map_paths(task, paths, workers)["diff"])


# ---------------------------------------------------------------- Lipschitz probe

@dataclass
class LipschitzReport:
    times: np.ndarray
    ratio: np.ndarray
    se: np.ndarray
    slope: float
    constant: float


def _lip_task(cfg, x, xp, phi, stride, seed, start, count):
    inc = sample_block(seed, start, count, cfg.dt, cfg.steps, cfg.n)
    a, _ = simulate_batch(cfg, x, inc, stride=stride)
    b, _ = simulate_batch(cfg, xp, inc, stride=stride)
    return {"diff": phi(a[:, 1:]) - phi(b[:, 1:])}


def lipschitz_probe(cfg: SimConfig, x, xp, phi, times, paths: int, seed: int = 0,
                    workers=None) -> LipschitzReport:
    """``|P_t phi(x) - P_t phi(x')| / ||x - x'||`` on a grid of times, CRN-coupled.

    Reports the log-log slope in ``t`` and ``max_t ratio(t) sqrt(t)``.
    """
    x = initial_condition(x, cfg.n)
    xp = initial_condition(xp, cfg.n)
    dist = float(np.linalg.norm(x - xp))
    if dist == 0.0:
        raise ValueError("x and x' must differ")
    times = np.asarray(sorted(times), dtype=float)
    steps = np.rint(times / cfg.dt).astype(int)
    if np.any(steps < 1) or not np.allclose(steps * cfg.dt, times, rtol=1e-9, atol=0):
        raise ValueError("probe times must be positive multiples of dt")
    stride = int(np.gcd.reduce(steps))
    run = cfg.replace(horizon=float(steps[-1] * cfg.dt))
    task = partial(_lip_task, run, x, xp, phi, stride, seed)
    diff = map_paths(task, paths, workers)["diff"][:, steps // stride - 1]
    ratio = np.abs(diff.mean(axis=0)) / dist
    se = diff.std(axis=0, ddof=1) / math.sqrt(paths) / dist
    keep = ratio > 0
    slope = float(np.polyfit(np.log(times[keep]), np.log(ratio[keep]), 1)[0]) if keep.sum() >= 2 else math.nan
    return LipschitzReport(times, ratio, se, slope, float(np.max(ratio * np.sqrt(times))))


# ---------------------------------------------------------------- invariant tails

@dataclass
class TailFit:
    thresholds: np.ndarray
    log_survival: np.ndarray
    slope: float
    intercept: float
    log_coef: float
    r_squared: float
    samples: int

    @property
    def exponential(self) -> bool:
        return self.slope < 0 and self.r_squared >= 0.9


def fit_tail(samples, n_thresholds: int = 40) -> TailFit:
    """Regress ``log P(S > r)`` on ``(1, r, log r)`` for ``r`` from the median to the
    99.5% quantile; the ``log r`` column absorbs the Gaussian-type prefactor."""
    s = np.sort(np.asarray(samples, dtype=float))
    lo, hi = np.quantile(s, [0.5, 0.995])
    r = np.linspace(lo, hi, n_thresholds)
    surv = 1.0 - np.searchsorted(s, r, side="right") / len(s)
    y = np.log(surv)
    design = np.column_stack([np.ones_like(r), r, np.log(r)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    r2 = 1.0 - float(resid @ resid) / float(np.sum((y - y.mean()) ** 2))
    return TailFit(r, y, float(coef[1]), float(coef[0]), float(coef[2]), r2, len(s))


def invariant_samples(cfg: SimConfig, burn_in: float, sample_horizon: float, thinning: float,
                      seed: int = 0, x0="zero") -> np.ndarray:
    """``||X_t||^2`` every ``thinning`` time units after ``burn_in`` on one long path."""
    if burn_in < 10:
        raise ValueError("burn_in must be at least 10 time units")
    stride = round(thinning / cfg.dt)
    if stride < 1 or not math.isclose(stride * cfg.dt, thinning, rel_tol=1e-9):
        raise ValueError("thinning must be a positive multiple of dt")
    burn = round(burn_in / cfg.dt)
    total = burn + round(sample_horizon / cfg.dt)
    total -= total % stride
    count = (total - burn) // stride
    if count < 200:
        raise ValueError(f"only {max(count, 0)} post-burn-in samples; need at least 200")
    run = cfg.replace(horizon=total * cfg.dt)
    inc = sample_block(seed, 0, 1, run.dt, run.steps, run.n)
    path, _ = simulate_batch(run, initial_condition(x0, cfg.n), inc, stride=stride)
    first = -(-burn // stride)
    return np.sum(path[0, first:] ** 2, axis=-1)


def invariant_tail(cfg: SimConfig, burn_in: float, sample_horizon: float, thinning: float,
                   seed: int = 0) -> TailFit:
    return fit_tail(invariant_samples(cfg, burn_in, sample_horizon, thinning, seed))

