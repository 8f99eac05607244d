"""Time integration of the Galerkin stochastic Burgers system.

All processes are advanced by exponential Euler on the sine modes::

    X+ = E X + phi1 dt (B_n(X) + (-A)^gamma u) + (-A)^gamma Q dbeta

with ``E = exp(-alpha_k dt)``, ``phi1 dt = (1 - E) / alpha_k`` and the noise
weight ``Q`` from :func:`stoburgers.noise.noise_weight`, which makes the
linear part exact in law and is shared with :func:`stoburgers.noise.ou_path`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .noise import NoisePath, check_gamma, noise_weight, ou_path
from .spectral import (BasisSpec, burgers_nonlinearity, hs_norm, l2_norm, lp_norm, to_grid,
                       unit_mode)


class BlowUpError(FloatingPointError):
    """A path left the finite range; ``step`` is the first offending step index."""

    def __init__(self, step: int, path_index: int | None = None):
        self.step = int(step)
        self.path_index = path_index
        where = f" (path {path_index})" if path_index is not None else ""
        super().__init__(f"non-finite state at step {step}{where}")


@dataclass(frozen=True)
class SimConfig:
    gamma: float
    n: int
    dt: float
    horizon: float
    m_quad: int | None = None
    nonlinear: bool = True
    scheme: str = "exponential_euler"

    def __post_init__(self):
        check_gamma(self.gamma)
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        steps = round(self.horizon / self.dt)
        if steps < 1 or not math.isclose(steps * self.dt, self.horizon, rel_tol=1e-9):
            raise ValueError(f"horizon {self.horizon} is not an integer number of steps of {self.dt}")
        if self.scheme != "exponential_euler":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "m_quad", self.basis.m_quad)

    @property
    def steps(self) -> int:
        return round(self.horizon / self.dt)

    @cached_property
    def basis(self) -> BasisSpec:
        return BasisSpec(self.n, self.m_quad)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    @cached_property
    def coefficients(self):
        """Per-mode (decay, phi1*dt, noise coefficient, alpha_k^gamma)."""
        lam = self.basis.eigenvalues
        decay = np.exp(-lam * self.dt)
        phi_dt = -np.expm1(-lam * self.dt) / lam
        frac = lam**self.gamma
        return decay, phi_dt, frac * noise_weight(lam, self.dt), frac

    def replace(self, **changes) -> "SimConfig":
        kw = dict(gamma=self.gamma, n=self.n, dt=self.dt, horizon=self.horizon,
                  m_quad=None, nonlinear=self.nonlinear, scheme=self.scheme)
        kw.update(changes)
        return SimConfig(**kw)


def initial_condition(spec, n: int) -> np.ndarray:
    """Coefficient vector from an array or a preset name.

    Presets: ``"zero"``, ``"e_k"`` (e.g. ``"e_3"``), ``"sawtooth"``
    (``x(xi) = xi``, coefficients ``sqrt(2) (-1)^(k+1) / (k pi)``).
    A scalar multiple can be written ``"2*e_1"``.
    """
    if isinstance(spec, str):
        scale = 1.0
        name = spec.strip()
        if "*" in name:
            head, name = name.split("*", 1)
            scale = float(head)
        if name == "zero":
            x = np.zeros(n)
        elif name.startswith("e_"):
            x = unit_mode(int(name[2:]), n)
        elif name == "sawtooth":
            k = np.arange(1, n + 1)
            x = math.sqrt(2.0) * (-1.0) ** (k + 1) / (k * np.pi)
        else:
            raise ValueError(f"unknown initial condition preset {spec!r}")
        return scale * x
    x = np.asarray(spec, dtype=float)
    if x.ndim != 1:
        raise ValueError("initial condition must be a coefficient vector")
    if len(x) >= n:
        return x[:n].copy()
    return np.pad(x, (0, n - len(x)))


@dataclass
class StatePath:
    times: np.ndarray
    fields: np.ndarray
    basis: BasisSpec
    blowup_step: int = -1

    @cached_property
    def l2(self) -> np.ndarray:
        return l2_norm(self.fields)

    @cached_property
    def h1(self) -> np.ndarray:
        return hs_norm(self.fields, 1.0)

    @cached_property
    def l4(self) -> np.ndarray:
        return lp_norm(self.fields, 4, self.basis)

    @property
    def terminal(self) -> np.ndarray:
        return self.fields[-1]


@dataclass
class ControlFunction:
    """Deterministic control sampled at the left end of every time step, shape (steps, n)."""

    values: np.ndarray
    dt: float

    @property
    def sq_norm(self) -> float:
        return float(np.sum(self.values**2) * self.dt)

    @classmethod
    def zero(cls, cfg: SimConfig) -> "ControlFunction":
        return cls(np.zeros((cfg.steps, cfg.n)), cfg.dt)

    @classmethod
    def from_function(cls, cfg: SimConfig, func) -> "ControlFunction":
        vals = np.array([func(t) for t in cfg.times[:-1]], dtype=float)
        return cls(vals.reshape(cfg.steps, cfg.n), cfg.dt)


def _drive(u, cfg: SimConfig):
    if u is None:
        return None
    vals = u.values if isinstance(u, ControlFunction) else np.asarray(u, dtype=float)
    if vals.shape != (cfg.steps, cfg.n):
        raise ValueError(f"control has shape {vals.shape}, expected {(cfg.steps, cfg.n)}")
    return cfg.coefficients[3] * vals


def step_burgers(x, dbeta, u_val, cfg: SimConfig) -> np.ndarray:
    """One exponential Euler step (reference implementation via fast transforms)."""
    decay, phi_dt, noise_coef, frac = cfg.coefficients
    x = np.asarray(x, dtype=float)
    force = burgers_nonlinearity(x, cfg.basis) if cfg.nonlinear else np.zeros_like(x)
    if u_val is not None:
        force = force + frac * np.asarray(u_val, dtype=float)
    out = decay * x + phi_dt * force + noise_coef * np.asarray(dbeta, dtype=float)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(0)
    return out


def simulate_batch(cfg: SimConfig, x0, increments, u=None, stride: int = 1, check: bool = True):
    """Advance a batch of paths driven by ``increments`` (P, steps, n).

    Returns (P, steps // stride + 1, n) and the per-path blow-up step (-1 if none).
    With ``check`` a :class:`BlowUpError` is raised on the first non-finite path.
    """
    increments = np.asarray(increments, dtype=float)
    if increments.ndim != 3 or increments.shape[1:] != (cfg.steps, cfg.n):
        raise ValueError(f"increments of shape {increments.shape} do not match "
                         f"{cfg.steps} steps x {cfg.n} modes")
    if cfg.steps % stride:
        raise ValueError("stride must divide the number of steps")
    P = increments.shape[0]
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (P, cfg.n))
    decay, phi_dt, noise_coef, _ = cfg.coefficients
    b = cfg.basis
    out, blowup = kernels.burgers_run(np.ascontiguousarray(x0), increments, decay, phi_dt,
                                      noise_coef, _drive(u, cfg), b.synthesis_matrix,
                                      b.flux_matrix, cfg.nonlinear, stride)
    if check and np.any(blowup >= 0):
        i = int(np.argmax(blowup >= 0))
        raise BlowUpError(blowup[i], i)
    return out, blowup


def simulate_path(cfg: SimConfig, x0, noise: NoisePath, u=None) -> StatePath:
    if noise.steps != cfg.steps or not math.isclose(noise.dt, cfg.dt) or noise.n < cfg.n:
        raise ValueError("noise grid does not match the configuration")
    inc = noise.increments[None, :, : cfg.n]
    x0 = initial_condition(x0, cfg.n)
    out, blowup = simulate_batch(cfg, x0, inc, u, check=False)
    if blowup[0] >= 0:
        raise BlowUpError(blowup[0], noise.path_index)
    return StatePath(cfg.times, out[0], cfg.basis)


def decompose_y(path, alpha: float, noise, cfg: SimConfig):
    """Split ``X = Y + z_alpha`` on a shared noise path.

    Returns ``(Y, dissipation)`` with ``dissipation = sum_m ||Y_m||_{H1}^2 dt``
    over the left end points.  Works on stacked paths too.
    """
    fields = path.fields if isinstance(path, StatePath) else np.asarray(path)
    inc = noise.increments if isinstance(noise, NoisePath) else np.asarray(noise)
    inc = inc[..., : cfg.n]
    if inc.shape[-2] != fields.shape[-2] - 1:
        raise ValueError("noise grid does not match the path")
    z = ou_path(inc, cfg.dt, alpha, cfg.gamma)
    y = fields - z
    dissipation = np.sum(hs_norm(y[..., :-1, :], 1.0) ** 2, axis=-1) * cfg.dt
    return y, dissipation


@dataclass
class DerivativeState:
    h: np.ndarray
    path: np.ndarray


def derivative_flow(path, h, cfg: SimConfig) -> DerivativeState:
    """Derivative of the discrete flow in the initial condition along ``h``.

    ``deta = A eta + pi_n d/dxi (X eta)``, i.e. the Frechet derivative of
    ``1/2 d/dxi x^2``; exactly the linearization of :func:`step_burgers`.
    """
    fields = path.fields if isinstance(path, StatePath) else np.asarray(path, dtype=float)
    if not np.all(np.isfinite(fields)):
        bad = int(np.argmax(~np.isfinite(fields).all(axis=-1)))
        raise BlowUpError(bad)
    h = np.asarray(h, dtype=float)[..., : cfg.n]
    single = fields.ndim == 2
    xs = fields[None] if single else fields
    hs = np.broadcast_to(h, (xs.shape[0], cfg.n))
    decay, phi_dt, _, _ = cfg.coefficients
    b = cfg.basis
    eta = kernels.derivative_run(np.ascontiguousarray(xs), np.ascontiguousarray(hs), decay,
                                 phi_dt, b.synthesis_matrix, b.flux_matrix, cfg.nonlinear)
    return DerivativeState(h, eta[0] if single else eta)


def derivative_growth_exponent(path, eta, h, alpha: float, noise, cfg: SimConfig) -> float:
    """Smallest ``L`` with ``sup_t ||eta_t||^2 <= exp(L S) ||h||^2`` on one path.

    ``S = ||z_alpha||^2_{L2_t C_xi} + ||Y||^{4/3}_{L2_t H1}``, with the sup
    norm taken on the collocation grid.
    """
    y, diss = decompose_y(path, alpha, noise, cfg)
    inc = noise.increments if isinstance(noise, NoisePath) else np.asarray(noise)
    z = ou_path(inc[..., : cfg.n], cfg.dt, alpha, cfg.gamma)
    zsup = np.abs(to_grid(z[:-1], cfg.basis)).max(axis=-1)
    size = np.sum(zsup**2) * cfg.dt + diss ** (2.0 / 3.0)
    growth = np.max(l2_norm(eta) ** 2) / l2_norm(np.asarray(h, dtype=float)) ** 2
    return float(np.log(growth) / size) if size > 0 else 0.0


@dataclass
class EnergyReport:
    """Per-step terms of ``1/2 d||Y||^2/dt = -||grad Y||^2 + alpha <Y,z> + <(-A)^g Y, u> + <Y, B(Y+z)>``."""

    lhs: np.ndarray
    dissipation: np.ndarray
    shift: np.ndarray
    control: np.ndarray
    transport: np.ndarray
    residual: np.ndarray = field(init=False)

    def __post_init__(self):
        self.residual = self.lhs - (-self.dissipation + self.shift + self.control + self.transport)

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def energy_diagnostic(y, z, u, alpha: float, cfg: SimConfig) -> EnergyReport:
    """Terms of the energy balance over each step, averaged along the exact linear flow.

    Dissipation is ``sum (1 - e^(-2 a_k dt)) / (2 dt) y_k^2``, the step mean of
    ``||grad e^(At) y||^2``; forcing terms pair ``E y`` with ``phi1 f``.  This
    keeps stiff modes consistent, so the residual is first order in dt for
    smooth data.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    dt = cfg.dt
    decay, phi_dt, _, frac = cfg.coefficients
    lam = cfg.basis.eigenvalues
    left = y[:-1]
    pair = decay * phi_dt / dt * left
    lhs = 0.5 * (np.sum(y[1:] ** 2, axis=-1) - np.sum(left**2, axis=-1)) / dt
    dissipation = np.sum(-np.expm1(-2 * lam * dt) / (2 * dt) * left**2, axis=-1)
    shift = alpha * np.sum(pair * z[:-1], axis=-1)
    if u is None:
        control = np.zeros_like(lhs)
    else:
        vals = u.values if isinstance(u, ControlFunction) else np.asarray(u)
        control = np.sum(pair * frac * vals, axis=-1)
    if cfg.nonlinear:
        transport = np.sum(pair * burgers_nonlinearity(left + z[:-1], cfg.basis), axis=-1)
    else:
        transport = np.zeros_like(lhs)
    return EnergyReport(lhs, dissipation, shift, control, transport)


def write_trajectory_csv(path: StatePath, fh, mode: str = "norms"):
    """Dump a trajectory as ``t,k,coeff`` rows or ``t,norm_l2,norm_h1,norm_l4`` rows."""
    w = csv.writer(fh)
    if mode == "coeffs":
        w.writerow(["t", "k", "coeff"])
        for t, row in zip(path.times, path.fields):
            for k, c in enumerate(row, start=1):
                w.writerow([f"{t:.17g}", k, f"{c:.17g}"])
    elif mode == "norms":
        w.writerow(["t", "norm_l2", "norm_h1", "norm_l4"])
        for row in zip(path.times, path.l2, path.h1, path.l4):
            w.writerow([f"{v:.17g}" for v in row])
    else:
        raise ValueError(f"unknown dump mode {mode!r}")
