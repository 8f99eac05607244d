"""Cylindrical Wiener increments and the shifted stochastic convolution.

Mode ``k`` of ``z_alpha`` solves the scalar OU equation
``dz_k = -(alpha_k + alpha) z_k dt + alpha_k^gamma dbeta_k`` with ``z_k(0) = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeding import path_generator
from .spectral import BasisSpec, apply_frac_laplacian, eigenvalues, lp_norm

ALPHA_GRID = tuple(2.0**j for j in range(7))


def check_gamma(gamma: float):
    if not 0.0 <= gamma < 0.25:
        raise ValueError(f"gamma must lie in [0, 1/4), got {gamma}")


def decay_factor(rate, h: float) -> np.ndarray:
    return np.exp(-np.asarray(rate, dtype=float) * h)


def exact_variance(rate, h: float, gamma: float = 0.0, lam=None) -> np.ndarray:
    """Variance ``lam^(2 gamma) (1 - exp(-2 rate h)) / (2 rate)`` of one exact OU step.

    ``lam`` defaults to ``rate``; pass the unshifted eigenvalue when ``rate``
    carries an extra shift.
    """
    rate = np.asarray(rate, dtype=float)
    lam = rate if lam is None else np.asarray(lam, dtype=float)
    return lam ** (2 * gamma) * -np.expm1(-2.0 * rate * h) / (2.0 * rate)


def noise_weight(rate, h: float) -> np.ndarray:
    """Per-mode multiplier of a Brownian increment that reproduces the exact
    one-step OU variance: ``sqrt((1 - exp(-2 rate h)) / (2 rate h))``."""
    x = 2.0 * np.asarray(rate, dtype=float) * h
    return np.sqrt(-np.expm1(-x) / x)


@dataclass(frozen=True)
class NoisePath:
    """Brownian increments of modes 1..n over ``steps`` steps of size ``dt``.

    Draws are taken mode-major, so the first ``n'`` modes of a path agree for
    every ``n >= n'`` with the same ``(seed, path_index, dt, steps)``.
    """

    seed: int
    path_index: int
    dt: float
    steps: int
    increments: np.ndarray

    @classmethod
    def generate(cls, seed: int, path_index: int, dt: float, steps: int, n: int) -> "NoisePath":
        return cls(seed, path_index, dt, steps, sample_increments(seed, path_index, dt, steps, n))

    @property
    def n(self) -> int:
        return self.increments.shape[1]

    @property
    def horizon(self) -> float:
        return self.dt * self.steps

    def coarsen(self, factor: int) -> "NoisePath":
        """Sum blocks of ``factor`` consecutive increments (same Brownian path, larger step)."""
        if self.steps % factor:
            raise ValueError(f"{self.steps} steps not divisible by {factor}")
        inc = self.increments.reshape(self.steps // factor, factor, -1).sum(axis=1)
        return NoisePath(self.seed, self.path_index, self.dt * factor, self.steps // factor, inc)

    def truncate_modes(self, n: int) -> "NoisePath":
        return NoisePath(self.seed, self.path_index, self.dt, self.steps,
                         np.ascontiguousarray(self.increments[:, :n]))

    @classmethod
    def zeros(cls, dt: float, steps: int, n: int) -> "NoisePath":
        return cls(0, 0, dt, steps, np.zeros((steps, n)))


def sample_increments(seed: int, path_index: int, dt: float, steps: int, n: int) -> np.ndarray:
    if dt <= 0 or steps < 1:
        raise ValueError("need dt > 0 and steps >= 1")
    rng = path_generator(seed, path_index)
    draws = rng.standard_normal((n, steps))
    return np.ascontiguousarray(draws.T) * math.sqrt(dt)


def sample_block(seed: int, start: int, count: int, dt: float, steps: int, n: int) -> np.ndarray:
    """Increments for paths ``start .. start+count-1``, shape (count, steps, n)."""
    out = np.empty((count, steps, n))
    for i in range(count):
        out[i] = sample_increments(seed, start + i, dt, steps, n)
    return out


@dataclass(frozen=True)
class OuState:
    t: float
    alpha: float
    gamma: float
    coeffs: np.ndarray

    def __post_init__(self):
        check_gamma(self.gamma)
        if self.alpha < 0 or self.t < 0:
            raise ValueError("t and alpha must be nonnegative")

    @classmethod
    def initial(cls, n: int, alpha: float = 0.0, gamma: float = 0.0) -> "OuState":
        return cls(0.0, alpha, gamma, np.zeros(n))


def ou_exact_step(state: OuState, h: float, w) -> OuState:
    """Advance by ``h`` exactly in law, given standard normal draws ``w`` per mode.

    ``w`` may carry leading batch axes.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    n = state.coeffs.shape[-1]
    lam = eigenvalues(n)
    rate = lam + state.alpha
    sigma = np.sqrt(exact_variance(rate, h, state.gamma, lam))
    coeffs = decay_factor(rate, h) * state.coeffs + sigma * np.asarray(w, dtype=float)
    return OuState(state.t + h, state.alpha, state.gamma, coeffs)


def ou_coefficients(n: int, dt: float, alpha: float, gamma: float):
    """Per-mode (decay, noise coefficient) of the shared-noise OU update."""
    lam = eigenvalues(n)
    rate = lam + alpha
    return decay_factor(rate, dt), lam**gamma * noise_weight(rate, dt)


def ou_path(increments, dt: float, alpha: float, gamma: float) -> np.ndarray:
    """Values of ``z_alpha`` on the noise grid, shape (..., steps + 1, n).

    Every ``alpha`` consumes the same increments, so paths for different
    shifts are coupled.  With ``alpha = 0`` this is exactly the stochastic
    convolution carried by the dynamics.
    """
    check_gamma(gamma)
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    inc = increments.increments if isinstance(increments, NoisePath) else np.asarray(increments)
    if isinstance(increments, NoisePath) and increments.dt != dt:
        raise ValueError("noise grid does not match dt")
    steps, n = inc.shape[-2:]
    decay, coef = ou_coefficients(n, dt, alpha, gamma)
    out = np.zeros(inc.shape[:-2] + (steps + 1, n))
    z = out[..., 0, :]
    for m in range(steps):
        z = decay * z + coef * inc[..., m, :]
        out[..., m + 1, :] = z
    return out


def stationary_second_moment(alpha: float, gamma: float, n: int) -> float:
    """``sum_k alpha_k^(2 gamma) / (2 (alpha_k + alpha))`` over the first n modes."""
    lam = eigenvalues(n)
    return float(np.sum(lam ** (2 * gamma) / (2.0 * (lam + alpha))))


def ou_second_moment(t: float, alpha: float, gamma: float, n: int) -> float:
    """``E ||z_alpha(t)||^2`` for the Galerkin truncation at time ``t``."""
    lam = eigenvalues(n)
    return float(np.sum(exact_variance(lam + alpha, t, gamma, lam)))


def sup_l4_statistic(increments, dt: float, alpha: float, gamma: float, kappa: float,
                     basis: BasisSpec, horizon: float | None = None) -> np.ndarray:
    """``sup_t ||(-A)^kappa z_alpha(t)||_{L4}`` over grid times ``t <= horizon``."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if kappa + gamma >= 0.25:
        raise ValueError("need kappa + gamma < 1/4")
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    z = ou_path(increments, dt, alpha, gamma)
    if horizon is not None:
        z = z[..., : int(round(horizon / dt)) + 1, :]
    if kappa:
        z = apply_frac_laplacian(z, kappa)
    return lp_norm(z, 4, basis).max(axis=-1)


def k_hat_proxy(increments, dt: float, gamma: float, eps1: float, basis: BasisSpec,
                alphas=ALPHA_GRID) -> np.ndarray:
    """Smallest constant ``K`` with ``sup_t ||z_alpha||_{L4} <= alpha^(eps1 + gamma - 1/4) (1 + sqrt(T)) K``
    over the alpha grid, on each realized path."""
    if not 0 < eps1 < 0.25 - gamma:
        raise ValueError("need 0 < eps1 < 1/4 - gamma")
    steps = np.shape(increments.increments if isinstance(increments, NoisePath) else increments)[-2]
    horizon = steps * dt
    scale = 0.25 - eps1 - gamma
    vals = [a**scale * sup_l4_statistic(increments, dt, a, gamma, 0.0, basis)
            for a in alphas]
    return np.max(vals, axis=0) / (1.0 + math.sqrt(horizon))


@dataclass(frozen=True)
class AlphaSelection:
    eps1: float
    eps_prime: float
    k_hat: float
    alpha_chosen: float


def select_alpha(k_hat: float, gamma: float, eps1: float, eps_prime: float) -> AlphaSelection:
    """``alpha = (k_hat^(1 / (1/4 - eps1 - gamma)) + 1) / eps_prime``."""
    check_gamma(gamma)
    if not 0 < eps1 < 0.25 - gamma:
        raise ValueError("need 0 < eps1 < 1/4 - gamma")
    if not 0 < eps_prime <= 1:
        raise ValueError("need 0 < eps_prime <= 1")
    if k_hat < 0:
        raise ValueError("k_hat must be nonnegative")
    alpha = (k_hat ** (1.0 / (0.25 - eps1 - gamma)) + 1.0) / eps_prime
    return AlphaSelection(eps1, eps_prime, float(k_hat), float(alpha))
