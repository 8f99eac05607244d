"""Dirichlet sine-basis representation on the unit interval.

Fields are plain numpy arrays of sine coefficients against the orthonormal
basis ``e_k(xi) = sqrt(2) sin(k pi xi)``, ``k = 1..n``; the last axis indexes
the mode, so every routine here also works on stacks of fields.  Grid values
live at the interior collocation points ``xi_j = j / (m + 1)``, ``j = 1..m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft

SQRT2 = math.sqrt(2.0)


def min_quadrature_points(n: int) -> int:
    """Smallest grid size keeping cubic products of ``n``-mode fields alias free."""
    return math.ceil(3 * n / 2) + 1


def eigenvalue(k: int) -> float:
    """Return ``pi^2 k^2``, the k-th eigenvalue of the negative Dirichlet Laplacian."""
    if int(k) != k or k < 1:
        raise ValueError(f"mode index must be a positive integer, got {k!r}")
    return math.pi**2 * k * k


def eigenvalues(n: int) -> np.ndarray:
    k = np.arange(1, n + 1, dtype=float)
    return (np.pi * k) ** 2


def eval_basis(k: int, xi):
    """Evaluate ``sqrt(2) sin(k pi xi)`` for ``xi`` in [0, 1]."""
    if int(k) != k or k < 1:
        raise ValueError(f"mode index must be a positive integer, got {k!r}")
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr < 0.0) or np.any(xi_arr > 1.0):
        raise ValueError("xi must lie in [0, 1]")
    out = SQRT2 * np.sin(k * np.pi * xi_arr)
    # sin(k*pi) is not exactly zero in floating point
    out = np.where((xi_arr == 0.0) | (xi_arr == 1.0), 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BasisSpec:
    """Number of retained modes ``n`` and collocation points ``m_quad``."""

    n: int
    m_quad: int | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        m_min = min_quadrature_points(self.n)
        if self.m_quad is None:
            object.__setattr__(self, "m_quad", m_min)
        elif self.m_quad < m_min:
            raise ValueError(
                f"m_quad={self.m_quad} too small for n={self.n}; need >= {m_min} for dealiasing"
            )

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.m_quad + 1) / (self.m_quad + 1)

    @cached_property
    def weight(self) -> float:
        return 1.0 / (self.m_quad + 1)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.n)

    @cached_property
    def synthesis_matrix(self) -> np.ndarray:
        """(n, m) matrix with entries e_k(xi_j); ``grid = coeffs @ S``."""
        k = np.arange(1, self.n + 1)
        return SQRT2 * np.sin(np.pi * np.outer(k, self.nodes))

    @cached_property
    def flux_matrix(self) -> np.ndarray:
        """(m, n) matrix mapping grid values of ``q`` to the coefficients of
        ``pi_n(1/2 d/dxi q)``, exact when ``q`` is a product of two n-mode fields.

        Uses ``<1/2 q', e_k> = -1/2 <q, e_k'>`` with ``e_k' = sqrt(2) k pi cos(k pi xi)``;
        the boundary term drops because ``q`` vanishes at both ends.
        """
        k = np.arange(1, self.n + 1)
        cos = np.cos(np.pi * np.outer(self.nodes, k))
        return cos * (-0.5 * SQRT2 * np.pi * k * self.weight)


def _check_len(arr: np.ndarray, size: int, what: str):
    if arr.shape[-1] != size:
        raise ValueError(f"{what} has length {arr.shape[-1]}, expected {size}")


def to_grid(x, basis: BasisSpec) -> np.ndarray:
    """Point values at the collocation nodes (DST-I synthesis)."""
    x = np.asarray(x, dtype=float)
    _check_len(x, basis.n, "spectral field")
    pad = [(0, 0)] * (x.ndim - 1) + [(0, basis.m_quad - basis.n)]
    return fft.dst(np.pad(x, pad), type=1, axis=-1) * (SQRT2 / 2.0)


def to_spectral(g, basis: BasisSpec) -> np.ndarray:
    """Coefficients ``<g, e_k>`` by the interior trapezoid rule (DST-I analysis)."""
    g = np.asarray(g, dtype=float)
    _check_len(g, basis.m_quad, "grid field")
    full = fft.dst(g, type=1, axis=-1) * (SQRT2 / 2.0 * basis.weight)
    return full[..., : basis.n]


def apply_shifted_heat(x, t: float, alpha: float = 0.0) -> np.ndarray:
    """Apply ``exp((A - alpha) t)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    x = np.asarray(x, dtype=float)
    return x * np.exp(-(eigenvalues(x.shape[-1]) + alpha) * t)


def apply_frac_laplacian(x, power: float) -> np.ndarray:
    """Apply ``(-A)^power``; any real power is fine on a finite mode set."""
    x = np.asarray(x, dtype=float)
    return x * eigenvalues(x.shape[-1]) ** power


def bilinear_flux(x, y, basis: BasisSpec) -> np.ndarray:
    """``pi_n(1/2 d/dxi (x y))``, evaluated through fast sine/cosine transforms."""
    q = to_grid(x, basis) * to_grid(y, basis)
    pad = [(0, 0)] * (q.ndim - 1) + [(1, 1)]
    # DCT-I with zero end values sums 2 * q_j cos(k pi xi_j) over interior nodes
    moments = fft.dct(np.pad(q, pad), type=1, axis=-1)[..., 1 : basis.n + 1]
    k = np.arange(1, basis.n + 1)
    return moments * (-0.25 * SQRT2 * np.pi * k * basis.weight)


def burgers_nonlinearity(x, basis: BasisSpec) -> np.ndarray:
    """``B_n(x) = pi_n(1/2 d/dxi x^2)``; satisfies ``<B_n(x), x> = 0`` to round-off."""
    return bilinear_flux(x, x, basis)


def l2_norm(x) -> np.ndarray:
    return np.sqrt(np.sum(np.square(x), axis=-1))


def hs_norm(x, s: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(np.square(x) * eigenvalues(x.shape[-1]) ** s, axis=-1))


def lp_norm(x, p: float, basis: BasisSpec) -> np.ndarray:
    """Equal-weight interior quadrature; the grid is refined to ``2n`` nodes when
    needed so that ``p = 4`` is integrated exactly."""
    if p < 1:
        raise ValueError(f"Lp norm needs p >= 1, got {p}")
    if basis.m_quad < 2 * basis.n:
        basis = BasisSpec(basis.n, 2 * basis.n)
    g = np.abs(to_grid(x, basis))
    return (basis.weight * np.sum(g**p, axis=-1)) ** (1.0 / p)


def norm(x, kind: str = "L2", param: float | None = None, basis: BasisSpec | None = None):
    """Dispatch on ``kind``: ``"L2"``, ``"H"`` (Sobolev, ``param=s``) or ``"L"`` (``param=p``).

    Shorthands like ``"H1"`` or ``"L4"`` are accepted.
    """
    if kind == "L2" and param is None:
        return l2_norm(x)
    head, tail = kind[0], kind[1:]
    if tail:
        param = float(tail)
    if param is None:
        raise ValueError(f"norm kind {kind!r} needs a parameter")
    if head == "H":
        return hs_norm(x, param)
    if head == "L":
        if param == 2:
            return l2_norm(x)
        if basis is None:
            basis = BasisSpec(np.shape(x)[-1])
        return lp_norm(x, param, basis)
    raise ValueError(f"unknown norm kind {kind!r}")


def project(x, m: int) -> np.ndarray:
    """Zero every coefficient above mode ``m``."""
    x = np.array(x, dtype=float)
    if m > x.shape[-1]:
        raise ValueError(f"cannot project onto {m} modes of a {x.shape[-1]}-mode field")
    if m < 0:
        raise ValueError("m must be nonnegative")
    x[..., m:] = 0.0
    return x


def embed(x, n: int) -> np.ndarray:
    """Zero-pad a field to ``n`` modes."""
    x = np.asarray(x, dtype=float)
    if n < x.shape[-1]:
        raise ValueError("embed only enlarges the mode set")
    pad = [(0, 0)] * (x.ndim - 1) + [(0, n - x.shape[-1])]
    return np.pad(x, pad)


def unit_mode(k: int, n: int) -> np.ndarray:
    """Coefficient vector of ``e_k`` in an ``n``-mode space."""
    if not 1 <= k <= n:
        raise ValueError(f"mode {k} outside 1..{n}")
    x = np.zeros(n)
    x[k - 1] = 1.0
    return x
