"""Pure numpy time-stepping kernels, vectorized over a batch of paths.

Same signatures and update formulas as the compiled ``_ckernels`` module.
"""
import numpy as np

BACKEND = "python"


def burgers_run(x0, incr, decay, phi_dt, noise_coef, drive, synth, flux, nonlinear, stride):
    """Exponential Euler for a batch of Galerkin Burgers paths.

    x0: (P, n); incr: (P, S, n) Brownian increments; drive: (S, n) or None,
    the forcing ``(-A)^gamma u`` at the left time points.  Returns the path
    sampled every ``stride`` steps, shape (P, S // stride + 1, n), and the
    first step index at which each path went non-finite (-1 if never).
    """
    P, S, n = incr.shape
    out = np.empty((P, S // stride + 1, n))
    blowup = np.full(P, -1, dtype=np.int64)
    x = np.array(x0, dtype=float, copy=True)
    out[:, 0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        _advance(x, incr, decay, phi_dt, noise_coef, drive, synth, flux, nonlinear, stride,
                 out, blowup)
    return out, blowup


def _advance(x, incr, decay, phi_dt, noise_coef, drive, synth, flux, nonlinear, stride, out,
             blowup):
    S = incr.shape[1]
    for m in range(S):
        if nonlinear:
            g = x @ synth
            force = (g * g) @ flux
            if drive is not None:
                force = force + drive[m]
        elif drive is not None:
            force = drive[m]
        else:
            force = 0.0
        x = decay * x + phi_dt * force + noise_coef * incr[:, m]
        if not np.isfinite(x).all():
            bad = ~np.isfinite(x).all(axis=1) & (blowup < 0)
            blowup[bad] = m
        if (m + 1) % stride == 0:
            out[:, (m + 1) // stride] = x


def derivative_run(xpath, h, decay, phi_dt, synth, flux, nonlinear):
    """Linearized exponential Euler along stored paths ``xpath`` (P, S+1, n)."""
    P, S1, n = xpath.shape
    out = np.empty((P, S1, n))
    eta = np.array(h, dtype=float, copy=True)
    out[:, 0] = eta
    for m in range(S1 - 1):
        if nonlinear:
            force = 2.0 * (((xpath[:, m] @ synth) * (eta @ synth)) @ flux)
            eta = decay * eta + phi_dt * force
        else:
            eta = decay * eta
        out[:, m + 1] = eta
    return out
