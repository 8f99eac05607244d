import numpy as np
import pytest

from stoburgers import kernels
from stoburgers.dynamics import SimConfig
from stoburgers.noise import sample_block

BACKENDS = kernels.available_backends()
needs_ext = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def run_args(n=16, steps=80, paths=5, seed=0, drive=False, scale=1.0):
    cfg = SimConfig(0.1, n, 0.005, steps * 0.005)
    decay, phi_dt, coef, frac = cfg.coefficients
    inc = sample_block(seed, 0, paths, cfg.dt, steps, n)
    x0 = scale * np.random.default_rng(seed).standard_normal((paths, n))
    d = frac * np.cos(np.arange(steps)[:, None] * 0.1 + np.arange(n)) if drive else None
    b = cfg.basis
    return [x0, inc, decay, phi_dt, coef, d, b.synthesis_matrix, b.flux_matrix]


def test_backend_flag():
    assert kernels.BACKEND in BACKENDS
    assert BACKENDS[kernels.BACKEND].burgers_run is kernels.burgers_run


@needs_ext
@pytest.mark.parametrize("nonlinear", [True, False])
@pytest.mark.parametrize("drive", [True, False])
@pytest.mark.parametrize("stride", [1, 4])
def test_burgers_run_agree(nonlinear, drive, stride):
    args = run_args(drive=drive)
    py, pb = BACKENDS["python"].burgers_run(*args, nonlinear, stride)
    cy, cb = BACKENDS["cython"].burgers_run(*args, nonlinear, stride)
    assert py.shape == cy.shape
    assert np.allclose(py, cy, rtol=1e-12, atol=1e-13)
    assert np.array_equal(pb, cb) and np.all(pb == -1)


@needs_ext
def test_derivative_run_agree():
    args = run_args()
    xpath, _ = BACKENDS["python"].burgers_run(*args, True, 1)
    h = np.random.default_rng(9).standard_normal((xpath.shape[0], xpath.shape[2]))
    decay, phi_dt, synth, flux = args[2], args[3], args[6], args[7]
    for nonlinear in (True, False):
        py = BACKENDS["python"].derivative_run(xpath, h, decay, phi_dt, synth, flux, nonlinear)
        cy = BACKENDS["cython"].derivative_run(xpath, h, decay, phi_dt, synth, flux, nonlinear)
        assert np.allclose(py, cy, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_blowup_flagged(name):
    # a huge initial state makes the explicit transport term overflow
    args = run_args(n=32, paths=3, scale=1.0)
    args[0][1] *= 1e200
    out, blow = BACKENDS[name].burgers_run(*args, True, 1)
    assert blow[0] == -1 and blow[2] == -1
    assert blow[1] >= 0
    assert np.all(np.isfinite(out[0]))
    assert not np.all(np.isfinite(out[1]))
