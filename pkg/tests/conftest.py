"""Shared fixtures and independent oracles for the test suite.

Oracles here deliberately avoid the library code paths they check:
the Kraus-block oracle diagonalizes each excitation block directly, the
coherent-state oracle sums the Poisson series, and the protocol-power
oracle applies coefficient powers to the initial amplitudes.
"""

import math

import numpy as np
import pytest

from magbell import EffectiveParams, HilbertSpace, ModelParams


def block_return_amplitude(n, m, g_e, g_f, delta, tau):
    """Ground-return amplitude of one (n, m) block by direct diagonalization.

    The block is spanned by {|g,n,m>, |e,n-1,m>, |f,n,m-1>} (dropping states
    with negative occupation); couplings are g_e sqrt(n) and g_f sqrt(m) and
    the excited levels sit at the common detuning.
    """
    if n == 0 and m == 0:
        return 1.0 + 0.0j
    size = 1 + (n >= 1) + (m >= 1)
    h = np.zeros((size, size), dtype=complex)
    col = 1
    if n >= 1:
        h[col, col] = delta
        h[0, col] = h[col, 0] = g_e * math.sqrt(n)
        col += 1
    if m >= 1:
        h[col, col] = delta
        h[0, col] = h[col, 0] = g_f * math.sqrt(m)
    evals, evecs = np.linalg.eigh(h)
    return complex((evecs[0] * np.exp(-1j * evals * tau)) @ evecs[0].conj())


def coefficient_power_amplitudes(amps0, g_e, g_f, delta, tau, rounds, dims):
    """Unnormalized amplitudes after repeated projection, from block powers."""
    dn, dm = dims
    out = np.array(amps0, dtype=complex).reshape(dn, dm).copy()
    for n in range(dn):
        for m in range(dm):
            out[n, m] *= block_return_amplitude(n, m, g_e, g_f, delta, tau) ** rounds
    return out.ravel()


def poisson_mean_oracle(beta, dim):
    """Mean occupation of the truncated, renormalized coherent state by summation."""
    weights = np.array([abs(beta) ** (2 * j) / math.factorial(j) for j in range(dim)])
    weights /= weights.sum()
    return float((np.arange(dim) * weights).sum())


def random_hermitian(rng, dim, scale=1.0):
    mat = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (mat + mat.conj().T)


@pytest.fixture
def resonant_eff():
    """Equal couplings, zero detuning: the baseline distillation setting."""
    return EffectiveParams(G_e=1e-3, G_f=1e-3)


@pytest.fixture
def magnon_space():
    return HilbertSpace((("n", 3), ("m", 3)))


@pytest.fixture
def dispersive_params():
    """Bare two-cavity parameters with g/Delta = 0.05 and G_e = G_f = 1e-3."""
    return ModelParams(
        omega_a=0.6, omega_b=0.6,
        omega_n=1.0, omega_m=1.0, omega_e=1.0, omega_f=1.0,
        g_n=0.02, g_m=0.02, g_e=0.02, g_f=0.02,
    )
