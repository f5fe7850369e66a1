"""Truncated Fock-space representation of single-mode Gaussian states.

Used as an independent numerical route for Gaussian fidelities: the state is
built as ``D(alpha) S(xi) rho_thermal S(xi)^dag D(alpha)^dag`` from matrix
exponentials of ladder operators in an enlarged space, then truncated.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm

from .gaussian import GaussianState
from .states import DensityMatrix


def annihilation(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1).astype(complex)


def gaussian_to_fock(g: GaussianState, cutoff: int = 60, margin: int = 60) -> DensityMatrix:
    """Density matrix of ``g`` in the Fock basis {|0>, ..., |cutoff-1>}.

    Operators are exponentiated in a space of size ``cutoff + margin`` so the
    truncation error in the retained block is negligible for low-energy states.
    """
    big = cutoff + margin
    a = annihilation(big)
    ad = a.conj().T

    nu = math.sqrt(np.linalg.det(g.cov))
    w, v = np.linalg.eigh(g.cov / nu)
    r = math.log(w[1] / w[0]) / 4.0
    theta = math.atan2(v[1, 0], v[0, 0])
    nbar = max(2.0 * nu - 0.5, 0.0)

    if nbar > 0:
        q = nbar / (1.0 + nbar)
        diag = (1.0 - q) * q ** np.arange(big)
    else:
        diag = np.zeros(big)
        diag[0] = 1.0
    rho = np.diag(diag).astype(complex)

    # S(xi) = exp((xi* a^2 - xi a^dag^2)/2); the squeezed quadrature sits at arg(xi)/2
    xi = r * np.exp(2j * theta)
    s_op = expm(0.5 * (np.conj(xi) * a @ a - xi * ad @ ad))
    alpha = complex(g.mean[0], g.mean[1])
    d_op = expm(alpha * ad - np.conj(alpha) * a)
    u = d_op @ s_op
    rho = u @ rho @ u.conj().T
    block = rho[:cutoff, :cutoff]
    block = 0.5 * (block + block.conj().T)
    return DensityMatrix(block / np.trace(block).real)


def quadrature_moments(rho: DensityMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Mean and symmetrised covariance of (x, p) computed in the Fock basis."""
    a = annihilation(rho.dim)
    ad = a.conj().T
    x = (a + ad) / 2
    p = (a - ad) / 2j
    m = rho.entries
    ex = lambda op: np.trace(m @ op).real  # noqa: E731
    mean = np.array([ex(x), ex(p)])
    xx = ex(x @ x) - mean[0] ** 2
    pp = ex(p @ p) - mean[1] ** 2
    xp = ex(0.5 * (x @ p + p @ x)) - mean[0] * mean[1]
    return mean, np.array([[xx, xp], [xp, pp]])
