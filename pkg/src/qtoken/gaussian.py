"""Single-mode Gaussian states with vacuum quadrature variance 0.25."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VACUUM_VARIANCE = 0.25
DET_FLOOR = VACUUM_VARIANCE**2


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Quadrature mean ``(x, p)`` and symmetric 2x2 covariance.

    Quadratures are ``x = (a + a^dag)/2`` and ``p = (a - a^dag)/(2i)``, so the
    vacuum has variance 0.25 in each and the uncertainty relation reads
    ``det(cov) >= 1/16``.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(2)
        cov = np.array(self.cov, dtype=float).reshape(2, 2)
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12:
            raise ValueError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        if cov[0, 0] <= 0 or np.linalg.det(cov) <= 0:
            raise ValueError("covariance must be positive definite")
        if np.linalg.det(cov) < DET_FLOOR - 1e-12:
            raise ValueError(f"covariance violates the uncertainty relation: det = {np.linalg.det(cov)}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def vacuum(cls) -> "GaussianState":
        return cls(np.zeros(2), VACUUM_VARIANCE * np.eye(2))

    @classmethod
    def coherent(cls, x: float, p: float) -> "GaussianState":
        return cls(np.array([x, p]), VACUUM_VARIANCE * np.eye(2))

    @classmethod
    def thermal(cls, nbar: float) -> "GaussianState":
        return cls(np.zeros(2), (2 * nbar + 1) * VACUUM_VARIANCE * np.eye(2))

    @property
    def variances(self) -> tuple[float, float]:
        """Minimum and maximum variance over all quadrature directions."""
        w = np.linalg.eigvalsh(self.cov)
        return float(w[0]), float(w[1])

    @property
    def mean_photon_number(self) -> float:
        # <n> = <x^2> + <p^2> - 1/2
        return float(np.trace(self.cov) + self.mean @ self.mean - 0.5)

    def __eq__(self, other):
        if not isinstance(other, GaussianState):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    def __hash__(self):
        return hash((self.mean.tobytes(), self.cov.tobytes()))


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def squeeze_matrix(r: float, angle: float = 0.0) -> np.ndarray:
    """Symplectic squeezer: quadrature along ``angle`` scaled by e^{-r}, orthogonal by e^{+r}."""
    rot = rotation(angle)
    return rot @ np.diag([math.exp(-r), math.exp(r)]) @ rot.T


def displace(g: GaussianState, dx: float, dp: float) -> GaussianState:
    return GaussianState(g.mean + np.array([dx, dp]), g.cov)


def squeeze(g: GaussianState, r: float, angle: float = 0.0) -> GaussianState:
    s = squeeze_matrix(r, angle)
    return GaussianState(s @ g.mean, s @ g.cov @ s.T)


def squeezing_level_db(variance: float) -> float:
    """``S = -10 log10(variance / 0.25)``; positive below the vacuum level."""
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    return 0.0 - 10.0 * math.log10(variance / VACUUM_VARIANCE)


def fidelity_gaussian(a: GaussianState, b: GaussianState) -> float:
    """Uhlmann fidelity between two single-mode Gaussian states (closed form).

    Uses the single-mode formula in the vacuum-variance-1/2 convention,
    ``F = exp(-u^T (V1+V2)^{-1} u / 2) / (sqrt(D + L) - sqrt(L))`` with
    ``D = det(V1 + V2)`` and ``L = 4 (det V1 - 1/4)(det V2 - 1/4)``.
    """
    v1 = 2.0 * a.cov
    v2 = 2.0 * b.cov
    u = math.sqrt(2.0) * (a.mean - b.mean)
    vs = v1 + v2
    big_d = float(np.linalg.det(vs))
    lam = 4.0 * max(np.linalg.det(v1) - 0.25, 0.0) * max(np.linalg.det(v2) - 0.25, 0.0)
    prefactor = (math.sqrt(big_d + lam) + math.sqrt(lam)) / big_d
    expo = math.exp(-0.5 * float(u @ np.linalg.solve(vs, u)))
    return float(min(1.0, max(0.0, prefactor * expo)))


def williamson(g: GaussianState) -> tuple[float, float, float]:
    """Decompose ``cov = nu * R S S^T R^T``.

    Returns:
        (nbar, r, angle): thermal occupation, squeezing magnitude and the
        direction of the squeezed quadrature.
    """
    nu = math.sqrt(np.linalg.det(g.cov))
    w, v = np.linalg.eigh(g.cov / nu)
    r = 0.5 * math.log(w[1] / w[0]) / 2.0 if w[1] > w[0] else 0.0
    angle = math.atan2(v[1, 0], v[0, 0])
    nbar = max(2.0 * nu - 0.5, 0.0)
    return nbar, r, angle
