"""Continuous-variable tokens: displaced squeezed states through a spin memory.

Token symbols are displaced squeezed vacua drawn from a codebook. Storage in
a spin ensemble coupled to a cavity is a phase-insensitive Gaussian channel:
every quadrature variance becomes ``r^2 s_in + l^2 s_l + t^2 s_spin`` and the
mean is scaled by ``r``. The holder's state is recovered from heterodyne
samples and compared with the issued state against a no-cloning threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .gaussian import (
    DET_FLOOR,
    VACUUM_VARIANCE,
    GaussianState,
    displace,
    fidelity_gaussian,
    squeeze,
    squeezing_level_db,
)

INFINITE_CODEBOOK_THRESHOLD = 2.0 / 3.0
DEFAULT_BETA = 1.0 / 3.0
VERDICTS = ("authentic", "suspect")


class ReconstructionError(ValueError):
    """Noise-subtracted covariance is not positive definite."""


@dataclass(frozen=True)
class CVCodebook:
    """Symbol means plus a shared squeezing; ``codebook_variance`` may be ``inf``."""

    symbols: tuple[tuple[float, float], ...]
    squeeze_r: float = 0.0
    squeeze_angle: float = 0.0
    codebook_variance: float = math.inf

    def __post_init__(self):
        if self.squeeze_r < 0:
            raise ValueError("squeeze_r must be >= 0")
        if not self.codebook_variance >= 0:
            raise ValueError("codebook_variance must be >= 0")
        if len(self.symbols) < 1:
            raise ValueError("codebook needs at least one symbol")
        if not np.all(np.isfinite(np.asarray(self.symbols, dtype=float))):
            raise ValueError("symbols must be finite")
        object.__setattr__(self, "symbols", tuple((float(x), float(p)) for x, p in self.symbols))

    @classmethod
    def gaussian(
        cls, n_symbols: int, variance: float, squeeze_r: float, squeeze_angle: float, rng: np.random.Generator
    ) -> "CVCodebook":
        """Symbols drawn i.i.d. from a zero-mean isotropic Gaussian of ``variance``."""
        pts = rng.normal(0.0, math.sqrt(variance), size=(n_symbols, 2)) if variance > 0 else np.zeros((n_symbols, 2))
        return cls(tuple(map(tuple, pts)), squeeze_r, squeeze_angle, variance)

    def to_dict(self) -> dict:
        v = self.codebook_variance
        return {
            "symbols": [list(s) for s in self.symbols],
            "squeeze_r": self.squeeze_r,
            "squeeze_angle": self.squeeze_angle,
            "codebook_variance": "inf" if math.isinf(v) else v,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CVCodebook":
        return cls(
            tuple((float(a), float(b)) for a, b in d["symbols"]),
            float(d.get("squeeze_r", 0.0)),
            float(d.get("squeeze_angle", 0.0)),
            float(d.get("codebook_variance", "inf")),
        )


@dataclass(frozen=True)
class SpinMemoryParams:
    r: float
    l: float  # noqa: E741
    t: float
    sigma_l_sq: float = VACUUM_VARIANCE
    sigma_spin_sq: float = VACUUM_VARIANCE

    def __post_init__(self):
        for name in ("r", "l", "t"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        total = self.r**2 + self.l**2 + self.t**2
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"r^2 + l^2 + t^2 must equal 1, got {total}")
        if self.sigma_l_sq < VACUUM_VARIANCE or self.sigma_spin_sq < VACUUM_VARIANCE:
            raise ValueError("bath variances must be at least the vacuum variance 0.25")

    @classmethod
    def from_coupling(cls, t: float, l: float = 0.0, **baths) -> "SpinMemoryParams":  # noqa: E741
        """Fix r from passivity given the spin and loss couplings."""
        return cls(math.sqrt(max(0.0, 1.0 - t * t - l * l)), l, t, **baths)

    @classmethod
    def identity(cls) -> "SpinMemoryParams":
        return cls(1.0, 0.0, 0.0)

    @property
    def added_variance(self) -> float:
        return self.l**2 * self.sigma_l_sq + self.t**2 * self.sigma_spin_sq

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "SpinMemoryParams":
        return cls(**{k: float(v) for k, v in d.items()})


def generate_cv_token(
    codebook: CVCodebook, symbol_index: int, rng: Optional[np.random.Generator] = None
) -> GaussianState:
    """Squeeze the vacuum, then displace to the symbol mean.

    ``rng`` is accepted for interface symmetry; preparation is deterministic.
    """
    if not 0 <= symbol_index < len(codebook.symbols):
        raise IndexError(f"symbol index {symbol_index} outside codebook of size {len(codebook.symbols)}")
    g = squeeze(GaussianState.vacuum(), codebook.squeeze_r, codebook.squeeze_angle)
    return displace(g, *codebook.symbols[symbol_index])


def spin_memory_channel(g: GaussianState, params: SpinMemoryParams) -> GaussianState:
    """Phase-insensitive storage: ``cov -> r^2 cov + added I``, ``mean -> r mean``."""
    if params.r == 1.0:
        return g
    cov = params.r**2 * g.cov + params.added_variance * np.eye(2)
    return GaussianState(params.r * g.mean, cov)


def squeezing_level(g: GaussianState) -> float:
    """Squeezing in dB of the least-noisy quadrature direction."""
    return squeezing_level_db(g.variances[0])


def heterodyne_sample(
    g: GaussianState, n: int, added_noise_sq: float, rng: np.random.Generator
) -> np.ndarray:
    """``n`` quadrature pairs drawn from ``N(mean, cov + added_noise_sq I)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cov = g.cov + added_noise_sq * np.eye(2)
    chol = np.linalg.cholesky(cov)
    return g.mean + rng.standard_normal((n, 2)) @ chol.T


@dataclass
class MomentEstimate:
    sample_count: int
    mean: np.ndarray
    cov: np.ndarray
    third: np.ndarray
    fourth: np.ndarray
    cross: dict = field(default_factory=dict)
    excess_kurtosis: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def kurtosis_standard_error(self) -> float:
        n = self.sample_count
        return math.sqrt(24.0 * n * (n - 1) ** 2 / ((n - 3) * (n - 2) * (n + 3) * (n + 5)))


def sample_moments(samples: np.ndarray) -> MomentEstimate:
    """Unbiased central moments up to order four, per quadrature and mixed.

    Third and fourth orders use the standard unbiased estimators of the
    central moments; mixed moments beyond the covariance are plain sample
    averages and serve as diagnostics only.
    """
    s = np.asarray(samples, dtype=float)
    n = s.shape[0]
    if n < 4:
        raise ValueError("need at least 4 samples")
    mean = s.mean(axis=0)
    d = s - mean
    m2 = (d**2).mean(axis=0)
    m3 = (d**3).mean(axis=0)
    m4 = (d**4).mean(axis=0)
    third = n * n / ((n - 1) * (n - 2)) * m3
    fourth = (n * (n * n - 2 * n + 3) * m4 - 3 * n * (2 * n - 3) * m2**2) / ((n - 1) * (n - 2) * (n - 3))
    cross = {
        "xxp": float(np.mean(d[:, 0] ** 2 * d[:, 1])),
        "xpp": float(np.mean(d[:, 0] * d[:, 1] ** 2)),
        "xxpp": float(np.mean(d[:, 0] ** 2 * d[:, 1] ** 2)),
        "xxxp": float(np.mean(d[:, 0] ** 3 * d[:, 1])),
        "xppp": float(np.mean(d[:, 0] * d[:, 1] ** 3)),
    }
    return MomentEstimate(
        sample_count=n,
        mean=mean,
        cov=np.cov(s, rowvar=False),
        third=third,
        fourth=fourth,
        cross=cross,
        excess_kurtosis=stats.kurtosis(s, axis=0, fisher=True, bias=False),
    )


def reconstruct_gaussian(samples: np.ndarray, added_noise_sq: float) -> tuple[GaussianState, MomentEstimate]:
    """Gaussian state from heterodyne samples with the detector noise removed.

    A positive-definite estimate that falls just below the uncertainty bound
    (sampling noise on a pure state) is scaled up to ``det = 1/16``.

    Raises:
        ReconstructionError: fewer than 100 samples, or the subtracted
            covariance is not positive definite.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] < 100:
        raise ReconstructionError("need an (n, 2) sample array with n >= 100")
    mom = sample_moments(samples)
    cov = mom.cov - added_noise_sq * np.eye(2)
    w = np.linalg.eigvalsh(cov)
    if w[0] <= 0:
        raise ReconstructionError(
            f"covariance not positive definite after subtracting noise {added_noise_sq} "
            f"(eigenvalues {w[0]:.4g}, {w[1]:.4g}); too few samples or noise overstated"
        )
    det = float(np.linalg.det(cov))
    if det < DET_FLOOR:
        cov = cov * math.sqrt(DET_FLOOR / det)
    return GaussianState(mom.mean, cov), mom


def no_cloning_threshold(codebook_variance: float = math.inf, beta: float = DEFAULT_BETA) -> float:
    """Fidelity threshold ``2/3 + beta * 0.25 / (0.25 + v)``.

    Equals 2/3 for an infinitely broad codebook and rises as the codebook
    narrows; with the default beta a zero-variance codebook needs fidelity 1.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if math.isinf(codebook_variance):
        return INFINITE_CODEBOOK_THRESHOLD
    return INFINITE_CODEBOOK_THRESHOLD + beta * VACUUM_VARIANCE / (VACUUM_VARIANCE + codebook_variance)


def verify_no_cloning(f_measured: float, codebook: CVCodebook, beta: float = DEFAULT_BETA) -> str:
    """``authentic`` iff the fidelity strictly exceeds the codebook threshold."""
    if not 0.0 <= f_measured <= 1.0:
        raise ValueError("fidelity must lie in [0, 1]")
    return "authentic" if f_measured > no_cloning_threshold(codebook.codebook_variance, beta) else "suspect"


@dataclass
class CVRoundtripRecord:
    symbol: int
    fidelity: float
    verdict: str
    s_in: float
    s_out: float
    s_out_measured: float
    threshold: float
    fidelity_exact: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def cv_roundtrip(
    codebook: CVCodebook,
    params: SpinMemoryParams,
    n_samples: int,
    rng: np.random.Generator,
    added_noise_sq: float = VACUUM_VARIANCE,
    beta: float = DEFAULT_BETA,
    symbols: Optional[Sequence[int]] = None,
) -> list[CVRoundtripRecord]:
    """Issue, store, measure and judge each codebook symbol.

    ``fidelity`` compares the reconstructed state with the issued one;
    ``fidelity_exact`` uses the channel output directly. ``s_out`` is the
    squeezing of the channel output and ``s_out_measured`` that of the
    reconstruction.
    """
    thr = no_cloning_threshold(codebook.codebook_variance, beta)
    out = []
    for j in range(len(codebook.symbols)) if symbols is None else symbols:
        issued = generate_cv_token(codebook, j)
        stored = spin_memory_channel(issued, params)
        est, _ = reconstruct_gaussian(heterodyne_sample(stored, n_samples, added_noise_sq, rng), added_noise_sq)
        f = fidelity_gaussian(est, issued)
        out.append(
            CVRoundtripRecord(
                symbol=j,
                fidelity=f,
                verdict="authentic" if f > thr else "suspect",
                s_in=squeezing_level(issued),
                s_out=squeezing_level(stored),
                s_out_measured=squeezing_level(est),
                threshold=thr,
                fidelity_exact=fidelity_gaussian(stored, issued),
            )
        )
    return out
