"""Ensemble tokens and coins limited by quantum projection noise.

A token is N spins prepared along one secret Bloch direction; a coin is M
tokens. The bank measures every spin along the secret axis, a token passes
when enough spins read "aligned", and the coin passes when enough tokens do.

Spins are stored as Bloch vectors (rows of an ``(N, 3)`` array): unit length
for pure spins, shorter after noise. For qubits this is an exact
representation, and it keeps the N-spin arithmetic vectorised.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .channels import NoiseChannel, apply_channel
from .memory import ReadoutModel
from .states import DensityMatrix, PureQubit
from .stats import (
    clopper_pearson_upper,
    log_binom_cdf,
    log_binom_tail,
    log_binom_tails_all,
)

ATTACKS = ("single-axis", "two-axis", "three-axis", "per-spin")
# measurement axes used by the split attacks, in assignment order
_AXES = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
LN10 = math.log(10.0)


# -- data types ---------------------------------------------------------------


@dataclass(frozen=True)
class CoinPolicy:
    N: int
    M: int
    tau: float
    T: int

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise ValueError("N and M must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not 1 <= self.T <= self.M:
            raise ValueError("T must lie in [1, M]")

    @property
    def min_count(self) -> int:
        """Smallest aligned count that lets a token pass (k >= tau * N)."""
        return int(math.ceil(self.tau * self.N - 1e-9))

    def to_dict(self) -> dict:
        return {"N": self.N, "M": self.M, "tau": self.tau, "T": self.T}

    @classmethod
    def from_dict(cls, d: dict) -> "CoinPolicy":
        return cls(int(d["N"]), int(d["M"]), float(d["tau"]), int(d["T"]))


@dataclass(frozen=True)
class EnsembleSecret:
    angles: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.angles) < 1:
            raise ValueError("a coin needs at least one token")
        for th, ph in self.angles:
            PureQubit(th, ph)

    @property
    def axes(self) -> list[PureQubit]:
        return [PureQubit(th, ph) for th, ph in self.angles]

    @property
    def directions(self) -> np.ndarray:
        return np.array([q.bloch for q in self.axes])

    def to_dict(self) -> dict:
        return {"angles": [[th, ph] for th, ph in self.angles]}

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSecret":
        return cls(tuple((float(a), float(b)) for a, b in d["angles"]))


@dataclass(frozen=True, eq=False)
class EnsembleCoin:
    """M tokens of N spins each, as an ``(M, N, 3)`` array of Bloch vectors."""

    spins: np.ndarray

    def __post_init__(self):
        s = np.array(self.spins, dtype=float)
        if s.ndim != 3 or s.shape[2] != 3 or s.shape[1] < 1:
            raise ValueError(f"coin array must have shape (M, N, 3), got {s.shape}")
        if np.any(np.linalg.norm(s, axis=2) > 1 + 1e-9):
            raise ValueError("Bloch vectors must have norm <= 1")
        s.setflags(write=False)
        object.__setattr__(self, "spins", s)

    @property
    def M(self) -> int:
        return self.spins.shape[0]

    @property
    def N(self) -> int:
        return self.spins.shape[1]

    def token(self, i: int) -> np.ndarray:
        return self.spins[i]

    def spin_state(self, i: int, j: int):
        """Spin j of token i as a PureQubit (unit vector) or DensityMatrix."""
        v = self.spins[i, j]
        if abs(np.linalg.norm(v) - 1.0) < 1e-12:
            return PureQubit.from_bloch(v)
        return DensityMatrix.from_bloch(v)


@dataclass
class CoinVerification:
    accept: bool
    passing_tokens: int
    counts: np.ndarray
    post_coin: EnsembleCoin


# -- issuance and measurement -------------------------------------------------


def random_directions(n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` directions uniform on the sphere (cos(theta) uniform, phi uniform)."""
    cos_t = rng.uniform(-1.0, 1.0, size=n)
    phi = rng.uniform(0.0, 2 * math.pi, size=n)
    sin_t = np.sqrt(1.0 - cos_t**2)
    return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)


def issue_coin(
    policy: CoinPolicy,
    rng: np.random.Generator,
    angle_set: Optional[Sequence[tuple[float, float]]] = None,
) -> tuple[EnsembleSecret, EnsembleCoin]:
    """Draw M secret directions and prepare N spins along each.

    Args:
        policy: supplies N and M.
        rng: random stream.
        angle_set: optional finite list of (theta, phi) to draw from uniformly
            instead of the continuous sphere.
    """
    if angle_set is None:
        dirs = random_directions(policy.M, rng)
        axes = [PureQubit.from_bloch(d) for d in dirs]
    else:
        idx = rng.integers(0, len(angle_set), size=policy.M)
        axes = [PureQubit(*angle_set[i]) for i in idx]
    secret = EnsembleSecret(tuple((q.theta, q.phi) for q in axes))
    dirs = np.array([q.bloch for q in axes])
    spins = np.repeat(dirs[:, None, :], policy.N, axis=1)
    return secret, EnsembleCoin(spins)


def _as_direction(axis) -> np.ndarray:
    if isinstance(axis, PureQubit):
        return axis.bloch
    v = np.asarray(axis, dtype=float)
    return v / np.linalg.norm(v)


def measure_spins(
    spins: np.ndarray, axis, readout: ReadoutModel, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Projectively measure each spin along ``axis``.

    Returns:
        (reported, true_outcomes, collapsed): reported bits after readout
        error, the physical outcomes (1 = aligned), and the post-measurement
        Bloch vectors (+axis or -axis).
    """
    a = _as_direction(axis)
    p = 0.5 * (1.0 + spins @ a)
    true = (rng.random(p.shape) < p).astype(np.int64)
    hi, lo = readout.p_report_one(1), readout.p_report_one(0)
    reported = (rng.random(p.shape) < np.where(true == 1, hi, lo)).astype(np.int64)
    collapsed = np.where(true[:, None] == 1, a, -a)
    return reported, true, collapsed


def measure_token_counts(
    token: np.ndarray, axis, readout: ReadoutModel, rng: np.random.Generator
) -> tuple[int, np.ndarray]:
    """Aligned-count k in [0, N] for one token, and the collapsed token."""
    reported, _, collapsed = measure_spins(np.asarray(token, dtype=float), axis, readout, rng)
    return int(reported.sum()), collapsed


def verify_coin(
    coin: EnsembleCoin,
    secret: EnsembleSecret,
    policy: CoinPolicy,
    readout: ReadoutModel,
    rng: np.random.Generator,
    present: Optional[np.ndarray] = None,
) -> CoinVerification:
    """Bank-side verification; the returned ``post_coin`` is the collapsed coin.

    Args:
        present: optional ``(M, N)`` boolean mask; missing spins (lost in
            transit or storage) never count as aligned.
    """
    if coin.M != len(secret.angles) or coin.M != policy.M or coin.N != policy.N:
        raise ValueError(
            f"coin shape (M={coin.M}, N={coin.N}) does not match secret/policy "
            f"(M={len(secret.angles)}/{policy.M}, N={policy.N})"
        )
    counts = np.empty(coin.M, dtype=np.int64)
    post = np.empty_like(coin.spins)
    for i, axis in enumerate(secret.axes):
        reported, _, post[i] = measure_spins(coin.spins[i], axis, readout, rng)
        if present is not None:
            reported = reported * present[i]
        counts[i] = int(reported.sum())
    passing = int(np.sum(counts >= policy.min_count))
    return CoinVerification(passing >= policy.T, passing, counts, EnsembleCoin(post))


def apply_spin_noise(coin: EnsembleCoin, noise: NoiseChannel) -> EnsembleCoin:
    """Apply a qubit channel to every spin."""
    if noise.is_identity:
        return coin
    flat = coin.spins.reshape(-1, 3)
    out = np.array([_channel_bloch(v, noise) for v in flat])
    return EnsembleCoin(out.reshape(coin.spins.shape))


def _channel_bloch(v: np.ndarray, noise: NoiseChannel) -> np.ndarray:
    p = noise.parameter
    if noise.kind == "depolarizing":
        return (1 - p) * v
    if noise.kind == "dephasing":
        return np.array([(1 - p) * v[0], (1 - p) * v[1], v[2]])
    return apply_channel(DensityMatrix.from_bloch(v), noise).bloch


# -- adversary ---------------------------------------------------------------


def split_counts(N: int, n_axes: int) -> list[int]:
    """Spins per axis when N spins are shared as evenly as possible."""
    return [N // n_axes + (1 if i < N % n_axes else 0) for i in range(n_axes)]


def _attack_axes(attack: str) -> int:
    return {"single-axis": 1, "two-axis": 2, "three-axis": 3}[attack]


def _neg_loglik(n: np.ndarray, axes: np.ndarray, shots: np.ndarray, ones: np.ndarray, hi: float, lo: float) -> float:
    p = 0.5 * (1.0 + axes @ n)
    q = np.clip(lo + (hi - lo) * p, 1e-300, 1.0)
    r = np.clip(1.0 - (lo + (hi - lo) * p), 1e-300, 1.0)
    return -float(np.sum(ones * np.log(q) + (shots - ones) * np.log(r)))


def ml_direction(
    axes: np.ndarray,
    shots: np.ndarray,
    ones: np.ndarray,
    readout: ReadoutModel = ReadoutModel.perfect(),
    start: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Pure-state maximum-likelihood direction from counts along given axes.

    Maximises ``sum_a ones_a log q_a + (shots_a - ones_a) log(1 - q_a)`` over
    unit vectors, where ``q_a`` is the reported-one probability for a spin
    along the candidate direction measured on axis ``a``.
    """
    axes = np.asarray(axes, dtype=float)
    shots = np.asarray(shots, dtype=float)
    ones = np.asarray(ones, dtype=float)
    hi, lo = readout.p_report_one(1), readout.p_report_one(0)
    if start is None:
        used = shots > 0
        frac = np.where(used, ones / np.where(used, shots, 1.0), 0.5)
        p = np.clip((frac - lo) / (hi - lo), 0.0, 1.0) if hi != lo else np.full_like(frac, 0.5)
        start = ((2 * p - 1)[:, None] * axes * used[:, None]).sum(axis=0)
    start = np.asarray(start, dtype=float)
    if np.linalg.norm(start) < 1e-12:
        start = axes[np.argmax(shots)]
    n0 = start / np.linalg.norm(start)
    # gnomonic chart around n0
    helper = np.array([1.0, 0.0, 0.0]) if abs(n0[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n0, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n0, e1)

    def chart(uv):
        v = n0 + uv[0] * e1 + uv[1] * e2
        return v / np.linalg.norm(v)

    res = optimize.minimize(
        lambda uv: _neg_loglik(chart(uv), axes, shots, ones, hi, lo),
        np.zeros(2),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000},
    )
    return chart(res.x)


def _component_roots(mu, shots, ones, hi, lo, iters=60):
    """Root in [-1, 1] of dL_a/dn_a = 2 mu n_a for each sample and axis."""
    a, b = -np.ones_like(ones), np.ones_like(ones)
    scale = 0.5 * (hi - lo)

    def h(n):
        q = np.clip(lo + (hi - lo) * 0.5 * (1 + n), 1e-15, 1 - 1e-15)
        return scale * (ones / q - (shots - ones) / (1 - q)) - 2 * mu[:, None] * n

    for _ in range(iters):
        mid = 0.5 * (a + b)
        pos = h(mid) > 0
        a = np.where(pos, mid, a)
        b = np.where(pos, b, mid)
    return 0.5 * (a + b)


def ml_directions_lagrange(
    shots: np.ndarray, ones: np.ndarray, readout: ReadoutModel, mu_lo, mu_hi: float, iters: int = 60
) -> tuple[np.ndarray, np.ndarray]:
    """Batch pure-state ML for orthogonal axes via the Lagrange condition.

    For a fixed multiplier mu every component equation is monotone, and the
    squared norm of the solution decreases with mu, so nested bisection finds
    the unit-norm stationary point. Returns (components, bracketed-mask).
    """
    hi, lo = readout.p_report_one(1), readout.p_report_one(0)
    ones = np.asarray(ones, dtype=float)
    shots = np.broadcast_to(np.asarray(shots, dtype=float), ones.shape)
    S = ones.shape[0]
    m_lo, m_hi = np.broadcast_to(mu_lo, (S,)).astype(float), np.full(S, float(mu_hi))
    norm = lambda mu: np.sum(_component_roots(mu, shots, ones, hi, lo, iters) ** 2, axis=1)  # noqa: E731
    ok = (norm(m_lo) >= 1.0) & (norm(m_hi) <= 1.0)
    for _ in range(iters):
        mid = 0.5 * (m_lo + m_hi)
        big = norm(mid) > 1.0
        m_lo = np.where(big, mid, m_lo)
        m_hi = np.where(big, m_hi, mid)
    return _component_roots(0.5 * (m_lo + m_hi), shots, ones, hi, lo, iters), ok


class _AxisCountEstimator:
    """ML estimates for fixed-axis attacks, memoised on the count tuple.

    When the space of possible count tuples is small, the first miss solves
    all of it in one vectorised batch instead of one key per call.
    """

    full_grid_max = 10_000

    def __init__(self, N: int, attack: str, readout: ReadoutModel):
        self.n_axes = _attack_axes(attack)
        self.shots = np.array(split_counts(N, self.n_axes), dtype=float)
        self.axes = _AXES[: self.n_axes]
        self.readout = readout
        self.cache: dict[tuple, np.ndarray] = {}
        self._grid_done = False

    def _grid_keys(self) -> Optional[np.ndarray]:
        sizes = [int(n) + 1 for n in self.shots]
        if math.prod(sizes) > self.full_grid_max:
            return None
        mesh = np.meshgrid(*[np.arange(n) for n in sizes], indexing="ij")
        keys = np.stack([m.ravel() for m in mesh], axis=1)
        comp = self._linear(keys.astype(float))
        # only keys the exact-fill branch cannot handle need solving
        unmeasured = any(n == 0 for n in self.shots) or self.n_axes < 3
        need = ~((np.sum(comp**2, axis=1) <= 1.0) & unmeasured)
        return keys[need]

    def _linear(self, ones: np.ndarray) -> np.ndarray:
        hi, lo = self.readout.p_report_one(1), self.readout.p_report_one(0)
        used = self.shots > 0
        frac = np.where(used, ones / np.where(used, self.shots, 1.0), 0.5)
        p = np.clip((frac - lo) / (hi - lo), 0.0, 1.0) if hi != lo else np.full_like(frac, 0.5)
        return np.where(used, 2 * p - 1, 0.0)

    def _solve(self, keys: np.ndarray) -> None:
        # the multiplier is positive when the linear estimate lies outside the
        # ball; a negative one keeps the component equations monotone only
        # while |2 mu| stays below every axis curvature, and keys that cannot
        # be bracketed that way go to the direct optimiser
        comp = self._linear(keys.astype(float))
        outside = np.sum(comp**2, axis=1) > 1.0
        measured = self.shots[self.shots > 0]
        fast = outside | (len(measured) == 3)
        cols = [2, 0, 1][: self.n_axes]
        idx = np.flatnonzero(fast)
        if len(idx):
            # min over q of k/q^2 + (n-k)/(1-q)^2 is (k^(1/3) + (n-k)^(1/3))^3
            s2 = (0.5 * (self.readout.p_report_one(1) - self.readout.p_report_one(0))) ** 2
            k = keys[idx].astype(float)
            curv = (np.cbrt(k) + np.cbrt(self.shots - k)) ** 3
            curv = np.where(self.shots > 0, curv, np.inf).min(axis=1)
            mu_lo = np.where(outside[idx], 0.0, -0.49 * s2 * curv)
            roots, ok = ml_directions_lagrange(self.shots, keys[idx], self.readout, mu_lo, 4.0 * self.shots.sum())
            for j, r, good in zip(idx, roots, ok):
                if good:
                    v = np.zeros(3)
                    v[cols] = r
                    self.cache[tuple(int(x) for x in keys[j])] = v / np.linalg.norm(v)
        for key in keys:
            t = tuple(int(x) for x in key)
            if t not in self.cache:
                self.cache[t] = ml_direction(self.axes, self.shots, key, self.readout)

    def estimate(self, ones: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Estimates for an ``(S, n_axes)`` array of aligned counts."""
        ones = np.asarray(ones)
        m = np.zeros((ones.shape[0], 3))
        comp = self._linear(ones.astype(float).reshape(-1, self.n_axes))
        # coordinates: axis order z, x, y -> vector components 2, 0, 1
        cols = [2, 0, 1][: self.n_axes]
        m[:, cols] = comp
        norm2 = np.sum(comp**2, axis=1)
        unmeasured = [c for c in (2, 0, 1) if c not in cols or self.shots[cols.index(c)] == 0]
        measured_all = len(unmeasured) == 0
        out = np.empty_like(m)
        # data reachable exactly by a unit vector: fill the unobserved
        # components at random, the likelihood is already at its maximum
        exact = (norm2 <= 1.0) & (not measured_all)
        if np.any(exact):
            idx = np.flatnonzero(exact)
            rest = np.sqrt(np.maximum(1.0 - norm2[idx], 0.0))
            if len(unmeasured) == 1:
                fill = np.where(rng.random(len(idx)) < 0.5, -1.0, 1.0)[:, None] * rest[:, None]
            else:
                ang = rng.uniform(0, 2 * math.pi, size=len(idx))
                fill = np.stack([np.cos(ang), np.sin(ang)], axis=1) * rest[:, None]
            out[idx] = m[idx]
            out[np.ix_(idx, unmeasured)] = fill[:, : len(unmeasured)]
        todo = np.flatnonzero(~exact)
        if len(todo):
            keys, inverse = np.unique(ones[todo], axis=0, return_inverse=True)
            inverse = np.asarray(inverse).ravel()
            sols = np.empty((len(keys), 3))
            missing = [j for j, key in enumerate(keys) if tuple(int(x) for x in key) not in self.cache]
            if missing and not self._grid_done:
                self._grid_done = True
                grid = self._grid_keys()
                if grid is not None:
                    self._solve(grid)
                missing = [j for j, key in enumerate(keys) if tuple(int(x) for x in key) not in self.cache]
            if missing:
                self._solve(keys[missing])
            for j, key in enumerate(keys):
                sols[j] = self.cache[tuple(int(x) for x in key)]
            out[todo] = sols[inverse]
        return out / np.linalg.norm(out, axis=1, keepdims=True)


@functools.lru_cache(maxsize=64)
def shared_estimator(N: int, attack: str, readout: ReadoutModel) -> _AxisCountEstimator:
    """Estimator whose solution cache is reused across calls (results do not depend on it)."""
    return _AxisCountEstimator(N, attack, readout)


def adversary_counts(
    secrets: np.ndarray, N: int, attack: str, readout: ReadoutModel, rng: np.random.Generator
) -> np.ndarray:
    """Aligned counts per attack axis for pure tokens along ``secrets``."""
    shots = split_counts(N, _attack_axes(attack))
    cols = []
    for a, n_a in zip(_AXES, shots):
        p = 0.5 * (1.0 + secrets @ a)
        cols.append(rng.binomial(n_a, readout.compose(p)) if n_a else np.zeros(len(secrets), dtype=np.int64))
    return np.stack(cols, axis=1)


def angle_errors(estimates: np.ndarray, secrets: np.ndarray) -> np.ndarray:
    c = np.clip(np.sum(estimates * secrets, axis=1), -1.0, 1.0)
    return np.arccos(c)


def attack_estimates(
    secrets: np.ndarray,
    N: int,
    attack: str = "three-axis",
    rng: Optional[np.random.Generator] = None,
    adversary_readout: ReadoutModel = ReadoutModel.perfect(),
    estimator: Optional[_AxisCountEstimator] = None,
) -> np.ndarray:
    """Vectorised adversary estimates for undisturbed tokens along ``secrets``."""
    if attack not in ATTACKS:
        raise ValueError(f"unknown attack {attack!r}")
    rng = rng if rng is not None else np.random.default_rng()
    if attack == "per-spin":
        out = np.empty_like(secrets)
        for i, s in enumerate(secrets):
            out[i] = _per_spin_estimate(np.repeat(s[None, :], N, axis=0), adversary_readout, rng)
        return out
    est = estimator or shared_estimator(N, attack, adversary_readout)
    ones = adversary_counts(secrets, N, attack, adversary_readout, rng)
    return est.estimate(ones, rng)


def _per_spin_estimate(spins: np.ndarray, readout: ReadoutModel, rng: np.random.Generator) -> np.ndarray:
    axes = random_directions(len(spins), rng)
    p = 0.5 * (1.0 + np.sum(spins * axes, axis=1))
    true = rng.random(len(spins)) < p
    reported = rng.random(len(spins)) < np.where(true, readout.p_report_one(1), readout.p_report_one(0))
    ones = reported.astype(float)
    start = 3.0 * ((2 * ones - 1)[:, None] * axes).mean(axis=0)
    return ml_direction(axes, np.ones(len(spins)), ones, readout, start=start)


def attack_estimate_reprepare(
    coin: EnsembleCoin,
    attack: str,
    rng: np.random.Generator,
    adversary_readout: ReadoutModel = ReadoutModel.perfect(),
    return_estimates: bool = False,
):
    """Measure every token of ``coin`` and prepare a fresh coin at the estimates.

    Split attacks assign spins to the z, x, y axes in turn (N/k per axis); the
    per-spin attack measures each spin along its own random axis. Estimates
    are pure-state maximum-likelihood directions.

    Raises:
        ValueError: unknown attack kind.
    """
    if attack not in ATTACKS:
        raise ValueError(f"unknown attack {attack!r}")
    est = np.empty((coin.M, 3))
    if attack == "per-spin":
        for i in range(coin.M):
            est[i] = _per_spin_estimate(coin.spins[i], adversary_readout, rng)
    else:
        estimator = shared_estimator(coin.N, attack, adversary_readout)
        shots = estimator.shots.astype(int)
        ones = np.zeros((coin.M, len(shots)), dtype=np.int64)
        for i in range(coin.M):
            start = 0
            for a_idx, n_a in enumerate(shots):
                block = coin.spins[i, start : start + n_a]
                if n_a:
                    reported, _, _ = measure_spins(block, _AXES[a_idx], adversary_readout, rng)
                    ones[i, a_idx] = reported.sum()
                start += n_a
        est = estimator.estimate(ones, rng)
    forged = EnsembleCoin(np.repeat(est[:, None, :], coin.N, axis=1))
    return (forged, est) if return_estimates else forged


def forged_verification_counts(
    N: int,
    n_samples: int,
    readout: ReadoutModel,
    attack: str = "three-axis",
    rng: Optional[np.random.Generator] = None,
    adversary_readout: ReadoutModel = ReadoutModel.perfect(),
    chunk: int = 200_000,
) -> np.ndarray:
    """Monte Carlo of the bank's aligned count on single forged tokens.

    Each sample draws a uniform secret, runs the attack on an undisturbed
    N-spin token, re-prepares N spins at the estimate and measures them along
    the secret axis through ``readout``.
    """
    rng = rng if rng is not None else np.random.default_rng()
    estimator = None if attack == "per-spin" else shared_estimator(N, attack, adversary_readout)
    out = np.empty(n_samples, dtype=np.int64)
    for start in range(0, n_samples, chunk):
        size = min(chunk, n_samples - start)
        secrets = random_directions(size, rng)
        est = attack_estimates(secrets, N, attack, rng, adversary_readout, estimator)
        p = 0.5 * (1.0 + np.clip(np.sum(est * secrets, axis=1), -1.0, 1.0))
        out[start : start + size] = rng.binomial(N, readout.compose(p))
    return out


# -- analytic rates -----------------------------------------------------------


def _gauss_legendre(n: int = 64):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w / 2.0  # weights for the uniform average over cos(theta) in [-1, 1]


def honest_spin_probabilities(noise: Optional[NoiseChannel], nodes: np.ndarray) -> np.ndarray:
    """Aligned-outcome probability of a stored spin at polar cosine ``nodes``."""
    if noise is None or noise.is_identity:
        return np.ones_like(nodes)
    out = np.empty_like(nodes)
    for i, c in enumerate(nodes):
        s = math.sqrt(max(0.0, 1.0 - c * c))
        v = np.array([s, 0.0, c])
        out[i] = 0.5 * (1.0 + float(_channel_bloch(v, noise) @ v))
    return out


def log_token_pass_probability(N: int, min_count: int, q_one: float) -> float:
    """log P(Binomial(N, q_one) >= min_count)."""
    return log_binom_tail(N, min(max(q_one, 0.0), 1.0), min_count)


def honest_token_pass_probability(
    N: int, min_count: int, readout: ReadoutModel, noise: Optional[NoiseChannel] = None
) -> float:
    """Exact per-token pass probability of an honest token.

    Angle-dependent noise is averaged over uniformly distributed secrets with
    Gauss-Legendre quadrature in cos(theta).
    """
    if noise is None or noise.is_identity or noise.kind == "depolarizing":
        p = 1.0 if noise is None or noise.is_identity else 1.0 - noise.parameter / 2.0
        return math.exp(log_token_pass_probability(N, min_count, float(readout.compose(p))))
    nodes, weights = _gauss_legendre()
    probs = honest_spin_probabilities(noise, nodes)
    vals = [math.exp(log_token_pass_probability(N, min_count, float(readout.compose(p)))) for p in probs]
    return float(np.dot(weights, vals))


@dataclass
class CoinErrorRates:
    false_reject: float
    false_accept: float
    log10_false_reject: float
    log10_false_accept: float
    p_honest: float
    p_forged_hat: float
    p_forged_upper: float
    false_accept_point: float
    samples: int
    confidence: float
    attack: str = "three-axis"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def coin_tail_rates(M: int, T: int, p_honest: float, p_forged: float) -> tuple[float, float]:
    """(log false_reject, log false_accept) for independent tokens.

    false_reject = P(Binomial(M, p_honest) < T), false_accept =
    P(Binomial(M, p_forged) >= T), both natural logs.
    """
    return log_binom_cdf(M, p_honest, T - 1), log_binom_tail(M, p_forged, T)


def coin_error_rates(
    policy: CoinPolicy,
    readout: ReadoutModel,
    attack: str = "three-axis",
    honest_noise: Optional[NoiseChannel] = None,
    n_samples: int = 100_000,
    rng: Optional[np.random.Generator] = None,
    confidence: float = 0.99,
    adversary_readout: ReadoutModel = ReadoutModel.perfect(),
    forged_counts: Optional[np.ndarray] = None,
) -> CoinErrorRates:
    """False-reject (exact) and false-accept (upper confidence bound) of a coin.

    The forged-token pass probability is estimated by Monte Carlo and replaced
    by its one-sided Clopper-Pearson upper bound before the binomial tail over
    the M tokens is taken.
    """
    k = policy.min_count
    p_h = honest_token_pass_probability(policy.N, k, readout, honest_noise)
    if forged_counts is None:
        forged_counts = forged_verification_counts(policy.N, n_samples, readout, attack, rng, adversary_readout)
    n = len(forged_counts)
    passes = int(np.sum(forged_counts >= k))
    p_f_hat = passes / n
    p_f_up = clopper_pearson_upper(passes, n, confidence)
    log_fr, log_fa = coin_tail_rates(policy.M, policy.T, p_h, p_f_up)
    fa_point = math.exp(log_binom_tail(policy.M, p_f_hat, policy.T))
    return CoinErrorRates(
        false_reject=math.exp(log_fr),
        false_accept=math.exp(log_fa),
        log10_false_reject=log_fr / LN10,
        log10_false_accept=log_fa / LN10,
        p_honest=p_h,
        p_forged_hat=p_f_hat,
        p_forged_upper=p_f_up,
        false_accept_point=fa_point,
        samples=n,
        confidence=confidence,
        attack=attack,
    )


# -- design search ------------------------------------------------------------


class InfeasibleDesign(RuntimeError):
    def __init__(self, message: str, best: Optional[dict] = None):
        super().__init__(message)
        self.best = best or {}


@dataclass
class CoinDesign:
    policy: CoinPolicy
    certificate: dict = field(default_factory=dict)


def _min_T_for_fa(M: int, p_f: float, log_fa_max: float) -> Optional[int]:
    tails = log_binom_tails_all(M, p_f)
    ok = np.flatnonzero(tails[1 : M + 1] < log_fa_max)
    return int(ok[0]) + 1 if len(ok) else None


def _feasible(M: int, p_h: float, p_f: float, log_fa: float, log_fr: float):
    T = _min_T_for_fa(M, p_f, log_fa)
    if T is None:
        return None
    lfr = log_binom_cdf(M, p_h, T - 1)
    return (T, lfr) if lfr < log_fr else None


def _smallest_M(p_h: float, p_f: float, log_fa: float, log_fr: float, M_max: int):
    """Smallest M <= M_max admitting a threshold T that meets both targets."""
    if p_h <= p_f:
        return None
    hi = 1
    while hi <= M_max and _feasible(hi, p_h, p_f, log_fa, log_fr) is None:
        hi *= 2
    if hi > M_max:
        hi = M_max
        if _feasible(hi, p_h, p_f, log_fa, log_fr) is None:
            return None
    lo = hi // 2  # infeasible (or 0)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _feasible(mid, p_h, p_f, log_fa, log_fr) is None:
            lo = mid
        else:
            hi = mid
    T, lfr = _feasible(hi, p_h, p_f, log_fa, log_fr)
    return hi, T, lfr


def design_coin(
    fa_max: float,
    fr_max: float,
    readout: ReadoutModel,
    attack: str = "three-axis",
    N_range: Sequence[int] = range(1, 13),
    M_max: int = 20_000,
    n_samples: int = 1_000_000,
    confidence: float = 0.99,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
    honest_noise: Optional[NoiseChannel] = None,
    adversary_readout: ReadoutModel = ReadoutModel.perfect(),
) -> CoinDesign:
    """Search (N, tau, M, T) for the smallest N*M coin meeting both targets.

    For every N the forged-token counts are simulated once; every threshold
    ``tau = k/N`` then gets an exact honest pass probability and a
    Clopper-Pearson bound on the forged one, and the smallest feasible M (with
    its least T) is found by bracketing and bisection on exact log-space
    tails.

    Raises:
        InfeasibleDesign: nothing within the bounds meets both targets; the
            exception carries the best (false_accept, false_reject) pair seen.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    log_fa, log_fr = math.log(fa_max), math.log(fr_max)
    best = None
    best_effort = None
    for N in N_range:
        counts = forged_verification_counts(N, n_samples, readout, attack, rng, adversary_readout)
        for k in range(1, N + 1):
            p_h = honest_token_pass_probability(N, k, readout, honest_noise)
            passes = int(np.sum(counts >= k))
            p_f_up = clopper_pearson_upper(passes, n_samples, confidence)
            found = _smallest_M(p_h, p_f_up, log_fa, log_fr, M_max)
            if found is None:
                if p_h > p_f_up:
                    T = _min_T_for_fa(M_max, p_f_up, log_fa) or M_max
                    lfr, lfa = coin_tail_rates(M_max, T, p_h, p_f_up)
                    cand = {"N": N, "M": M_max, "tau": k / N, "T": T,
                            "log10_false_accept": lfa / LN10, "log10_false_reject": lfr / LN10}
                    if best_effort is None or lfa + lfr < best_effort["log10_false_accept"] * LN10 + best_effort["log10_false_reject"] * LN10:
                        best_effort = cand
                continue
            M, T, lfr = found
            if best is None or N * M < best[0].N * best[0].M:
                lfa = log_binom_tail(M, p_f_up, T)
                best = (
                    CoinPolicy(N, M, k / N, T),
                    {
                        "p_honest": p_h,
                        "p_forged_hat": passes / n_samples,
                        "p_forged_upper": p_f_up,
                        "log10_false_accept": lfa / LN10,
                        "log10_false_reject": lfr / LN10,
                        "false_accept": math.exp(lfa),
                        "false_reject": math.exp(lfr),
                    },
                )
    if best is None:
        raise InfeasibleDesign(
            f"no coin with N in {list(N_range)} and M <= {M_max} meets false_accept < {fa_max} "
            f"and false_reject < {fr_max}",
            best_effort,
        )
    policy, cert = best
    cert.update(
        {
            "targets": {"false_accept_max": fa_max, "false_reject_max": fr_max},
            "readout": readout.to_dict(),
            "adversary_readout": adversary_readout.to_dict(),
            "attack": attack,
            "adversary_class": "non-adaptive measure-and-reprepare",
            "honest_noise": None if honest_noise is None else [honest_noise.kind, honest_noise.parameter],
            "forged_samples": n_samples,
            "confidence": confidence,
            "seed": seed,
            "policy": policy.to_dict(),
        }
    )
    return CoinDesign(policy, cert)


def format_certificate(design: CoinDesign) -> str:
    """Human-readable certificate block."""
    c = design.certificate
    p = design.policy
    lines = [
        "coin design certificate",
        f"  policy          N={p.N} M={p.M} tau={p.tau:.6g} (k>={p.min_count}) T={p.T}",
        f"  targets         false_accept < {c['targets']['false_accept_max']:.3g}, "
        f"false_reject < {c['targets']['false_reject_max']:.3g}",
        f"  readout         {c['readout']}",
        f"  adversary       {c['attack']} ({c['adversary_class']}), readout {c['adversary_readout']}",
        f"  p_honest        {c['p_honest']:.10g}",
        f"  p_forged        {c['p_forged_hat']:.6g} (upper {c['confidence']:.0%} CP bound "
        f"{c['p_forged_upper']:.6g}, {c['forged_samples']} samples)",
        f"  false_accept    10^{c['log10_false_accept']:.3f}",
        f"  false_reject    10^{c['log10_false_reject']:.3f}",
        f"  seed            {c['seed']}",
    ]
    return "\n".join(lines)


def simulate_false_reject(
    policy: CoinPolicy,
    readout: ReadoutModel,
    n_coins: int,
    rng: np.random.Generator,
    honest_noise: Optional[NoiseChannel] = None,
    chunk: int = 20_000,
) -> float:
    """Monte Carlo false-reject rate of honest coins (spin-level counts per token)."""
    k = policy.min_count
    rejects = 0
    for start in range(0, n_coins, chunk):
        size = min(chunk, n_coins - start)
        if honest_noise is None or honest_noise.is_identity:
            q = np.full((size, policy.M), float(readout.compose(1.0)))
        else:
            dirs = random_directions(size * policy.M, rng)
            c = dirs[:, 2]
            p = np.interp(c, *_spin_prob_table(honest_noise))
            q = readout.compose(p).reshape(size, policy.M)
        counts = rng.binomial(policy.N, q)
        passing = np.sum(counts >= k, axis=1)
        rejects += int(np.sum(passing < policy.T))
    return rejects / n_coins


def _spin_prob_table(noise: NoiseChannel):
    grid = np.linspace(-1, 1, 401)
    return grid, honest_spin_probabilities(noise, grid)
