"""Finite-dimensional states, fidelities and projective measurement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
# eigenvalues above -CLIP_TOL are treated as zero before square roots
CLIP_TOL = 1e-9
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PureQubit:
    """Pure qubit given by its Bloch-sphere angles.

    ``theta`` is the polar angle in [0, pi] and ``phi`` the azimuth in
    [0, 2 pi). The state vector is ``cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>``.
    """

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi):
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if not (0.0 <= self.phi < TWO_PI):
            raise ValueError(f"phi must lie in [0, 2pi), got {self.phi}")

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "PureQubit":
        """Build from arbitrary angles, folding them into the canonical ranges."""
        x, y, z = (
            math.sin(theta) * math.cos(phi),
            math.sin(theta) * math.sin(phi),
            math.cos(theta),
        )
        return cls.from_bloch((x, y, z))

    @classmethod
    def from_bloch(cls, vec) -> "PureQubit":
        x, y, z = (float(c) for c in vec)
        norm = math.sqrt(x * x + y * y + z * z)
        if norm == 0.0:
            raise ValueError("zero Bloch vector has no direction")
        theta = math.acos(min(1.0, max(-1.0, z / norm)))
        phi = math.atan2(y, x) % TWO_PI
        if phi >= TWO_PI:
            phi = 0.0
        return cls(theta, phi)

    @property
    def bloch(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])

    @property
    def vector(self) -> np.ndarray:
        return np.array(
            [math.cos(self.theta / 2), np.exp(1j * self.phi) * math.sin(self.theta / 2)],
            dtype=complex,
        )

    def antipode(self) -> "PureQubit":
        return PureQubit.from_bloch(-self.bloch)

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix.from_vector(self.vector)


KET0 = PureQubit(0.0, 0.0)
KET1 = PureQubit(math.pi, 0.0)
KET_PLUS = PureQubit(math.pi / 2, 0.0)
KET_MINUS = PureQubit(math.pi / 2, math.pi)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated density matrix (Hermitian, unit trace, positive semidefinite)."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {tr}, expected 1")
        if np.linalg.eigvalsh(m).min() < -PSD_TOL:
            raise ValueError("density matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_vector(cls, psi) -> "DensityMatrix":
        v = np.asarray(psi, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_bloch(cls, vec) -> "DensityMatrix":
        """Qubit state with Bloch vector ``vec`` (norm <= 1)."""
        x, y, z = (float(c) for c in vec)
        return cls(0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]], dtype=complex))

    @property
    def bloch(self) -> np.ndarray:
        if self.dim != 2:
            raise ValueError("Bloch vector is defined for qubits only")
        m = self.entries
        return np.array([2 * m[1, 0].real, 2 * m[1, 0].imag, (m[0, 0] - m[1, 1]).real])

    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))

    def __eq__(self, other):
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


QubitState = Union[PureQubit, DensityMatrix]


def as_density(state) -> DensityMatrix:
    """Coerce a PureQubit, state vector, or matrix to a validated DensityMatrix."""
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, PureQubit):
        return state.to_density()
    arr = np.asarray(state)
    if arr.ndim == 1:
        return DensityMatrix.from_vector(arr)
    return DensityMatrix(arr)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    if w.min() < -CLIP_TOL:
        raise ValueError("matrix is not positive semidefinite")
    # eigenvalues at round-off level are zeroed; their square roots would
    # otherwise leak ~1e-8 into the trace norm
    cutoff = 64 * np.finfo(float).eps * max(w.max(), 1.0)
    w = np.where(w > cutoff, w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity_dm(rho, sigma) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``.

    Evaluated as the squared trace norm of ``sqrt(rho) sqrt(sigma)``, which is
    symmetric in its arguments and reduces to ``|<psi|phi>|^2`` for pure states.

    Raises:
        ValueError: on dimension mismatch or an invalid (non-PSD) input.
    """
    r = as_density(rho)
    s = as_density(sigma)
    if r.dim != s.dim:
        raise ValueError(f"dimension mismatch: {r.dim} vs {s.dim}")
    prod = _psd_sqrt(r.entries) @ _psd_sqrt(s.entries)
    nuclear = np.linalg.svd(prod, compute_uv=False).sum()
    return float(min(1.0, max(0.0, nuclear**2)))


def overlap_pure(a: PureQubit, b: PureQubit) -> float:
    """``|<a|b>|^2 = cos^2(delta/2)`` with delta the angle between Bloch vectors."""
    c = float(np.dot(a.bloch, b.bloch))
    return min(1.0, max(0.0, 0.5 * (1.0 + c)))


def outcome_probability(state: QubitState, axis: PureQubit) -> float:
    """Probability of the outcome aligned with ``axis`` (the ``1`` outcome)."""
    if isinstance(state, PureQubit):
        return overlap_pure(state, axis)
    rho = as_density(state)
    if rho.dim != 2:
        raise ValueError("projective qubit measurement needs a 2-level state")
    v = axis.vector
    p = float(np.real(v.conj() @ rho.entries @ v))
    return min(1.0, max(0.0, p))


def measure_projective(state: QubitState, axis: PureQubit, rng: np.random.Generator) -> int:
    """Single projective measurement along ``axis``.

    Returns 1 with probability ``overlap_pure(state, axis)`` (pure) or
    ``tr(rho |axis><axis|)`` (mixed), else 0. One uniform draw per call.
    """
    p = outcome_probability(state, axis)
    return int(rng.random() < p)


def post_measurement_state(axis: PureQubit, outcome: int) -> PureQubit:
    """Eigenstate left behind by :func:`measure_projective`."""
    return axis if outcome else axis.antipode()


def haar_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unit vector in C^dim."""
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix with phase correction."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
