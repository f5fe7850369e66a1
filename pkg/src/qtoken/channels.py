"""Phenomenological noise channels acting on density matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .states import DensityMatrix, as_density

KINDS = ("identity", "depolarizing", "dephasing", "amplitude_damping", "erasure")


@dataclass(frozen=True)
class NoiseChannel:
    """A single-parameter channel.

    ``depolarizing(p)``: rho -> (1 - p) rho + p I/d.
    ``dephasing(p)``: rho -> (1 - p) rho + p diag(rho); coherences shrink by 1 - p.
    ``amplitude_damping(gamma)``: qubit decay |1> -> |0> with probability gamma.
    ``erasure(eta)``: survives with probability eta; otherwise the state is
    replaced by an orthogonal flag level appended as the last basis vector.
    """

    kind: str = "identity"
    parameter: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not 0.0 <= self.parameter <= 1.0:
            raise ValueError(f"channel parameter must lie in [0, 1], got {self.parameter}")

    @classmethod
    def identity(cls) -> "NoiseChannel":
        return cls("identity", 0.0)

    @classmethod
    def depolarizing(cls, p: float) -> "NoiseChannel":
        return cls("depolarizing", p)

    @classmethod
    def dephasing(cls, p: float) -> "NoiseChannel":
        return cls("dephasing", p)

    @classmethod
    def amplitude_damping(cls, gamma: float) -> "NoiseChannel":
        return cls("amplitude_damping", gamma)

    @classmethod
    def erasure(cls, eta: float) -> "NoiseChannel":
        return cls("erasure", eta)

    @property
    def is_identity(self) -> bool:
        if self.kind == "identity":
            return True
        if self.kind == "erasure":
            return self.parameter == 1.0
        return self.parameter == 0.0

    def kraus(self, dim: int = 2) -> list[np.ndarray]:
        """Kraus operators (d -> d, or d -> d+1 for erasure)."""
        p = self.parameter
        eye = np.eye(dim, dtype=complex)
        if self.kind == "identity":
            return [eye]
        if self.kind == "depolarizing":
            ops = [np.sqrt(1 - p) * eye]
            for i in range(dim):
                for j in range(dim):
                    e = np.zeros((dim, dim), dtype=complex)
                    e[i, j] = 1.0
                    ops.append(np.sqrt(p / dim) * e)
            return ops
        if self.kind == "dephasing":
            ops = [np.sqrt(1 - p) * eye]
            for i in range(dim):
                e = np.zeros((dim, dim), dtype=complex)
                e[i, i] = 1.0
                ops.append(np.sqrt(p) * e)
            return ops
        if self.kind == "amplitude_damping":
            if dim != 2:
                raise ValueError("amplitude damping is defined for qubits only")
            return [
                np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex),
                np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex),
            ]
        # erasure
        keep = np.zeros((dim + 1, dim), dtype=complex)
        keep[:dim, :dim] = np.sqrt(p) * eye
        ops = [keep]
        for j in range(dim):
            e = np.zeros((dim + 1, dim), dtype=complex)
            e[dim, j] = np.sqrt(1 - p)
            ops.append(e)
        return ops


def apply_channel(rho, ch: NoiseChannel) -> DensityMatrix:
    """Apply ``ch`` to ``rho``.

    Identity-acting channels (including ``erasure(1)``) return the input
    object unchanged.

    Raises:
        ValueError: amplitude damping on a non-qubit state.
    """
    rho = as_density(rho)
    if ch.is_identity:
        return rho
    m = rho.entries
    d = rho.dim
    p = ch.parameter
    if ch.kind == "depolarizing":
        out = (1 - p) * m + p * np.eye(d) / d
    elif ch.kind == "dephasing":
        out = (1 - p) * m + p * np.diag(np.diag(m))
    elif ch.kind == "amplitude_damping":
        if d != 2:
            raise ValueError("amplitude damping is defined for qubits only")
        s = np.sqrt(1 - p)
        out = np.array(
            [[m[0, 0] + p * m[1, 1], s * m[0, 1]], [s * m[1, 0], (1 - p) * m[1, 1]]],
            dtype=complex,
        )
    else:
        out = np.zeros((d + 1, d + 1), dtype=complex)
        out[:d, :d] = p * m
        out[d, d] = (1 - p) * np.trace(m).real
    return DensityMatrix(0.5 * (out + out.conj().T))


def apply_channels(rho, channels: Iterable[NoiseChannel]) -> DensityMatrix:
    """Apply channels left to right."""
    out = as_density(rho)
    for ch in channels:
        out = apply_channel(out, ch)
    return out


def apply_kraus(rho, ops: list[np.ndarray]) -> np.ndarray:
    """Raw Kraus sum ``sum_k K rho K^dagger`` (no validation)."""
    m = as_density(rho).entries
    return sum(k @ m @ k.conj().T for k in ops)
