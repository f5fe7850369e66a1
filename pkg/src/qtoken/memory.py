"""Phenomenological quantum memories.

A memory is described by relaxation and coherence times, write/read
efficiencies, a number of addressable modes and a readout model. Storage is
compiled into a fixed sequence of channels: amplitude damping, then pure
dephasing, then erasure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
from scipy import stats

from .channels import NoiseChannel, apply_channels
from .states import DensityMatrix, PureQubit, as_density

MULTIPLEXING = ("TDM", "FDM", "mixed")


class MemoryAccessError(RuntimeError):
    """Misuse of a memory slot (out of range, double write, empty read)."""


ERASED = None  # marker returned by a failed read


@dataclass(frozen=True)
class ReadoutModel:
    """Single-shot spin readout.

    ``flip``: the true bit is reported correctly with probability ``f_bright``
    (bit 1) or ``f_dark`` (bit 0).
    ``poisson``: a photon count is drawn with mean ``n_bright`` (bit 1) or
    ``n_dark`` (bit 0) and reported as 1 when it reaches ``threshold``.
    """

    kind: str = "flip"
    f_bright: float = 1.0
    f_dark: float = 1.0
    n_bright: float = 0.0
    n_dark: float = 0.0
    threshold: int = 0

    def __post_init__(self):
        if self.kind == "flip":
            if not (0.0 <= self.f_bright <= 1.0 and 0.0 <= self.f_dark <= 1.0):
                raise ValueError("readout fidelities must lie in [0, 1]")
        elif self.kind == "poisson":
            if self.n_bright <= 0 or self.n_dark <= 0:
                raise ValueError("Poisson means must be positive")
            if int(self.threshold) != self.threshold or self.threshold < 0:
                raise ValueError("threshold must be a non-negative integer")
        else:
            raise ValueError(f"unknown readout kind {self.kind!r}")

    @classmethod
    def perfect(cls) -> "ReadoutModel":
        return cls("flip", 1.0, 1.0)

    @classmethod
    def flip(cls, f_bright: float, f_dark: float) -> "ReadoutModel":
        return cls("flip", f_bright, f_dark)

    @classmethod
    def poisson(cls, n_bright: float, n_dark: float, threshold: Optional[int] = None) -> "ReadoutModel":
        if threshold is None:
            threshold = optimal_threshold(n_bright, n_dark)
        return cls("poisson", n_bright=n_bright, n_dark=n_dark, threshold=int(threshold))

    def p_report_one(self, true_bit: int) -> float:
        """Probability that the readout reports 1 given the true bit."""
        if self.kind == "flip":
            return self.f_bright if true_bit else 1.0 - self.f_dark
        mean = self.n_bright if true_bit else self.n_dark
        return float(stats.poisson.sf(self.threshold - 1, mean))

    @property
    def correct_rates(self) -> tuple[float, float]:
        """(P(report 1 | bit 1), P(report 0 | bit 0))."""
        return self.p_report_one(1), 1.0 - self.p_report_one(0)

    def compose(self, p_one):
        """Reported-one probability when the true bit is 1 with probability ``p_one``."""
        hi, lo = self.p_report_one(1), self.p_report_one(0)
        return np.asarray(p_one) * hi + (1.0 - np.asarray(p_one)) * lo

    def to_dict(self) -> dict:
        if self.kind == "flip":
            return {"kind": "flip", "f_bright": self.f_bright, "f_dark": self.f_dark}
        return {"kind": "poisson", "n_bright": self.n_bright, "n_dark": self.n_dark, "threshold": self.threshold}

    @classmethod
    def from_dict(cls, d: dict) -> "ReadoutModel":
        if d["kind"] == "flip":
            return cls.flip(d["f_bright"], d["f_dark"])
        return cls.poisson(d["n_bright"], d["n_dark"], d.get("threshold"))


# Readout figures used for the ensemble coin studies.
NV_FLIP_READOUT = ReadoutModel.flip(0.935, 0.824)
SIV_POISSON_BRIGHT = 32.0
SIV_POISSON_DARK = 10.0


def optimal_threshold(n_bright: float, n_dark: float) -> int:
    """Count threshold minimising the average of the two misread probabilities."""
    hi = int(max(n_bright, n_dark) * 4 + 50)
    th = np.arange(0, hi + 1)
    miss_bright = stats.poisson.cdf(th - 1, n_bright)  # P(count < th | bright)
    false_bright = stats.poisson.sf(th - 1, n_dark)  # P(count >= th | dark)
    return int(th[np.argmin(miss_bright + false_bright)])


def readout_error_probabilities(model: ReadoutModel) -> tuple[float, float]:
    """Exact (P(read 0 | bit 1), P(read 1 | bit 0))."""
    return 1.0 - model.p_report_one(1), model.p_report_one(0)


def single_shot_readout(true_bit: int, model: ReadoutModel, rng: np.random.Generator) -> int:
    """Report one bit through ``model``."""
    if model.kind == "flip":
        correct = model.f_bright if true_bit else model.f_dark
        return int(true_bit) if rng.random() < correct else 1 - int(true_bit)
    count = rng.poisson(model.n_bright if true_bit else model.n_dark)
    return int(count >= model.threshold)


def readout_many(true_bits: np.ndarray, model: ReadoutModel, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`single_shot_readout`."""
    bits = np.asarray(true_bits, dtype=np.int64)
    if model.kind == "flip":
        correct = np.where(bits == 1, model.f_bright, model.f_dark)
        keep = rng.random(bits.shape) < correct
        return np.where(keep, bits, 1 - bits)
    counts = rng.poisson(np.where(bits == 1, model.n_bright, model.n_dark))
    return (counts >= model.threshold).astype(np.int64)


@dataclass(frozen=True)
class MemorySpec:
    label: str
    t1: float
    t2: float
    eta_write: float = 1.0
    eta_read: float = 1.0
    modes: int = 1
    multiplexing: str = "TDM"
    readout: ReadoutModel = field(default_factory=ReadoutModel.perfect)
    crosstalk: float = 0.0
    note: str = ""

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2 > 0):
            raise ValueError("t1 and t2 must be positive")
        if self.t2 > 2 * self.t1:
            raise ValueError(f"t2 = {self.t2} exceeds 2 t1 = {2 * self.t1}")
        for name in ("eta_write", "eta_read", "crosstalk"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if int(self.modes) != self.modes or self.modes < 1:
            raise ValueError("modes must be a positive integer")
        if self.multiplexing not in MULTIPLEXING:
            raise ValueError(f"multiplexing must be one of {MULTIPLEXING}")

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "t1_s": self.t1,
            "t2_s": self.t2,
            "eta_write": self.eta_write,
            "eta_read": self.eta_read,
            "modes": self.modes,
            "multiplexing": self.multiplexing,
            "readout": self.readout.to_dict(),
        }
        if self.crosstalk:
            d["crosstalk"] = self.crosstalk
        if self.note:
            d["note"] = self.note
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MemorySpec":
        return cls(
            label=d["label"],
            t1=float(d["t1_s"]),
            t2=float(d["t2_s"]),
            eta_write=float(d.get("eta_write", 1.0)),
            eta_read=float(d.get("eta_read", 1.0)),
            modes=int(d.get("modes", 1)),
            multiplexing=d.get("multiplexing", "TDM"),
            readout=ReadoutModel.from_dict(d.get("readout", {"kind": "flip", "f_bright": 1.0, "f_dark": 1.0})),
            crosstalk=float(d.get("crosstalk", 0.0)),
            note=d.get("note", ""),
        )


def storage_channel(spec: MemorySpec, duration: float) -> tuple[NoiseChannel, NoiseChannel, NoiseChannel]:
    """Channels for holding a qubit ``duration`` seconds in ``spec``.

    Returns ``(amplitude_damping, dephasing, erasure)``. Amplitude damping
    contributes ``exp(-t/(2 t1))`` to the coherence and the dephasing the
    remainder, so coherences decay as ``exp(-t/t2)`` in total.
    """
    if duration < 0:
        raise ValueError(f"duration must be non-negative, got {duration}")
    if duration == 0:
        gamma, coherence = 0.0, 1.0
    else:
        gamma = -math.expm1(-duration / spec.t1)
        with np.errstate(invalid="ignore"):
            exponent = -duration / spec.t2 + duration / (2 * spec.t1)
        coherence = math.exp(exponent) if not math.isnan(exponent) else 0.0
    return (
        NoiseChannel.amplitude_damping(min(max(gamma, 0.0), 1.0)),
        NoiseChannel.dephasing(min(max(1.0 - coherence, 0.0), 1.0)),
        NoiseChannel.erasure(spec.eta_write * spec.eta_read),
    )


def decohere(state, spec: MemorySpec, duration: float) -> DensityMatrix:
    """Coherent part of storage (damping and dephasing, no erasure)."""
    damp, deph, _ = storage_channel(spec, duration)
    return apply_channels(state, (damp, deph))


@dataclass
class StorageSlot:
    mode_index: int
    written_at: float = 0.0
    payload: Any = None

    @property
    def occupied(self) -> bool:
        return self.payload is not None


class QuantumMemory:
    """Multimode memory with heralded writes and lossy reads.

    Mode indices address time slots (TDM) or frequency bins (FDM); the two
    differ only in naming. Not thread safe: one writer at a time.
    """

    def __init__(self, spec: MemorySpec):
        self.spec = spec
        self.now = 0.0
        self.slots = [StorageSlot(i) for i in range(spec.modes)]

    def _slot(self, mode_index: int) -> StorageSlot:
        if not 0 <= mode_index < self.spec.modes:
            raise MemoryAccessError(f"mode {mode_index} outside capacity {self.spec.modes}")
        return self.slots[mode_index]

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("time only moves forward")
        self.now += dt

    def write(self, mode_index: int, state, rng: np.random.Generator) -> bool:
        """Attempt to store ``state``; returns the herald flag."""
        slot = self._slot(mode_index)
        if slot.occupied:
            raise MemoryAccessError(f"mode {mode_index} already holds a state")
        herald = bool(rng.random() < self.spec.eta_write)
        if herald:
            slot.payload = state
            slot.written_at = self.now
        return herald

    def read(self, mode_index: int, rng: np.random.Generator):
        """Retrieve and free a stored state, or return ``ERASED`` on a failed read."""
        slot = self._slot(mode_index)
        if not slot.occupied:
            raise MemoryAccessError(f"mode {mode_index} holds no state")
        payload = slot.payload
        held = self.now - slot.written_at
        if isinstance(payload, (PureQubit, DensityMatrix)):
            payload = decohere(payload, self.spec, held)
            if self.spec.crosstalk > 0:
                payload = self._mix_neighbours(mode_index, payload)
        slot.payload = None
        if rng.random() < self.spec.eta_read:
            return payload
        return ERASED

    def _mix_neighbours(self, mode_index: int, rho: DensityMatrix) -> DensityMatrix:
        neigh = [
            as_density(self.slots[j].payload)
            for j in (mode_index - 1, mode_index + 1)
            if 0 <= j < self.spec.modes
            and isinstance(self.slots[j].payload, (PureQubit, DensityMatrix))
        ]
        if not neigh:
            return rho
        q = self.spec.crosstalk
        mixed = sum(n.entries for n in neigh) / len(neigh)
        return DensityMatrix((1 - q) * rho.entries + q * mixed)


def write_read_efficiency(issued: int, retrieved: int) -> float:
    if issued <= 0:
        raise ValueError("issued must be positive")
    if retrieved < 0 or retrieved > issued:
        raise ValueError(f"retrieved ({retrieved}) must lie in [0, issued={issued}]")
    return retrieved / issued


def purcell_factor(q: float, v: float, wavelength: float) -> float:
    """``F_P = 3/(4 pi^2) * Q/V * lambda^3`` (V and lambda in consistent units)."""
    if q <= 0 or v <= 0 or wavelength <= 0:
        raise ValueError("Q, V and wavelength must be positive")
    return 3.0 / (4.0 * math.pi**2) * q / v * wavelength**3


def cooperativity(f_p: float, gamma0: float, gamma: float) -> float:
    """Coherent cooperativity ``C = F_P * gamma0 / (2 gamma)``."""
    if gamma0 <= 0 or gamma <= 0:
        raise ValueError("rates must be positive")
    return f_p * gamma0 / (2.0 * gamma)


def load_presets(path: Optional[str | Path] = None) -> dict[str, MemorySpec]:
    """Load the memory catalog (the bundled one when ``path`` is None)."""
    if path is None:
        text = resources.files("qtoken.data").joinpath("memory_presets.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    entries = doc["presets"] if isinstance(doc, dict) else doc
    return {e["label"]: MemorySpec.from_dict(e) for e in entries}


def dump_presets(presets: dict[str, MemorySpec]) -> str:
    return json.dumps({"presets": [s.to_dict() for s in presets.values()]}, indent=2)
