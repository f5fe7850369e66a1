"""Challenge-response authentication with a simulated quantum PUF.

The device is a hidden Haar-random unitary. Enrollment records challenge
and response states classically; a session sends k unused challenges and
checks every answer with a projective test onto the recorded response, so a
challenge passes with probability equal to the fidelity.

In ``entangled`` mode the challenge is half of a maximally entangled pair
(rotated by a random local unitary on the verifier's half), the device acts
on the other half and the test is a joint projection in dimension d^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .channels import NoiseChannel
from .rng import derive_rng
from .states import DensityMatrix, haar_state, haar_unitary

MODES = ("local", "entangled")
EMULATION_STRATEGIES = ("nearest-observed", "mixture", "random")
MAX_DIM = 64
# key under which the device unitary is derived from its seed
_DEVICE_STREAM = 0x50F


def _fidelity_to_pure(state, target: np.ndarray) -> float:
    """<target| rho |target> for a vector or DensityMatrix ``state``."""
    if isinstance(state, DensityMatrix):
        return float(np.real(target.conj() @ state.entries @ target))
    return float(abs(np.vdot(target, state)) ** 2)


def maximally_entangled(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex).reshape(dim * dim) / math.sqrt(dim)


def _noise_on_second(rho: np.ndarray, noise: NoiseChannel, dim: int) -> np.ndarray:
    eye = np.eye(dim)
    out = np.zeros_like(rho)
    for k in noise.kraus(dim):
        big = np.kron(eye, k)
        out += big @ rho @ big.conj().T
    return out


class Device(Protocol):
    dim: int

    def respond(self, challenge: np.ndarray, rng: np.random.Generator, mode: str = "local"):
        ...


@dataclass(frozen=True, eq=False)
class SimulatedQPUF:
    """Hidden unitary drawn from ``device_seed``; the seed is never serialized."""

    dim: int
    device_seed: int = field(repr=False)
    noise: Optional[NoiseChannel] = None
    hidden_unitary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 2 <= self.dim <= MAX_DIM:
            raise ValueError(f"dim must lie in [2, {MAX_DIM}]")
        if self.noise is not None and self.noise.kind in ("amplitude_damping", "erasure"):
            raise ValueError("device noise must be depolarizing or dephasing")
        u = haar_unitary(self.dim, derive_rng(self.device_seed, _DEVICE_STREAM))
        u.setflags(write=False)
        object.__setattr__(self, "hidden_unitary", u)

    def ideal_response(self, challenge: np.ndarray, mode: str = "local") -> np.ndarray:
        if mode == "local":
            return self.hidden_unitary @ challenge
        return np.kron(np.eye(self.dim), self.hidden_unitary) @ challenge

    def respond(self, challenge: np.ndarray, rng: np.random.Generator, mode: str = "local"):
        """Apply the device; returns a vector, or a DensityMatrix when noisy."""
        out = self.ideal_response(challenge, mode)
        if self.noise is None or self.noise.is_identity:
            return out
        rho = np.outer(out, out.conj())
        if mode == "local":
            p, d = self.noise.parameter, self.dim
            if self.noise.kind == "depolarizing":
                rho = (1 - p) * rho + p * np.eye(d) / d
            else:
                rho = (1 - p) * rho + p * np.diag(np.diag(rho))
        else:
            rho = _noise_on_second(rho, self.noise, self.dim)
        return DensityMatrix(0.5 * (rho + rho.conj().T))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "noise": None if self.noise is None else [self.noise.kind, self.noise.parameter]}


@dataclass
class FixedStateImpersonator:
    """Answers every challenge with the same state, ignoring it."""

    state: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.state)

    def respond(self, challenge: np.ndarray, rng: np.random.Generator, mode: str = "local"):
        if mode == "local":
            return self.state
        d = self.dim
        # the verifier's half is untouched: rho_A tensor sigma
        psi = challenge.reshape(d, d)
        rho_a = psi @ psi.conj().T
        return DensityMatrix(np.kron(rho_a, np.outer(self.state, self.state.conj())))


@dataclass
class CRPEntry:
    challenge_id: str
    challenge: np.ndarray
    response: np.ndarray

    def to_dict(self) -> dict:
        return {
            "challenge_id": self.challenge_id,
            "challenge": _complex_to_json(self.challenge),
            "response": _complex_to_json(self.response),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CRPEntry":
        return cls(d["challenge_id"], _complex_from_json(d["challenge"]), _complex_from_json(d["response"]))


def _complex_to_json(v: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in v]


def _complex_from_json(v: list) -> np.ndarray:
    return np.array([complex(a, b) for a, b in v])


@dataclass
class CRPTable:
    dim: int
    entries: list[CRPEntry]
    mode: str = "local"
    retired: set = field(default_factory=set)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        ids = [e.challenge_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("challenge ids must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def available(self) -> list[CRPEntry]:
        return [e for e in self.entries if e.challenge_id not in self.retired]

    def subset(self, m: int, rng: np.random.Generator) -> "CRPTable":
        idx = rng.choice(len(self.entries), size=m, replace=False)
        return CRPTable(self.dim, [self.entries[i] for i in sorted(idx)], self.mode)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "mode": self.mode,
            "entries": [e.to_dict() for e in self.entries],
            "retired": sorted(self.retired),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CRPTable":
        return cls(int(d["dim"]), [CRPEntry.from_dict(e) for e in d["entries"]], d.get("mode", "local"), set(d.get("retired", [])))


@dataclass(frozen=True)
class AuthPolicy:
    k: int
    accept_min: int

    def __post_init__(self):
        if not 1 <= self.accept_min <= self.k:
            raise ValueError("need 1 <= accept_min <= k")


@dataclass
class AuthResult:
    accept: bool
    passed: int
    transcript: dict


def _challenge_id(rng: np.random.Generator) -> str:
    return f"{int(rng.integers(0, 2**63)):016x}"


def random_challenge(dim: int, mode: str, rng: np.random.Generator) -> np.ndarray:
    if mode == "local":
        return haar_state(dim, rng)
    return np.kron(haar_unitary(dim, rng), np.eye(dim)) @ maximally_entangled(dim)


def enroll(puf: SimulatedQPUF, n_crp: int, rng: np.random.Generator, mode: str = "local") -> CRPTable:
    """Record ``n_crp`` Haar challenges and the device's ideal responses."""
    if n_crp < 1:
        raise ValueError("n_crp must be at least 1")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    entries = []
    seen = set()
    while len(entries) < n_crp:
        cid = _challenge_id(rng)
        if cid in seen:
            continue
        seen.add(cid)
        c = random_challenge(puf.dim, mode, rng)
        entries.append(CRPEntry(cid, c, puf.ideal_response(c, mode)))
    return CRPTable(puf.dim, entries, mode)


def authenticate(device: Device, table: CRPTable, policy: AuthPolicy, rng: np.random.Generator) -> AuthResult:
    """Run one session and retire the challenges it used.

    Raises:
        ValueError: fewer than ``policy.k`` unused entries remain.
    """
    pool = table.available
    if policy.k > len(pool):
        raise ValueError(f"session needs {policy.k} challenges, only {len(pool)} unused")
    chosen = [pool[i] for i in rng.choice(len(pool), size=policy.k, replace=False)]
    outcomes, probs = [], []
    for entry in chosen:
        answer = device.respond(entry.challenge, rng, table.mode)
        p = min(1.0, max(0.0, _fidelity_to_pure(answer, entry.response)))
        outcomes.append(bool(rng.random() < p))
        probs.append(p)
        table.retired.add(entry.challenge_id)
    passed = int(sum(outcomes))
    accept = passed >= policy.accept_min
    transcript = {
        "mode": table.mode,
        "dim": table.dim,
        "policy": {"k": policy.k, "accept_min": policy.accept_min},
        "challenge_ids": [e.challenge_id for e in chosen],
        "outcomes": outcomes,
        "pass_probabilities": probs,
        "passed": passed,
        "accept": accept,
    }
    return AuthResult(accept, passed, transcript)


def adversary_emulate(
    observed: Sequence[CRPEntry] | CRPTable,
    challenge: np.ndarray,
    strategy: str,
    rng: np.random.Generator,
    dim: Optional[int] = None,
):
    """Guess the response to ``challenge`` from previously observed pairs.

    Strategies:
        nearest-observed: response of the observed challenge with the largest
            overlap (a fresh Haar state when nothing was observed).
        mixture: overlap-weighted mixture of observed responses (maximally
            mixed when nothing was observed).
        random: a Haar-random state.
    """
    if strategy not in EMULATION_STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    entries = list(observed.entries if isinstance(observed, CRPTable) else observed)
    n = len(challenge)
    if strategy == "random" or (strategy == "nearest-observed" and not entries):
        return haar_state(n, rng)
    if not entries:
        return DensityMatrix.maximally_mixed(n)
    overlaps = np.array([abs(np.vdot(e.challenge, challenge)) ** 2 for e in entries])
    if strategy == "nearest-observed":
        return entries[int(np.argmax(overlaps))].response
    w = overlaps / overlaps.sum() if overlaps.sum() > 0 else np.full(len(entries), 1 / len(entries))
    rho = sum(wi * np.outer(e.response, e.response.conj()) for wi, e in zip(w, entries))
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def emulation_success(guess, true_response: np.ndarray) -> float:
    """Fidelity of the adversary's guess with the true response."""
    return _fidelity_to_pure(guess, true_response)


@dataclass
class EmulatingAdversary:
    """Device stand-in that answers from observed pairs via :func:`adversary_emulate`."""

    observed: list[CRPEntry]
    strategy: str
    dim: int

    def respond(self, challenge: np.ndarray, rng: np.random.Generator, mode: str = "local"):
        return adversary_emulate(self.observed, challenge, self.strategy, rng)


def genuine_pass_probability(dim: int, noise: Optional[NoiseChannel], mode: str = "local") -> float:
    """Per-challenge pass probability of the genuine device under depolarizing noise."""
    if noise is None or noise.is_identity:
        return 1.0
    if noise.kind != "depolarizing":
        raise ValueError("closed form available for depolarizing noise only")
    n = dim if mode == "local" else dim * dim
    return 1.0 - noise.parameter * (1.0 - 1.0 / n)


def impersonator_pass_probability(dim: int, mode: str = "local") -> float:
    """Haar-averaged pass probability of a fixed-state answer."""
    return 1.0 / dim if mode == "local" else 1.0 / dim**2
