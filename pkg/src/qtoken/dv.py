"""Wiesner-style conjugate-coding tokens.

Each token element is one of |0>, |1>, |+>, |-> chosen uniformly; the issuer
keeps the (basis, bit) record and a serial number. Time-bin states map onto
these as |E> -> |0>, |L> -> |1>, (|E> +/- |L>)/sqrt2 -> |+/->.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .memory import ERASED, MemorySpec, QuantumMemory, decohere
from .states import (
    KET0,
    KET1,
    KET_MINUS,
    KET_PLUS,
    DensityMatrix,
    PureQubit,
    QubitState,
    as_density,
    outcome_probability,
    post_measurement_state,
)
from .stats import binom_tail, log_binom_tail

BASES = ("Z", "X")
STRATEGIES = ("all-Z", "all-X", "random", "breidbart")

_EIGEN = {("Z", 0): KET0, ("Z", 1): KET1, ("X", 0): KET_PLUS, ("X", 1): KET_MINUS}
# Breidbart axis: halfway between +z and +x on the Bloch sphere
BREIDBART_AXIS = PureQubit(math.pi / 4, 0.0)


class SerialMismatch(ValueError):
    """The presented token does not carry the serial of the secret record."""


def eigenstate(basis: str, bit: int) -> PureQubit:
    return _EIGEN[(basis, int(bit))]


def new_serial(rng: np.random.Generator) -> str:
    """128-bit random serial as 32 hex digits."""
    hi, lo = rng.integers(0, 2**64, size=2, dtype=np.uint64)
    return f"{int(hi):016x}{int(lo):016x}"


@dataclass(frozen=True)
class DVTokenSecret:
    serial: str
    records: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if len(self.records) < 1:
            raise ValueError("a token needs at least one qubit")
        for basis, bit in self.records:
            if basis not in BASES or bit not in (0, 1):
                raise ValueError(f"bad record {(basis, bit)}")

    @property
    def n(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {"serial": self.serial, "records": [[b, int(v)] for b, v in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "DVTokenSecret":
        return cls(d["serial"], tuple((b, int(v)) for b, v in d["records"]))


@dataclass(frozen=True)
class DVToken:
    """Holder-side token; ``None`` entries are erased (lost) qubits."""

    serial: str
    states: tuple[Optional[QubitState], ...]

    @property
    def n(self) -> int:
        return len(self.states)

    def to_dict(self) -> dict:
        return {"serial": self.serial, "states": [state_to_json(s) for s in self.states]}

    @classmethod
    def from_dict(cls, d: dict) -> "DVToken":
        return cls(d["serial"], tuple(state_from_json(s) for s in d["states"]))


def state_to_json(state: Optional[QubitState]):
    if state is None:
        return None
    if isinstance(state, PureQubit):
        return {"theta": state.theta, "phi": state.phi}
    return {"bloch": [float(c) for c in as_density(state).bloch]}


def state_from_json(obj) -> Optional[QubitState]:
    if obj is None:
        return None
    if "theta" in obj:
        return PureQubit(float(obj["theta"]), float(obj["phi"]))
    return DensityMatrix.from_bloch(obj["bloch"])


@dataclass(frozen=True)
class DVVerificationPolicy:
    """Acceptance rule for a token of length n.

    Accept iff at least ``min_matches`` qubits match. With ``lenient`` set,
    erased qubits are skipped instead of counted as mismatches; the token is
    then accepted iff at least ``min_answered`` qubits were measured and the
    number of wrong answers does not exceed ``n - min_matches``.
    """

    min_matches: Optional[int] = None
    lenient: bool = False
    min_answered: int = 0

    def threshold(self, n: int) -> int:
        k = n if self.min_matches is None else int(self.min_matches)
        if not 0 <= k <= n:
            raise ValueError(f"min_matches must lie in [0, {n}], got {k}")
        return k


@dataclass
class DVVerification:
    accept: bool
    matches: int
    answered: int
    post_token: DVToken
    per_qubit: list = field(default_factory=list)


def issue_dv(n: int, rng: np.random.Generator) -> tuple[DVTokenSecret, DVToken]:
    """Draw ``n`` uniformly random conjugate-coding states and a fresh serial."""
    if n < 1:
        raise ValueError("n must be at least 1")
    serial = new_serial(rng)
    bases = rng.integers(0, 2, size=n)
    bits = rng.integers(0, 2, size=n)
    records = tuple((BASES[b], int(v)) for b, v in zip(bases, bits))
    states = tuple(eigenstate(b, v) for b, v in records)
    return DVTokenSecret(serial, records), DVToken(serial, states)


def measure_in_basis(state: QubitState, basis: str, rng: np.random.Generator) -> tuple[int, PureQubit]:
    """Measure in Z or X; returns (bit, post-measurement eigenstate)."""
    axis = eigenstate(basis, 0)
    aligned = rng.random() < outcome_probability(state, axis)
    bit = 0 if aligned else 1
    return bit, eigenstate(basis, bit)


def verify_dv(
    token: DVToken,
    secret: DVTokenSecret,
    policy: DVVerificationPolicy = DVVerificationPolicy(),
    rng: Optional[np.random.Generator] = None,
) -> DVVerification:
    """Measure every qubit in its recorded basis and count matches.

    Raises:
        SerialMismatch: the token's serial differs from the record's.
    """
    if token.serial != secret.serial:
        raise SerialMismatch(f"token serial {token.serial} does not match record {secret.serial}")
    if token.n != secret.n:
        raise ValueError("token length differs from record length")
    rng = rng if rng is not None else np.random.default_rng()
    k = policy.threshold(secret.n)
    matches = answered = 0
    post: list[Optional[QubitState]] = []
    per_qubit = []
    for state, (basis, bit) in zip(token.states, secret.records):
        if state is None:
            post.append(None)
            per_qubit.append(None)
            continue
        outcome, after = measure_in_basis(state, basis, rng)
        answered += 1
        ok = outcome == bit
        matches += ok
        per_qubit.append(ok)
        post.append(after)
    if policy.lenient:
        accept = answered >= policy.min_answered and (answered - matches) <= secret.n - k
    else:
        accept = matches >= k
    return DVVerification(bool(accept), matches, answered, DVToken(token.serial, tuple(post)), per_qubit)


def adversary_measure_resend(
    token: DVToken, basis_strategy: str, rng: np.random.Generator, return_guesses: bool = False
):
    """Intercept-resend: measure each qubit, re-prepare the observed eigenstate.

    Strategies: ``all-Z``, ``all-X``, ``random`` (Z or X per qubit) and
    ``breidbart`` (fixed axis halfway between Z and X; outcome along the axis
    is guessed as bit 0).
    """
    if basis_strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {basis_strategy!r}")
    forged: list[Optional[QubitState]] = []
    guesses: list[Optional[int]] = []
    for state in token.states:
        if state is None:
            forged.append(None)
            guesses.append(None)
            continue
        if basis_strategy == "breidbart":
            outcome = int(rng.random() < outcome_probability(state, BREIDBART_AXIS))
            forged.append(post_measurement_state(BREIDBART_AXIS, outcome))
            guesses.append(0 if outcome else 1)
            continue
        if basis_strategy == "random":
            basis = BASES[int(rng.integers(0, 2))]
        else:
            basis = basis_strategy[-1]
        bit, after = measure_in_basis(state, basis, rng)
        forged.append(after)
        guesses.append(bit)
    out = DVToken(token.serial, tuple(forged))
    return (out, guesses) if return_guesses else out


def counterfeit_pass_probability(n: int, per_qubit_p: float, k: Optional[int] = None) -> float:
    """P(at least k of n independent qubits pass); k defaults to n (= p**n)."""
    k = n if k is None else k
    return binom_tail(n, per_qubit_p, k)


def log_counterfeit_pass_probability(n: int, per_qubit_p: float, k: Optional[int] = None) -> float:
    return log_binom_tail(n, per_qubit_p, n if k is None else k)


@dataclass
class RoundtripStats:
    trials: int
    accepted: int
    herald_losses: int
    read_losses: int
    issued_qubits: int
    match_histogram: dict[int, int]

    @property
    def accept_rate(self) -> float:
        return self.accepted / self.trials

    @property
    def retrieved_fraction(self) -> float:
        lost = self.herald_losses + self.read_losses
        return (self.issued_qubits - lost) / self.issued_qubits


def dv_roundtrip(
    n: int,
    memory: MemorySpec,
    hold: float,
    policy: DVVerificationPolicy = DVVerificationPolicy(),
    rng: Optional[np.random.Generator] = None,
    trials: int = 1,
) -> RoundtripStats:
    """Issue, write (heralded), hold, read, verify; repeated ``trials`` times.

    Raises:
        ValueError: the memory has fewer modes than qubits.
    """
    if memory.modes < n:
        raise ValueError(f"memory capacity {memory.modes} < token length {n}")
    rng = rng if rng is not None else np.random.default_rng()
    accepted = herald_losses = read_losses = 0
    hist: Counter = Counter()
    for _ in range(trials):
        secret, token = issue_dv(n, rng)
        mem = QuantumMemory(memory)
        heralds = [mem.write(i, s, rng) for i, s in enumerate(token.states)]
        mem.advance(hold)
        retrieved: list[Optional[QubitState]] = []
        for i, ok in enumerate(heralds):
            if not ok:
                herald_losses += 1
                retrieved.append(None)
                continue
            out = mem.read(i, rng)
            if out is ERASED:
                read_losses += 1
            retrieved.append(out)
        result = verify_dv(DVToken(token.serial, tuple(retrieved)), secret, policy, rng)
        accepted += result.accept
        hist[result.matches] += 1
    return RoundtripStats(trials, accepted, herald_losses, read_losses, n * trials, dict(sorted(hist.items())))


def match_probability(state: QubitState, basis: str, bit: int) -> float:
    """Exact probability that measuring ``state`` in ``basis`` yields ``bit``."""
    return outcome_probability(state, eigenstate(basis, bit))


def stored_match_probabilities(memory: MemorySpec, hold: float) -> dict[str, float]:
    """Per-basis match probability after storage (averaged over the two bits)."""
    out = {}
    for basis in BASES:
        ps = [match_probability(decohere(eigenstate(basis, b), memory, hold), basis, b) for b in (0, 1)]
        out[basis] = float(np.mean(ps))
    return out


def dv_acceptance_probability(
    n: int, per_basis_match: dict[str, float], k: Optional[int] = None
) -> float:
    """Exact acceptance probability for a random token with per-basis match rates.

    Each qubit is Z or X with probability 1/2, so the per-qubit match
    probability is the basis average and the count is binomial.
    """
    p = 0.5 * (per_basis_match["Z"] + per_basis_match["X"])
    return counterfeit_pass_probability(n, p, k)
