"""Multi-party protocol runs: issuer, holder, verifier and adversary.

A trial walks the protocol graph issue -> transmit -> [store] -> challenge ->
respond -> verdict. Quantum payloads move through a lossy, noisy simulated
channel and optionally a memory. Time is logical: latencies and hold times
are summed, nothing reads the wall clock.

The verifier sits on the issuer's side and reads the issuer's records
directly; only classical metadata travels in messages, and every message to
a non-issuer role is checked for secret fields before it is logged.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterable, Optional, Sequence

import jsonschema
import numpy as np

from . import cv, dv, ensemble, puf
from .channels import NoiseChannel, apply_channel
from .gaussian import GaussianState
from .memory import ERASED, MemorySpec, QuantumMemory, ReadoutModel, load_presets, storage_channel
from .rng import derive_rng
from .states import haar_state
from .stats import wilson_interval

ROLES = ("issuer", "holder", "verifier", "adversary")
PHASES = ("issue", "transmit", "store", "challenge", "respond", "verdict")
PROTOCOL_GRAPH = {
    None: {"issue"},
    "issue": {"transmit"},
    "transmit": {"store", "challenge"},
    "store": {"challenge"},
    "challenge": {"respond"},
    "respond": {"verdict"},
    "verdict": set(),
}
# field names that identify issuer-side secrets in classical payloads
SECRET_KEYS = frozenset(
    {"records", "secret", "angles", "hidden_unitary", "unitary", "device_seed", "symbol_index", "codebook", "response"}
)
DEFAULT_EXPIRY_FACTOR = 3.0
# sub-stream keys below the trial index
_STREAM_TRIAL = 0
_STREAM_DEVICE = 1

ADVERSARIES = {
    "dv": dv.STRATEGIES,
    "ensemble": ensemble.ATTACKS,
    "cv": ("heterodyne-resend",),
    "puf": ("impersonate",) + puf.EMULATION_STRATEGIES,
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``pointer`` is a JSON pointer."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"


class ProtocolError(RuntimeError):
    """A party left the protocol graph or a secret reached a message."""


# -- parties and messages -----------------------------------------------------


@dataclass
class Message:
    sender: str
    recipient: str
    kind: str
    time: float
    classical: dict = field(default_factory=dict)
    quantum: Any = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "sender": self.sender,
            "recipient": self.recipient,
            "kind": self.kind,
            "time": self.time,
            "classical": self.classical,
        }


def find_secret_keys(obj, path: str = "") -> list[str]:
    """JSON-pointer paths of every key in ``obj`` that names a secret."""
    hits = []
    if isinstance(obj, dict):
        for k, v in obj.items():
            p = f"{path}/{k}"
            if k in SECRET_KEYS:
                hits.append(p)
            hits.extend(find_secret_keys(v, p))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            hits.extend(find_secret_keys(v, f"{path}/{i}"))
    return hits


class Party:
    def __init__(self, role: str, session: "Session"):
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        self.role = role
        self.phase: Optional[str] = None
        self.owned: dict = {}
        self.session = session

    def enter(self, phase: str) -> None:
        if phase not in PROTOCOL_GRAPH[self.phase]:
            raise ProtocolError(f"{self.role}: illegal transition {self.phase} -> {phase}")
        self.phase = phase

    def send(self, recipient: str, kind: str, classical: Optional[dict] = None, quantum=None) -> Message:
        classical = classical or {}
        if recipient != "issuer":
            leaks = find_secret_keys(classical)
            if leaks:
                raise ProtocolError(f"{self.role} -> {recipient} message carries secret fields {leaks}")
        msg = Message(self.role, recipient, kind, self.session.clock, classical, quantum)
        self.session.transcript.append(msg)
        return msg


class Session:
    def __init__(self, roles: Iterable[str]):
        self.clock = 0.0
        self.transcript: list[Message] = []
        self.parties = {r: Party(r, self) for r in roles}

    def enter(self, phase: str, roles: Optional[Iterable[str]] = None) -> None:
        for r in roles or self.parties:
            if r == "adversary":
                continue
            self.parties[r].enter(phase)

    def tick(self, dt: float) -> None:
        self.clock += dt


@dataclass(frozen=True)
class SimChannel:
    loss: float = 0.0
    noise: NoiseChannel = field(default_factory=NoiseChannel.identity)
    latency: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError("loss must lie in [0, 1]")
        if self.latency < 0:
            raise ValueError("latency must be >= 0")

    def lost_mask(self, shape, rng: np.random.Generator) -> np.ndarray:
        """True where an element is lost."""
        if self.loss == 0.0:
            return np.zeros(shape, dtype=bool)
        return rng.random(shape) < self.loss

    def transmit_qubits(self, states: Sequence, rng: np.random.Generator) -> list:
        lost = self.lost_mask(len(states), rng)
        out = []
        for s, gone in zip(states, lost):
            if gone or s is None:
                out.append(None)
            else:
                out.append(s if self.noise.is_identity else apply_channel(s, self.noise))
        return out

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "SimChannel":
        d = d or {}
        noise = d.get("noise") or {"kind": "identity"}
        return cls(float(d.get("loss", 0.0)), NoiseChannel(noise["kind"], float(noise.get("parameter", 0.0))), float(d.get("latency_s", 0.0)))


# -- configuration ------------------------------------------------------------


def load_schema() -> dict:
    return json.loads(resources.files("qtoken.data").joinpath("config_schema.json").read_text())


@dataclass
class ExperimentConfig:
    family: str
    family_params: dict
    trials: int
    master_seed: int
    memory: Optional[dict] = None
    channel: dict = field(default_factory=dict)
    adversary: Optional[dict] = None
    verification: str = "local"
    expiry_factor: float = DEFAULT_EXPIRY_FACTOR

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        validate_config(d)
        cfg = cls(
            family=d["family"],
            family_params=copy.deepcopy(d["family_params"]),
            trials=int(d["trials"]),
            master_seed=int(d["master_seed"]),
            memory=copy.deepcopy(d.get("memory")),
            channel=copy.deepcopy(d.get("channel") or {}),
            adversary=copy.deepcopy(d.get("adversary")),
            verification=d.get("verification", "local"),
            expiry_factor=float(d.get("expiry_factor", DEFAULT_EXPIRY_FACTOR)),
        )
        cfg.resolve()
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = {
            "family": self.family,
            "family_params": self.family_params,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "memory": self.memory,
            "channel": self.channel,
            "adversary": self.adversary,
            "verification": self.verification,
            "expiry_factor": self.expiry_factor,
        }
        return copy.deepcopy(d)

    @property
    def mode(self) -> str:
        """``flying`` tokens skip storage; ``stored`` tokens sit in a memory."""
        return "flying" if self.memory is None else "stored"

    @property
    def hold(self) -> float:
        return 0.0 if self.memory is None else float(self.memory.get("hold_s", 0.0))

    def memory_spec(self) -> Optional[MemorySpec]:
        if self.memory is None:
            return None
        if "spec" in self.memory:
            return MemorySpec.from_dict(self.memory["spec"])
        if "preset" in self.memory:
            return load_presets()[self.memory["preset"]]
        return None

    def resolve(self) -> None:
        """Check references and cross-field constraints the schema cannot express."""
        try:
            spec = self.memory_spec()
        except KeyError as exc:
            raise ConfigError(f"unknown memory preset {exc}", "/memory/preset") from exc
        except ValueError as exc:
            raise ConfigError(str(exc), "/memory/spec") from exc
        p = self.family_params
        if self.family in ("dv", "ensemble") and self.memory is not None and spec is None:
            raise ConfigError("stored dv/ensemble tokens need a memory preset or spec", "/memory")
        if self.family == "dv" and spec is not None and spec.modes < p["n"]:
            raise ConfigError(f"memory capacity {spec.modes} < token length {p['n']}", "/memory")
        if self.family == "ensemble" and not 1 <= p["T"] <= p["M"]:
            raise ConfigError("T must lie in [1, M]", "/family_params/T")
        if self.family == "puf" and p["accept_min"] > p["k"]:
            raise ConfigError("accept_min must not exceed k", "/family_params/accept_min")
        if self.family in ("cv", "puf") and self.verification == "remote":
            raise ConfigError("remote verification exists for dv and ensemble only", "/verification")
        if self.family == "cv" and (self.channel.get("noise") or {}).get("kind", "identity") != "identity":
            raise ConfigError("qubit channel noise does not apply to cv tokens", "/channel/noise")
        if self.adversary is not None:
            s = self.adversary["strategy"]
            if s not in ADVERSARIES[self.family]:
                raise ConfigError(f"strategy {s!r} not one of {ADVERSARIES[self.family]}", "/adversary/strategy")
        try:
            SimChannel.from_dict(self.channel)
        except ValueError as exc:
            raise ConfigError(str(exc), "/channel") from exc
        try:
            if self.family == "cv":
                _cv_setup(self)
            if self.family == "ensemble":
                ensemble.CoinPolicy(p["N"], p["M"], p["tau"], p["T"])
                if "readout" in p:
                    ReadoutModel.from_dict(p["readout"])
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc), "/family_params") from exc


def validate_config(d: dict) -> None:
    """Schema check; the first error is reported with its JSON pointer."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(d), key=lambda e: (len(list(e.absolute_path)), list(map(str, e.absolute_path))))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        pointer = "/" + "/".join(str(p) for p in best.absolute_path)
        raise ConfigError(best.message, pointer)


def set_path(d: dict, path: str, value) -> dict:
    """Return a copy of ``d`` with the dotted ``path`` set to ``value``.

    Intermediate objects are created when missing; a path that runs through
    a non-object raises ConfigError.
    """
    out = copy.deepcopy(d)
    parts = path.split(".")
    if not path or any(not p for p in parts):
        raise ConfigError(f"bad parameter path {path!r}")
    node = out
    for i, key in enumerate(parts[:-1]):
        if node.get(key) is None:
            node[key] = {}
        node = node[key]
        if not isinstance(node, dict):
            raise ConfigError(f"path {path!r} runs through a non-object", "/" + "/".join(parts[: i + 1]))
    node[parts[-1]] = value
    return out


def get_path(d: dict, path: str):
    node = d
    for key in path.split("."):
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"bad parameter path {path!r}", "/" + path.replace(".", "/"))
        node = node[key]
    return node


def parse_override(text: str) -> tuple[str, Any]:
    """``key.path=value`` with the value parsed as JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


# -- results ------------------------------------------------------------------


@dataclass
class ResultRecord:
    trial: int
    family: str
    accept: bool
    verdict: str
    counts: dict
    timing: dict
    seed: dict
    mode: str
    verification: str
    adversary: Optional[str]
    expired: Optional[bool]
    transcript: list = field(default_factory=list)
    symbols: Optional[list] = None

    def to_dict(self) -> dict:
        d = {
            "trial": self.trial,
            "family": self.family,
            "accept": self.accept,
            "verdict": self.verdict,
            "counts": self.counts,
            "timing": self.timing,
            "seed": self.seed,
            "mode": self.mode,
            "verification": self.verification,
            "adversary": self.adversary,
            "expired": self.expired,
            "transcript": self.transcript,
        }
        if self.symbols is not None:
            d["symbols"] = self.symbols
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def verify_expiry(config: ExperimentConfig) -> dict:
    """Whether the configured hold exceeds ``expiry_factor * t2``."""
    spec = config.memory_spec()
    hold = config.hold
    if spec is None:
        return {"hold_s": hold, "t2_s": None, "expiry_s": None, "expired": None if config.memory else False}
    expiry = config.expiry_factor * spec.t2
    return {"hold_s": hold, "t2_s": spec.t2, "expiry_s": expiry, "expired": hold > expiry}


# -- family runners -----------------------------------------------------------


def _dv_trial(cfg: ExperimentConfig, ctx: dict, rng: np.random.Generator, s: Session) -> tuple[bool, dict]:
    p = cfg.family_params
    n = p["n"]
    policy = dv.DVVerificationPolicy(p.get("min_matches"), p.get("lenient", False), p.get("min_answered", 0))
    issuer, holder = s.parties["issuer"], s.parties["holder"]
    s.enter("issue")
    secret, token = dv.issue_dv(n, rng)
    issuer.owned["secret"] = secret
    states = list(token.states)
    s.enter("transmit")
    if cfg.adversary is not None:
        forged = dv.adversary_measure_resend(token, cfg.adversary["strategy"], rng)
        states = list(forged.states)
        s.parties["adversary"].send("holder", "forward", {"serial": token.serial, "n": n})
    else:
        issuer.send("holder", "token", {"serial": token.serial, "n": n})
    states = ctx["channel"].transmit_qubits(states, rng)
    s.tick(ctx["channel"].latency)
    herald_losses = read_losses = 0
    spec = ctx["memory"]
    if spec is not None:
        s.enter("store", ("holder",))
        mem = QuantumMemory(spec)
        heralds = [mem.write(i, st, rng) if st is not None else False for i, st in enumerate(states)]
        mem.advance(cfg.hold)
        s.tick(cfg.hold)
        out = []
        for i, (st, ok) in enumerate(zip(states, heralds)):
            if st is None:
                out.append(None)
            elif not ok:
                herald_losses += 1
                out.append(None)
            else:
                got = mem.read(i, rng)
                read_losses += got is ERASED
                out.append(got)
        states = out
    presented = dv.DVToken(token.serial, tuple(states))
    s.enter("challenge", ("issuer", "holder", "verifier"))
    if cfg.verification == "remote":
        verifier = s.parties["verifier"]
        bases = [b for b, _ in secret.records]
        verifier.send("holder", "challenge", {"serial": token.serial, "bases": bases})
        s.tick(ctx["channel"].latency)
        s.enter("respond", ("issuer", "holder", "verifier"))
        outcomes = []
        for st, basis in zip(states, bases):
            outcomes.append(None if st is None else dv.measure_in_basis(st, basis, rng)[0])
        holder.send("verifier", "response", {"serial": token.serial, "outcomes": outcomes})
        s.tick(ctx["channel"].latency)
        answered = sum(o is not None for o in outcomes)
        matches = sum(o is not None and o == bit for o, (_, bit) in zip(outcomes, secret.records))
        k = policy.threshold(n)
        if policy.lenient:
            accept = answered >= policy.min_answered and answered - matches <= n - k
        else:
            accept = matches >= k
    else:
        holder.send("verifier", "present", {"serial": token.serial, "n": n})
        s.enter("respond", ("issuer", "holder", "verifier"))
        result = dv.verify_dv(presented, secret, policy, rng)
        accept, matches, answered = result.accept, result.matches, result.answered
    s.enter("verdict")
    s.parties["verifier"].send("holder", "verdict", {"serial": token.serial, "accept": bool(accept)})
    return bool(accept), {
        "n": n,
        "matches": int(matches),
        "answered": int(answered),
        "channel_losses": int(sum(st is None for st in states) - herald_losses - read_losses),
        "herald_losses": herald_losses,
        "read_losses": read_losses,
    }


def _store_spins(coin: ensemble.EnsembleCoin, present: np.ndarray, spec: MemorySpec, hold: float, rng) -> tuple:
    damp, deph, erase = storage_channel(spec, hold)
    spins = coin.spins.reshape(-1, 3)
    out = spins
    for ch in (damp, deph):
        if not ch.is_identity:
            out = np.array([ensemble._channel_bloch(v, ch) for v in out])
    survive = rng.random(present.shape) < erase.parameter
    return ensemble.EnsembleCoin(out.reshape(coin.spins.shape)), present & survive


def _ensemble_trial(cfg: ExperimentConfig, ctx: dict, rng: np.random.Generator, s: Session) -> tuple[bool, dict]:
    p = cfg.family_params
    policy = ensemble.CoinPolicy(p["N"], p["M"], p["tau"], p["T"])
    readout = ctx["readout"]
    issuer, holder = s.parties["issuer"], s.parties["holder"]
    s.enter("issue")
    secret, coin = ensemble.issue_coin(policy, rng, p.get("angle_set"))
    issuer.owned["secret"] = secret
    s.enter("transmit")
    if cfg.adversary is not None:
        adv_readout = ReadoutModel.from_dict(cfg.adversary["readout"]) if "readout" in cfg.adversary else ReadoutModel.perfect()
        coin = ensemble.attack_estimate_reprepare(coin, cfg.adversary["strategy"], rng, adv_readout)
        s.parties["adversary"].send("holder", "forward", {"N": policy.N, "M": policy.M})
    else:
        issuer.send("holder", "coin", {"N": policy.N, "M": policy.M})
    channel = ctx["channel"]
    present = ~channel.lost_mask((policy.M, policy.N), rng)
    if not channel.noise.is_identity:
        coin = ensemble.apply_spin_noise(coin, channel.noise)
    s.tick(channel.latency)
    if ctx["memory"] is not None:
        s.enter("store", ("holder",))
        coin, present = _store_spins(coin, present, ctx["memory"], cfg.hold, rng)
        s.tick(cfg.hold)
    s.enter("challenge", ("issuer", "holder", "verifier"))
    if cfg.verification == "remote":
        axes = [[q.theta, q.phi] for q in secret.axes]
        s.parties["verifier"].send("holder", "challenge", {"axes": axes})
        s.tick(channel.latency)
        s.enter("respond", ("issuer", "holder", "verifier"))
        counts = []
        for i, axis in enumerate(secret.axes):
            reported, _, _ = ensemble.measure_spins(coin.spins[i], axis, readout, rng)
            counts.append(int((reported * present[i]).sum()))
        holder.send("verifier", "response", {"counts": counts})
        s.tick(channel.latency)
        counts = np.array(counts)
    else:
        holder.send("verifier", "present", {"N": policy.N, "M": policy.M})
        s.enter("respond", ("issuer", "holder", "verifier"))
        counts = ensemble.verify_coin(coin, secret, policy, readout, rng, present).counts
    passing = int(np.sum(counts >= policy.min_count))
    accept = passing >= policy.T
    s.enter("verdict")
    s.parties["verifier"].send("holder", "verdict", {"accept": bool(accept)})
    return accept, {"passing_tokens": passing, "token_counts": [int(c) for c in counts], "spins_lost": int((~present).sum())}


def _cv_setup(cfg: ExperimentConfig) -> tuple[cv.CVCodebook, cv.SpinMemoryParams]:
    p = cfg.family_params
    book = cv.CVCodebook.from_dict(p["codebook"])
    params = cv.SpinMemoryParams.from_dict(p["spin_memory"]) if "spin_memory" in p else cv.SpinMemoryParams.identity()
    return book, params


def _cv_trial(cfg: ExperimentConfig, ctx: dict, rng: np.random.Generator, s: Session) -> tuple[bool, dict, list]:
    p = cfg.family_params
    book, params = ctx["cv"]
    n_samples = int(p.get("n_samples", 10_000))
    noise_sq = float(p.get("added_noise_sq", 0.25))
    beta = float(p.get("beta", cv.DEFAULT_BETA))
    thr = cv.no_cloning_threshold(book.codebook_variance, beta)
    issuer, holder = s.parties["issuer"], s.parties["holder"]
    s.enter("issue")
    issued = [cv.generate_cv_token(book, j) for j in range(len(book.symbols))]
    issuer.owned["issued"] = issued
    s.enter("transmit")
    states: list[Optional[GaussianState]] = list(issued)
    if cfg.adversary is not None:
        forged = []
        for g in states:
            x, q = cv.heterodyne_sample(g, 1, 0.25, rng)[0]
            forged.append(GaussianState.coherent(x, q))
        states = forged
        s.parties["adversary"].send("holder", "forward", {"slots": len(states)})
    else:
        issuer.send("holder", "tokens", {"slots": len(states)})
    lost = ctx["channel"].lost_mask(len(states), rng)
    states = [None if gone else g for g, gone in zip(states, lost)]
    s.tick(ctx["channel"].latency)
    if cfg.memory is not None:
        s.enter("store", ("holder",))
        states = [None if g is None else cv.spin_memory_channel(g, params) for g in states]
        s.tick(cfg.hold)
    s.enter("challenge", ("issuer", "holder", "verifier"))
    holder.send("verifier", "present", {"slots": len(states)})
    s.enter("respond", ("issuer", "holder", "verifier"))
    slots = []
    for j, (g, ref) in enumerate(zip(states, issued)):
        if g is None:
            slots.append({"slot": j, "received": False, "fidelity": None, "verdict": "suspect",
                          "s_in": cv.squeezing_level(ref), "s_out": None, "s_out_measured": None})
            continue
        est, mom = cv.reconstruct_gaussian(cv.heterodyne_sample(g, n_samples, noise_sq, rng), noise_sq)
        f = cv.fidelity_gaussian(est, ref)
        slots.append({
            "slot": j,
            "received": True,
            "fidelity": f,
            "verdict": "authentic" if f > thr else "suspect",
            "s_in": cv.squeezing_level(ref),
            "s_out": cv.squeezing_level(g),
            "s_out_measured": cv.squeezing_level(est),
            "excess_kurtosis": [float(k) for k in mom.excess_kurtosis],
        })
    accept = all(sl["verdict"] == "authentic" for sl in slots)
    s.enter("verdict")
    s.parties["verifier"].send("holder", "verdict", {"accept": accept})
    return accept, {"authentic": sum(sl["verdict"] == "authentic" for sl in slots), "slots": len(slots), "threshold": thr}, slots


def _puf_trial(cfg: ExperimentConfig, ctx: dict, rng: np.random.Generator, s: Session) -> tuple[bool, dict]:
    p = cfg.family_params
    device: puf.SimulatedQPUF = ctx["device"]
    mode = p.get("mode", "local")
    policy = puf.AuthPolicy(p["k"], p["accept_min"])
    s.enter("issue")
    table = puf.enroll(device, max(p.get("n_crp", p["k"]), p["k"]), rng, mode)
    s.parties["issuer"].owned["table"] = table
    s.enter("transmit")
    responder: puf.Device = device
    if cfg.adversary is not None:
        strategy = cfg.adversary["strategy"]
        if strategy == "impersonate":
            n = device.dim
            responder = puf.FixedStateImpersonator(haar_state(n, rng))
        else:
            m = int(cfg.adversary.get("observed", 0))
            seen = puf.enroll(device, m, rng, mode).entries if m else []
            responder = puf.EmulatingAdversary(seen, strategy, device.dim)
        s.parties["adversary"].send("verifier", "impersonate", {"dim": device.dim})
    s.tick(ctx["channel"].latency)
    s.enter("challenge", ("issuer", "holder", "verifier"))
    s.parties["verifier"].send("holder", "challenges", {"count": policy.k, "mode": mode})
    s.enter("respond", ("issuer", "holder", "verifier"))
    lossy = _LossyResponder(responder, ctx["channel"].loss)
    result = puf.authenticate(lossy, table, policy, rng)
    s.parties["holder"].send("verifier", "responses", {"count": policy.k, "delivered": lossy.delivered})
    s.enter("verdict")
    s.parties["verifier"].send("holder", "verdict", {"accept": result.accept})
    return result.accept, {"passed": result.passed, "k": policy.k, "delivered": lossy.delivered}


class _LossyResponder:
    """Drops each response with the channel loss probability (a dropped answer fails)."""

    def __init__(self, inner, loss: float):
        self.inner, self.loss, self.dim, self.delivered = inner, loss, inner.dim, 0

    def respond(self, challenge, rng, mode="local"):
        if self.loss and rng.random() < self.loss:
            return np.zeros_like(challenge)
        self.delivered += 1
        return self.inner.respond(challenge, rng, mode)


_RUNNERS = {"dv": _dv_trial, "ensemble": _ensemble_trial, "cv": _cv_trial, "puf": _puf_trial}


def _context(cfg: ExperimentConfig) -> dict:
    ctx = {"channel": SimChannel.from_dict(cfg.channel), "memory": cfg.memory_spec()}
    p = cfg.family_params
    if cfg.family == "ensemble":
        ctx["readout"] = ReadoutModel.from_dict(p["readout"]) if "readout" in p else ReadoutModel.perfect()
    if cfg.family == "cv":
        ctx["cv"] = _cv_setup(cfg)
    if cfg.family == "puf":
        seed = p.get("device_seed")
        if seed is None:
            seed = int(derive_rng(cfg.master_seed, _STREAM_DEVICE).integers(0, 2**63))
        noise = p.get("noise")
        ctx["device"] = puf.SimulatedQPUF(p["dim"], seed, None if noise is None else NoiseChannel(noise["kind"], float(noise.get("parameter", 0.0))))
    return ctx


def run_trial(cfg: ExperimentConfig, ctx: dict, index: int, expired: Optional[bool]) -> ResultRecord:
    rng = derive_rng(cfg.master_seed, _STREAM_TRIAL, index)
    roles = ("issuer", "holder", "verifier") + (("adversary",) if cfg.adversary is not None else ())
    session = Session(roles)
    out = _RUNNERS[cfg.family](cfg, ctx, rng, session)
    accept, counts = out[0], out[1]
    symbols = out[2] if len(out) > 2 else None
    for role, party in session.parties.items():
        if role != "adversary" and party.phase != "verdict":
            raise ProtocolError(f"{role} finished in phase {party.phase}")
    transcript = [m.to_dict() for m in session.transcript if m.sender != "issuer" or m.recipient != "issuer"]
    return ResultRecord(
        trial=index,
        family=cfg.family,
        accept=bool(accept),
        verdict="accept" if accept else "reject",
        counts=counts,
        timing={"issued": 0.0, "verdict": session.clock, "hold": cfg.hold},
        seed={"master_seed": cfg.master_seed, "trial_index": index},
        mode=cfg.mode,
        verification=cfg.verification,
        adversary=None if cfg.adversary is None else cfg.adversary["strategy"],
        expired=expired,
        transcript=transcript,
        symbols=symbols,
    )


def default_threads() -> int:
    env = os.environ.get("QTOKEN_THREADS")
    return max(1, int(env)) if env else 1


def run_protocol(config: ExperimentConfig | dict, threads: Optional[int] = None) -> list[ResultRecord]:
    """Run every trial; records come back in trial order whatever ``threads`` is.

    Raises:
        ConfigError: invalid or unresolvable configuration.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    ctx = _context(cfg)
    expired = verify_expiry(cfg)["expired"]
    threads = threads or default_threads()
    if threads <= 1:
        return [run_trial(cfg, ctx, i, expired) for i in range(cfg.trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: run_trial(cfg, ctx, i, expired), range(cfg.trials)))


def records_to_jsonl(records: Iterable[ResultRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary sibling file and rename into place."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass
class SweepRow:
    value: Any
    trials: int
    accepted: int
    rate: float
    ci_low: float
    ci_high: float
    expired: Optional[bool]


def sweep(config: ExperimentConfig | dict, path: str, values: Sequence, threads: Optional[int] = None) -> list[SweepRow]:
    """One run per value of the dotted ``path``; acceptance with Wilson 95% CI."""
    base = config.to_dict() if isinstance(config, ExperimentConfig) else copy.deepcopy(config)
    rows = []
    for v in values:
        cfg = ExperimentConfig.from_dict(set_path(base, path, v))
        recs = run_protocol(cfg, threads)
        acc = sum(r.accept for r in recs)
        lo, hi = wilson_interval(acc, len(recs))
        rows.append(SweepRow(v, len(recs), acc, acc / len(recs), lo, hi, verify_expiry(cfg)["expired"]))
    return rows


def sweep_to_csv(rows: Sequence[SweepRow], param: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([param, "trials", "accepted", "accept_rate", "ci_low", "ci_high", "expired"])
    for r in rows:
        w.writerow([r.value, r.trials, r.accepted, f"{r.rate:.6g}", f"{r.ci_low:.6g}", f"{r.ci_high:.6g}", r.expired])
    return buf.getvalue()


# -- reporting ----------------------------------------------------------------


@dataclass
class Report:
    groups: list[dict]
    cv_rows: list[dict]
    corrupt_lines: int
    total: int


def read_results(text: str) -> tuple[list[dict], int]:
    """Parse JSONL; returns (records, number of corrupt lines skipped)."""
    recs, bad = [], 0
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict) or "accept" not in obj:
                raise ValueError
            recs.append(obj)
        except ValueError:
            bad += 1
    return recs, bad


def summarize(records: Sequence[dict], corrupt: int = 0) -> Report:
    """Acceptance per (family, mode, verification, adversary) with Wilson CIs."""
    groups: dict[tuple, list] = {}
    cv_rows = []
    for r in records:
        key = (r.get("family"), r.get("mode"), r.get("verification"), r.get("adversary"), r.get("expired"))
        groups.setdefault(key, []).append(bool(r["accept"]))
        for sl in r.get("symbols") or []:
            cv_rows.append({"trial": r.get("trial"), **{k: sl.get(k) for k in ("slot", "fidelity", "verdict", "s_in", "s_out", "s_out_measured")}})
    out = []
    for key in sorted(groups, key=lambda k: tuple("" if v is None else str(v) for v in k)):
        acc = groups[key]
        lo, hi = wilson_interval(sum(acc), len(acc))
        fam, mode, ver, adv, exp = key
        out.append({"family": fam, "mode": mode, "verification": ver, "adversary": adv, "expired": exp,
                    "trials": len(acc), "accepted": sum(acc), "accept_rate": sum(acc) / len(acc),
                    "ci_low": lo, "ci_high": hi})
    return Report(out, cv_rows, corrupt, len(records))


def format_report(rep: Report) -> str:
    lines = [f"{rep.total} records, {rep.corrupt_lines} corrupt lines skipped"]
    for g in rep.groups:
        lines.append(
            f"{g['family']:<9}{g['mode']:<8}{g['verification']:<7}adversary={g['adversary'] or '-':<18}"
            f"trials={g['trials']:<8}accept={g['accept_rate']:.6f}  95% CI [{g['ci_low']:.6f}, {g['ci_high']:.6f}]"
            + ("  EXPIRED" if g["expired"] else "")
        )
    if rep.cv_rows:
        lines.append("cv squeezing (dB): slot  S_in  S_out  S_out_measured  fidelity  verdict")
        for r in rep.cv_rows[:50]:
            fmt = lambda v: "-" if v is None else f"{v:.4f}"  # noqa: E731
            lines.append(f"  {r['slot']:>4}  {fmt(r['s_in'])}  {fmt(r['s_out'])}  {fmt(r['s_out_measured'])}  {fmt(r['fidelity'])}  {r['verdict']}")
    return "\n".join(lines)


def report_csv(rep: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "mode", "verification", "adversary", "expired", "trials", "accepted", "accept_rate", "ci_low", "ci_high"])
    for g in rep.groups:
        w.writerow([g[k] for k in ("family", "mode", "verification", "adversary", "expired", "trials", "accepted")]
                   + [f"{g[k]:.6g}" for k in ("accept_rate", "ci_low", "ci_high")])
    if rep.cv_rows:
        w.writerow([])
        w.writerow(["trial", "slot", "s_in", "s_out", "s_out_measured", "fidelity", "verdict"])
        for r in rep.cv_rows:
            w.writerow([r["trial"], r["slot"], r["s_in"], r["s_out"], r["s_out_measured"], r["fidelity"], r["verdict"]])
    return buf.getvalue()
