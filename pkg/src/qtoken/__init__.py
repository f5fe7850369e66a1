"""Simulation of quantum-token protocols and the memories that hold them.

Submodules:
    states, channels, gaussian, fock: quantum-state plumbing and fidelities.
    memory: phenomenological quantum memories and single-shot readout.
    dv: conjugate-coding (Wiesner) tokens.
    ensemble: spin-ensemble tokens and coins.
    cv: displaced squeezed tokens through a spin memory.
    puf: challenge-response authentication with a simulated quantum PUF.
    harness: multi-party protocol runs, sweeps and reports.
    cli: the ``qtoken`` command.
"""

from .channels import NoiseChannel, apply_channel
from .gaussian import GaussianState, displace, fidelity_gaussian, squeeze, squeezing_level_db
from .memory import MemorySpec, QuantumMemory, ReadoutModel, load_presets, storage_channel
from .rng import derive_rng, make_rng
from .states import DensityMatrix, PureQubit, fidelity_dm, measure_projective, overlap_pure

__all__ = [
    "DensityMatrix",
    "GaussianState",
    "MemorySpec",
    "NoiseChannel",
    "PureQubit",
    "QuantumMemory",
    "ReadoutModel",
    "apply_channel",
    "derive_rng",
    "displace",
    "fidelity_dm",
    "fidelity_gaussian",
    "load_presets",
    "make_rng",
    "measure_projective",
    "overlap_pure",
    "squeeze",
    "squeezing_level_db",
    "storage_channel",
]

__version__ = "0.1.0"
