"""Conjugate-coding tokens and the measure-resend counterfeiter.

Issues a batch of tokens, lets four adversaries copy them by measuring
and re-preparing, and compares the measured per-qubit pass rates with the
exact values. Then turns per-qubit rates into whole-token pass odds.

Run:
    python3 demos/01_wiesner_counterfeiting.py
"""

import math

from qtoken import dv
from qtoken.rng import derive_rng

N_QUBITS = 32
TOKENS = 500
EXACT = 0.75  # every strategy here matches 3/4 of the qubits

rng = derive_rng(1, 0)

print(f"{TOKENS} tokens of {N_QUBITS} qubits each\n")
print(f"{'strategy':<10} {'per-qubit':>10} {'exact':>7} {'SE':>7}")
for strategy in dv.STRATEGIES:
    matches = 0
    for _ in range(TOKENS):
        secret, token = dv.issue_dv(N_QUBITS, rng)
        forged = dv.adversary_measure_resend(token, strategy, rng)
        matches += dv.verify_dv(forged, secret, rng=rng).matches
    trials = TOKENS * N_QUBITS
    rate = matches / trials
    se = math.sqrt(0.75 * 0.25 / trials)
    print(f"{strategy:<10} {rate:>10.4f} {EXACT:>7.3f} {se:>7.4f}")

# An honest holder matches every qubit, so the strict policy always accepts.
secret, token = dv.issue_dv(N_QUBITS, rng)
print("\nhonest token accepted:", dv.verify_dv(token, secret, rng=rng).accept)

print("\nwhole-token forgery odds under a strict policy (all qubits must match):")
for n in (8, 16, 32, 64, 128):
    p = dv.counterfeit_pass_probability(n, 0.75)
    print(f"  n={n:<4} {p:.3e}")

# Allowing a few mismatches tolerates channel noise but helps the forger.
print("\nn=32 with a lenient threshold k:")
for k in (32, 30, 28, 26):
    print(f"  k={k:<3} forger passes with {dv.counterfeit_pass_probability(32, 0.75, k):.3e}")
