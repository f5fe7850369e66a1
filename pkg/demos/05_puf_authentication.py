"""Challenge-response authentication against a simulated quantum PUF.

The device applies a fixed Haar-random unitary. The verifier enrolls a
table of challenge-response pairs, later replays some challenges and
projects the answers onto the recorded responses. An impersonator that
always returns the same state passes each challenge with probability 1/d,
or 1/d^2 when the challenge is half of an entangled pair.

Run:
    python3 demos/05_puf_authentication.py
"""

import math

from qtoken.channels import NoiseChannel
from qtoken.puf import (
    AuthPolicy,
    FixedStateImpersonator,
    SimulatedQPUF,
    authenticate,
    enroll,
    genuine_pass_probability,
    impersonator_pass_probability,
)
from qtoken.rng import derive_rng
from qtoken.states import haar_state
from qtoken.stats import log_binom_tail

rng = derive_rng(5, 0)
K = 20

print(f"{'d':>3} {'mode':<10} {'impersonator':>12} {'expected':>9}")
for d in (2, 4, 8):
    device = SimulatedQPUF(d, 500 + d)
    for mode in ("local", "entangled"):
        table = enroll(device, 2000, rng, mode)
        fake = FixedStateImpersonator(haar_state(d, rng))
        res = authenticate(fake, table, AuthPolicy(2000, 1), rng)
        print(f"{d:>3} {mode:<10} {res.passed / 2000:>12.4f} {impersonator_pass_probability(d, mode):>9.4f}")

# A noisy genuine device still passes almost every challenge; the session
# threshold sits between the two binomial distributions.
d = 4
noise = NoiseChannel("depolarizing", 0.05)
device = SimulatedQPUF(d, 77, noise=noise)
p_gen, p_imp = genuine_pass_probability(d, noise), impersonator_pass_probability(d)
accept_min = 15
fr = -math.expm1(log_binom_tail(K, p_gen, accept_min))
fa = math.exp(log_binom_tail(K, p_imp, accept_min))
print(f"\nd={d}, depolarizing 0.05, {K} challenges, accept at >= {accept_min} passes")
print(f"  genuine per-challenge pass {p_gen:.4f}, session false reject {fr:.2e}")
print(f"  impersonator per-challenge pass {p_imp:.4f}, session false accept {fa:.2e}")
table = enroll(device, K, rng)
print("  genuine session:", authenticate(device, table, AuthPolicy(K, accept_min), rng).accept)
