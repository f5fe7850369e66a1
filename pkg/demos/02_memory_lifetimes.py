"""How long a stored qubit token stays usable in each memory preset.

For every preset the script prints the exact acceptance probability of
a 16-qubit token held for a few fixed times and verified with a 90%
match threshold. A Monte Carlo roundtrip through the heralded memory
then checks one of the analytic numbers.

Run:
    python3 demos/02_memory_lifetimes.py
"""

import math

from qtoken import dv
from qtoken.memory import load_presets
from qtoken.rng import derive_rng

N = 16
K = math.ceil(0.9 * N)

presets = load_presets()
HOLDS = (1e-6, 1e-3, 1.0, 3600.0)
print(f"{'preset':<14} {'t1 [s]':>10} {'t2 [s]':>10}  acceptance after 1 us, 1 ms, 1 s, 1 h")
for label, spec in presets.items():
    acc = [dv.dv_acceptance_probability(N, dv.stored_match_probabilities(spec, h), K) for h in HOLDS]
    print(f"{label:<14} {spec.t1:>10.4g} {spec.t2:>10.4g}  " + "  ".join(f"{a:.4f}" for a in acc))

# X-basis qubits lose their phase; Z-basis qubits relax towards |0>.
spec = presets["Si:P"]
print(f"\nSi:P per-basis match after one t2: {dv.stored_match_probabilities(spec, spec.t2)}")

# Monte Carlo through a perfect-efficiency copy of the same memory.
ideal = spec.__class__.from_dict(dict(spec.to_dict(), eta_write=1.0, eta_read=1.0, modes=N))
rng = derive_rng(2, 0)
hold = ideal.t2 / 10
stats = dv.dv_roundtrip(N, ideal, hold, dv.DVVerificationPolicy(K), rng, trials=2000)
exact = dv.dv_acceptance_probability(N, dv.stored_match_probabilities(ideal, hold), K)
se = math.sqrt(exact * (1 - exact) / stats.trials)
print(f"\nroundtrip at t2/10: simulated {stats.accept_rate:.4f}, exact {exact:.4f} (SE {se:.4f})")
