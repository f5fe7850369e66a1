"""Squeezed-light tokens stored in a spin-wave memory.

Each token is a displaced squeezed state drawn from a codebook. The memory
mixes it with a loss mode and a spin bath, which washes out squeezing. The
verifier reconstructs the state from heterodyne samples and compares the
fidelity with the no-cloning threshold.

Run:
    python3 demos/04_cv_spin_memory.py
"""

from qtoken.cv import CVCodebook, SpinMemoryParams, cv_roundtrip, no_cloning_threshold
from qtoken.gaussian import GaussianState, squeeze, squeezing_level_db
from qtoken.rng import derive_rng

print("squeezing of a few variances (dB below vacuum):")
for var in (0.25, 0.125, 0.0625):
    print(f"  var {var:<7} {squeezing_level_db(var):.4f} dB")

print("\nno-cloning threshold vs codebook spread:")
for v in (0.1, 1.0, 10.0, float("inf")):
    print(f"  codebook variance {v:<5} -> fidelity must exceed {no_cloning_threshold(v):.4f}")

# A vacuum squeezed by r = 0.35 carries about 3 dB.
s_in = squeeze(GaussianState.vacuum(), 0.35)
book = CVCodebook(((0.0, 0.0), (1.0, 0.0), (0.0, -1.2)), squeeze_r=0.35)
rng = derive_rng(4, 0)
print(f"\ninput state: {squeezing_level_db(s_in.cov[0, 0]):.2f} dB")
print(f"{'coupling t':>10} {'symbol':>6} {'S_out [dB]':>10} {'fidelity':>9}  verdict")
for t in (0.0, 0.3, 0.6, 0.9):
    params = SpinMemoryParams.from_coupling(t)
    for rec in cv_roundtrip(book, params, 200_000, rng):
        print(f"{t:>10.1f} {rec.symbol:>6} {rec.s_out:>10.3f} {rec.fidelity:>9.4f}  {rec.verdict}")
