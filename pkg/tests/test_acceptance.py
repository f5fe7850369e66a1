"""Acceptance criteria, one test per criterion at the stated tolerances."""

import json
import math
import time
from fractions import Fraction

import numpy as np

from conftest import random_density, record_criterion
from qtoken import dv, ensemble
from qtoken.cv import CVCodebook, SpinMemoryParams, spin_memory_channel, squeezing_level, verify_no_cloning
from qtoken.fock import gaussian_to_fock
from qtoken.gaussian import GaussianState, displace, fidelity_gaussian, squeeze, squeezing_level_db
from qtoken.harness import find_secret_keys, records_to_jsonl, run_protocol
from qtoken.memory import NV_FLIP_READOUT, MemorySpec, decohere, dump_presets, load_presets
from qtoken.puf import AuthPolicy, FixedStateImpersonator, SimulatedQPUF, authenticate, enroll
from qtoken.rng import derive_rng
from qtoken.states import DensityMatrix, PureQubit, fidelity_dm, haar_state, haar_unitary, overlap_pure

from test_dv import enumerate_measure_resend


def check(number, ok, detail):
    record_criterion(number, bool(ok), detail)
    assert ok, detail


def test_criterion_01_no_cloning_threshold():
    t0 = time.perf_counter()
    book = CVCodebook(((0.0, 0.0),))
    verdicts = (verify_no_cloning(0.67, book), verify_no_cloning(0.66, book), verify_no_cloning(2 / 3, book))
    dt = time.perf_counter() - t0
    check(1, verdicts == ("authentic", "suspect", "suspect") and dt < 1.0,
          f"f=0.67/0.66/(2/3) -> {'/'.join(verdicts)} in {dt:.3f} s")


def test_criterion_02_spin_memory_identity_and_degradation():
    t0 = time.perf_counter()
    ident_err = 0.0
    rng = derive_rng(2, 0)
    for _ in range(20):
        g = displace(squeeze(GaussianState.thermal(rng.uniform(0, 1)), rng.uniform(0, 1.5), rng.uniform(0, math.pi)), *rng.normal(size=2))
        out = spin_memory_channel(g, SpinMemoryParams(1.0, 0.0, 0.0))
        ident_err = max(ident_err, float(np.max(np.abs(out.cov - g.cov))), float(np.max(np.abs(out.mean - g.mean))))
    worst_gap = math.inf
    points = 0
    for r_sq in np.linspace(0.05, 1.5, 10):
        for t in np.linspace(0.05, 0.95, 10):
            g = squeeze(GaussianState.vacuum(), r_sq)
            out = spin_memory_channel(g, SpinMemoryParams.from_coupling(t))
            worst_gap = min(worst_gap, squeezing_level(g) - squeezing_level(out))
            points += 1
    dt = time.perf_counter() - t0
    ok = ident_err <= 1e-12 and worst_gap > 0 and points == 100 and dt < 1.0
    check(2, ok, f"identity max error {ident_err:.1e}; min S_in - S_out over {points} points = {worst_gap:.4g} dB; {dt:.3f} s")


def test_criterion_03_squeezing_level():
    s0, s1 = squeezing_level_db(0.25), squeezing_level_db(0.125)
    ok = s0 == 0.0 and abs(s1 - 3.0103) <= 1e-4
    check(3, ok, f"S(0.25) = {s0!r} dB, S(0.125) = {s1:.6f} dB")


def test_criterion_04_ensemble_coin_targets():
    t0 = time.perf_counter()
    design = ensemble.design_coin(1e-22, 1e-3, NV_FLIP_READOUT, attack="three-axis", n_samples=1_000_000, seed=2024)
    c, p = design.certificate, design.policy
    fr_mc = ensemble.simulate_false_reject(p, NV_FLIP_READOUT, 1_000_000, derive_rng(2024, 7))
    fr = c["false_reject"]
    se = math.sqrt(fr * (1 - fr) / 1_000_000)
    dt = time.perf_counter() - t0
    ok = (
        c["log10_false_accept"] < -22
        and c["false_reject"] < 1e-3
        and c["forged_samples"] == 1_000_000
        and c["attack"] == "three-axis"
        and abs(fr_mc - fr) <= 3 * se
        and dt <= 600
    )
    check(4, ok, (f"N={p.N} M={p.M} tau={p.tau:.3g} T={p.T}: false_accept 10^{c['log10_false_accept']:.2f} "
                  f"(CP bound p_f={c['p_forged_upper']:.4g}), false_reject {fr:.3e} analytic vs {fr_mc:.3e} "
                  f"Monte Carlo ({abs(fr_mc - fr) / se:.2f} SE); {dt:.0f} s"))


def test_criterion_05_wiesner_counterfeiting():
    t0 = time.perf_counter()
    rng = derive_rng(5, 0)
    n, tokens = 1000, 100
    passed = 0
    for _ in range(tokens):
        secret, token = dv.issue_dv(n, rng)
        forged = dv.adversary_measure_resend(token, "random", rng)
        passed += dv.verify_dv(forged, secret, rng=rng).matches
    trials = n * tokens
    rate = passed / trials
    se = math.sqrt(0.75 * 0.25 / trials)
    exact = enumerate_measure_resend("ZX")
    whole = dv.counterfeit_pass_probability(32, 0.75)
    rel = abs(whole - 0.75**32) / 0.75**32
    dt = time.perf_counter() - t0
    ok = abs(rate - 0.75) <= 4 * se and exact == Fraction(3, 4) and rel <= 1e-8 and dt < 30
    check(5, ok, f"per-qubit {rate:.5f} ({abs(rate - 0.75) / se:.2f} SE, {trials} trials); enumeration {exact}; "
                 f"(3/4)^32 rel. error {rel:.1e}; {dt:.1f} s")


def test_criterion_06_fidelity_oracles():
    t0 = time.perf_counter()
    rng = derive_rng(6, 0)
    gauss_err = 0.0
    for _ in range(100):
        a, b = (
            displace(squeeze(GaussianState.thermal(rng.uniform(0, 0.3)), rng.uniform(0, 0.4), rng.uniform(0, math.pi)), *rng.uniform(-0.6, 0.6, 2))
            for _ in range(2)
        )
        gauss_err = max(gauss_err, abs(fidelity_gaussian(a, b) - fidelity_dm(gaussian_to_fock(a, 40), gaussian_to_fock(b, 40))))
    sym = uni = pure = 0.0
    for i in range(1000):
        d = int(rng.integers(2, 6))
        rho, sigma = DensityMatrix(random_density(d, rng)), DensityMatrix(random_density(d, rng, rank=int(rng.integers(1, d + 1))))
        u = haar_unitary(d, rng)
        f = fidelity_dm(rho, sigma)
        sym = max(sym, abs(f - fidelity_dm(sigma, rho)))
        uni = max(uni, abs(f - fidelity_dm(u @ rho.entries @ u.conj().T, u @ sigma.entries @ u.conj().T)))
        qa = PureQubit.from_bloch(rng.normal(size=3))
        qb = PureQubit.from_bloch(rng.normal(size=3))
        pure = max(pure, abs(fidelity_dm(qa, qb) - overlap_pure(qa, qb)))
    dt = time.perf_counter() - t0
    ok = gauss_err <= 1e-6 and max(sym, uni, pure) <= 1e-9 and dt < 120
    check(6, ok, f"Gaussian vs Fock max error {gauss_err:.1e} (100 pairs); symmetry {sym:.1e}, unitary invariance "
                 f"{uni:.1e}, pure overlap {pure:.1e} (1000 cases); {dt:.1f} s")


def test_criterion_07_memory_decay_and_presets():
    rng = derive_rng(7, 0)
    worst = 0.0
    for _ in range(20):
        t2 = float(rng.uniform(1e-4, 10))
        t1 = float(rng.uniform(t2 / 2, 5 * t2))
        t = float(rng.uniform(0, 3 * t2))
        rho = decohere(PureQubit(math.pi / 2, float(rng.uniform(0, 2 * math.pi))), MemorySpec("m", t1, t2), t)
        worst = max(worst, abs(2 * abs(rho.entries[0, 1]) - math.exp(-t / t2)))
    presets = load_presets()
    quoted = {"Eu:YSO": 18 * 3600.0, "Si:P": 2.0, "SiV-electron": 273e-6, "SnV-13C": 17e-3}
    found = all(presets[k].t2 == v for k, v in quoted.items())
    text = dump_presets(presets)
    again = {d["label"]: MemorySpec.from_dict(d) for d in json.loads(text)["presets"]}
    exact = again == presets and dump_presets(again) == text
    ok = worst <= 1e-9 and found and exact
    check(7, ok, f"max |coherence - exp(-t/t2)| = {worst:.1e} over 20 combos; presets {sorted(quoted)} "
                 f"{'found' if found else 'MISSING'}; JSON round trip {'bit-exact' if exact else 'differs'}")


def test_criterion_08_projection_noise_scaling():
    t0 = time.perf_counter()
    rng = derive_rng(8, 0)
    sizes = [16, 64, 256, 1024]
    spread = []
    for N in sizes:
        secrets = ensemble.random_directions(10_000, rng)
        est = ensemble.attack_estimates(secrets, N, "three-axis", rng)
        err = ensemble.angle_errors(est, secrets)
        spread.append(math.sqrt(np.mean(err**2)))
    slope = float(np.polyfit(np.log(sizes), np.log(spread), 1)[0])
    dt = time.perf_counter() - t0
    ok = abs(slope + 0.5) <= 0.1 and dt < 300
    check(8, ok, f"RMS angle error {[round(s, 4) for s in spread]} rad; log-log slope {slope:.3f}; {dt:.1f} s")


def test_criterion_09_puf_baseline():
    rng = derive_rng(9, 0)
    details, ok = [], True
    for d in (2, 4, 8, 16):
        device = SimulatedQPUF(d, 100 + d)
        n = 10_000
        table = enroll(device, n, rng)
        fake = FixedStateImpersonator(haar_state(d, rng))
        res = authenticate(fake, table, AuthPolicy(n, 1), rng)
        mean = float(np.mean(res.transcript["outcomes"]))
        se = math.sqrt((1 / d) * (1 - 1 / d) / n)
        ok &= abs(mean - 1 / d) <= 4 * se
        details.append(f"d={d}: {mean:.4f} ({abs(mean - 1 / d) / se:.1f} SE)")
        genuine = enroll(device, 200, rng)
        g = authenticate(device, genuine, AuthPolicy(200, 200), rng)
        ok &= g.accept and g.passed == 200
    check(9, ok, "impersonator mean pass " + ", ".join(details) + "; genuine noiseless acceptance 1")


def test_criterion_10_determinism_and_hygiene():
    t0 = time.perf_counter()
    configs = [
        {"family": "dv", "family_params": {"n": 16}, "trials": 200, "master_seed": 10, "adversary": {"strategy": "breidbart"}},
        {"family": "ensemble", "family_params": {"N": 6, "M": 8, "tau": 0.8, "T": 6}, "trials": 100, "master_seed": 11,
         "adversary": {"strategy": "three-axis"}, "verification": "remote"},
        {"family": "cv", "family_params": {"codebook": {"symbols": [[0, 0], [1, 0]], "squeeze_r": 0.3}, "n_samples": 1000},
         "trials": 20, "master_seed": 12, "memory": {"hold_s": 0.0}},
        {"family": "puf", "family_params": {"dim": 4, "k": 4, "accept_min": 3}, "trials": 100, "master_seed": 13},
    ]
    identical, leaks = True, []
    for cfg in configs:
        one = records_to_jsonl(run_protocol(cfg, threads=1))
        eight = records_to_jsonl(run_protocol(cfg, threads=8))
        identical &= one == eight
        for line in one.splitlines():
            doc = json.loads(line)
            for msg in doc["transcript"]:
                if msg["recipient"] != "issuer":
                    leaks.extend(find_secret_keys(msg))
            leaks.extend(find_secret_keys(doc))
    dt = time.perf_counter() - t0
    ok = identical and not leaks and dt < 60
    check(10, ok, f"1 vs 8 threads {'byte-identical' if identical else 'DIFFER'} for 4 families; "
                  f"secret fields found: {len(leaks)}; {dt:.1f} s")
