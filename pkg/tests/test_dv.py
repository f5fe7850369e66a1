import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qtoken.dv import (
    DVToken,
    DVTokenSecret,
    DVVerificationPolicy,
    SerialMismatch,
    adversary_measure_resend,
    counterfeit_pass_probability,
    dv_acceptance_probability,
    dv_roundtrip,
    issue_dv,
    stored_match_probabilities,
    verify_dv,
)
from qtoken.memory import MemorySpec

# Exact rational bases for the enumeration oracle: |<a|b>|^2 between eigenstates.
_OVERLAP = {
    ("Z", "Z"): [[1, 0], [0, 1]],
    ("X", "X"): [[1, 0], [0, 1]],
    ("Z", "X"): [[Fraction(1, 2)] * 2] * 2,
    ("X", "Z"): [[Fraction(1, 2)] * 2] * 2,
}


def enumerate_measure_resend(adversary_bases):
    """Exact per-qubit pass probability for intercept-resend in the given bases."""
    total = Fraction(0)
    for basis, bit in itertools.product("ZX", (0, 1)):
        for adv in adversary_bases:
            for guess in (0, 1):
                p_guess = Fraction(_OVERLAP[(basis, adv)][bit][guess])
                p_pass = Fraction(_OVERLAP[(adv, basis)][guess][bit])
                total += Fraction(1, 4) * Fraction(1, len(adversary_bases)) * p_guess * p_pass
    return total


def test_enumeration_oracle_gives_three_quarters():
    assert enumerate_measure_resend("ZX") == Fraction(3, 4)
    assert enumerate_measure_resend("Z") == Fraction(3, 4)


def test_honest_token_always_accepted(rng):
    for n in (1, 8, 64):
        secret, token = issue_dv(n, rng)
        res = verify_dv(token, secret, rng=rng)
        assert res.accept and res.matches == n


def test_serial_mismatch_raises(rng):
    secret, token = issue_dv(4, rng)
    other, _ = issue_dv(4, rng)
    with pytest.raises(SerialMismatch):
        verify_dv(token, other, rng=rng)


def test_serials_are_128_bit_hex(rng):
    serials = {issue_dv(1, rng)[0].serial for _ in range(200)}
    assert len(serials) == 200
    assert all(len(s) == 32 and int(s, 16) >= 0 for s in serials)


@pytest.mark.parametrize("strategy", ["all-Z", "all-X", "random", "breidbart"])
def test_measure_resend_per_qubit_rate(strategy):
    rng = np.random.default_rng(7)
    n, reps = 50, 400
    passed = 0
    for _ in range(reps):
        secret, token = issue_dv(n, rng)
        forged = adversary_measure_resend(token, strategy, rng)
        passed += verify_dv(forged, secret, rng=rng).matches
    rate = passed / (n * reps)
    assert abs(rate - 0.75) < 4 * math.sqrt(0.75 * 0.25 / (n * reps))


def test_breidbart_guesses_more_often_right(rng):
    n, reps, right = 40, 500, 0
    for _ in range(reps):
        secret, token = issue_dv(n, rng)
        _, guesses = adversary_measure_resend(token, "breidbart", rng, return_guesses=True)
        right += sum(g == b for g, (_, b) in zip(guesses, secret.records))
    expected = math.cos(math.pi / 8) ** 2
    assert abs(right / (n * reps) - expected) < 4 * math.sqrt(expected * (1 - expected) / (n * reps))


def test_whole_token_pass_probability():
    assert counterfeit_pass_probability(32, 0.75) == pytest.approx(0.75**32, rel=1e-12)
    assert counterfeit_pass_probability(2, 0.5, 1) == pytest.approx(0.75)


def test_lenient_policy_skips_erased(rng):
    secret, token = issue_dv(6, rng)
    lost = DVToken(token.serial, (None,) + token.states[1:])
    assert not verify_dv(lost, secret, DVVerificationPolicy(), rng).accept
    pol = DVVerificationPolicy(min_matches=6, lenient=True, min_answered=5)
    assert verify_dv(lost, secret, pol, rng).accept
    pol = DVVerificationPolicy(min_matches=6, lenient=True, min_answered=6)
    assert not verify_dv(lost, secret, pol, rng).accept


def test_policy_threshold_validation():
    with pytest.raises(ValueError):
        DVVerificationPolicy(min_matches=9).threshold(8)


@given(st.integers(0, 2**32 - 1))
def test_token_json_round_trip(seed):
    secret, token = issue_dv(5, np.random.default_rng(seed))
    assert DVTokenSecret.from_dict(secret.to_dict()) == secret
    assert DVToken.from_dict(token.to_dict()) == token


def test_stored_match_probability_closed_form():
    # Z states relax toward |0>, X states lose coherence: match = (1 + e^{-t/t2})/2
    spec = MemorySpec("m", t1=2.0, t2=2.0)
    probs = stored_match_probabilities(spec, 2.0)
    assert probs["X"] == pytest.approx((1 + math.exp(-1)) / 2, abs=1e-12)
    assert probs["Z"] == pytest.approx(1 - (1 - math.exp(-1)) / 2, abs=1e-12)


def test_roundtrip_matches_exact_acceptance():
    spec = MemorySpec("m", t1=2.0, t2=2.0, modes=8)
    exact = dv_acceptance_probability(8, stored_match_probabilities(spec, 1.0))
    stats = dv_roundtrip(8, spec, 1.0, rng=np.random.default_rng(3), trials=3000)
    assert abs(stats.accept_rate - exact) < 4 * math.sqrt(exact * (1 - exact) / 3000)
    assert stats.retrieved_fraction == 1.0


def test_roundtrip_rejects_small_memory():
    with pytest.raises(ValueError):
        dv_roundtrip(8, MemorySpec("m", 1.0, 1.0, modes=4), 0.0)
