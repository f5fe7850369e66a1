import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qtoken.cv import (
    CVCodebook,
    ReconstructionError,
    SpinMemoryParams,
    cv_roundtrip,
    generate_cv_token,
    heterodyne_sample,
    no_cloning_threshold,
    reconstruct_gaussian,
    sample_moments,
    spin_memory_channel,
    squeezing_level,
    verify_no_cloning,
)
from qtoken.fock import gaussian_to_fock
from qtoken.gaussian import GaussianState, displace, fidelity_gaussian, squeeze, squeezing_level_db
from qtoken.states import fidelity_dm

R3DB = math.log(2) / 2  # e^{-2r} = 1/2

couplings = st.tuples(st.floats(0, 1), st.floats(0, 1)).filter(lambda lt: lt[0] ** 2 + lt[1] ** 2 <= 1)


def test_token_generation_examples():
    book = CVCodebook(((0.0, 0.0), (1.0, 0.0)), squeeze_r=R3DB)
    g = generate_cv_token(book, 1)
    assert np.allclose(g.mean, [1.0, 0.0])
    assert np.allclose(g.variances, (0.125, 0.5))
    assert generate_cv_token(CVCodebook(((0.0, 0.0),)), 0) == GaussianState.vacuum()
    with pytest.raises(IndexError):
        generate_cv_token(book, 2)


def test_codebook_validation_and_serialisation(rng):
    with pytest.raises(ValueError):
        CVCodebook(((0.0, 0.0),), squeeze_r=-1)
    with pytest.raises(ValueError):
        CVCodebook(((math.nan, 0.0),))
    book = CVCodebook.gaussian(5, 0.0, 0.2, 0.1, rng)
    assert len(set(book.symbols)) == 1
    for b in (book, CVCodebook(((1.0, 2.0),))):
        assert CVCodebook.from_dict(b.to_dict()) == b


def test_spin_memory_params_validation():
    with pytest.raises(ValueError):
        SpinMemoryParams(0.9, 0.9, 0.0)
    with pytest.raises(ValueError):
        SpinMemoryParams(1.0, 0.0, 0.0, sigma_l_sq=0.1)
    p = SpinMemoryParams.from_coupling(0.6)
    assert p.r == pytest.approx(0.8)
    assert SpinMemoryParams.from_dict(p.to_dict()) == p


def test_channel_worked_example():
    g = squeeze(GaussianState.vacuum(), R3DB)
    out = spin_memory_channel(g, SpinMemoryParams(0.8, 0.0, 0.6))
    assert out.variances[0] == pytest.approx(0.17, abs=1e-12)
    assert squeezing_level(g) == pytest.approx(3.0103, abs=1e-4)
    assert squeezing_level(out) == pytest.approx(-10 * math.log10(0.17 / 0.25), abs=1e-12)
    assert squeezing_level(out) == pytest.approx(1.675, abs=1e-3)


def test_identity_channel_is_exact():
    g = displace(squeeze(GaussianState.thermal(0.2), 0.7, 0.4), 0.3, -1.0)
    assert spin_memory_channel(g, SpinMemoryParams.identity()) is g


@given(st.floats(0.01, 1.5), st.floats(0, math.pi), couplings)
def test_channel_output_physical_and_less_squeezed(r, angle, lt):
    l, t = lt
    params = SpinMemoryParams.from_coupling(t, l)
    g = squeeze(GaussianState.vacuum(), r, angle)
    out = spin_memory_channel(g, params)
    assert np.linalg.det(out.cov) >= 1 / 16 - 1e-12
    assert out.variances[0] >= g.variances[0] - 1e-15
    if params.r < 1:
        assert out.variances[0] > g.variances[0]


def test_channel_fidelity_matches_fock_oracle(rng):
    for _ in range(8):
        g = displace(squeeze(GaussianState.vacuum(), rng.uniform(0, 0.35), rng.uniform(0, math.pi)), *rng.uniform(-0.5, 0.5, 2))
        t = rng.uniform(0, 0.6)
        out = spin_memory_channel(g, SpinMemoryParams.from_coupling(t))
        exact = fidelity_dm(gaussian_to_fock(g, 40), gaussian_to_fock(out, 40))
        assert fidelity_gaussian(g, out) == pytest.approx(exact, abs=1e-5)


def test_heterodyne_variance(rng):
    s = heterodyne_sample(GaussianState.vacuum(), 100_000, 0.25, rng)
    se = 0.5 * math.sqrt(2 / 100_000)
    assert np.all(np.abs(s.var(axis=0, ddof=1) - 0.5) < 4 * se)
    assert heterodyne_sample(GaussianState.vacuum(), 1, 0.25, rng).shape == (1, 2)
    a = heterodyne_sample(GaussianState.vacuum(), 5, 0.25, np.random.default_rng(1))
    b = heterodyne_sample(GaussianState.vacuum(), 5, 0.25, np.random.default_rng(1))
    assert np.array_equal(a, b)


def test_reconstruction_recovers_covariance(rng):
    g = displace(squeeze(GaussianState.thermal(0.1), 0.4, 0.3), 0.5, 0.2)
    est, mom = reconstruct_gaussian(heterodyne_sample(g, 1_000_000, 0.25, rng), 0.25)
    assert np.allclose(est.cov, g.cov, rtol=0.01, atol=0.0)
    assert np.all(np.abs(mom.excess_kurtosis) < 4 * mom.kurtosis_standard_error)


def test_reconstruction_error_shrinks_like_inverse_sqrt_n():
    g = squeeze(GaussianState.vacuum(), 0.3)
    sizes = [1_000, 10_000, 100_000, 1_000_000]
    errs = []
    for n in sizes:
        e = []
        for rep in range(12):
            est, _ = reconstruct_gaussian(heterodyne_sample(g, n, 0.25, np.random.default_rng(rep + n)), 0.25)
            e.append(abs(est.cov[0, 0] - g.cov[0, 0]))
        errs.append(np.sqrt(np.mean(np.square(e))))
    slope = np.polyfit(np.log(sizes), np.log(errs), 1)[0]
    assert -0.65 < slope < -0.35


def test_reconstruction_failures(rng):
    with pytest.raises(ReconstructionError):
        reconstruct_gaussian(np.zeros((50, 2)), 0.25)
    s = heterodyne_sample(GaussianState.vacuum(), 10_000, 0.25, rng)
    with pytest.raises(ReconstructionError):
        reconstruct_gaussian(s, 0.6)


def test_sample_moments_unbiased_against_scipy(rng):
    from scipy import stats

    s = rng.gamma(2.0, size=(5_000, 2))
    mom = sample_moments(s)
    assert np.allclose(mom.excess_kurtosis, stats.kurtosis(s, axis=0, bias=False))
    k3 = stats.kstat(s[:, 0], 3)
    assert mom.third[0] == pytest.approx(k3, rel=1e-9)


def test_threshold_and_verdicts():
    inf_book = CVCodebook(((0.0, 0.0),))
    assert verify_no_cloning(0.67, inf_book) == "authentic"
    assert verify_no_cloning(0.66, inf_book) == "suspect"
    assert verify_no_cloning(2 / 3, inf_book) == "suspect"
    assert verify_no_cloning(0.70, inf_book) == "authentic"
    assert no_cloning_threshold(0.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        verify_no_cloning(1.1, inf_book)


@given(st.floats(0, 100))
def test_threshold_monotone_in_codebook_width(v):
    assert 2 / 3 <= no_cloning_threshold(v + 1.0) <= no_cloning_threshold(v) <= 1.0


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 10))
def test_verdict_monotone_in_fidelity(f1, f2, v):
    lo, hi = sorted((f1, f2))
    book = CVCodebook(((0.0, 0.0),), codebook_variance=v)
    if verify_no_cloning(lo, book) == "authentic":
        assert verify_no_cloning(hi, book) == "authentic"


def test_roundtrip_identity_high_fidelity(rng):
    book = CVCodebook(((0.0, 0.0), (0.5, -0.3), (1.0, 1.0)), squeeze_r=R3DB)
    recs = cv_roundtrip(book, SpinMemoryParams.identity(), 100_000, rng)
    assert all(r.fidelity >= 0.99 and r.verdict == "authentic" for r in recs)
    assert all(r.s_out == pytest.approx(r.s_in) for r in recs)


def test_roundtrip_thermalised_channel(rng):
    # the undisplaced squeezed symbol stays close to vacuum (F ~ 0.94), so only
    # displaced symbols are expected to fail the threshold
    book = CVCodebook(((0.0, 0.0), (1.0, 0.0), (0.0, -1.2)), squeeze_r=R3DB)
    recs = cv_roundtrip(book, SpinMemoryParams(0.0, 0.0, 1.0), 100_000, rng)
    for j, r in enumerate(recs):
        issued = generate_cv_token(book, j)
        assert r.fidelity_exact == pytest.approx(fidelity_gaussian(GaussianState.vacuum(), issued))
        assert r.s_out == pytest.approx(squeezing_level_db(0.25)) and r.s_out < r.s_in
    assert [r.verdict for r in recs[1:]] == ["suspect", "suspect"]
