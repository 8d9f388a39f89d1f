import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from sghp.data import EventSequence, check_sequence
from sghp.hawkes import (ClippedSine, Exponential, ExpMixture, HawkesSpec, PowerLawProduct,
                         UnstableSpecError, Zero, appendix_a_spec, compensator, compensator_rescale,
                         intensities, intensity, poisson_spec, simulate_dataset, simulate_sequence)


@pytest.fixture(scope="module")
def spec():
    return appendix_a_spec()


def test_intensity_empty_history(spec):
    assert intensity(spec, None, 3.7, 0) == 0.1
    assert intensity(spec, EventSequence([], []), 0.0, 1) == 0.2


def test_intensity_after_type1_event(spec):
    hist = EventSequence([0], [0.0])
    t = 1e-12
    assert intensity(spec, hist, t, 1) == pytest.approx(0.23, rel=1e-9)
    assert intensity(spec, hist, t, 0) == pytest.approx(0.1, rel=1e-9)


def test_intensity_rejects_query_before_history(spec):
    with pytest.raises(ValueError):
        intensity(spec, EventSequence([0], [2.0]), 1.0, 0)


def test_appendix_kernel_values(spec):
    phi = spec.kernels
    assert phi[1][1](np.pi / 2) == pytest.approx(0.125)
    assert phi[1][1](5.0) == 0.0
    assert phi[1][0](0.0) == pytest.approx(0.21)
    assert phi[0][1](0.0) == pytest.approx(0.03)
    assert phi[0][0](0.0) == 0.0
    assert phi[0][0](2.0) == pytest.approx(0.2 * 2 * 2.5 ** -1.3)


def test_appendix_untruncated_or_default_50_is_unstable():
    with pytest.raises(UnstableSpecError):
        appendix_a_spec(truncation=None)
    with pytest.raises(UnstableSpecError):
        appendix_a_spec(truncation=50.0)


def test_appendix_branching(spec):
    B = spec.branching
    assert B[0, 1] == pytest.approx(0.1)
    assert B[1, 0] == pytest.approx(0.45)
    assert B[1, 1] == pytest.approx(0.25)
    assert spec.spectral_radius < 1


KERNELS = [
    Exponential(0.4, 1.3),
    ExpMixture(((0.05, 0.2), (0.16, 0.8))),
    PowerLawProduct(0.2, 0.5, -1.3, cutoff=8.0),
    PowerLawProduct(0.3, 0.7, -2.5),
    PowerLawProduct(0.1, 0.4, -1.0, cutoff=3.0),
    PowerLawProduct(0.1, 0.4, -2.0, cutoff=3.0),
    ClippedSine(8.0, 4.0),
    ClippedSine(3.0, 12.0),
]


@pytest.mark.parametrize("kern", KERNELS, ids=lambda k: k.kind)
@pytest.mark.parametrize("x", [0.3, 1.7, 3.9, 7.5, 20.0])
def test_closed_form_integral_matches_quadrature(kern, x):
    assert kern.integral(x) == pytest.approx(kern.integral_quad(x), rel=1e-8, abs=1e-14)


@pytest.mark.parametrize("kern", KERNELS, ids=lambda k: k.kind)
def test_total_matches_quadrature(kern):
    end = kern.cutoff if getattr(kern, "cutoff", None) else getattr(kern, "horizon", np.inf)
    pts = kern.breakpoints() if math.isfinite(end) else None
    val, _ = integrate.quad(kern, 0, end, epsrel=1e-10, limit=500, points=[p for p in (pts or []) if p < end] or None)
    assert kern.total() == pytest.approx(val, rel=1e-7)


@pytest.mark.parametrize("kern", KERNELS, ids=lambda k: k.kind)
def test_kernels_nonnegative(kern):
    t = np.linspace(-2, 30, 5000)
    assert np.all(kern(t) >= 0)
    assert np.all(kern(t[t < 0]) == 0)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(range(len(KERNELS))), st.floats(-3, 15), st.floats(0, 5))
def test_sup_bounds_kernel_on_interval(ki, a, w):
    kern = KERNELS[ki]
    b = a + w
    grid = np.linspace(a, b, 400)
    s = float(kern.sup(a, b))
    assert s >= float(np.max(kern(grid))) - 1e-12
    # tight: attained up to grid resolution (kernels are Lipschitz with constant < 1 here)
    fine = np.linspace(a, b, 20001)
    assert s <= float(np.max(kern(fine))) + (b - a) / 20000 + 1e-12


def test_unstable_spec_rejected():
    with pytest.raises(UnstableSpecError):
        HawkesSpec((0.5,), ((Exponential(1.2, 1.0),),))
    with pytest.raises(ValueError):
        HawkesSpec((0.0,), ((Zero(),),))


def test_spec_serialisation_round_trip(spec):
    back = HawkesSpec.loads(spec.dumps())
    assert back == spec
    t = np.linspace(0, 9, 50)
    for i in range(2):
        for k in range(2):
            assert np.array_equal(back.kernels[i][k](t), spec.kernels[i][k](t))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_intensity_matches_brute_force_loop(seed, n):
    spec = appendix_a_spec()
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0, 10, n))
    types = rng.integers(0, 2, n)
    t = times[-1] + rng.uniform(0, 3)
    hist = EventSequence(types, times)
    for k in range(2):
        brute = spec.background[k]
        for ti, ki in zip(times, types):
            if ti < t:
                brute += float(spec.kernels[ki][k](t - ti))
        assert intensity(spec, hist, t, k) == pytest.approx(brute, rel=1e-12)
    # additivity over a split of the history
    lam = intensities(spec, hist, t)
    a = EventSequence(types[::2], times[::2])
    b = EventSequence(types[1::2], times[1::2])
    mu = np.array(spec.background)
    np.testing.assert_allclose(lam, intensities(spec, a, t) + intensities(spec, b, t) - mu, rtol=1e-12)


def test_simulation_deterministic(spec):
    a = simulate_sequence(spec, 30.0, 5)
    b = simulate_sequence(spec, 30.0, 5)
    assert a == b
    assert simulate_sequence(spec, 30.0, 6) != a


def test_simulated_sequences_valid(spec):
    ds = simulate_dataset(spec, 40, 30.0, seed=1, min_length=2)
    for seq in ds:
        assert check_sequence(seq, 2, 0) is None
        assert len(seq) >= 2
        assert seq.times[-1] <= 30.0


def test_simulate_dataset_streams_independent_of_count(spec):
    small = simulate_dataset(spec, 3, 20.0, seed=9)
    big = simulate_dataset(spec, 6, 20.0, seed=9)
    assert all(a == b for a, b in zip(small, big))


def test_poisson_mean_counts_quick():
    spec = poisson_spec((0.1, 0.2))
    counts = np.array([np.bincount(simulate_sequence(spec, 1000.0, (3, s)).types, minlength=2)
                       for s in range(60)])
    se = np.sqrt(np.array([100.0, 200.0]) / 60)
    assert np.all(np.abs(counts.mean(axis=0) - [100, 200]) < 4 * se)


def test_compensator_homogeneous_poisson():
    spec = poisson_spec((1.0,))
    seq = EventSequence([0, 0, 0], [1.0, 2.0, 3.0])
    np.testing.assert_allclose(compensator_rescale(spec, seq), [1.0, 1.0, 1.0])


def test_compensator_single_event(spec):
    seq = EventSequence([1], [2.5])
    vals = compensator_rescale(spec, seq)
    assert vals.shape == (1,)
    assert vals[0] == pytest.approx(0.3 * 2.5)


def test_compensator_closed_form_matches_quadrature(spec):
    seq = simulate_sequence(spec, 12.0, 4)
    assert len(seq) >= 3
    closed = compensator_rescale(spec, seq)
    quad = compensator_rescale(spec, seq, method="quad")
    np.testing.assert_allclose(closed, quad, rtol=1e-8, atol=1e-12)


def test_compensator_matches_integrated_intensity(spec):
    seq = simulate_sequence(spec, 15.0, 8)
    t_end = 15.0
    knots = np.concatenate([[0.0], seq.times, [t_end]])
    total = 0.0
    for j, (a, b) in enumerate(zip(knots[:-1], knots[1:])):
        past = seq.prefix(j)
        f = lambda s: intensities(spec, past, s).sum()
        total += integrate.quad(f, a, b, epsrel=1e-10, limit=200,
                                points=[a + x for x in (np.pi, 4.0) if a + x < b] or None)[0]
    assert compensator(spec, seq, t_end)[0] == pytest.approx(total, rel=1e-7)


def test_rescaled_appendix_sample_looks_exponential(spec):
    vals = np.concatenate([compensator_rescale(spec, s) for s in simulate_dataset(spec, 30, 40.0, seed=12)])
    assert stats.kstest(vals, "expon").pvalue > 0.001


def test_stationary_rates(spec):
    rates = spec.stationary_rates()
    B = spec.branching
    np.testing.assert_allclose(rates, np.array(spec.background) + B.T @ rates)
