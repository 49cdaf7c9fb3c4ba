import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import same_point_batch
from geoperturb.errors import EmptyInputError, ValidationError
from geoperturb.geo import PlanarPoint
from geoperturb.mechanisms import DonutParams, donut_perturb_batch
from geoperturb.metrics import (
    PerturbationRecord,
    Records,
    average_spatial_error,
    bin_mean_distance_by_k,
    k_estimate,
    privacy_summary,
)


def rec(d, density=0.001, i="r"):
    return PerturbationRecord.build(i, PlanarPoint(0, 0), PlanarPoint(d, 0), density)


def records_with(distances, density=0.001):
    return [rec(d, density, f"r{j}") for j, d in enumerate(distances)]


def test_k_estimate_examples():
    assert k_estimate(rec(0.0)) == 0
    assert k_estimate(rec(100.0, 0.001)) == pytest.approx(31.416, abs=1e-3)
    assert k_estimate(rec(178.412, 0.005)) == pytest.approx(500.0, abs=0.1)


@given(st.floats(0, 1e4), st.floats(0, 1))
def test_k_estimate_quadratic_scaling(d, dens):
    assert k_estimate(rec(2 * d, dens)) == pytest.approx(4 * k_estimate(rec(d, dens)),
                                                         rel=1e-12, abs=1e-300)


def test_record_distance_invariant():
    r = PerturbationRecord.build("a", PlanarPoint(1, 2), PlanarPoint(4, 6), 0.0)
    assert r.distance == 5.0
    rs = Records.from_records([r])
    assert list(rs) == [r]


def test_ase_examples():
    assert average_spatial_error(records_with([42.0])) == 42.0
    assert average_spatial_error(records_with([10.0, 20.0, 30.0])) == 20.0
    with pytest.raises(EmptyInputError):
        average_spatial_error([])


@given(st.lists(st.tuples(*[st.floats(-1e4, 1e4)] * 4), min_size=1, max_size=30),
       st.floats(-1e5, 1e5), st.floats(-1e5, 1e5))
def test_ase_translation_invariant(pairs, sx, sy):
    a = np.array(pairs)
    o, p = a[:, :2], a[:, 2:]
    base = average_spatial_error(Records(range(len(a)), o, p, np.zeros(len(a))))
    shift = np.array([sx, sy])
    moved = average_spatial_error(Records(range(len(a)), o + shift, p + shift,
                                          np.zeros(len(a))))
    assert moved == pytest.approx(base, rel=1e-6, abs=1e-6)


def test_summary_degenerate_and_empty():
    s = privacy_summary(records_with([0.0, 0.0, 0.0]))
    assert (s.mean_k, s.fraction_at_least_k_min, s.n, s.ase) == (0, 0, 3, 0)
    with pytest.raises(EmptyInputError):
        privacy_summary([])


def test_summary_mean_is_plain_mean_of_k():
    g = np.random.default_rng(4)
    recs = records_with(g.uniform(0, 300, 500), 0.002)
    s = privacy_summary(recs, k_min=25)
    ks = [k_estimate(r) for r in recs]
    assert s.mean_k == pytest.approx(math.fsum(ks) / len(ks), rel=1e-12)
    assert s.fraction_at_least_k_min == sum(k >= 25 for k in ks) / len(ks)
    assert 0 <= s.fraction_at_least_k_min <= 1


@pytest.fixture(scope="module")
def donut_records(huge_uniform):
    xy, keys = same_point_batch(100_000)
    res = donut_perturb_batch(xy, keys, DonutParams(500), huge_uniform(), 99)
    return Records(range(len(xy)), xy, res.perturbed, np.full(len(xy), 0.005))


def test_summary_homogeneous_donut(donut_records):
    s = privacy_summary(donut_records, k_min=10)
    assert s.mean_k == pytest.approx(252.5, rel=0.02)
    # annulus CDF at the radius where k = 10
    assert s.fraction_at_least_k_min == pytest.approx(1 - (10 / 500 - 0.01) / 0.99, abs=0.005)


def test_bins_examples():
    dens = 1 / math.pi  # k = d^2
    recs = records_with([math.sqrt(3), math.sqrt(7)], dens)
    ((lo, mean, n),) = bin_mean_distance_by_k(recs)
    assert (lo, n) == (0, 2)
    assert mean == pytest.approx((math.sqrt(3) + math.sqrt(7)) / 2)
    bins = bin_mean_distance_by_k(records_with([math.sqrt(5), math.sqrt(15)], dens))
    assert [(b[0], b[2]) for b in bins] == [(0, 1), (10, 1)]
    assert bin_mean_distance_by_k([]) == []
    with pytest.raises(ValidationError):
        bin_mean_distance_by_k(recs, 0)


def test_bins_monotone_on_homogeneous_donut(donut_records):
    bins = bin_mean_distance_by_k(donut_records)
    los = [b[0] for b in bins]
    assert los == sorted(los) and all(b[2] > 0 for b in bins)
    means = [b[1] for b in bins]
    assert all(b > a for a, b in zip(means, means[1:]))
    assert sum(b[2] for b in bins) == len(donut_records)
