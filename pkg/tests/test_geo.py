import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoperturb.errors import ValidationError
from geoperturb.geo import (
    GeoPoint,
    PlanarPoint,
    Projection,
    euclidean_distance,
    haversine_m,
    to_geo,
    to_planar,
)

MTL = Projection(GeoPoint(45.5, -73.6))


def test_origin_maps_to_zero():
    p = to_planar(GeoPoint(45.5, -73.6), MTL)
    assert (p.x, p.y) == (0.0, 0.0)
    assert to_geo(PlanarPoint(0, 0), MTL) == MTL.origin


def test_north_offset():
    p = to_planar(GeoPoint(45.51, -73.6), MTL)
    assert p.x == pytest.approx(0.0, abs=1e-9)
    # R * 0.01 deg in radians
    assert p.y == pytest.approx(1111.9492664, abs=0.01)


def test_east_offset():
    p = to_planar(GeoPoint(45.5, -73.59), MTL)
    # R * cos(45.5 deg) * 0.01 deg in radians
    assert p.x == pytest.approx(779.3755423, abs=0.01)
    assert p.y == pytest.approx(0.0, abs=1e-9)


def test_inverse_of_north_offset():
    g = to_geo(PlanarPoint(0, 1111.95), MTL)
    assert g.lat == pytest.approx(45.51, abs=1e-7)
    assert g.lon == pytest.approx(-73.6, abs=1e-12)


@pytest.mark.parametrize("lat,lon", [(91, 0), (-90.5, 0), (0, 180.1), (float("nan"), 0)])
def test_out_of_range_rejected(lat, lon):
    with pytest.raises(ValidationError):
        GeoPoint(lat, lon)


def test_planar_point_rejects_nonfinite():
    with pytest.raises(ValidationError):
        PlanarPoint(float("inf"), 0)


def test_round_trip_random_box():
    import numpy as np

    rng = np.random.default_rng(0)
    # 50 km box around the origin is about +-0.225 deg lat, +-0.32 deg lon
    lats = 45.5 + rng.uniform(-0.225, 0.225, 1000)
    lons = -73.6 + rng.uniform(-0.32, 0.32, 1000)
    back_lat, back_lon = MTL.inverse(MTL.forward(lats, lons))
    assert np.max(np.abs(back_lat - lats)) < 1e-9
    assert np.max(np.abs(back_lon - lons)) < 1e-9


@settings(max_examples=300)
@given(st.floats(-0.9, 0.9), st.floats(-1.2, 1.2))
def test_round_trip_within_100km(dlat, dlon):
    g = GeoPoint(45.5 + dlat, -73.6 + dlon)
    back = to_geo(to_planar(g, MTL), MTL)
    assert abs(back.lat - g.lat) < 1e-9 and abs(back.lon - g.lon) < 1e-9


def test_distance_examples():
    a = PlanarPoint(3.0, -2.0)
    assert euclidean_distance(a, a) == 0
    assert euclidean_distance(PlanarPoint(0, 0), PlanarPoint(3, 4)) == 5
    assert euclidean_distance(PlanarPoint(10, -10), PlanarPoint(-10, 10)) == pytest.approx(
        28.2843, abs=1e-4)


coords = st.floats(-1e5, 1e5, allow_nan=False)
points = st.builds(PlanarPoint, coords, coords)


@given(points, points, points)
def test_distance_metric_axioms(a, b, c):
    ab = euclidean_distance(a, b)
    assert ab >= 0
    assert ab == euclidean_distance(b, a)
    assert euclidean_distance(a, c) <= ab + euclidean_distance(b, c) + 1e-9


@settings(max_examples=300)
@given(st.floats(-0.09, 0.09), st.floats(-0.12, 0.12), st.floats(-0.09, 0.09),
       st.floats(-0.12, 0.12))
def test_planar_distance_matches_haversine(la1, lo1, la2, lo2):
    proj = Projection(GeoPoint(45.0, -73.0))
    a, b = GeoPoint(45 + la1, -73 + lo1), GeoPoint(45 + la2, -73 + lo2)
    hav = haversine_m(a, b)
    if hav < 1.0 or hav > 20_000:
        return
    planar = euclidean_distance(to_planar(a, proj), to_planar(b, proj))
    assert abs(planar - hav) / hav < 0.005


def test_degenerate_centroid_origin():
    proj = Projection.centered_on([45.5] * 3, [-73.6] * 3)
    assert proj.origin == GeoPoint(45.5, -73.6)
    assert math.isclose(proj._cos_lat0, math.cos(math.radians(45.5)))
