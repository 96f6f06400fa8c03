import io
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from stormsynth import trackprep
from stormsynth.trackprep import (DegenerateTrackError, FeatureScaler, apply_scaler,
                                  fit_scaler, invert_scaler, prepare_corpus,
                                  resample_points, resample_track, track_array)

from conftest import make_storm, polylines


def walk_oracle(points, n):
    """Equal arc-length resampling by stepping along the polyline segment by segment."""
    pts = [tuple(map(float, p)) for p in points]
    seg = [math.dist(a[:2], b[:2]) for a, b in zip(pts, pts[1:])]
    total = sum(seg)
    out = []
    for k in range(n):
        target = total * k / (n - 1)
        acc = 0.0
        for i, length in enumerate(seg):
            if length > 0 and (acc + length >= target or i == len(seg) - 1):
                t = min(max((target - acc) / length, 0.0), 1.0)
                a, b = pts[i], pts[i + 1]
                out.append(tuple(a[j] + t * (b[j] - a[j]) for j in range(3)))
                break
            acc += length
    return np.array(out)


def test_straight_line_five_points():
    out = resample_points(np.array([[10, -50, 1000], [10, -40, 990]], float), 5)
    np.testing.assert_allclose(out[:, 1], [-50, -47.5, -45, -42.5, -40])
    np.testing.assert_allclose(out[:, 0], 10)
    np.testing.assert_allclose(out[:, 2], [1000, 997.5, 995, 992.5, 990])


def test_equally_spaced_track_is_a_fixed_point():
    pts = np.column_stack([np.linspace(10, 30, 20), np.linspace(-80, -40, 20),
                           np.linspace(1000, 950, 20)])
    np.testing.assert_allclose(resample_points(pts, 20), pts, atol=1e-12)


def test_stationary_track():
    pts = np.array([[20.0, -60.0, 990.0]] * 4)
    out = resample_points(pts, 20)
    assert out.shape == (20, 3)
    np.testing.assert_array_equal(out, np.repeat(pts[:1], 20, axis=0))


def test_repeated_position_uses_last_record():
    pts = np.array([[0.0, 1.0, 900.0], [0.0, 0.0, 900.0], [0.0, 0.0, 901.0]])
    out = resample_points(pts, 3)
    np.testing.assert_array_equal(out, [[0, 1, 900], [0, 0.5, 900.5], [0, 0, 901]])
    pts = np.array([[0.0, 0.0, 990.0], [0.0, 0.0, 980.0], [0.0, 2.0, 960.0]])
    np.testing.assert_array_equal(resample_points(pts, 3)[:, 2], [980, 970, 960])


def test_too_short_track():
    with pytest.raises(DegenerateTrackError):
        resample_track(make_storm([(10, -50)]))
    with pytest.raises(ValueError):
        resample_points(np.zeros((3, 2)))


def test_missing_pressure_interpolated():
    storm = make_storm([(10, -50), (11, -51), (12, -52), (13, -53)],
                       pressures=[None, 1000, None, 980])
    np.testing.assert_allclose(track_array(storm)[:, 2], [1000, 1000, 990, 980])


def test_no_pressure_falls_back_to_wind():
    storm = make_storm([(10, -50), (11, -51)], pressures=[None, None], winds=[67, None])
    pres = track_array(storm)[:, 2]
    expected = 1010 - 10 ** (1 / 0.644)
    np.testing.assert_allclose(pres, [expected, expected])
    storm = make_storm([(10, -50), (11, -51)], pressures=[None, None], winds=[None, None])
    np.testing.assert_array_equal(track_array(storm)[:, 2], [1010, 1010])


def test_scaler_min_max():
    tracks = [np.array([[10, -80, 950], [40, -20, 1000]], float)]
    sc = fit_scaler(tracks)
    scaled, clamped = sc.forward(np.array([[10, -80, 950], [40, -20, 1000], [25, -50, 975]]))
    np.testing.assert_allclose(scaled[:, 0], [0, 1, 0.5])
    assert clamped == 0


def test_degenerate_feature_widened():
    sc = fit_scaler([np.array([[15, -60, 1000], [15, -50, 990]], float)])
    scaled, _ = sc.forward(np.array([[15, -55, 995]]))
    assert scaled[0, 0] == pytest.approx(0.5)
    assert sc.maximum[0] - sc.minimum[0] == pytest.approx(2e-6)


def test_out_of_range_is_clamped_and_counted():
    sc = FeatureScaler(np.array([0.0, 0.0, 0.0]), np.array([1.0, 1.0, 1.0]))
    track, clamped = apply_scaler(np.array([[2.0, 0.5, -1.0]]), sc)
    np.testing.assert_array_equal(track.points, [[1.0, 0.5, 0.0]])
    assert clamped == 2


def test_scaler_text_round_trip():
    sc = FeatureScaler(np.array([8.1, -96.0, 898.02273054]), np.array([71.4, -25.0, 1002.27]))
    back = FeatureScaler.from_text(sc.to_text())
    np.testing.assert_array_equal(back.minimum, sc.minimum)
    np.testing.assert_array_equal(back.maximum, sc.maximum)


def test_corpus_round_trip(fixture_storms):
    tracks, scaler, raw = prepare_corpus(fixture_storms)
    assert len(tracks) == len(fixture_storms)
    for t, r in zip(tracks, raw):
        assert t.points.shape == (trackprep.N_POINTS, 3)
        assert t.points.min() >= 0 and t.points.max() <= 1
        np.testing.assert_allclose(invert_scaler(t, scaler), r, rtol=0, atol=1e-9)


def test_tracks_csv_round_trip(fixture_storms):
    tracks, _, _ = prepare_corpus(fixture_storms[:5])
    buf = io.StringIO()
    trackprep.write_tracks_csv(tracks, buf)
    back = trackprep.read_tracks_csv(io.StringIO(buf.getvalue()))
    assert [t.storm_id for t in back] == [t.storm_id for t in tracks]
    for a, b in zip(back, tracks):
        np.testing.assert_array_equal(a.points, b.points)


@given(polylines(), st.integers(2, 40))
def test_resample_matches_walk_oracle(pts, n):
    total = trackprep.cumulative_arc_length(pts[:, :2])[-1]
    assume(total > 1e-3)
    # repeated positions leave the pressure at that spot ambiguous; see below
    assume(np.all(np.diff(trackprep.cumulative_arc_length(pts[:, :2])) > 0))
    out = resample_points(pts, n)
    assert out.shape == (n, 3)
    np.testing.assert_allclose(out, walk_oracle(pts, n), atol=1e-9 * max(1.0, total) + 1e-9)


def arc_positions(source, resampled, gap, tol):
    """Arc-length coordinate of each resampled point along the source polyline.

    A track can pass the same spot twice, so among all positions where the
    polyline meets the point, take the one nearest ``k * gap``.
    """
    pts = np.asarray(source, float)[:, :2]
    starts = trackprep.cumulative_arc_length(pts)
    out = []
    for k, q in enumerate(np.asarray(resampled)[:, :2]):
        hits = []
        for i, (a, b) in enumerate(zip(pts, pts[1:])):
            d = b - a
            length = math.hypot(*d)
            if length == 0:
                continue
            t = min(max(float(np.dot(q - a, d)) / length ** 2, 0.0), 1.0)
            if math.dist(a + t * d, q) <= tol:
                hits.append(starts[i] + t * length)
        if not hits:
            raise AssertionError(f"point {q} is not on the source polyline")
        out.append(min(hits, key=lambda h: abs(h - k * gap)))
    return np.array(out)


@given(polylines(), st.integers(2, 40))
def test_uniform_spacing(pts, n):
    total = trackprep.cumulative_arc_length(pts[:, :2])[-1]
    assume(total > 1e-3)
    pos = arc_positions(pts, resample_points(pts, n), total / (n - 1), 1e-9 * max(1.0, total))
    assert np.abs(np.diff(pos) - total / (n - 1)).max() <= 1e-6 * total


@given(polylines(min_size=2, max_size=8), st.integers(0, 6), st.floats(0.05, 0.95),
       st.integers(2, 30))
def test_collinear_insertion_invariance(pts, seg, frac, n):
    seg = seg % (len(pts) - 1)
    extra = pts[seg] + frac * (pts[seg + 1] - pts[seg])
    denser = np.insert(pts, seg + 1, extra, axis=0)
    total = trackprep.cumulative_arc_length(pts[:, :2])[-1]
    assume(total > 1e-3)
    assume(np.all(np.diff(trackprep.cumulative_arc_length(pts[:, :2])) > 0))
    np.testing.assert_allclose(resample_points(denser, n), resample_points(pts, n),
                               atol=1e-9 * max(1.0, total))


@given(polylines(min_size=2, max_size=10))
def test_scaler_inverse_round_trip(pts):
    sc = fit_scaler([pts])
    track, clamped = apply_scaler(pts, sc)
    assert clamped == 0
    np.testing.assert_allclose(invert_scaler(track, sc), pts, atol=1e-9)
