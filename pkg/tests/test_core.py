import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chansound.core import (
    Building,
    Foliage,
    LinkGeometry,
    LosState,
    Scenario,
    WaveformSpec,
    classify_link,
    classify_los,
    demo_scenario,
    link_distance,
    polyline_trajectory,
    straight_trajectory,
)

coord = st.floats(-200, 200, allow_nan=False)
point3 = st.tuples(coord, coord, st.floats(0, 40))


def box(x0, y0, x1, y1, h):
    return Building([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], h)


def scen(buildings=(), foliage=()):
    return Scenario(buildings, [[0, 0, 13]], [0.0], [[1, 1, 1]], foliage=foliage)


# -- link_distance -------------------------------------------------------

def test_link_distance_examples():
    assert link_distance((0, 0, 13), (0, 0, 1)) == 12.0
    assert link_distance((1, 2, 3), (1, 2, 3)) == 0.0
    assert math.isclose(link_distance((3, 0, 13), (0, 0, 1)), math.sqrt(153), rel_tol=1e-12)
    assert math.isclose(math.sqrt(153), 12.369, abs_tol=1e-3)


@given(point3, point3, point3)
def test_triangle_inequality(a, b, c):
    assert link_distance(a, c) <= link_distance(a, b) + link_distance(b, c) + 1e-9


# -- LOS classification --------------------------------------------------

def test_ap_above_ue_is_los():
    assert classify_los(scen(), (5, 5, 13), (5, 5, 1)) == LosState.LOS


def test_tall_building_between_is_nlos():
    s = scen([box(-5, -5, 5, 5, 20)])
    assert classify_los(s, (-20, 0, 13), (20, 0, 1)) == LosState.NLOS


def test_low_building_crossed_above_roof_is_los():
    # segment height z(x) = 13 - 12 x / 20; footprint x in [7.5, 8.5] -> z >= 7.9
    ap, ue = (0, 0, 13), (20, 0, 1)
    zmin = 13 - 12 * 8.5 / 20
    assert zmin > 5
    assert classify_los(scen([box(7.5, -2, 8.5, 2, 5)]), ap, ue) == LosState.LOS
    assert classify_los(scen([box(7.5, -2, 8.5, 2, 9)]), ap, ue) == LosState.NLOS


def test_coincident_endpoints():
    with pytest.raises(ValueError, match="coincident endpoints"):
        classify_los(scen(), (1, 1, 1), (1, 1, 1))


def test_foliage_is_olos_not_nlos():
    f = Foliage([[8, -2], [12, -2], [12, 2], [8, 2]], top=20, bottom=0, attenuation_db=6)
    state, olos, loss = classify_link(scen(foliage=[f]), (0, 0, 13), (20, 0, 1))
    assert state == LosState.LOS and olos and loss == 6


rect = st.tuples(st.floats(-30, 30), st.floats(-30, 30), st.floats(1, 20), st.floats(1, 20),
                 st.floats(2, 30))


@given(rect, point3, point3)
@settings(max_examples=200)
def test_classify_symmetric(r, a, b):
    x, y, w, h, height = r
    s = scen([box(x, y, x + w, y + h, height)])
    if np.allclose(a, b):
        return
    assert classify_los(s, a, b) == classify_los(s, b, a)


@given(rect, st.tuples(coord, coord), st.tuples(coord, coord), st.floats(2, 30), st.floats(0, 20))
@settings(max_examples=200)
def test_raising_ap_never_blocks(r, ap_xy, ue_xy, h0, dh):
    x, y, w, h, height = r
    s = scen([box(x, y, x + w, y + h, height)])
    ue = (*ue_xy, 1.0)
    low = classify_los(s, (*ap_xy, h0 + 1.0), ue)
    high = classify_los(s, (*ap_xy, h0 + 1.0 + dh), ue)
    if low == LosState.LOS:
        assert high == LosState.LOS


# -- types -----------------------------------------------------------------

def test_polygon_validation():
    with pytest.raises(ValueError):
        Building([[0, 0], [1, 0]], 5)
    with pytest.raises(ValueError):
        Building([[0, 0], [1, 1], [1, 0], [0, 1]], 5)  # bow-tie


def test_scenario_invariants():
    with pytest.raises(ValueError, match="AP heights"):
        Scenario([], [[0, 0, 1]], [0.0], [[0, 0, 1]])
    with pytest.raises(ValueError, match="strictly increasing"):
        Scenario([], [[0, 0, 13], [1, 0, 13]], [0.0, 0.0], [[0, 0, 1]])


def test_link_geometry_distance_floor():
    with pytest.raises(ValueError):
        LinkGeometry(0, 0, 5.0, LosState.LOS, ap_height=13, ue_height=1)
    g = LinkGeometry(0, 0, 12.0, LosState.LOS, ap_height=13, ue_height=1)
    assert math.isclose(g.delay, 40e-9)


def test_waveform_numerology():
    w = WaveformSpec()
    assert math.isclose(w.duration, 8e-6, rel_tol=1e-12)
    assert math.isclose(w.bandwidth, 350e6, rel_tol=1e-12)
    assert abs(w.n_subcarriers * w.subcarrier_spacing - w.bandwidth) <= w.subcarrier_spacing
    assert math.isclose(w.resolution, 2.857142857e-9, rel_tol=1e-9)
    assert math.isclose(w.unambiguous_range, 2400.0, rel_tol=1e-12)
    assert WaveformSpec.from_dict(w.to_dict()) == w
    with pytest.raises(ValueError):
        WaveformSpec(n_subcarriers=0)


def test_scenario_json_round_trip(tmp_path):
    s = demo_scenario(n_snapshots=20, n_ues=3)
    p = tmp_path / "s.json"
    s.save(p)
    doc = json.loads(p.read_text())
    assert set(doc) >= {"buildings", "foliage", "ap_trajectory", "ues"}
    assert set(doc["ap_trajectory"][0]) == {"x", "y", "z", "t"}
    t = Scenario.load(p)
    np.testing.assert_array_equal(t.ap_positions, s.ap_positions)
    np.testing.assert_array_equal(t.ap_times, s.ap_times)
    assert len(t.buildings) == len(s.buildings)
    assert t.link(5, 1) == s.link(5, 1)


def test_trajectory_spacing():
    pos, t = straight_trajectory((0, 0, 13), (10, 0, 13), speed=0.5, burst_rate=10)
    np.testing.assert_allclose(np.diff(pos[:, 0]), 0.05)
    np.testing.assert_allclose(np.diff(t), 0.1)
    pos, t = polyline_trajectory([[0, 0, 13], [3, 0, 13], [3, 4, 13]], speed=0.4, burst_rate=10)
    step = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    assert np.all(step <= 0.04 + 1e-12)
    assert math.isclose(step.max(), 0.04)


def test_demo_scenario_has_both_states():
    s = demo_scenario(n_ues=2)
    states = {s.link(m, 0).los_state for m in range(0, s.n_snapshots, 200)}
    assert states == {LosState.LOS, LosState.NLOS}
