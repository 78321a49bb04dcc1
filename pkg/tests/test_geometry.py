import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import wsmimo as w
from wsmimo.geometry import range_extremes

C = 3.0e8
TS = 1e-7

coord = st.floats(-5000, 5000, allow_nan=False)
offset = st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4))


def fig_region():
    return w.Rect(1000.0, 1200.0, 1000.0, 1200.0)


def test_circular_layout_matches_reference_coordinates():
    geo = w.make_geometry("circular")
    # one transmitter at 240 degrees and one receiver at 324 degrees
    np.testing.assert_allclose(geo.tx_positions[2], [-2500.0, -4330.127], atol=5e-3)
    np.testing.assert_allclose(geo.rx_positions[9], [2427.051, -1763.356], atol=5e-3)


def test_circular_single_antenna_starts_at_angle_zero():
    geo = w.make_geometry("circular", n_tx=1, n_rx=1, tx_radius=1.0, rx_radius=2.0,
                          region=w.Rect(10, 11, 10, 11))
    np.testing.assert_allclose(geo.tx_positions[0], [1.0, 0.0], atol=1e-12)


def test_l_shaped_receivers_on_half_axes():
    geo = w.make_geometry("l_shaped")
    rx = geo.rx_positions
    on_x = rx[np.abs(rx[:, 1]) < 1e-9]
    on_y = rx[np.abs(rx[:, 0]) < 1e-9]
    assert len(on_x) == 5 and len(on_y) == 5
    assert np.all(on_x[:, 0] > 0) and np.all(on_y[:, 1] > 0)
    np.testing.assert_allclose(np.diff(on_x[:, 0]), 600.0)


def test_random_layout_deterministic_and_outside_region():
    a = w.make_geometry("random", seed=3)
    b = w.make_geometry("random", seed=3)
    np.testing.assert_array_equal(a.rx_positions, b.rx_positions)
    assert not np.any(np.atleast_1d(a.region.contains(a.rx_positions)))


def test_geometry_rejects_bad_inputs():
    with pytest.raises(w.GeometryError):
        w.make_geometry("circular", n_tx=0)
    with pytest.raises(w.GeometryError):
        w.make_geometry("circular", tx_radius=math.inf)
    with pytest.raises(w.GeometryError):
        w.make_geometry("hexagonal")
    with pytest.raises(w.GeometryError):
        # antenna inside the region
        w.AntennaGeometry([[1100.0, 1100.0]], [[0.0, 3000.0]], fig_region())
    with pytest.raises(w.GeometryError):
        w.AntennaGeometry([[0.0, 0.0]], [[1.0, 0.0]], w.Rect(5, 5, 5, 5))


def test_delay_monostatic():
    # two-way path over 1500 m at c = 3e8
    assert w.delay([0, 0], [0, 0], [1500, 0]) == pytest.approx(1.0e-5, rel=1e-12)


def test_delay_symmetric_in_endpoints():
    tx, rx, p = [10.0, -3.0], [-7.0, 2.0], [1.0, 1.0]
    assert w.delay(tx, rx, p) == w.delay(rx, tx, p)


def test_delay_rejects_coincident_points():
    with pytest.raises(w.GeometryError):
        w.delay([0, 0], [1, 1], [0, 0])


def test_doppler_zero_velocity():
    t = w.Target(position=[100, 200], velocity=[0, 0])
    assert w.doppler_shift([0, 0], [5, 5], t, 5e9) == 0.0


def test_doppler_monostatic_radial():
    t = w.Target(position=[3000, 0], velocity=[15, 0])
    f = w.doppler_shift([0, 0], [0, 0], t, 5e9)
    assert f == pytest.approx(2 * 5e9 * 15 / C, rel=1e-12)


def _doppler_oracle(tx, rx, pos, vel, f_c):
    # plain-scalar evaluation, independent of the vectorized implementation
    out = 0.0
    for a in (tx, rx):
        dx, dy = pos[0] - a[0], pos[1] - a[1]
        nrm = math.hypot(dx, dy)
        out += (vel[0] * dx + vel[1] * dy) / nrm
    return f_c / C * out


FIG3B_DOPPLER_HZ = 312.1390789805222


def test_doppler_reference_pair_fixture():
    geo = w.make_geometry("circular")
    t = w.Target(position=[1100, 1100], velocity=[10, 10])
    f = w.doppler_shift(geo.tx_positions[2], geo.rx_positions[9], t, 5e9)
    assert f == pytest.approx(FIG3B_DOPPLER_HZ, rel=1e-12)
    assert _doppler_oracle(geo.tx_positions[2], geo.rx_positions[9],
                           [1100, 1100], [10, 10], 5e9) == pytest.approx(
        FIG3B_DOPPLER_HZ, rel=1e-12)


def test_common_window_reference_values(fig_ctx):
    # pooled window over all 30 pairs: 200 extra range cells, offset 144 for
    # the reference pair and target
    win = fig_ctx.window
    assert win.l_max == 200
    geo = fig_ctx.scene.geometry
    off = w.sample_offset(win, geo.tx_positions[2], geo.rx_positions[9], [1100, 1100])
    assert off == 144


def test_l_shaped_window_smaller_than_circular(l_shaped):
    _, win = l_shaped
    assert win.l_max == 131  # axes-aligned arms out to 3000 m
    assert win.l_max < 200


def test_per_pair_window_and_offsets():
    geo = w.make_geometry("circular")
    t = w.Target(position=[1100, 1100], velocity=[0, 0])
    win = w.range_window(geo, (2, 9), targets=[t], t_s=TS)
    assert win.target_offsets[0] <= win.l_max
    assert win.r_min <= w.bistatic_range(geo.tx_positions[2], geo.rx_positions[9],
                                         [1100, 1100]) <= win.r_max


def test_degenerate_region_gives_zero_offset():
    geo = w.make_geometry("circular")
    point = w.Rect(1100.0, 1100.0, 1100.0, 1100.0)
    win = w.range_window(geo, (0, 0), targets=[], t_s=TS, region=point)
    assert win.l_max == 0
    r = w.bistatic_range(geo.tx_positions[0], geo.rx_positions[0], [1100, 1100])
    assert win.offset_of(r) == 0


def test_range_window_rejects_bad_sampling_interval():
    geo = w.make_geometry("circular")
    with pytest.raises(w.GeometryError):
        w.range_window(geo, (0, 0), t_s=0.0)


def test_range_extremes_segment_through_region():
    # baseline crosses the rectangle, so the minimum is the tx-rx distance
    region = w.Rect(-10.0, 10.0, -10.0, 10.0)
    lo, hi = range_extremes([-100.0, 0.0], [100.0, 0.0], region)
    assert lo == pytest.approx(200.0, rel=1e-12)
    assert hi > lo


@settings(max_examples=50, deadline=None)
@given(dx=st.floats(-1e4, 1e4), dy=st.floats(-1e4, 1e4))
def test_translation_invariance(dx, dy):
    geo = w.make_geometry("circular")
    t = w.Target(position=[1100, 1100], velocity=[10, -4])
    moved = geo.translated([dx, dy])
    tm = w.Target(position=t.position + [dx, dy], velocity=t.velocity)
    for m, n in ((0, 0), (2, 9)):
        assert w.delay(geo.tx_positions[m], geo.rx_positions[n], t.position) == \
            pytest.approx(w.delay(moved.tx_positions[m], moved.rx_positions[n],
                                  tm.position), rel=1e-12)
        assert w.doppler_shift(geo.tx_positions[m], geo.rx_positions[n], t, 5e9) == \
            pytest.approx(w.doppler_shift(moved.tx_positions[m], moved.rx_positions[n],
                                          tm, 5e9), rel=1e-9, abs=1e-9)
    win = w.common_range_window(geo, TS)
    win_m = w.common_range_window(moved, TS)
    assert win.l_max == win_m.l_max


@settings(max_examples=30, deadline=None)
@given(angle=st.floats(0, 2 * math.pi))
def test_rotation_invariance(angle):
    rot = np.array([[math.cos(angle), -math.sin(angle)],
                    [math.sin(angle), math.cos(angle)]])
    tx, rx = np.array([500.0, -200.0]), np.array([-300.0, 800.0])
    pos, vel = np.array([50.0, 75.0]), np.array([4.0, -9.0])
    d0 = w.delay(tx, rx, pos)
    f0 = w.doppler_shift(tx, rx, w.Target(position=pos, velocity=vel), 5e9)
    d1 = w.delay(rot @ tx, rot @ rx, rot @ pos)
    f1 = w.doppler_shift(rot @ tx, rot @ rx,
                         w.Target(position=rot @ pos, velocity=rot @ vel), 5e9)
    assert d1 == pytest.approx(d0, rel=1e-12)
    assert f1 == pytest.approx(f0, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(1000, 1200), y=st.floats(1000, 1200))
def test_offsets_within_window_for_targets_in_region(fig_ctx, x, y):
    win = fig_ctx.window
    geo = fig_ctx.scene.geometry
    for m, n in ((0, 0), (1, 5), (2, 9)):
        off = w.sample_offset(win, geo.tx_positions[m], geo.rx_positions[n], [x, y])
        assert 0 <= off <= win.l_max


def test_offset_monotone_in_range(fig_ctx):
    win = fig_ctx.window
    ranges = np.linspace(win.r_min, win.r_max, 500)
    offs = win.offsets_of(ranges)
    assert np.all(np.diff(offs) >= 0)
