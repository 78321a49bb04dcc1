import cmath
import math

import numpy as np
import pytest

import wsmimo as w

FC = 5e9
TPRI = 25e-3
Q = 128


def af(fig_ctx, grid, *, geo=None, win=None, rate=1.0, seed=0, template=None,
       velocity=(10.0, 10.0), axes="position"):
    return w.ambiguity([1100.0, 1100.0], velocity, grid,
                       geo if geo is not None else fig_ctx.scene.geometry,
                       fig_ctx.codes,
                       win if win is not None else fig_ctx.window,
                       Q, TPRI, FC, axes=axes, sampling_rate=rate, seed=seed,
                       template=template)


def test_af_maximum_at_reference(fig_ctx):
    grid = w.SearchGrid.regular(1000, 1200, 1000, 1200, 10.0)
    surf = af(fig_ctx, grid)
    np.testing.assert_array_equal(surf.argmax_point(), [1100.0, 1100.0])
    assert surf.grid.values.max() == pytest.approx(1.0, abs=1e-9)
    assert np.all(surf.grid.values >= 0)


def test_af_velocity_axes_peak_at_true_velocity(fig_ctx):
    grid = w.SearchGrid.regular(0, 20, 0, 20, 1.0)
    surf = af(fig_ctx, grid, axes="velocity")
    np.testing.assert_array_equal(surf.argmax_point(), [10.0, 10.0])


def test_af_phase_invariance(fig_ctx):
    # multiplying every code by a common unit phase cannot change the surface
    grid = w.SearchGrid.regular(1060, 1140, 1060, 1140, 20.0)
    base = af(fig_ctx, grid)
    rotated = w.PhaseCodeSet(fig_ctx.codes.codes * cmath.exp(0.7j),
                             fig_ctx.codes.t_b)
    surf = w.ambiguity([1100, 1100], [10, 10], grid, fig_ctx.scene.geometry,
                       rotated, fig_ctx.window, Q, TPRI, FC)
    np.testing.assert_allclose(surf.grid.values, base.grid.values, atol=1e-9)


def test_af_rejects_bad_inputs(fig_ctx):
    grid = w.SearchGrid.regular(1000, 1200, 1000, 1200, 50.0)
    with pytest.raises(w.EstimationError):
        af(fig_ctx, grid, rate=0.0)
    with pytest.raises(w.EstimationError):
        w.ambiguity([1100, 1100], [10, 10], grid, fig_ctx.scene.geometry,
                    fig_ctx.codes, fig_ctx.window, Q, TPRI, FC, axes="range")


def test_af_subsampling_grows_sidelobes_on_average(fig_ctx):
    grid = w.SearchGrid.regular(1000, 1200, 1000, 1200, 4.0)
    full = w.max_sidelobe(af(fig_ctx, grid), 50.0)
    masked = [w.max_sidelobe(af(fig_ctx, grid, rate=0.2, seed=s), 50.0)
              for s in range(5)]
    assert np.mean(masked) > full


def test_af_geometry_changes_area(fig_ctx, l_shaped):
    geo_l, win_l = l_shaped
    grid = w.SearchGrid.regular(1000, 1200, 1000, 1200, 4.0)
    area_c = w.area_above(af(fig_ctx, grid))
    area_l = w.area_above(af(fig_ctx, grid, geo=geo_l, win=win_l))
    assert area_l > area_c


def test_max_sidelobe_excludes_main_lobe(fig_ctx):
    grid = w.SearchGrid.regular(1000, 1200, 1000, 1200, 10.0)
    surf = af(fig_ctx, grid)
    assert w.max_sidelobe(surf, 15.0) < 1.0
    with pytest.raises(w.EstimationError):
        w.max_sidelobe(surf, 1e6)


# --- effective bandwidth -------------------------------------------------

def test_effective_bandwidth_constant_code_is_dc():
    assert w.effective_bandwidth(np.ones(16), 1e7) == 0.0


def test_effective_bandwidth_alternating_is_nyquist():
    code = np.array([1.0, -1.0] * 32)
    assert w.effective_bandwidth(code, 1e7) == pytest.approx(5e6, rel=1e-12)


def _beta_oracle(code, f_s):
    # direct DFT summation, no fft call
    n = len(code)
    num = den = 0.0
    for k in range(n):
        s = sum(code[i] * cmath.exp(-2j * math.pi * k * i / n) for i in range(n))
        f = (k / n if k < n / 2 else k / n - 1.0) * f_s
        num += f * f * abs(s) ** 2
        den += abs(s) ** 2
    return math.sqrt(num / den)


BETA_EFF_ROWS_HZ = (5000000.0, 2500000.0, 2500000.0)


def test_effective_bandwidth_hadamard_fixtures(fig_ctx):
    for row, expect in enumerate(BETA_EFF_ROWS_HZ):
        code = fig_ctx.codes.codes[row]
        assert w.effective_bandwidth(code, 1e7) == pytest.approx(expect, rel=1e-12)
        assert _beta_oracle(list(code), 1e7) == pytest.approx(expect, rel=1e-9)


# --- CRLB ----------------------------------------------------------------

def _crlb_oracle(geometry, target, snr, f_c, beta):
    """Plain-loop evaluation of the angle sums and closed forms."""
    s_a = s_aa = s_b = s_bb = 0.0
    for rx in geometry.rx_positions:
        phi_r = math.atan2(target[1] - rx[1], target[0] - rx[0])
        for tx in geometry.tx_positions:
            phi_t = math.atan2(target[1] - tx[1], target[0] - tx[0])
            a = math.cos(phi_t) + math.cos(phi_r)
            b = math.sin(phi_t) + math.sin(phi_r)
            s_a += a
            s_aa += a * a
            s_b += b
            s_bb += b * b
    pairs = geometry.n_tx * geometry.n_rx
    norm = (1.0 + (beta / f_c) ** 2) * pairs
    e_x = s_bb - s_b ** 2 / norm
    e_y = s_aa - s_a ** 2 / norm
    scale = (3e8) ** 2 / (8 * math.pi ** 2 * snr * (f_c ** 2 + beta ** 2))
    return e_x, e_y, scale / e_x, scale / e_y


CRLB_FIX = {
    "e_x": 25.360439058798733,
    "e_y": 31.458872655416787,
    "sigma2_x": 1.797858741280194e-08,
    "sigma2_y": 1.449336330134329e-08,
}


def test_crlb_reference_fixture():
    geo = w.make_geometry("circular")
    rep = w.crlb(geo, [1100.0, 1100.0], snr=100.0, f_c=FC, beta_eff=5e6)
    assert rep.e_x == pytest.approx(CRLB_FIX["e_x"], rel=1e-12)
    assert rep.e_y == pytest.approx(CRLB_FIX["e_y"], rel=1e-12)
    assert rep.sigma2_x == pytest.approx(CRLB_FIX["sigma2_x"], rel=1e-12)
    assert rep.sigma2_y == pytest.approx(CRLB_FIX["sigma2_y"], rel=1e-12)
    ex, ey, s2x, s2y = _crlb_oracle(geo, [1100.0, 1100.0], 100.0, FC, 5e6)
    assert ex == pytest.approx(rep.e_x, rel=1e-12)
    assert ey == pytest.approx(rep.e_y, rel=1e-12)
    assert s2x == pytest.approx(rep.sigma2_x, rel=1e-12)
    assert s2y == pytest.approx(rep.sigma2_y, rel=1e-12)
    np.testing.assert_allclose(rep.crlb_block, np.diag([rep.sigma2_x, rep.sigma2_y]))


def test_crlb_snr_scaling_exact():
    geo = w.make_geometry("circular")
    for snr in (1.0, 10.0, 100.0):
        a = w.crlb(geo, [1100, 1100], snr=snr, f_c=FC, beta_eff=5e6)
        b = w.crlb(geo, [1100, 1100], snr=2 * snr, f_c=FC, beta_eff=5e6)
        assert b.sigma2_x == a.sigma2_x / 2
        assert b.sigma2_y == a.sigma2_y / 2


def cross_geometry():
    return w.AntennaGeometry(
        tx_positions=[[2000.0, 2000.0], [-2000.0, 2000.0],
                      [-2000.0, -2000.0], [2000.0, -2000.0]],
        rx_positions=[[3000.0, 0.0], [0.0, 3000.0], [-3000.0, 0.0], [0.0, -3000.0]],
        region=w.Rect(-100.0, 100.0, -100.0, 100.0))


def test_crlb_symmetric_geometry():
    rep = w.crlb(cross_geometry(), [0.0, 0.0], snr=50.0, f_c=FC, beta_eff=5e6)
    assert abs(rep.sigma2_x / rep.sigma2_y - 1) < 1e-10


def test_crlb_rotation_swaps_coefficients():
    geo = w.make_geometry("circular")
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])  # 90 degrees
    rotated = w.AntennaGeometry((rot @ geo.tx_positions.T).T,
                                (rot @ geo.rx_positions.T).T,
                                w.Rect(-1300, -1000, 1000, 1300))
    a = w.crlb(geo, [1100.0, 1100.0], snr=10.0, f_c=FC, beta_eff=5e6)
    b = w.crlb(rotated, rot @ [1100.0, 1100.0], snr=10.0, f_c=FC, beta_eff=5e6)
    assert b.e_x == pytest.approx(a.e_y, rel=1e-12)
    assert b.e_y == pytest.approx(a.e_x, rel=1e-12)


def test_crlb_rejects_bad_inputs():
    geo = w.make_geometry("circular")
    with pytest.raises(w.EstimationError):
        w.crlb(geo, [1100, 1100], snr=0.0, f_c=FC, beta_eff=5e6)
    with pytest.raises(w.EstimationError):
        w.crlb(geo, geo.tx_positions[0], snr=1.0, f_c=FC, beta_eff=5e6)
