import math
import warnings

import numpy as np
import pytest

import wsmimo as w
from wsmimo.scene import OperatingConditionWarning


def small_scene(k_targets=1, seed=0, q=32, velocities=None):
    """Compact scenario for fast synthesis tests (16-chip codes, 32 pulses)."""
    geo = w.make_geometry("circular", n_tx=2, n_rx=3)
    cfg = w.RadarConfig(n_chips=16, n_pulses=q, t_pri=25e-3, t_b=1e-7)
    rng = np.random.default_rng(seed)
    pos = rng.uniform([1000, 1000], [1200, 1200], size=(k_targets, 2))
    vel = (np.asarray(velocities) if velocities is not None
           else rng.uniform(-15, 15, size=(k_targets, 2)))
    targets = tuple(w.Target(position=p, velocity=v) for p, v in zip(pos, vel))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scene = w.SceneModel(geometry=geo, targets=targets, config=cfg)
    codes = w.hadamard_codes(2, 16)
    window = w.common_range_window(geo, cfg.sample_interval)
    return scene, codes, window


def test_radar_config_validation():
    with pytest.raises(w.SceneError):
        w.RadarConfig(t_pri=1e-6)  # shorter than the pulse
    with pytest.raises(w.SceneError):
        w.RadarConfig(n_pulses=0)


def test_reference_config_strains_slow_target_conditions():
    # 5 GHz carrier with a 25 ms PRI leaves ~2.4 m/s of unambiguous velocity,
    # so the 10 m/s reference target must trip the C1 check (and C2's range
    # walk); the model still runs, it only warns
    geo = w.make_geometry("circular")
    with pytest.warns(OperatingConditionWarning, match="C1-velocity"):
        scene = w.SceneModel(
            geometry=geo,
            targets=(w.Target(position=[1100, 1100], velocity=[10, 10]),),
            config=w.RadarConfig())
    names = {c.name: c.ok for c in scene.check_conditions()}
    assert not names["C1-velocity"]
    assert not names["C2-delay-drift"]
    assert names["narrowband"]
    assert names["C5-reflectivity"]


def test_scene_rejects_target_outside_region():
    geo = w.make_geometry("circular")
    with pytest.raises(w.SceneError):
        w.SceneModel(geometry=geo,
                     targets=(w.Target(position=[0, 0], velocity=[0, 0]),),
                     config=w.RadarConfig())


def test_doppler_steering_first_entry_unity():
    d = w.doppler_steering(312.0, 128, 25e-3)
    assert d[0] == 1.0 + 0j
    np.testing.assert_allclose(np.abs(d), 1.0, atol=1e-12)


def test_synthesize_rank_one_single_target(fig_ctx):
    z = fig_ctx.clean[(2, 9)]
    s = np.linalg.svd(z.values, compute_uv=False)
    assert s[1] / s[0] < 1e-10
    assert z.shape == (128, 264)


def test_synthesize_duplicate_targets_collapse_rank():
    scene, codes, window = small_scene(k_targets=1, seed=4)
    t = scene.targets[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dup = w.SceneModel(geometry=scene.geometry, targets=(t, t),
                           config=scene.config)
    z = w.synthesize_clean(dup, (0, 1), codes, window)
    s = np.linalg.svd(z.values, compute_uv=False)
    assert s[1] / s[0] < 1e-10


def test_synthesize_two_distinct_targets_rank_two():
    scene, codes, window = small_scene(k_targets=2, seed=7,
                                       velocities=[[12, 3], [-8, 9]])
    z = w.synthesize_clean(scene, (1, 2), codes, window)
    s = np.linalg.svd(z.values, compute_uv=False)
    assert s[1] / s[0] > 1e-6
    assert s[2] / s[0] < 1e-10


def test_synthesis_matches_direct_factorization(fig_ctx):
    # Z = D diag(sqrt(E) beta) Gamma rebuilt by hand for the reference pair
    scene = fig_ctx.scene
    codes = fig_ctx.codes
    win = fig_ctx.window
    m, n = 2, 9
    tx, rx = scene.geometry.tx_positions[m], scene.geometry.rx_positions[n]
    f = scene.doppler(m, n, 0)
    off = w.sample_offset(win, tx, rx, scene.targets[0].position)
    gamma = np.zeros((1, 264), dtype=complex)
    gamma[0, off:off + 64] = codes.codes[m]
    d = w.doppler_steering(f, 128, 25e-3)[:, None]
    expect = d @ gamma
    np.testing.assert_allclose(fig_ctx.clean[(m, n)].values, expect, atol=1e-12)


def test_energy_bookkeeping_non_overlapping():
    scene, codes, window = small_scene(k_targets=1, seed=2)
    z = w.synthesize_clean(scene, (0, 0), codes, window)
    expect = scene.config.energy * codes.length * scene.config.n_pulses
    assert np.linalg.norm(z.values) ** 2 == pytest.approx(expect, rel=1e-12)


def test_add_noise_infinite_snr_is_exact():
    scene, codes, window = small_scene()
    z = w.synthesize_clean(scene, (0, 0), codes, window)
    y = w.add_noise(z, math.inf, seed=1)
    np.testing.assert_array_equal(y.values, z.values)
    assert y.noise_var == 0.0


def test_add_noise_variance_calibration():
    # empirical variance over ~1e6 entries within 1% of sigma^2
    rng_matrix = w.PulseDataMatrix(pair=(0, 0), values=np.ones((1000, 1000)),
                                   state="clean")
    y = w.add_noise(rng_matrix, snr_db=3.0, seed=9)
    sigma2 = y.noise_var
    emp = np.mean(np.abs(y.values - 1.0) ** 2)
    assert emp == pytest.approx(sigma2, rel=0.01)
    assert sigma2 == pytest.approx(10 ** (-0.3), rel=1e-12)


def test_noise_convention_scales_with_window_occupancy(fig_ctx):
    # mean clean power per entry: E * K * N / n2 for unit reflectivities
    z = fig_ctx.clean[(0, 0)]
    expect = 64.0 / 264.0 / 10.0 ** 2
    assert w.noise_variance_for(z, 20.0) == pytest.approx(expect, rel=1e-12)


def test_noise_per_pair_substreams_differ(fig_ctx):
    za = fig_ctx.clean[(0, 0)]
    zb = fig_ctx.clean[(0, 1)]
    seed = 1234
    ya = w.add_noise(za, 20.0, seed=w.derive_seed(seed, "noise", 0, 0, 0))
    yb = w.add_noise(zb, 20.0, seed=w.derive_seed(seed, "noise", 0, 1, 0))
    assert not np.allclose(ya.values - za.values, yb.values - zb.values)


def test_add_noise_deterministic():
    scene, codes, window = small_scene()
    z = w.synthesize_clean(scene, (0, 0), codes, window)
    a = w.add_noise(z, 10.0, seed=5)
    b = w.add_noise(z, 10.0, seed=5)
    np.testing.assert_array_equal(a.values, b.values)


def test_subsample_rate_one_keeps_everything():
    scene, codes, window = small_scene()
    z = w.synthesize_clean(scene, (0, 0), codes, window)
    x = w.subsample(z, 1.0, seed=0)
    assert x.h == z.values.size
    np.testing.assert_array_equal(x.values, z.values)


def test_subsample_count_and_zeroing(fig_ctx):
    z = fig_ctx.clean[(0, 0)]
    x = w.subsample(z, 0.5, seed=11)
    assert x.h == 16896  # round(0.5 * 128 * 264)
    assert np.all(x.values[~x.mask] == 0)
    np.testing.assert_array_equal(x.values[x.mask], z.values[x.mask])


def test_subsample_rejects_bad_rate():
    scene, codes, window = small_scene()
    z = w.synthesize_clean(scene, (0, 0), codes, window)
    for rate in (0.0, -0.1, 1.5):
        with pytest.raises(w.SceneError):
            w.subsample(z, rate, seed=0)


def test_subsample_row_counts_binomial():
    # per-row observation counts over many seeds stay inside 3-sigma bands
    scene, codes, window = small_scene()
    z = w.synthesize_clean(scene, (0, 0), codes, window)
    n1, n2 = z.shape
    rate = 0.4
    counts = np.zeros(n1)
    trials = 200
    for seed in range(trials):
        counts += w.subsample(z, rate, seed=seed).mask.sum(axis=1)
    mean = rate * n2 * trials
    sigma = math.sqrt(trials * n2 * rate * (1 - rate))
    assert np.all(np.abs(counts - mean) < 3.5 * sigma)


def test_projection_idempotent(fig_ctx):
    z = fig_ctx.clean[(0, 0)]
    x = w.subsample(z, 0.3, seed=2)
    again = w.apply_mask(x, x.mask)
    np.testing.assert_array_equal(again.values, x.values)
    np.testing.assert_array_equal(again.mask, x.mask)


def test_partial_state_invariant_enforced():
    with pytest.raises(w.SceneError):
        w.PulseDataMatrix(pair=(0, 0), values=np.ones((2, 2)), state="partial",
                          mask=np.array([[True, False], [True, True]]))


def test_matrix_csv_roundtrip(tmp_path, fig_ctx):
    z = fig_ctx.clean[(1, 3)]
    x = w.subsample(w.add_noise(z, 15.0, seed=3), 0.25, seed=4)
    path = tmp_path / "pair.csv"
    w.save_matrix_csv(x, path)
    back = w.load_matrix_csv(path)
    assert back.pair == x.pair and back.state == "partial"
    assert back.noise_var == pytest.approx(x.noise_var, rel=1e-15)
    np.testing.assert_array_equal(back.mask, x.mask)
    np.testing.assert_allclose(back.values, x.values, rtol=0, atol=0)
