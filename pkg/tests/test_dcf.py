"""Correlation-filter stack: closed forms, PSR, and the three DCF trackers."""

import numpy as np
import pytest

from rovlock.errors import InvalidConfig, InvalidSize
from rovlock.trackers.base import TrackStatus
from rovlock.trackers.csrt import (
    CsrtConfig,
    CsrtTracker,
    masked_objective,
    solve_masked_filter,
    solve_support_ridge,
    spatial_reliability_map,
    update_channel_weights,
)
from rovlock.trackers.dcf import (
    correlation_objective,
    gaussian_peak,
    peak_displacement,
    psr,
    response_sigma,
)
from rovlock.trackers.kcf import KcfConfig, KcfTracker, ridge_filter
from rovlock.trackers.mosse import MosseConfig, MosseTracker, train_filter
from rovlock.sim import RovState, VisualNoiseParams, apply_visual_disturbance, make_scene, render_frame
from rovlock.vision import BBox


def noise_frame(seed, h=240, w=320):
    """Blocky random texture, lightly smoothed so gradients are sane."""
    rng = np.random.default_rng(seed)
    img = np.kron(rng.random((h // 4, w // 4)), np.ones((4, 4)))
    img = (img + np.roll(img, 1, 0) + np.roll(img, 1, 1) + np.roll(img, (1, 1), (0, 1))) / 4.0
    return img


def follow_shifts(tracker, shifts, seed=3):
    """Init on a textured frame, roll the scene, return final center error."""
    frame = noise_frame(seed)
    box = BBox(130.0, 90.0, 48.0, 48.0)
    tracker.init(frame, box)
    tx = ty = 0
    res = None
    for dx, dy in shifts:
        tx += dx
        ty += dy
        moved = np.roll(frame, (ty, tx), axis=(0, 1))
        res = tracker.update(moved)
        assert res.status is TrackStatus.TRACKING
    return np.hypot(res.box.cx - (box.cx + tx), res.box.cy - (box.cy + ty))


# --------------------------------------------------------------------------
# closed-form trainers


def test_train_filter_single_bin_values():
    F = np.array([[2.0 + 0j]])
    G = np.array([[3.0 + 0j]])
    A, B = train_filter([F], [G])
    assert A[0, 0] == pytest.approx(6.0)
    assert B[0, 0] == pytest.approx(4.0)

    A2, B2 = train_filter([F, F], [G, G], eps=0.5)
    assert A2[0, 0] == pytest.approx(12.0)
    assert B2[0, 0] == pytest.approx(8.5)


def test_train_filter_identity_when_target_equals_patch():
    rng = np.random.default_rng(0)
    spectra = [rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6)) for _ in range(3)]
    A, B = train_filter(spectra, spectra)
    np.testing.assert_allclose(A / B, np.ones((6, 6)), atol=1e-12)


def test_ridge_filter_single_bin_values():
    F = np.array([[1.0 + 0j]])
    Y = np.array([[1.0 + 0j]])
    assert ridge_filter([F], [Y], 0.0)[0, 0] == pytest.approx(1.0)
    assert ridge_filter([F], [Y], 1.0)[0, 0] == pytest.approx(0.5)


def test_closed_forms_minimize_the_correlation_objective():
    # perturbing either trained filter can only increase its objective
    rng = np.random.default_rng(42)
    shape = (8, 8)
    spectra = [rng.standard_normal(shape) + 1j * rng.standard_normal(shape) for _ in range(3)]
    targets = [rng.standard_normal(shape) + 1j * rng.standard_normal(shape) for _ in range(3)]

    A, B = train_filter(spectra, targets)
    h_mosse = A / B
    base = correlation_objective(h_mosse, spectra, targets, 0.0)

    lam = 0.3
    h_ridge = ridge_filter(spectra, targets, lam)
    base_r = correlation_objective(h_ridge, spectra, targets, lam)

    for _ in range(50):
        delta = 0.1 * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        assert correlation_objective(h_mosse + delta, spectra, targets, 0.0) >= base - 1e-9
        assert correlation_objective(h_ridge + delta, spectra, targets, lam) >= base_r - 1e-9


def test_ridge_filter_matches_explicit_least_squares():
    # independent oracle: solve the circular cross-correlation ridge problem
    # as a dense linear system and compare spatial filters
    rng = np.random.default_rng(7)
    x = rng.standard_normal((8, 8))
    y = rng.standard_normal((8, 8))
    lam = 0.1

    n = x.size
    M = np.empty((n, n))
    for m in range(n):
        my, mx = divmod(m, 8)
        M[:, m] = np.roll(np.roll(x, -my, axis=0), -mx, axis=1).ravel()
    h_oracle = np.linalg.solve(M.T @ M + lam * np.eye(n), M.T @ y.ravel()).reshape(8, 8)

    H = ridge_filter([np.fft.fft2(x)], [np.fft.fft2(y)], lam)
    h_impl = np.real(np.fft.ifft2(H))
    np.testing.assert_allclose(h_impl, h_oracle, atol=1e-8)


# --------------------------------------------------------------------------
# response-map helpers


def test_gaussian_peak_location_and_value():
    g = gaussian_peak(64, 48, 4.0)
    assert g.shape == (48, 64)
    assert g[24, 32] == 1.0
    assert g.max() == 1.0
    # symmetric about the center
    assert g[24, 30] == pytest.approx(g[24, 34])
    assert g[20, 32] == pytest.approx(g[28, 32])


def test_gaussian_peak_rejects_degenerate_sizes():
    with pytest.raises(InvalidSize):
        gaussian_peak(0, 8, 2.0)
    with pytest.raises(InvalidSize):
        gaussian_peak(8, 8, 0.0)


def test_response_sigma_square_patch():
    assert response_sigma(64, 64) == pytest.approx(4.0)
    assert response_sigma(32, 8) == pytest.approx(1.0)


def psr_oracle(resp, excl=5):
    py, px = np.unravel_index(np.argmax(resp), resp.shape)
    vals = []
    for i in range(resp.shape[0]):
        for j in range(resp.shape[1]):
            if abs(i - py) <= excl and abs(j - px) <= excl:
                continue
            vals.append(resp[i, j])
    vals = np.asarray(vals)
    return (resp[py, px] - vals.mean()) / max(vals.std(), 1e-6)


def test_psr_matches_brute_force_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        resp = rng.standard_normal((24, 31))
        assert psr(resp) == pytest.approx(psr_oracle(resp), abs=1e-9)


def test_psr_affine_invariance():
    rng = np.random.default_rng(2)
    resp = rng.standard_normal((20, 20))
    assert psr(3.7 * resp - 2.1) == pytest.approx(psr(resp), abs=1e-9)


def test_psr_extremes():
    sharp = np.zeros((21, 21))
    sharp[10, 10] = 1.0
    assert psr(sharp) > 50.0
    assert psr(np.full((21, 21), 0.3)) == pytest.approx(0.0, abs=1e-9)


def test_psr_size_guards():
    with pytest.raises(InvalidSize):
        psr(np.zeros((8, 8)))
    with pytest.raises(InvalidSize):
        psr(np.zeros((15, 15)), exclusion=8)


def test_peak_displacement_integer_shifts_with_wrap():
    g = gaussian_peak(32, 32, 3.0)
    for dx, dy in [(0, 0), (3, -2), (-5, 4), (10, -10)]:
        rolled = np.roll(g, (dy, dx), axis=(0, 1))
        mx, my = peak_displacement(rolled)
        assert mx == pytest.approx(dx, abs=1e-9)
        assert my == pytest.approx(dy, abs=1e-9)


def test_peak_displacement_subpixel():
    xs = np.arange(32) - 16.3
    ys = np.arange(32) - 15.6
    gx, gy = np.meshgrid(xs, ys)
    resp = np.exp(-(gx * gx + gy * gy) / (2.0 * 9.0))
    mx, my = peak_displacement(resp)
    assert mx == pytest.approx(0.3, abs=0.1)
    assert my == pytest.approx(-0.4, abs=0.1)


# --------------------------------------------------------------------------
# adaptive filter tracker (pause/resume)


def test_mosse_static_scene_stays_put():
    frame = noise_frame(5)
    tr = MosseTracker()
    tr.init(frame, BBox(120.0, 80.0, 48.0, 48.0))
    for _ in range(5):
        res = tr.update(frame)
        assert res.status is TrackStatus.TRACKING
    assert abs(res.box.cx - 144.0) < 0.5
    assert abs(res.box.cy - 104.0) < 0.5
    assert res.confidence > 0.25


def test_mosse_follows_integer_shifts():
    err = follow_shifts(MosseTracker(), [(2, 1), (3, -2), (-1, 2), (1, 1)])
    assert err < 1.5


def test_mosse_pauses_on_junk_and_resumes():
    frame = noise_frame(9)
    junk = np.random.default_rng(1).random(frame.shape)
    tr = MosseTracker()
    tr.init(frame, BBox(130.0, 90.0, 48.0, 48.0))
    assert tr.update(frame).status is TrackStatus.TRACKING
    held = tr.update(junk)
    assert held.status is TrackStatus.LOST
    assert held.box == tr.update(junk).box  # position frozen while paused
    back = tr.update(frame)
    assert back.status is TrackStatus.TRACKING
    assert abs(back.box.cx - 154.0) < 1.0
    assert abs(back.box.cy - 114.0) < 1.0


def test_mosse_model_frozen_while_paused():
    frame = noise_frame(9)
    junk = np.random.default_rng(1).random(frame.shape)
    tr = MosseTracker()
    tr.init(frame, BBox(130.0, 90.0, 48.0, 48.0))
    tr.update(frame)
    A, B = tr.A.copy(), tr.B.copy()
    assert tr.update(junk).status is TrackStatus.LOST
    np.testing.assert_array_equal(tr.A, A)
    np.testing.assert_array_equal(tr.B, B)


def test_mosse_config_validation():
    with pytest.raises(InvalidConfig):
        MosseTracker(MosseConfig(learning_rate=0.0))
    with pytest.raises(InvalidConfig):
        MosseTracker(MosseConfig(learning_rate=1.5))
    with pytest.raises(InvalidConfig):
        MosseTracker(MosseConfig(psr_pause=-1.0))


# --------------------------------------------------------------------------
# regularized tracker


def test_kcf_self_detection_is_centered():
    frame = noise_frame(6)
    tr = KcfTracker()
    tr.init(frame, BBox(120.0, 80.0, 48.0, 48.0))
    for _ in range(3):
        res = tr.update(frame)
        assert res.status is TrackStatus.TRACKING
    assert abs(res.box.cx - 144.0) < 0.01
    assert abs(res.box.cy - 104.0) < 0.01


def test_kcf_follows_integer_shifts():
    err = follow_shifts(KcfTracker(), [(2, 1), (3, -2), (-1, 2), (1, 1)])
    assert err < 1.5


def test_kcf_stays_lost_without_recovery():
    frame = noise_frame(8)
    junk = np.random.default_rng(4).random(frame.shape)
    tr = KcfTracker()
    tr.init(frame, BBox(130.0, 90.0, 48.0, 48.0))
    assert tr.update(frame).status is TrackStatus.TRACKING
    lost = tr.update(junk)
    assert lost.status is TrackStatus.LOST
    # not recoverable: even the original scene cannot revive it
    again = tr.update(frame)
    assert again.status is TrackStatus.LOST
    assert again.box == lost.box


def test_kcf_full_rate_update_is_idempotent():
    frame = noise_frame(7)
    tr = KcfTracker(KcfConfig(learning_rate=1.0))
    tr.init(frame, BBox(120.0, 80.0, 48.0, 48.0))
    num, den = tr.A_num.copy(), tr.A_den.copy()
    tr.update(frame)
    np.testing.assert_allclose(tr.A_num, num, atol=1e-10)
    np.testing.assert_allclose(tr.A_den, den, atol=1e-10)


def test_kcf_kernel_spectrum_matches_naive_correlation():
    # the detection kernel is the summed circular cross-correlation of the
    # incoming planes with the template planes; check the spectral product
    # against a brute-force double loop, and that the response stays real
    rng = np.random.default_rng(19)
    n = 16
    templ = rng.standard_normal((2, n, n))
    z = rng.standard_normal((2, n, n))

    naive = np.zeros((n, n))
    for dy in range(n):
        for dx in range(n):
            acc = 0.0
            for c in range(2):
                acc += np.sum(np.roll(np.roll(z[c], -dy, axis=0), -dx, axis=1) * templ[c])
            naive[dy, dx] = acc

    Ft = np.fft.fft2(templ, axes=(-2, -1))
    Fz = np.fft.fft2(z, axes=(-2, -1))
    kernel_spec = np.sum(Fz * np.conj(Ft), axis=0)
    np.testing.assert_allclose(np.real(np.fft.ifft2(kernel_spec)), naive, atol=1e-9)

    U = np.sum((Ft * np.conj(Ft)).real, axis=0)
    Y = np.fft.fft2(gaussian_peak(n, n, 2.0))
    H = (Y * U) / (U * (U + 1e-4) + 1e-8)
    resp = np.fft.ifft2(H * kernel_spec)
    assert np.abs(resp.imag).max() < 1e-9


def test_kcf_config_validation():
    with pytest.raises(InvalidConfig):
        KcfTracker(KcfConfig(lam=-0.1))
    with pytest.raises(InvalidConfig):
        KcfTracker(KcfConfig(learning_rate=0.0))


# --------------------------------------------------------------------------
# reliability-masked tracker


def test_reliability_map_segments_bright_blob():
    rng = np.random.default_rng(3)
    gray = np.full((100, 100), 0.2) + 0.02 * rng.random((100, 100))
    gray[40:60, 38:58] = 0.8 + 0.02 * rng.random((20, 20))
    box = BBox(30.0, 32.0, 36.0, 34.0)
    mask = spatial_reliability_map(gray, box)
    assert mask.shape == (34, 36)

    truth = np.zeros_like(mask)
    truth[40 - 32 : 60 - 32, 38 - 30 : 58 - 30] = 1.0
    inter = np.sum((mask > 0) & (truth > 0))
    union = np.sum((mask > 0) | (truth > 0))
    assert inter / union >= 0.8


def test_reliability_map_uniform_image_falls_back_to_ones():
    gray = np.full((80, 80), 0.5)
    mask = spatial_reliability_map(gray, BBox(20.0, 20.0, 30.0, 30.0))
    assert mask.shape == (30, 30)
    assert np.all(mask == 1.0)


def test_reliability_map_is_binary():
    gray = noise_frame(12, h=120, w=160)
    mask = spatial_reliability_map(gray, BBox(50.0, 40.0, 40.0, 36.0))
    assert set(np.unique(mask)) <= {0.0, 1.0}


def test_masked_solver_full_mask_is_plain_ridge():
    rng = np.random.default_rng(21)
    ones = np.ones((16, 16))
    for _ in range(10):
        x = rng.standard_normal((16, 16))
        y = rng.standard_normal((16, 16))
        lam = 10 ** rng.uniform(-3, 0)
        X = np.fft.fft2(x)
        ridge = np.real(np.fft.ifft2(np.conj(X) * np.fft.fft2(y) / ((X * np.conj(X)).real + lam)))
        for iters in (1, 4):
            h = solve_masked_filter(x, y, ones, lam, iters=iters, eps=0.0)
            np.testing.assert_allclose(h, ridge, atol=1e-6)


def test_masked_solver_zero_mask_returns_zero_filter():
    rng = np.random.default_rng(22)
    x = rng.standard_normal((16, 16))
    y = rng.standard_normal((16, 16))
    h = solve_masked_filter(x, y, np.zeros((16, 16)), 0.05, iters=4, eps=0.0)
    assert np.abs(h).max() == 0.0


def test_masked_solver_objective_never_increases():
    rng = np.random.default_rng(23)
    for _ in range(20):
        x = rng.standard_normal((16, 16))
        y = rng.standard_normal((16, 16))
        mask = (rng.random((16, 16)) < rng.uniform(0.2, 0.9)).astype(float)
        lam = 10 ** rng.uniform(-3, 0)
        objs = [
            masked_objective(x, y, mask, solve_masked_filter(x, y, mask, lam, iters=k, eps=0.0), lam)
            for k in range(1, 6)
        ]
        for prev, cur in zip(objs, objs[1:]):
            assert cur <= prev + 1e-9 * max(1.0, objs[0])


def support_objective(x, y, h, lam):
    """Correlation-convention ridge objective used by solve_support_ridge."""
    r = np.real(np.fft.ifft2(np.conj(np.fft.fft2(x)) * np.fft.fft2(h)))
    return float(np.sum((r - y) ** 2) + lam * np.sum(h * h))


def test_support_ridge_full_support_matches_closed_form():
    rng = np.random.default_rng(31)
    for _ in range(5):
        x = rng.standard_normal((16, 16))
        y = rng.standard_normal((16, 16))
        lam = 10 ** rng.uniform(-3, 0)
        X = np.fft.fft2(x)
        closed = np.real(np.fft.ifft2(X * np.fft.fft2(y) / ((X * np.conj(X)).real + lam)))
        h = solve_support_ridge(x, y, np.ones((16, 16)), lam, steps=60)
        np.testing.assert_allclose(h, closed, atol=1e-9)


def test_support_ridge_confines_taps_and_beats_perturbations():
    rng = np.random.default_rng(32)
    for _ in range(5):
        x = rng.standard_normal((16, 16))
        y = rng.standard_normal((16, 16))
        lam = 10 ** rng.uniform(-3, 0)
        supp = rng.random((16, 16)) < 0.4
        h = solve_support_ridge(x, y, supp.astype(float), lam, steps=60)
        assert np.abs(h[~supp]).max() == 0.0
        base = support_objective(x, y, h, lam)
        for _ in range(100):
            tweak = np.where(supp, 0.01 * rng.standard_normal(h.shape), 0.0)
            assert support_objective(x, y, h + tweak, lam) > base


def test_support_ridge_warm_start_is_stable_at_the_solution():
    rng = np.random.default_rng(33)
    x = rng.standard_normal((16, 16))
    y = rng.standard_normal((16, 16))
    supp = (rng.random((16, 16)) < 0.5).astype(float)
    h = solve_support_ridge(x, y, supp, 0.05, steps=60)
    again = solve_support_ridge(x, y, supp, 0.05, steps=12, init=h)
    np.testing.assert_allclose(again, h, atol=1e-12)


def test_channel_weights_starve_a_dead_channel():
    weights = np.full(3, 1.0 / 3.0)
    live = gaussian_peak(16, 16, 2.0)
    dead = np.zeros((16, 16))
    for _ in range(20):
        weights = update_channel_weights(weights, [live, live, dead], rate=0.2)
        assert weights.sum() == pytest.approx(1.0)
        assert np.all(weights >= 0.0)
    assert weights[2] < 0.02
    assert weights[0] == pytest.approx(weights[1])


def test_csrt_static_scene_stays_put():
    frame = noise_frame(14)
    tr = CsrtTracker()
    box = BBox(120.0, 80.0, 48.0, 48.0)
    tr.init(frame, box)
    for _ in range(5):
        res = tr.update(frame)
        assert res.status is TrackStatus.TRACKING
    assert abs(res.box.cx - box.cx) < 0.5
    assert abs(res.box.cy - box.cy) < 0.5
    assert abs(res.box.w - box.w) / box.w < 0.05


def test_csrt_follows_integer_shifts():
    err = follow_shifts(CsrtTracker(), [(2, 1), (3, -2), (-1, 2), (1, 1)])
    assert err < 1.5


def test_csrt_tracks_through_partial_occlusion():
    # scripted scenario: the sim's pole occluder parked over the target,
    # sized so the bar covers 40% of the box
    scene = make_scene("structure")
    frame, tb = render_frame(scene, RovState())
    tr = CsrtTracker()
    tr.init(frame, tb)
    noise = VisualNoiseParams(bubble_rate=0.0, turbidity=1.0, occluder_width=0.40 * tb.w)
    res = None
    for _ in range(5):
        # frame_index 0 keeps the sweep at its center phase, bar over the box
        img = apply_visual_disturbance(frame, tb, noise, seed=0, frame_index=0)
        res = tr.update(img)
        assert res.status is TrackStatus.TRACKING
    err = np.hypot(res.box.cx - tb.cx, res.box.cy - tb.cy)
    assert err <= 8.0


def test_csrt_weights_stay_normalized_while_tracking():
    frame = noise_frame(18)
    tr = CsrtTracker()
    tr.init(frame, BBox(120.0, 80.0, 48.0, 48.0))
    for _ in range(4):
        tr.update(frame)
        assert tr.weights.sum() == pytest.approx(1.0)
        assert np.all(tr.weights >= 0.0)


def test_csrt_goes_lost_on_junk_and_stays_lost():
    frame = noise_frame(17)
    junk = np.random.default_rng(6).random(frame.shape)
    tr = CsrtTracker()
    tr.init(frame, BBox(130.0, 90.0, 48.0, 48.0))
    assert tr.update(frame).status is TrackStatus.TRACKING
    lost = tr.update(junk)
    assert lost.status is TrackStatus.LOST
    assert tr.update(frame).status is TrackStatus.LOST


def test_csrt_config_validation():
    with pytest.raises(InvalidConfig):
        CsrtTracker(CsrtConfig(solver_iters=0))
    with pytest.raises(InvalidConfig):
        CsrtTracker(CsrtConfig(weight_rate=0.0))


# --------------------------------------------------------------------------
# all three on rendered scenes


@pytest.mark.parametrize("tracker_cls", [MosseTracker, KcfTracker, CsrtTracker])
def test_dcf_trackers_recover_small_translation_on_rendered_frames(tracker_cls):
    from rovlock.sim import RovState, make_scene, render_frame

    scene = make_scene("structure")
    state0 = RovState()
    frame0, box0 = render_frame(scene, state0)
    tr = tracker_cls()
    tr.init(frame0, box0)

    # 0.04 m of sway at 1.5 m depth is exactly an 8 px image shift
    frame1, box1 = render_frame(scene, RovState(x=0.04))
    res = tr.update(frame1)
    assert res.status is TrackStatus.TRACKING
    assert abs(res.box.cx - box1.cx) <= 0.5
    assert abs(res.box.cy - box1.cy) <= 0.5
