"""Illumination geometry, pattern design, forward model, transfer function."""

import math

import numpy as np
import pytest

from conftest import bump_field
from phaseuq.errors import (
    EmptyRegion,
    FrequencyOutOfGrid,
    IndexOutOfRange,
    NegativeIntensity,
    SizeMismatch,
    ZeroBackground,
)
from phaseuq.grid import ComplexRaster, RealRaster, crop_center_spectrum, fft2_unitary
from phaseuq.optics import (
    IlluminationPattern,
    LedArrayGeometry,
    add_noise,
    design_patterns,
    forward_single_led,
    led_frequency,
    make_pupil,
    phase_transfer_function,
    synthesize_multiplexed,
)

LAM = 0.532


def std_geometry(pitch=2.0, height=60.0, rows=15):
    return LedArrayGeometry(rows, rows, pitch, height, LAM, (rows // 2, rows // 2))


def setup_simulation(n_hi=256, n_det=64, pitch_hi=0.5, na_obj=0.1):
    pupil = make_pupil(na_obj, LAM, (n_det, n_det), pitch_hi * n_hi / n_det)
    return pupil


def phase_object(phi, pitch=0.5):
    return ComplexRaster(np.exp(1j * phi), pitch)


# ---- led_frequency ----


def test_center_led_frequency_is_zero():
    g = std_geometry()
    u, na = led_frequency(g, g.center[0] * g.cols + g.center[1])
    assert na == 0.0 and np.all(u == 0.0)


def test_led_at_height_distance_gives_sin45():
    g = LedArrayGeometry(3, 3, 30.0, 30.0, LAM, (1, 1))
    u, na = led_frequency(g, 1 * 3 + 2)  # offset (0, 1): r = 30 mm = height
    assert abs(na - math.sin(math.radians(45.0))) < 1e-12
    assert abs(np.hypot(*u) - na / LAM) < 1e-12


def test_synthetic_aperture_na_sum():
    # illumination NA 0.41 on a 0.1 NA objective -> synthetic NA 0.51
    height = 50.0
    r = height * math.tan(math.asin(0.41))
    g = LedArrayGeometry(21, 21, r / 10.0, height, LAM, (10, 10))
    u, na = led_frequency(g, 10 * 21 + 20)  # offset (0, 10)
    assert abs(na - 0.41) < 1e-12
    assert abs(np.hypot(*u) * LAM + 0.1 - 0.51) < 1e-12


def test_led_frequency_bounds_check():
    g = std_geometry()
    with pytest.raises(IndexOutOfRange):
        led_frequency(g, g.n_leds)


# ---- design_patterns ----


def test_five_pattern_contract():
    g = std_geometry(pitch=2.0, height=60.0)
    na_obj, na_max = 0.15, 0.41
    pats = design_patterns(g, na_obj, na_max)
    assert len(pats) == 5
    bf = [p for p in pats if p.label.startswith("bf")]
    df = [p for p in pats if p.label.startswith("df")]
    assert len(bf) == 2 and len(df) == 3

    for p in bf:
        assert all(g.led_na(i) <= na_obj for i in p.led_indices)
    for p in df:
        assert all(na_obj < g.led_na(i) <= na_max for i in p.led_indices)

    # complete coverage: every admissible LED appears in >= 1 pattern of its class
    bf_union = set().union(*(p.led_indices for p in bf))
    df_union = set().union(*(p.led_indices for p in df))
    for led in range(g.n_leds):
        na = g.led_na(led)
        if na <= na_obj:
            assert led in bf_union, f"brightfield LED {led} uncovered"
        elif na <= na_max:
            assert led in df_union, f"darkfield LED {led} uncovered"


def test_patterns_are_point_asymmetric():
    g = std_geometry(pitch=2.0, height=60.0)
    for p in design_patterns(g, 0.15, 0.41):
        members = set(p.led_indices)
        reflected_absent = 0
        for led in members:
            dr, dc = g.offsets(led)
            rr, rc = g.center[0] - dr, g.center[1] - dc
            mirror = rr * g.cols + rc
            if not (0 <= rr < g.rows and 0 <= rc < g.cols) or mirror not in members:
                reflected_absent += 1
        assert reflected_absent >= 1, f"pattern {p.label} is point-symmetric"


def test_boundary_na_is_brightfield():
    # an LED exactly at na_obj belongs to the brightfield class (closed bound)
    g = std_geometry(pitch=2.0, height=60.0)
    na_ring1 = g.led_na(g.center[0] * g.cols + g.center[1] + 1)
    pats = design_patterns(g, na_ring1, 0.41)
    bf_union = set().union(*(p.led_indices for p in pats[:2]))
    assert g.center[0] * g.cols + g.center[1] + 1 in bf_union


def test_empty_annulus_raises():
    g = std_geometry(pitch=2.0, height=60.0)
    na1 = g.led_na(g.center[0] * g.cols + g.center[1] + 1)
    with pytest.raises(EmptyRegion):
        design_patterns(g, na1, na1 * 1.001)


# ---- make_pupil ----


def test_pupil_support_and_symmetry():
    na, lam, n, pitch = 0.25, 0.5, 128, 0.25
    pupil = make_pupil(na, lam, (n, n), pitch)
    P = pupil.raster.data.real
    assert set(np.unique(P)) <= {0.0, 1.0}
    assert P[n // 2, n // 2] == 1.0
    count = P.sum()
    analytic = math.pi * (na / lam * n * pitch) ** 2
    assert abs(count - analytic) / analytic < 0.05
    # quarter turn about the DC pixel (not the half-pixel array centre)
    quarter = np.roll(P[:, ::-1], 1, axis=1).T
    assert np.array_equal(P, quarter)


# ---- forward model ----


def test_flat_object_uniform_intensity():
    pupil = setup_simulation()
    flat = ComplexRaster(np.ones((256, 256), dtype=complex), 0.5)
    img = forward_single_led(flat, pupil, np.zeros(2), (64, 64))
    assert img.data.std() / img.data.mean() < 1e-10
    assert abs(img.data.mean() - 1.0) < 1e-10


def test_darkfield_led_blocks_flat_object():
    pupil = setup_simulation()
    g = std_geometry()
    flat = ComplexRaster(np.ones((256, 256), dtype=complex), 0.5)
    led = g.center[0] * g.cols + g.center[1] + 6  # na ~ 0.196 > 0.1
    u, na = led_frequency(g, led)
    assert na > 0.1
    img = forward_single_led(flat, pupil, u, (64, 64))
    assert img.data.max() < 1e-10


def test_intensity_nonnegative():
    pupil = setup_simulation()
    phi = bump_field(256, seed=11, amplitude=1.5)
    img = forward_single_led(phase_object(phi), pupil, np.array([0.0, 0.05]), (64, 64))
    assert np.all(img.data >= 0.0)


def test_forward_shape_and_bounds_errors():
    pupil = setup_simulation()
    flat = ComplexRaster(np.ones((256, 256), dtype=complex), 0.5)
    with pytest.raises(SizeMismatch):
        forward_single_led(flat, pupil, np.zeros(2), (96, 96))
    # a shift that pushes the passband off the sampled spectrum
    with pytest.raises(FrequencyOutOfGrid):
        forward_single_led(flat, pupil, np.array([0.0, 0.9]), (64, 64))


def test_weak_grating_modulation_at_grating_frequency():
    # an off-axis brightfield LED makes a weak phase grating visible; the
    # zero-phantom image is the null baseline
    n_hi, n_det, pitch = 128, 32, 1.0
    na_obj = 0.05
    pupil = make_pupil(na_obj, 0.5, (n_det, n_det), pitch * n_hi / n_det)
    xx = np.arange(n_hi)
    f_bins = 5
    phi = 0.01 * np.cos(2 * math.pi * f_bins * xx / n_hi)[None, :].repeat(n_hi, axis=0)
    u = np.array([0.0, 8.0 / (n_hi * pitch)])
    img = forward_single_led(ComplexRaster(np.exp(1j * phi), pitch), pupil, u, (n_det, n_det))
    ref = forward_single_led(ComplexRaster(np.ones((n_hi, n_hi), complex), pitch), pupil, u, (n_det, n_det))
    S = np.abs(fft2_unitary(RealRaster(img.data, img.pitch)).data)
    S0 = np.abs(fft2_unitary(RealRaster(ref.data, ref.pitch)).data)
    peak = S[n_det // 2, n_det // 2 + f_bins]
    assert peak > 100.0 * (S0[n_det // 2, n_det // 2 + f_bins] + 1e-15)


# ---- multiplexed synthesis ----


def test_singleton_pattern_matches_single_led():
    pupil = setup_simulation()
    g = std_geometry()
    phi = bump_field(256, seed=3, amplitude=0.8)
    obj = phase_object(phi)
    led = g.center[0] * g.cols + g.center[1] + 1
    pat = IlluminationPattern("bf-x", ((led, 1.0),))
    u, _ = led_frequency(g, led)
    a = synthesize_multiplexed(obj, pupil, pat, g, (64, 64))
    b = forward_single_led(obj, pupil, u, (64, 64))
    assert np.array_equal(a.data, b.data)


def test_disjoint_pattern_additivity():
    pupil = setup_simulation()
    g = std_geometry()
    obj = phase_object(bump_field(256, seed=4, amplitude=0.5))
    c = g.center[0] * g.cols + g.center[1]
    pat_a = IlluminationPattern("bf-a", ((c + 1, 1.0), (c - 1, 0.5)))
    pat_b = IlluminationPattern("bf-b", ((c + g.cols, 2.0),))
    pat_ab = IlluminationPattern("bf-ab", tuple(list(pat_a.leds) + list(pat_b.leds)))
    im_ab = synthesize_multiplexed(obj, pupil, pat_ab, g, (64, 64))
    im_a = synthesize_multiplexed(obj, pupil, pat_a, g, (64, 64))
    im_b = synthesize_multiplexed(obj, pupil, pat_b, g, (64, 64))
    assert np.max(np.abs(im_ab.data - im_a.data - im_b.data)) < 1e-12


def test_five_designed_patterns_yield_five_images():
    pupil = setup_simulation()
    g = std_geometry()
    obj = phase_object(bump_field(256, seed=5, amplitude=0.6))
    pats = design_patterns(g, 0.1, 0.3)
    images = [synthesize_multiplexed(obj, pupil, p, g, (64, 64)) for p in pats]
    assert len(images) == 5
    assert all(im.shape == (64, 64) for im in images)


# ---- phase transfer function ----


def _half_disc_pattern(g, na_obj, side="up"):
    leds = []
    for led in range(g.n_leds):
        if g.led_na(led) > na_obj:
            continue
        dr, dc = g.offsets(led)
        if (side == "up" and -dr >= 0) or (side == "right" and dc >= 0):
            leds.append((led, 1.0))
    return IlluminationPattern(f"bf-{side}", tuple(leds))


def test_symmetric_source_has_zero_transfer():
    pupil = setup_simulation()
    g = std_geometry()
    c = g.center[0] * g.cols + g.center[1]
    sym = IlluminationPattern("bf-sym", ((c + 1, 1.0), (c - 1, 1.0), (c + g.cols, 0.5), (c - g.cols, 0.5)))
    H = phase_transfer_function(sym, pupil, g).data
    assert np.max(np.abs(H)) < 1e-12


def test_transfer_function_zero_at_dc_imaginary_odd():
    pupil = setup_simulation()
    g = std_geometry()
    for side in ("up", "right"):
        H = phase_transfer_function(_half_disc_pattern(g, 0.1, side), pupil, g).data
        n = H.shape[0]
        assert abs(H[n // 2, n // 2]) < 1e-14
        assert np.max(np.abs(H.real)) < 1e-10
        reflected = np.roll(H[::-1, ::-1], (1, 1), axis=(0, 1))
        assert np.max(np.abs(H + reflected)) < 1e-10


def test_weak_object_linearization_matches_forward_model():
    # half-disc source: H*Phi predicts the mean-normalized intensity
    # spectrum of the nonlinear simulation to < 2% relative error
    pupil = setup_simulation()
    g = std_geometry()
    phi = bump_field(256, seed=0, amplitude=0.01)
    obj = phase_object(phi)
    Phi = crop_center_spectrum(fft2_unitary(RealRaster(phi, 0.5)), 64, 64).data
    for side in ("up", "right"):
        pat = _half_disc_pattern(g, 0.1, side)
        img = synthesize_multiplexed(obj, pupil, pat, g, (64, 64))
        ihat = (img.data - img.data.mean()) / img.data.mean()
        S = fft2_unitary(RealRaster(ihat, img.pitch)).data
        H = phase_transfer_function(pat, pupil, g).data
        model = H * Phi
        band = np.abs(model) > 1e-3 * np.abs(model).max()
        rel = np.linalg.norm((S - model)[band]) / np.linalg.norm(model[band])
        assert rel < 0.02, f"{side}: rel err {rel}"


def test_dark_source_raises_zero_background():
    pupil = setup_simulation()
    g = std_geometry()
    dark_led = 0  # corner LED, far outside the 0.1 NA pupil
    assert g.led_na(dark_led) > 0.1
    with pytest.raises(ZeroBackground):
        phase_transfer_function(IlluminationPattern("df-x", ((dark_led, 1.0),)), pupil, g)


# ---- noise ----


def test_gaussian_sigma_zero_is_identity_and_seeded():
    img = RealRaster(bump_field(64, seed=9, amplitude=2.0))
    assert np.array_equal(add_noise(img, ("gaussian", 0.0), 1).data, img.data)
    a = add_noise(img, ("gaussian", 0.1), 42).data
    b = add_noise(img, ("gaussian", 0.1), 42).data
    assert np.array_equal(a, b)


def test_poisson_preserves_mean():
    img = RealRaster(np.ones((128, 128)))
    noisy = add_noise(img, ("poisson", 1.0e4), 7)
    assert abs(noisy.data.mean() - 1.0) < 0.01
    with pytest.raises(NegativeIntensity):
        add_noise(RealRaster(np.full((8, 8), -1.0)), ("poisson", 100.0), 0)
