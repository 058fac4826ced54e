import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cascade_spe.angular import (AngularProfile, BFPImage, bfp_to_angular, collection_efficiency,
                                 efficiency_curve)


def ring_image(shape, center, radius_px, width_px=1.5):
    rr, cc = np.indices(shape, dtype=float)
    r = np.hypot(rr - center[0], cc - center[1])
    return np.exp(-0.5 * ((r - radius_px) / width_px) ** 2)


def isotropic(na_max=1.0, n=90):
    return AngularProfile.from_function(lambda t: np.ones_like(t), na_max, n)


# -- BFP to angular profile ------------------------------------------------------

def test_uniform_image_without_correction_is_flat():
    img = BFPImage(np.full((201, 201), 3.0), 1 / 100, (100, 100), 1.0)
    prof = bfp_to_angular(img, 45, apodization=False)
    assert np.all(prof.intensity == 3.0)
    assert not prof.apodization


def test_uniform_image_with_correction_follows_cosine():
    img = BFPImage(np.full((401, 401), 2.0), 1 / 200, (200, 200), 0.95)
    prof = bfp_to_angular(img, 40)
    assert prof.apodization
    # each bin is the pixel mean of 2 cos(theta); compare against that directly
    rr, cc = np.indices((401, 401))
    na = np.hypot(rr - 200.0, cc - 200.0) * (1 / 200)
    theta = np.degrees(np.arcsin(na[na <= 0.95]))
    idx = np.minimum(np.searchsorted(prof.theta_bin_edges, theta, side="right") - 1, 39)
    ref = np.bincount(idx, 2 * np.cos(np.radians(theta)), 40) / np.bincount(idx, minlength=40)
    filled = prof.n_pixels > 0
    np.testing.assert_allclose(prof.intensity[filled], ref[filled], rtol=1e-12)
    np.testing.assert_allclose(prof.intensity, 2 * np.cos(np.radians(prof.theta_centers)), rtol=0.01)


def test_ring_at_na_half_peaks_at_30_degrees():
    img = BFPImage(ring_image((401, 401), (200, 200), 100), 1 / 200, (200, 200), 1.0)
    prof = bfp_to_angular(img, 90)
    peak = prof.theta_centers[np.argmax(prof.intensity)]
    assert abs(peak - math.degrees(math.asin(0.5))) <= 1.0


def test_off_center_ring_recovers_same_peak():
    center = (230.3, 180.7)
    img = BFPImage(ring_image((500, 500), center, 100), 1 / 200, center, 1.0)
    prof = bfp_to_angular(img, 90)
    centred = bfp_to_angular(BFPImage(ring_image((401, 401), (200, 200), 100), 1 / 200, (200, 200), 1.0), 90)
    step = prof.theta_bin_edges[1] - prof.theta_bin_edges[0]
    assert abs(prof.theta_centers[np.argmax(prof.intensity)]
               - centred.theta_centers[np.argmax(centred.intensity)]) <= step


def test_pixels_beyond_na_max_excluded():
    img = np.ones((201, 201))
    rr, cc = np.indices(img.shape)
    img[np.hypot(rr - 100, cc - 100) > 50] = 1e6
    prof = bfp_to_angular(BFPImage(img, 1 / 100, (100, 100), 0.5), 10, apodization=False)
    assert np.all(prof.intensity == 1.0)


@pytest.mark.parametrize("center", [(-1.0, 10.0), (10.0, 30.0), (20.6, 0.0)])
def test_center_outside_image_rejected(center):
    img = BFPImage(np.ones((21, 21)), 0.1, center, 1.0)
    with pytest.raises(ValueError, match="outside"):
        bfp_to_angular(img)


def test_bad_inputs_rejected():
    with pytest.raises(ValueError):
        bfp_to_angular(BFPImage(np.ones((21, 21)), 0.1, (10, 10), 1.0), 3)
    with pytest.raises(ValueError):
        BFPImage(-np.ones((3, 3)), 0.1, (1, 1), 1.0)
    with pytest.raises(ValueError):
        BFPImage(np.ones((3, 3)), 0.1, (1, 1), 1.2)
    # oil immersion allows na_max above one when declared
    assert BFPImage(np.ones((3, 3)), 0.1, (1, 1), 1.3, immersion_index=1.518).theta_max < 90


# -- collection efficiency -------------------------------------------------------

def test_isotropic_half_na():
    assert collection_efficiency(isotropic(), 0.5) == pytest.approx(1 - math.cos(math.radians(30)), abs=1e-4)
    assert collection_efficiency(isotropic(), 0.5) == pytest.approx(0.13397, abs=1e-4)


def test_full_aperture_is_one():
    rng = np.random.default_rng(1)
    for na_max in (0.3, 0.9, 1.0):
        prof = AngularProfile.from_function(lambda t: rng.uniform(0, 1, t.shape), na_max, 37)
        assert collection_efficiency(prof, na_max) == 1.0


def test_ring_support():
    ring = AngularProfile.from_function(lambda t: (np.abs(t - 30.5) < 0.6).astype(float), 1.0, 90)
    assert collection_efficiency(ring, 0.22) == 0.0
    assert collection_efficiency(ring, 0.6) == 1.0


def test_na_above_captured_range_rejected():
    with pytest.raises(ValueError, match="captured aperture"):
        collection_efficiency(isotropic(0.8), 0.9)
    with pytest.raises(ValueError):
        collection_efficiency(isotropic(), 0.0)


profiles = st.lists(st.floats(0, 10), min_size=8, max_size=60).filter(lambda v: sum(v) > 1e-3)


@given(profiles, st.floats(0.2, 1.0))
@settings(max_examples=60, deadline=None)
def test_shells_add_to_one_and_curve_is_monotone(vals, na_max):
    prof = AngularProfile.from_function(lambda t: np.array(vals), na_max, len(vals))
    nas = np.linspace(na_max / 50, na_max, 50)
    eta = efficiency_curve(prof, nas)
    assert np.all(np.diff(eta) >= -1e-15)
    assert np.all((eta >= 0) & (eta <= 1))
    shells = np.diff(np.concatenate([[0.0], eta]))
    assert shells.sum() == pytest.approx(1.0, abs=1e-12)


@given(profiles, st.floats(1e-3, 1e3))
@settings(max_examples=40, deadline=None)
def test_invariant_under_rescaling(vals, c):
    a = AngularProfile.from_function(lambda t: np.array(vals), 0.9, len(vals))
    b = AngularProfile.from_function(lambda t: c * np.array(vals), 0.9, len(vals))
    nas = [0.1, 0.3, 0.5, 0.7]
    np.testing.assert_allclose(efficiency_curve(a, nas), efficiency_curve(b, nas), rtol=1e-12)


def test_image_rescaling_invariance():
    img = ring_image((201, 201), (100, 100), 60, 8)
    a = bfp_to_angular(BFPImage(img, 1 / 100, (100, 100), 1.0), 30)
    b = bfp_to_angular(BFPImage(17.0 * img, 1 / 100, (100, 100), 1.0), 30)
    np.testing.assert_allclose(efficiency_curve(a, [0.2, 0.5, 0.8]), efficiency_curve(b, [0.2, 0.5, 0.8]),
                               rtol=1e-12)


@given(profiles, st.floats(1.0, 60.0))
@settings(max_examples=40, deadline=None)
def test_more_forward_profile_collects_more(vals, scale):
    # multiplying by a decreasing weight concentrates the profile at small angles
    a = AngularProfile.from_function(lambda t: np.array(vals), 1.0, len(vals))
    b = AngularProfile.from_function(lambda t: np.array(vals) * np.exp(-t / scale), 1.0, len(vals))
    nas = np.linspace(0.05, 1.0, 20)
    assert np.all(efficiency_curve(b, nas) >= efficiency_curve(a, nas) - 1e-12)
