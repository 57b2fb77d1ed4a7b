import math

import numpy as np
import pytest

from ghostproj.errors import ValidationError
from ghostproj.maskgen import (
    FWHM_PER_SIGMA,
    MaskClass,
    MaskField,
    MaskSpec,
    binarize,
    fractal_kernel,
    gaussian_kernel,
    generate_mask,
    legendre_pattern,
    load_mask,
    lorentzian_kernel,
    save_mask,
    smoothed_field,
)

from oracles import half_max_width, radial_power_slope, translate_correlations

ALL_SPECS = [
    MaskSpec(MaskClass.RANDOM_BINARY, 32, 16, 2, seed=5),
    MaskSpec(MaskClass.GAUSSIAN_SMOOTHED, 64, 64, 1, sigma=8.5, seed=5),
    MaskSpec(MaskClass.LORENTZIAN_SMOOTHED, 48, 32, 2, gamma=14.14, seed=5),
    MaskSpec(MaskClass.RANDOM_FRACTAL, 64, 64, 1, alpha=1.0, beta=0.0, seed=5),
    MaskSpec.legendre(7, 3),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.mask_class.value)
def test_deterministic_and_two_level(spec):
    a = generate_mask(spec)
    b = generate_mask(spec)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (spec.height, spec.width)
    assert set(np.unique(a.values)) <= {spec.transmission_low, spec.transmission_high}


def test_random_binary_plaquettes_expand():
    spec = MaskSpec(MaskClass.RANDOM_BINARY, 8, 8, 2, seed=11)
    v = generate_mask(spec).values
    blocks = v.reshape(4, 2, 4, 2)
    assert np.all(blocks == blocks[:, :1, :, :1])


def test_seed_and_class_select_streams():
    base = MaskSpec(MaskClass.RANDOM_BINARY, 64, 64, seed=1)
    other = MaskSpec(MaskClass.RANDOM_BINARY, 64, 64, seed=2)
    assert not np.array_equal(generate_mask(base).values, generate_mask(other).values)


def test_gaussian_sigma_from_table():
    spec = MaskSpec(MaskClass.GAUSSIAN_SMOOTHED, 128, 128, sigma=8.5, seed=3)
    assert spec.sigma == 8.5
    k = gaussian_kernel((128, 128), spec.sigma)
    assert 2 * half_max_width(k[0, :64]) == pytest.approx(FWHM_PER_SIGMA * 8.5, rel=0.01)


def test_lorentzian_kernel_fwhm():
    k = lorentzian_kernel((256, 256), 14.14)
    assert 2 * half_max_width(k[0, :128]) == pytest.approx(2 * 14.14, rel=0.01)


def test_fractal_params_from_table():
    spec = MaskSpec(MaskClass.RANDOM_FRACTAL, 64, 64, alpha=1.0, beta=0.0)
    assert (spec.alpha, spec.beta) == (1.0, 0.0)
    generate_mask(spec)


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(mask_class=MaskClass.LEGENDRE, width=9, height=9, p=9), "p"),
        (dict(mask_class=MaskClass.RANDOM_BINARY, width=8, height=8, feature_size_px=0), "feature_size_px"),
        (dict(mask_class=MaskClass.RANDOM_BINARY, width=8, height=8, transmission_low=0.5, transmission_high=0.5),
         "transmission_low"),
        (dict(mask_class=MaskClass.RANDOM_BINARY, width=9, height=8, feature_size_px=2), "width"),
        (dict(mask_class=MaskClass.GAUSSIAN_SMOOTHED, width=8, height=8), "sigma"),
        (dict(mask_class=MaskClass.RANDOM_FRACTAL, width=8, height=8, alpha=1.0, beta=-1.0), "beta"),
        (dict(mask_class=MaskClass.LEGENDRE, width=10, height=10, p=5), "width"),
    ],
)
def test_invalid_specs_name_field(kwargs, field):
    with pytest.raises(ValidationError) as err:
        MaskSpec(**kwargs)
    assert err.value.field == field


# ---- binarize


def test_binarize_ties_go_low():
    out = binarize(np.full((3, 3), 0.7), 0.7, low=0.08, high=1.0)
    assert np.all(out == 0.08)


def test_binarize_simple():
    assert binarize(np.array([0.2, 0.8]), 0.5, 0.0, 1.0).tolist() == [0.0, 1.0]


def test_median_binarization_fraction():
    spec = MaskSpec(MaskClass.GAUSSIAN_SMOOTHED, 16, 16, sigma=1.5, seed=9)
    field = smoothed_field(spec)
    high = binarize(field, float(np.median(field))).mean()
    assert 0.4 <= high <= 0.6


@pytest.mark.parametrize("spec", ALL_SPECS[1:4], ids=lambda s: s.mask_class.value)
def test_generated_smoothed_masks_near_half_duty(spec):
    v = generate_mask(spec).values
    assert 0.4 <= (v == spec.transmission_high).mean() <= 0.6


def test_binarize_rejects_empty():
    with pytest.raises(ValidationError):
        binarize(np.zeros((0, 3)), 0.0)


# ---- fractal kernel


def test_fractal_kernel_flat_when_alpha_zero():
    h = fractal_kernel(8, 8, 0.0, 0.0)
    assert h[0, 0] == 0.0
    off = np.ones((8, 8), dtype=bool)
    off[0, 0] = False
    assert np.all(h[off] == 1.0)


def test_fractal_kernel_lorentzian_case():
    h = fractal_kernel(16, 16, 2.0, 1.0)
    k = np.fft.fftfreq(16) * 16
    expect = 1.0 / (k[:, None] ** 2 + k[None, :] ** 2 + 1.0)
    assert np.allclose(h, expect, rtol=1e-14, atol=0)
    assert h[0, 0] == 1.0


def test_fractal_kernel_first_bin():
    # first nonzero frequency on an 8x8 grid is one cycle per grid
    h = fractal_kernel(8, 8, 1.0, 0.0)
    assert h[0, 1] == pytest.approx(1.0 / 1.0, rel=1e-15)
    assert h[1, 0] == pytest.approx(1.0, rel=1e-15)
    assert h[1, 1] == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-15)


def test_fractal_kernel_symmetry():
    h = fractal_kernel(12, 10, 1.3, 0.2)
    assert h[0, 0] == pytest.approx(1 / 0.2)
    assert np.all(h > 0)
    assert np.allclose(h, h[::-1, ::-1][np.r_[-1, 0:9]][:, np.r_[-1, 0:11]])
    assert np.allclose(h, np.roll(h[::-1, :], 1, axis=0))
    assert np.allclose(h, np.roll(h[:, ::-1], 1, axis=1))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_fractal_spectrum_slope(alpha):
    spec = MaskSpec(MaskClass.RANDOM_FRACTAL, 256, 256, alpha=alpha, beta=0.0, seed=4)
    slope = radial_power_slope(smoothed_field(spec), 256 / 32, 256 / 4)
    assert slope == pytest.approx(-2 * alpha, abs=0.4)


# ---- smoothing width


def _autocov_fwhm(spec, seeds):
    widths = []
    for s in seeds:
        f = smoothed_field(MaskSpec(**{**spec.__dict__, "seed": s}))
        f = f - f.mean()
        ac = np.real(np.fft.ifft2(np.abs(np.fft.fft2(f)) ** 2))
        widths.append(2 * half_max_width(0.5 * (ac[0, : f.shape[1] // 2] + ac[: f.shape[0] // 2, 0])))
    return float(np.mean(widths))


def _kernel_autocorr_fwhm(kernel):
    ac = np.real(np.fft.ifft2(np.abs(np.fft.fft2(kernel)) ** 2))
    return 2 * half_max_width(ac[0, : kernel.shape[1] // 2])


def test_gaussian_autocovariance_width():
    spec = MaskSpec(MaskClass.GAUSSIAN_SMOOTHED, 256, 256, sigma=4.0)
    nominal = FWHM_PER_SIGMA * 4.0
    # white noise smoothed by a Gaussian has Gaussian autocovariance sqrt(2) wider
    assert _kernel_autocorr_fwhm(gaussian_kernel((256, 256), 4.0)) == pytest.approx(math.sqrt(2) * nominal, rel=0.01)
    assert _autocov_fwhm(spec, range(4)) == pytest.approx(math.sqrt(2) * nominal, rel=0.15)


def test_lorentzian_autocovariance_width():
    spec = MaskSpec(MaskClass.LORENTZIAN_SMOOTHED, 256, 256, gamma=3.0)
    expected = _kernel_autocorr_fwhm(lorentzian_kernel((256, 256), 3.0))
    assert _autocov_fwhm(spec, range(4)) == pytest.approx(expected, rel=0.15)


# ---- Legendre


def test_legendre_p5_translates_near_orthogonal():
    spec = MaskSpec.legendre(5, 1, transmission_low=0.0)
    v = generate_mask(spec).values
    assert v.shape == (5, 5)
    corr = translate_correlations(v)
    assert len(corr) == 24
    assert max(abs(c) for c in corr.values()) <= 0.3


@pytest.mark.parametrize("p", [7, 11, 13, 31])
def test_legendre_translates_two_valued(p):
    corr = translate_correlations(legendre_pattern(p))
    assert max(abs(c) for c in corr.values()) <= 0.3
    assert len({round(c, 12) for c in corr.values()}) <= 2


def test_legendre_feature_expansion():
    m = generate_mask(MaskSpec.legendre(11, 4))
    assert m.values.shape == (44, 44)


# ---- file round trip


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.mask_class.value)
def test_graymap_round_trip(tmp_path, spec):
    mask = generate_mask(spec, pixel_pitch_um=40.0)
    path = save_mask(mask, tmp_path / "m.pgm")
    back = load_mask(path)
    assert np.max(np.abs(back.values - mask.values)) <= 0.5 / 65535
    assert back.spec == spec
    assert back.pixel_pitch_um == 40.0
    header = path.read_bytes()[:20]
    assert header.startswith(f"P5\n{spec.width} {spec.height}\n65535\n".encode())


def test_mask_field_rejects_out_of_range():
    with pytest.raises(ValidationError):
        MaskField(np.array([[0.0, 1.2]]))
