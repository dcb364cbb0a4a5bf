import colorsys

import numpy as np
import pytest

from scenebow.errors import EmptyRegion, RegionTooSmall
from scenebow.features import (
    COLOR_HIST_BINS,
    color_histogram,
    color_moments,
    concat_features,
    dwt_texture,
    haar2,
    hsv_to_rgb,
    ihaar2,
    rgb_to_hsv,
    write_features_csv,
    FeatureVector,
)


def test_hsv_matches_colorsys():
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, size=(200, 3), dtype=np.uint8)
    got = rgb_to_hsv(rgb.reshape(1, -1, 3)).reshape(-1, 3)
    for (r, g, b), (h, s, v) in zip(rgb, got):
        eh, es, ev = colorsys.rgb_to_hsv(r / 255.0, g / 255.0, b / 255.0)
        assert abs(h - eh * 360.0) % 360.0 < 1e-9 or abs(abs(h - eh * 360.0) - 360.0) < 1e-9
        assert abs(s - es) < 1e-12
        assert abs(v - ev) < 1e-12


def test_hsv_achromatic_and_black():
    gray = np.full((2, 2, 3), 77, dtype=np.uint8)
    hsv = rgb_to_hsv(gray)
    assert (hsv[..., 0] == 0).all() and (hsv[..., 1] == 0).all()
    black = np.zeros((2, 2, 3), dtype=np.uint8)
    hsv = rgb_to_hsv(black)
    assert (hsv == 0).all()  # S defined as 0 when V = 0


def test_rgb_roundtrip_within_one_level():
    rng = np.random.default_rng(3)
    rgb = rng.integers(0, 256, size=(50, 50, 3), dtype=np.uint8)
    back = hsv_to_rgb(rgb_to_hsv(rgb))
    assert np.abs(back.astype(int) - rgb.astype(int)).max() <= 1


def test_pure_red_histogram():
    region = np.zeros((10, 20, 3), dtype=np.uint8)
    region[..., 0] = 255
    hist = color_histogram(rgb_to_hsv(region)).values
    nh, ns, nv = COLOR_HIST_BINS
    assert hist[0] == 200            # hue 0
    assert hist[nh + ns - 1] == 200  # saturation 1.0 in the last bin
    assert hist[-1] == 200           # value 1.0 in the last bin
    assert hist.sum() == 600
    assert len(hist) == nh + ns + nv == 84


def test_histogram_matches_per_pixel_scan():
    rng = np.random.default_rng(9)
    rgb = rng.integers(0, 256, size=(13, 17, 3), dtype=np.uint8)
    hsv = rgb_to_hsv(rgb)
    hist = color_histogram(hsv).values
    nh, ns, nv = COLOR_HIST_BINS
    expect = np.zeros(nh + ns + nv)
    for h, s, v in hsv.reshape(-1, 3):
        expect[min(int(h // 10), nh - 1)] += 1
        expect[nh + min(int(s * ns), ns - 1)] += 1
        expect[nh + ns + min(int(v * nv), nv - 1)] += 1
    assert (hist == expect).all()


def test_histogram_rejects_empty():
    with pytest.raises(EmptyRegion):
        color_histogram(np.zeros((0, 5, 3)))


def test_moments_match_direct_computation():
    rng = np.random.default_rng(21)
    rgb = rng.integers(0, 256, size=(9, 11, 3), dtype=np.uint8)
    hsv = rgb_to_hsv(rgb).reshape(-1, 3)
    hsv[:, 0] /= 360.0
    got = color_moments(rgb_to_hsv(rgb)).values
    for c in range(3):
        x = hsv[:, c]
        mu = x.mean()
        sd = np.sqrt(((x - mu) ** 2).mean())
        sk = np.cbrt(((x - mu) ** 3).mean())
        assert got[3 * c + 0] == pytest.approx(mu, abs=1e-12)
        assert got[3 * c + 1] == pytest.approx(sd, abs=1e-12)
        assert got[3 * c + 2] == pytest.approx(sk, abs=1e-12)


def test_haar_perfect_reconstruction_and_parseval():
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.normal(size=(2 * rng.integers(2, 17), 2 * rng.integers(2, 17)))
        bands = haar2(x)
        back = ihaar2(*bands)
        assert np.abs(back - x).max() <= 1e-9 * max(1.0, np.abs(x).max())
        energy = sum((b**2).sum() for b in bands)
        assert abs(energy - (x**2).sum()) <= 1e-9 * (x**2).sum()


def test_constant_region_zero_texture():
    const = np.full((16, 12, 3), 0.25)
    const[..., 0] = 120.0  # hue plane in degrees
    tex = dwt_texture(const)
    assert tex.values.shape == (18,)
    assert np.abs(tex.values).max() == 0.0


def test_edge_orientation_bands():
    # vertical edge varies along x -> energy lands in the HL band slot
    hsv = np.zeros((16, 16, 3))
    hsv[:, 9:, 2] = 1.0
    tex = dwt_texture(hsv).values
    v = tex[12:18]  # V channel: (LH1, HL1, HH1, LH2, HL2, HH2)
    assert v[1] > 0 and v[0] == 0
    hsv2 = np.zeros((16, 16, 3))
    hsv2[9:, :, 2] = 1.0
    tex2 = dwt_texture(hsv2).values
    v2 = tex2[12:18]
    assert v2[0] > 0 and v2[1] == 0


def test_texture_matches_independent_dwt():
    rng = np.random.default_rng(8)
    hsv = np.stack([
        rng.uniform(0, 360, size=(12, 14)),
        rng.uniform(0, 1, size=(12, 14)),
        rng.uniform(0, 1, size=(12, 14)),
    ], axis=-1)
    got = dwt_texture(hsv).values

    def pad_even(a):
        if a.shape[0] % 2:
            a = np.concatenate([a, a[-1:][::-1]], axis=0)
        if a.shape[1] % 2:
            a = np.concatenate([a, a[:, -1:][:, ::-1]], axis=1)
        return a

    def step(a):
        lo = (a[:, 0::2] + a[:, 1::2]) / np.sqrt(2)
        hi = (a[:, 0::2] - a[:, 1::2]) / np.sqrt(2)
        ll = (lo[0::2] + lo[1::2]) / np.sqrt(2)
        lh = (lo[0::2] - lo[1::2]) / np.sqrt(2)
        hl = (hi[0::2] + hi[1::2]) / np.sqrt(2)
        hh = (hi[0::2] - hi[1::2]) / np.sqrt(2)
        return ll, lh, hl, hh

    expect = []
    for c, scale in ((0, 360.0), (1, 1.0), (2, 1.0)):
        band = hsv[..., c] / scale
        for _ in range(2):
            band, lh, hl, hh = step(pad_even(band))
            expect += [(lh**2).mean(), (hl**2).mean(), (hh**2).mean()]
    np.testing.assert_allclose(got, expect, rtol=1e-12, atol=1e-15)


def test_odd_sizes_padded_not_rejected():
    rng = np.random.default_rng(2)
    hsv = rng.uniform(0, 1, size=(5, 7, 3))
    tex = dwt_texture(hsv)
    assert np.isfinite(tex.values).all()


def test_too_small_region_rejected():
    with pytest.raises(RegionTooSmall):
        dwt_texture(np.zeros((3, 8, 3)))
    with pytest.raises(RegionTooSmall):
        dwt_texture(np.zeros((8, 3, 3)))


def test_concat_records_spans_and_normalizes():
    a = FeatureVector(np.array([3.0, 4.0]), "ColHist")
    b = FeatureVector(np.array([0.0, 0.0, 0.0]), "Wav")
    cat = concat_features([a, b], normalize_each=True)
    assert cat.spans == [("ColHist", 0, 2), ("Wav", 2, 5)]
    np.testing.assert_allclose(cat.values[:2], [0.6, 0.8])
    assert (cat.values[2:] == 0).all()  # zero part stays zero
    raw = concat_features([a, b])
    np.testing.assert_allclose(raw.values, [3.0, 4.0, 0.0, 0.0, 0.0])


def test_features_csv_format(tmp_path):
    path = tmp_path / "f.csv"
    write_features_csv(path, ["im0", "im0"], [0, 1], ["sky", "sand"],
                       np.array([[1.5, 2.0], [0.25, 0.125]]))
    lines = path.read_text().splitlines()
    assert lines[0] == "image_id,region,label,f0,f1"
    assert lines[1] == "im0,0,sky,1.5,2"
    assert lines[2] == "im0,1,sand,0.25,0.125"
