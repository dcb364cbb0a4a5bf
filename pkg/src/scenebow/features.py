"""Low-level color and texture features of image regions.

All operations are pure functions of pixel values. Color features work on
HSV pixels produced by `rgb_to_hsv`; hue is rescaled to [0, 1] wherever it
is mixed with saturation and value so the three channels share one scale.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRegion, RegionTooSmall

COLHIST = "ColHist"
MOM = "Mom"
WAV = "Wav"
CBOW = "CBOW"
CONCAT = "Concat"

COLOR_HIST_BINS = (36, 32, 16)  # H, S, V sub-histogram sizes


@dataclass
class FeatureVector:
    """Feature values plus a kind tag; concatenations record component spans
    as (kind, start, stop) triples."""

    values: np.ndarray
    kind: str
    spans: list[tuple[str, int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.values)


def rgb_to_hsv(pixels: np.ndarray) -> np.ndarray:
    """Hexcone HSV from 8-bit RGB: H in [0, 360), S and V in [0, 1].
    Achromatic pixels take H = 0, and S = 0 when V = 0."""
    rgb = np.asarray(pixels, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    delta = v - rgb.min(axis=-1)
    s = np.divide(delta, v, out=np.zeros_like(v), where=v > 0)

    h = np.zeros_like(v)
    safe = np.where(delta > 0, delta, 1.0)
    chromatic = delta > 0
    r_max = chromatic & (v == r)
    g_max = chromatic & ~r_max & (v == g)
    b_max = chromatic & ~r_max & ~g_max
    h = np.where(r_max, ((g - b) / safe) % 6.0, h)
    h = np.where(g_max, (b - r) / safe + 2.0, h)
    h = np.where(b_max, (r - g) / safe + 4.0, h)
    h = (h * 60.0) % 360.0
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Inverse hexcone conversion back to 8-bit RGB (rounded)."""
    h, s, v = hsv[..., 0] / 60.0, hsv[..., 1], hsv[..., 2]
    c = v * s
    x = c * (1.0 - np.abs(h % 2.0 - 1.0))
    zero = np.zeros_like(c)
    sector = np.floor(h).astype(np.int64) % 6
    rgb_by_sector = np.stack(
        [
            np.stack([c, x, zero], axis=-1),
            np.stack([x, c, zero], axis=-1),
            np.stack([zero, c, x], axis=-1),
            np.stack([zero, x, c], axis=-1),
            np.stack([x, zero, c], axis=-1),
            np.stack([c, zero, x], axis=-1),
        ],
        axis=0,
    )
    rgb = np.take_along_axis(rgb_by_sector, sector[None, ..., None], axis=0)[0]
    rgb = rgb + (v - c)[..., None]
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def _flat_hsv(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    flat = hsv.reshape(-1, 3)
    if flat.shape[0] == 0:
        raise EmptyRegion("region has no pixels")
    return flat


def color_histogram(hsv: np.ndarray) -> FeatureVector:
    """84-bin color histogram: 36 uniform hue bins over [0, 360) followed by
    32 saturation and 16 value bins over [0, 1], last bin right-inclusive.
    Entries are raw pixel counts, so each sub-histogram sums to the count."""
    flat = _flat_hsv(hsv)
    nh, ns, nv = COLOR_HIST_BINS
    h_bins = np.floor(flat[:, 0] / (360.0 / nh)).astype(np.int64) % nh
    s_bins = np.minimum(np.floor(flat[:, 1] * ns).astype(np.int64), ns - 1)
    v_bins = np.minimum(np.floor(flat[:, 2] * nv).astype(np.int64), nv - 1)
    values = np.concatenate(
        [
            np.bincount(h_bins, minlength=nh),
            np.bincount(s_bins, minlength=ns),
            np.bincount(v_bins, minlength=nv),
        ]
    ).astype(np.float64)
    return FeatureVector(values, COLHIST)


def color_moments(hsv: np.ndarray) -> FeatureVector:
    """Per-channel mean, population standard deviation, and signed cube root
    of the third central moment, over channels (H/360, S, V); 9 values as
    (mean, std, skew) per channel."""
    flat = _flat_hsv(hsv).copy()
    flat[:, 0] /= 360.0
    mean = flat.mean(axis=0)
    centered = flat - mean
    std = np.sqrt((centered**2).mean(axis=0))
    third = (centered**3).mean(axis=0)
    skew = np.cbrt(third)
    values = np.stack([mean, std, skew], axis=1).ravel()
    return FeatureVector(values, MOM)


# -- orthonormal Haar transform ------------------------------------------------


def _pad_even(x: np.ndarray) -> np.ndarray:
    pads = [(0, dim % 2) for dim in x.shape]
    if any(p[1] for p in pads):
        x = np.pad(x, pads, mode="symmetric")
    return x


def haar2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One orthonormal 2-D Haar step on an even-sized array. Returns
    (ll, lh, hl, hh) where hl is high-pass along x (columns) and lh is
    high-pass along y (rows)."""
    lo_x = (x[:, 0::2] + x[:, 1::2]) / np.sqrt(2.0)
    hi_x = (x[:, 0::2] - x[:, 1::2]) / np.sqrt(2.0)
    ll = (lo_x[0::2] + lo_x[1::2]) / np.sqrt(2.0)
    lh = (lo_x[0::2] - lo_x[1::2]) / np.sqrt(2.0)
    hl = (hi_x[0::2] + hi_x[1::2]) / np.sqrt(2.0)
    hh = (hi_x[0::2] - hi_x[1::2]) / np.sqrt(2.0)
    return ll, lh, hl, hh


def ihaar2(ll: np.ndarray, lh: np.ndarray, hl: np.ndarray, hh: np.ndarray) -> np.ndarray:
    """Inverse of `haar2`."""
    lo_x = np.empty((ll.shape[0] * 2, ll.shape[1]))
    hi_x = np.empty_like(lo_x)
    lo_x[0::2] = (ll + lh) / np.sqrt(2.0)
    lo_x[1::2] = (ll - lh) / np.sqrt(2.0)
    hi_x[0::2] = (hl + hh) / np.sqrt(2.0)
    hi_x[1::2] = (hl - hh) / np.sqrt(2.0)
    x = np.empty((lo_x.shape[0], lo_x.shape[1] * 2))
    x[:, 0::2] = (lo_x + hi_x) / np.sqrt(2.0)
    x[:, 1::2] = (lo_x - hi_x) / np.sqrt(2.0)
    return x


def dwt_texture(hsv: np.ndarray, levels: int = 2) -> FeatureVector:
    """Wavelet texture energies: per channel (H/360, S, V), a 2-level Haar
    decomposition with the mean squared coefficient of each detail subband,
    ordered (LH, HL, HH) within each level, level 1 first. Odd-sized inputs
    are symmetrically padded to even dimensions before each step."""
    hsv = np.asarray(hsv, dtype=np.float64)
    if hsv.ndim != 3 or hsv.shape[2] != 3:
        raise RegionTooSmall(f"expected (h, w, 3) pixels, got {hsv.shape}")
    if hsv.shape[0] < 2**levels or hsv.shape[1] < 2**levels:
        raise RegionTooSmall(
            f"{hsv.shape[0]}x{hsv.shape[1]} region too small for {levels} halvings"
        )
    channels = hsv.copy()
    channels[..., 0] /= 360.0
    energies = []
    for c in range(3):
        band = channels[..., c]
        for _ in range(levels):
            ll, lh, hl, hh = haar2(_pad_even(band))
            energies += [(lh**2).mean(), (hl**2).mean(), (hh**2).mean()]
            band = ll
    return FeatureVector(np.array(energies), WAV)


def concat_features(parts: list[FeatureVector], normalize_each: bool = False) -> FeatureVector:
    """Concatenate feature vectors in order, recording component spans.
    With normalize_each, every part is scaled to unit L2 norm first
    (all-zero parts stay zero)."""
    if not parts:
        raise ValueError("no feature vectors to concatenate")
    pieces = []
    spans = []
    start = 0
    for part in parts:
        vals = part.values
        if normalize_each:
            norm = np.linalg.norm(vals)
            if norm > 0:
                vals = vals / norm
        pieces.append(vals)
        spans.append((part.kind, start, start + len(vals)))
        start += len(vals)
    return FeatureVector(np.concatenate(pieces), CONCAT, spans)


def write_features_csv(path, image_ids, region_indices, labels, matrix: np.ndarray) -> None:
    """One row per region: image_id, region index, label, then the features."""
    matrix = np.asarray(matrix)
    with open(path, "w", encoding="utf-8") as fh:
        header = ",".join(f"f{i}" for i in range(matrix.shape[1]))
        fh.write(f"image_id,region,label,{header}\n")
        for img, reg, lab, row in zip(image_ids, region_indices, labels, matrix):
            feats = ",".join(f"{v:.9g}" for v in row)
            fh.write(f"{img},{reg},{lab},{feats}\n")
