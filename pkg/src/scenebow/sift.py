"""Difference-of-Gaussians interest points and 128-D gradient descriptors.

Detection finds local extrema of the DoG scale space, rejects low-contrast
and edge-like responses, refines positions to subpixel accuracy, and assigns
one or more dominant gradient orientations per point. Description samples a
4x4 grid of 8-bin orientation histograms around the point, rotated into the
keypoint frame, with trilinear soft-binning; the vector is L2-normalized,
clamped at 0.2 and renormalized.

Gradients for description are taken from the input smoothed to the pyramid
blur level nearest the keypoint scale, sampled at full image resolution, so
`describe` needs no access to the detector's internal pyramid.
"""

import hashlib
import logging
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall, KeypointTooCloseToEdge

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

# RGB -> luma weights (ITU-R BT.601)
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SiftParams:
    """Detector/descriptor configuration. Defaults follow the standard DoG/SIFT
    settings, with the contrast threshold stated for intensities in [0, 1]."""

    n_scales: int = 3                 # sampled intervals per octave
    sigma: float = 1.6               # blur of each octave's base image
    assumed_blur: float = 0.5        # blur assumed present in the input
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0
    upsample: bool = False           # start from a 2x bilinear upsample
    border: int = 5                  # scan margin at octave resolution, px
    max_interp_steps: int = 5
    ori_bins: int = 36
    ori_peak_ratio: float = 0.8
    ori_sigma_factor: float = 1.5
    ori_radius_factor: float = 3.0
    descr_width: int = 4             # spatial cells per side
    descr_bins: int = 8              # orientation bins per cell
    descr_cell_scale: float = 3.0    # cell size in units of keypoint scale
    descr_clamp: float = 0.2

    def fingerprint(self) -> bytes:
        """8-byte digest identifying this configuration, used by caches."""
        canon = ",".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.blake2b(canon.encode(), digest_size=8).digest()


@dataclass(frozen=True)
class Keypoint:
    """Interest point: subpixel position, scale sigma in pixels, orientation
    as the dominant gradient angle in radians [0, 2pi)."""

    x: float
    y: float
    scale: float
    orientation: float


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Float64 luma in [0, 1] from uint8/float RGB or grayscale input."""
    image = np.asarray(image)
    if image.ndim == 3:
        image = image @ LUMA
    image = image.astype(np.float64)
    if image.max(initial=0.0) > 1.0:
        image = image / 255.0
    return image


# -- scale-space construction -------------------------------------------------


def _base_image(gray: np.ndarray, params: SiftParams) -> np.ndarray:
    if params.upsample:
        gray = ndimage.zoom(gray, 2.0, order=1, mode="grid-mirror", grid_mode=True)
        initial = 2.0 * params.assumed_blur
    else:
        initial = params.assumed_blur
    delta = np.sqrt(max(params.sigma**2 - initial**2, 0.01))
    return ndimage.gaussian_filter(gray, delta, mode="mirror")


def _n_octaves(shape: tuple[int, int]) -> int:
    return max(1, int(np.floor(np.log2(min(shape)))) - 2)


def _gaussian_pyramid(base: np.ndarray, params: SiftParams) -> list[list[np.ndarray]]:
    s = params.n_scales
    k = 2.0 ** (1.0 / s)
    # incremental blurs taking layer m-1 (sigma*k^(m-1)) to layer m (sigma*k^m)
    increments = [
        params.sigma * k ** (m - 1) * np.sqrt(k * k - 1.0) for m in range(1, s + 3)
    ]
    pyramid = []
    octave_base = base
    for _ in range(_n_octaves(base.shape)):
        octave = [octave_base]
        for inc in increments:
            octave.append(ndimage.gaussian_filter(octave[-1], inc, mode="mirror"))
        pyramid.append(octave)
        octave_base = octave[s][::2, ::2]  # the 2*sigma image, decimated
    return pyramid


def _dog_stack(octave: list[np.ndarray]) -> np.ndarray:
    arr = np.stack(octave)
    return arr[1:] - arr[:-1]


# -- extrema detection and refinement -----------------------------------------


def _candidate_extrema(dog: np.ndarray, prelim: float, border: int) -> np.ndarray:
    """(layer, i, j) triples where a middle-layer pixel is a 26-neighborhood
    max or min with magnitude above the preliminary threshold."""
    footprint = np.ones((3, 3, 3), dtype=bool)
    maxima = (dog == ndimage.maximum_filter(dog, footprint=footprint, mode="constant", cval=np.inf * -1)) & (dog > prelim)
    minima = (dog == ndimage.minimum_filter(dog, footprint=footprint, mode="constant", cval=np.inf)) & (dog < -prelim)
    mask = maxima | minima
    mask[0] = mask[-1] = False
    mask[:, :border, :] = mask[:, -border:, :] = False
    mask[:, :, :border] = mask[:, :, -border:] = False
    return np.argwhere(mask)


def _refine_extremum(dog: np.ndarray, layer: int, i: int, j: int, params: SiftParams):
    """Quadratic subpixel fit. Returns (layer, i, j, offset, value, hessian_xy)
    or None when the candidate is rejected."""
    n_layers = dog.shape[0]
    h, w = dog.shape[1:]
    border = params.border
    for _ in range(params.max_interp_steps):
        cube = dog[layer - 1 : layer + 2, i - 1 : i + 2, j - 1 : j + 2]
        dx = 0.5 * (cube[1, 1, 2] - cube[1, 1, 0])
        dy = 0.5 * (cube[1, 2, 1] - cube[1, 0, 1])
        ds = 0.5 * (cube[2, 1, 1] - cube[0, 1, 1])
        grad = np.array([dx, dy, ds])
        c = cube[1, 1, 1]
        dxx = cube[1, 1, 2] - 2 * c + cube[1, 1, 0]
        dyy = cube[1, 2, 1] - 2 * c + cube[1, 0, 1]
        dss = cube[2, 1, 1] - 2 * c + cube[0, 1, 1]
        dxy = 0.25 * (cube[1, 2, 2] - cube[1, 2, 0] - cube[1, 0, 2] + cube[1, 0, 0])
        dxs = 0.25 * (cube[2, 1, 2] - cube[2, 1, 0] - cube[0, 1, 2] + cube[0, 1, 0])
        dys = 0.25 * (cube[2, 2, 1] - cube[2, 0, 1] - cube[0, 2, 1] + cube[0, 0, 1])
        hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
        try:
            offset = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            break
        j += int(round(offset[0]))
        i += int(round(offset[1]))
        layer += int(round(offset[2]))
        if (
            layer < 1
            or layer > n_layers - 2
            or i < border
            or i >= h - border
            or j < border
            or j >= w - border
        ):
            return None
    else:
        return None

    value = cube[1, 1, 1] + 0.5 * float(grad @ offset)
    if abs(value) * params.n_scales < params.contrast_threshold:
        return None
    trace = dxx + dyy
    det = dxx * dyy - dxy * dxy
    r = params.edge_ratio
    if det <= 0 or trace * trace * r >= det * (r + 1.0) ** 2:
        return None
    return layer, i, j, offset, value


def _orientation_angles(gauss: np.ndarray, x: float, y: float, scale_oct: float, params: SiftParams) -> list[float]:
    """Dominant gradient directions (radians) from a smoothed 36-bin histogram
    of gradient angles around (x, y); peaks within ori_peak_ratio of the max."""
    h, w = gauss.shape
    nb = params.ori_bins
    ori_sigma = params.ori_sigma_factor * scale_oct
    radius = max(1, int(round(params.ori_radius_factor * ori_sigma)))
    cx, cy = int(round(x)), int(round(y))

    ii, jj = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    rows = cy + ii
    cols = cx + jj
    valid = (rows > 0) & (rows < h - 1) & (cols > 0) & (cols < w - 1)
    rows, cols = rows[valid], cols[valid]
    dx = gauss[rows, cols + 1] - gauss[rows, cols - 1]
    dy = gauss[rows - 1, cols] - gauss[rows + 1, cols]
    mag = np.hypot(dx, dy)
    ang = np.arctan2(dy, dx) % TWO_PI
    weight = np.exp(-(ii[valid] ** 2 + jj[valid] ** 2) / (2.0 * ori_sigma**2))

    hist = np.zeros(nb)
    bins = np.round(ang * (nb / TWO_PI)).astype(np.int64) % nb
    np.add.at(hist, bins, weight * mag)
    # circular [1,4,6,4,1]/16 smoothing
    smooth = (
        6 * hist
        + 4 * (np.roll(hist, 1) + np.roll(hist, -1))
        + np.roll(hist, 2)
        + np.roll(hist, -2)
    ) / 16.0

    peak_floor = params.ori_peak_ratio * smooth.max()
    if smooth.max() <= 0:
        return []
    left = np.roll(smooth, 1)
    right = np.roll(smooth, -1)
    angles = []
    for b in np.flatnonzero((smooth > left) & (smooth > right) & (smooth >= peak_floor)):
        l, c, rv = left[b], smooth[b], right[b]
        interp = (b + 0.5 * (l - rv) / (l - 2 * c + rv)) % nb
        angles.append(float(interp * TWO_PI / nb))
    return angles


def detect(image: np.ndarray, params: SiftParams = SiftParams()) -> list[Keypoint]:
    """DoG keypoints of a grayscale image (values in [0, 1])."""
    gray = to_grayscale(image)
    min_side = min(gray.shape) * (2 if params.upsample else 1)
    if min_side < 32:
        raise ImageTooSmall(f"need >= 32 px per side after upsampling, got {gray.shape}")

    base = _base_image(gray, params)
    pyramid = _gaussian_pyramid(base, params)
    s = params.n_scales
    prelim = 0.5 * params.contrast_threshold / s
    coord_scale = 0.5 if params.upsample else 1.0
    height, width = gray.shape

    found = []
    for octave_idx, octave in enumerate(pyramid):
        dog = _dog_stack(octave)
        for layer, i, j in _candidate_extrema(dog, prelim, params.border):
            refined = _refine_extremum(dog, int(layer), int(i), int(j), params)
            if refined is None:
                continue
            layer, i, j, offset, _value = refined
            x_oct = j + offset[0]
            y_oct = i + offset[1]
            scale_oct = params.sigma * 2.0 ** ((layer + offset[2]) / s)
            factor = 2.0**octave_idx * coord_scale
            x = x_oct * factor
            y = y_oct * factor
            scale = scale_oct * factor
            if not (0 <= x < width and 0 <= y < height):
                continue
            ori_layer = min(max(int(round(layer + offset[2])), 0), s + 2)
            for angle in _orientation_angles(
                octave[ori_layer], x_oct, y_oct, scale_oct, params
            ):
                found.append((x, y, scale, angle))

    if not found:
        return []
    arr = np.array(found)
    order = np.lexsort((arr[:, 3], arr[:, 2], arr[:, 0], arr[:, 1]))
    arr = arr[order]
    keep = np.ones(len(arr), dtype=bool)
    keep[1:] = np.any(arr[1:] != arr[:-1], axis=1)
    return [Keypoint(*row) for row in arr[keep]]


# -- description ---------------------------------------------------------------


class BlurBank:
    """Lazily smoothed copies of one image at the pyramid's discrete blur
    levels; description picks the level nearest a keypoint's scale."""

    def __init__(self, image: np.ndarray, params: SiftParams = SiftParams()):
        self.gray = to_grayscale(image)
        self.params = params
        self._cache: dict[int, np.ndarray] = {}

    def level_of(self, scale: float) -> int:
        p = self.params
        return int(round(p.n_scales * np.log2(max(scale, p.sigma * 0.5) / p.sigma)))

    def get(self, scale: float) -> np.ndarray:
        level = self.level_of(scale)
        if level not in self._cache:
            p = self.params
            target = p.sigma * 2.0 ** (level / p.n_scales)
            delta = np.sqrt(max(target**2 - p.assumed_blur**2, 0.01))
            self._cache[level] = ndimage.gaussian_filter(self.gray, delta, mode="mirror")
        return self._cache[level]


def _describe_on(blurred: np.ndarray, kp: Keypoint, params: SiftParams) -> np.ndarray:
    d = params.descr_width
    nb = params.descr_bins
    rows, cols = blurred.shape

    hist_width = params.descr_cell_scale * kp.scale
    radius = int(round(hist_width * np.sqrt(2) * (d + 1) * 0.5))
    cx, cy = int(round(kp.x)), int(round(kp.y))
    if cx - radius < 1 or cx + radius > cols - 2 or cy - radius < 1 or cy + radius > rows - 2:
        raise KeypointTooCloseToEdge(
            f"keypoint ({kp.x:.1f}, {kp.y:.1f}) scale {kp.scale:.2f} needs a "
            f"{radius}px margin in a {cols}x{rows} image"
        )

    cos_t = np.cos(kp.orientation) / hist_width
    sin_t = np.sin(kp.orientation) / hist_width
    ii, jj = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    ii = ii.ravel()
    jj = jj.ravel()
    c_rot = jj * cos_t - ii * sin_t
    r_rot = jj * sin_t + ii * cos_t
    rbin = r_rot + 0.5 * d - 0.5
    cbin = c_rot + 0.5 * d - 0.5
    inside = (rbin > -1) & (rbin < d) & (cbin > -1) & (cbin < d)
    ii, jj, rbin, cbin = ii[inside], jj[inside], rbin[inside], cbin[inside]
    r_rot, c_rot = r_rot[inside], c_rot[inside]

    py = cy + ii
    px = cx + jj
    dx = blurred[py, px + 1] - blurred[py, px - 1]
    dy = blurred[py - 1, px] - blurred[py + 1, px]
    mag = np.hypot(dx, dy)
    ang = (np.arctan2(dy, dx) - kp.orientation) % TWO_PI
    weight = np.exp(-(r_rot**2 + c_rot**2) / (0.5 * d * d))
    obin = ang * (nb / TWO_PI)

    # trilinear scatter into a (d+2, d+2, nb) tensor; +1 borders absorb spill
    hist = np.zeros((d + 2, d + 2, nb))
    r0 = np.floor(rbin).astype(np.int64)
    c0 = np.floor(cbin).astype(np.int64)
    o0 = np.floor(obin).astype(np.int64)
    fr = rbin - r0
    fc = cbin - c0
    fo = obin - o0
    o0 %= nb
    val = weight * mag
    for dr in (0, 1):
        wr = val * (fr if dr else 1 - fr)
        for dc in (0, 1):
            wc = wr * (fc if dc else 1 - fc)
            for do in (0, 1):
                wo = wc * (fo if do else 1 - fo)
                np.add.at(hist, (r0 + 1 + dr, c0 + 1 + dc, (o0 + do) % nb), wo)

    vec = hist[1:-1, 1:-1, :].ravel()
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec = vec / norm
        np.minimum(vec, params.descr_clamp, out=vec)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
    return vec.astype(np.float32)


def describe(image: np.ndarray, kp: Keypoint, params: SiftParams = SiftParams()) -> np.ndarray:
    """128-D descriptor of one keypoint; raises KeypointTooCloseToEdge when the
    rotated sample window does not fit inside the image."""
    bank = image if isinstance(image, BlurBank) else BlurBank(image, params)
    return _describe_on(bank.get(kp.scale), kp, bank.params)


def detect_and_describe(
    image: np.ndarray, params: SiftParams = SiftParams()
) -> list[tuple[Keypoint, np.ndarray]]:
    """Detect keypoints and describe each; points too close to the border for
    the descriptor window are dropped. Deterministic for fixed params."""
    gray = to_grayscale(image)
    keypoints = detect(gray, params)
    bank = BlurBank(gray, params)
    pairs = []
    dropped = 0
    for kp in keypoints:
        try:
            pairs.append((kp, _describe_on(bank.get(kp.scale), kp, params)))
        except KeypointTooCloseToEdge:
            dropped += 1
    if dropped:
        logger.debug("dropped %d/%d keypoints too close to the border", dropped, len(keypoints))
    return pairs


def pairs_to_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    """(n,4) float32 keypoint table (x, y, scale, orientation) and (n,128)
    float32 descriptor matrix."""
    n = len(pairs)
    kps = np.zeros((n, 4), dtype=np.float32)
    descs = np.zeros((n, 128), dtype=np.float32)
    for i, (kp, desc) in enumerate(pairs):
        kps[i] = (kp.x, kp.y, kp.scale, kp.orientation)
        descs[i] = desc
    return kps, descs


def arrays_to_pairs(kps: np.ndarray, descs: np.ndarray) -> list[tuple[Keypoint, np.ndarray]]:
    return [
        (Keypoint(float(x), float(y), float(s), float(o)), d)
        for (x, y, s, o), d in zip(kps, descs)
    ]
