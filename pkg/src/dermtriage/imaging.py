"""Image preprocessing for dermoscopic lesion photographs.

All operations work on floating point arrays with values in [0, 1], shaped
(H, W) for grayscale or (H, W, C) with C in {1, 3}. Functions are pure:
they never mutate their input and return new arrays. Channels are processed
independently wherever the operation is per-channel.

The module exposes plain functions plus scikit-learn style transformer
wrappers (fit/transform/get_params) so the pipeline can be composed with
standard tooling.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import InputError, ParameterError

__all__ = [
    "check_image",
    "load_image",
    "save_image",
    "NlmParams",
    "denoise_nlm",
    "equalize_histogram",
    "resize",
    "AugmentSpec",
    "augment",
    "NlmDenoiser",
    "HistogramEqualizer",
    "BilinearResizer",
    "LesionAugmenter",
]


def check_image(img):
    """Validate an image array and return it as float64.

    Accepts shape (H, W) or (H, W, C) with C in {1, 3} and values in
    [0, 1]. Raises InputError otherwise.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        pass
    elif arr.ndim == 3:
        if arr.shape[2] not in (1, 3):
            raise InputError(
                f"expected 1 or 3 channels, got {arr.shape[2]}"
            )
    else:
        raise InputError(f"expected a 2d or 3d image, got ndim={arr.ndim}")
    if arr.size == 0:
        raise InputError("image has zero size")
    if not np.all(np.isfinite(arr)):
        raise InputError("image contains non-finite values")
    lo = float(arr.min())
    hi = float(arr.max())
    if lo < 0.0 or hi > 1.0:
        raise InputError(f"pixel values outside [0, 1]: min={lo}, max={hi}")
    return arr


def load_image(path):
    """Load a PNG or JPEG file as a float image in [0, 1].

    Grayscale files become (H, W); everything else is converted to RGB.
    """
    with Image.open(path) as handle:
        if handle.mode in ("L", "I;16", "I"):
            converted = handle.convert("L")
        else:
            converted = handle.convert("RGB")
        arr = np.asarray(converted, dtype=np.float64) / 255.0
    return arr


def save_image(path, img):
    """Write an image array to ``path`` as PNG or JPEG (by extension)."""
    arr = check_image(img)
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    Image.fromarray(data).save(path)


# ---------------------------------------------------------------------------
# Non-local means denoising


@dataclass(frozen=True)
class NlmParams:
    """Parameters for non-local means denoising.

    patch_radius and search_radius are half-widths: a radius r covers a
    (2r+1) x (2r+1) square. h controls the decay of the similarity weights.
    """

    patch_radius: int = 3
    search_radius: int = 10
    h: float = 0.1

    def __post_init__(self):
        if self.patch_radius < 0:
            raise ParameterError("patch_radius must be >= 0")
        if self.search_radius < self.patch_radius:
            raise ParameterError("search_radius must be >= patch_radius")
        if not (self.h > 0):
            raise ParameterError("h must be positive")


def denoise_nlm(img, params=None):
    """Non-local means denoise.

    Each output pixel is a weighted average over its search window:
    weights are exp(-d/h^2) where d is the plain sum of squared
    differences between the two pixels' patches, normalized to sum to 1.
    The window always includes the center pixel. Patches and windows that
    extend past the border read edge-replicated values.

    Summation is arranged so that mirrored offsets are combined in a
    symmetric order; flipping the image horizontally or vertically and
    denoising commutes bitwise with denoising then flipping.
    """
    if params is None:
        params = NlmParams()
    arr = check_image(img)
    squeeze = arr.ndim == 2
    work = arr[:, :, None] if squeeze else arr
    out = np.empty_like(work)
    for c in range(work.shape[2]):
        out[:, :, c] = _nlm_channel(
            work[:, :, c], params.patch_radius, params.search_radius, params.h
        )
    return out[:, :, 0] if squeeze else out


def _nlm_channel(ch, r, s, h):
    height, width = ch.shape
    pad = s + r
    padded = np.pad(ch, pad, mode="edge")
    inv_h2 = 1.0 / (h * h)
    num = np.zeros((height, width))
    den = np.zeros((height, width))
    # Offsets are grouped into mirror orbits {(+-di, +-dj)} and each orbit
    # is reduced with a fixed tree of pairwise adds. Because addition of a
    # swapped pair is commutative, the accumulated totals are unchanged
    # when the image is flipped, which keeps flip equivariance exact.
    for di in range(s + 1):
        for dj in range(s + 1):
            members = _orbit(di, dj)
            ws = []
            wvs = []
            for mdi, mdj in members:
                dist = _patch_distance(padded, height, width, r, s, mdi, mdj)
                w = np.exp(dist * -inv_h2)
                shifted = padded[
                    pad + mdi : pad + mdi + height,
                    pad + mdj : pad + mdj + width,
                ]
                ws.append(w)
                wvs.append(w * shifted)
            den += _orbit_sum(ws)
            num += _orbit_sum(wvs)
    return num / den


def _orbit(di, dj):
    if di > 0 and dj > 0:
        return [(di, dj), (di, -dj), (-di, dj), (-di, -dj)]
    if dj > 0:
        return [(0, dj), (0, -dj)]
    if di > 0:
        return [(di, 0), (-di, 0)]
    return [(0, 0)]


def _orbit_sum(terms):
    if len(terms) == 4:
        return (terms[0] + terms[1]) + (terms[2] + terms[3])
    if len(terms) == 2:
        return terms[0] + terms[1]
    return terms[0]


def _patch_distance(padded, height, width, r, s, di, dj):
    # Squared difference field between the image and its (di, dj) shift,
    # then a box sum over the patch. The box sum also pairs mirrored
    # taps so the whole computation stays flip-symmetric.
    a = padded[s : s + height + 2 * r, s : s + width + 2 * r]
    b = padded[
        s + di : s + di + height + 2 * r,
        s + dj : s + dj + width + 2 * r,
    ]
    diff2 = (a - b) ** 2
    cols = diff2[:, r : r + width].copy()
    for pj in range(1, r + 1):
        cols += diff2[:, r + pj : r + pj + width] + diff2[:, r - pj : r - pj + width]
    dist = cols[r : r + height, :].copy()
    for pi in range(1, r + 1):
        dist += cols[r + pi : r + pi + height, :] + cols[r - pi : r - pi + height, :]
    return dist


# ---------------------------------------------------------------------------
# Histogram equalization


def equalize_histogram(img):
    """Equalize intensities over 256 bins, per channel.

    Values are binned with bin = min(255, floor(v * 256)); the output is
    (cdf(bin) - cdf_min) / (N - cdf_min), which maps the occupied range
    onto [0, 1]. A constant channel maps to all zeros.
    """
    arr = check_image(img)
    squeeze = arr.ndim == 2
    work = arr[:, :, None] if squeeze else arr
    out = np.empty_like(work)
    for c in range(work.shape[2]):
        out[:, :, c] = _equalize_channel(work[:, :, c])
    return out[:, :, 0] if squeeze else out


def _equalize_channel(ch):
    bins = np.minimum((ch * 256.0).astype(np.int64), 255)
    hist = np.bincount(bins.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    nonzero = np.nonzero(hist)[0]
    cdf_min = cdf[nonzero[0]]
    total = ch.size
    if total == cdf_min:
        # Single occupied bin: no contrast to stretch.
        return np.zeros_like(ch)
    mapped = (cdf - cdf_min) / float(total - cdf_min)
    return mapped[bins]


# ---------------------------------------------------------------------------
# Bilinear resize


def resize(img, width, height):
    """Resize with bilinear interpolation, corner-aligned.

    Output coordinate k maps to source coordinate k * (S - 1) / (D - 1);
    a size-1 output axis samples source coordinate 0. Resizing to the
    input size returns the input values exactly.
    """
    if width < 1 or height < 1:
        raise ParameterError("target dimensions must be >= 1")
    arr = check_image(img)
    src_h, src_w = arr.shape[:2]
    ys = _axis_coords(height, src_h)
    xs = _axis_coords(width, src_w)
    grid_y = np.repeat(ys[:, None], width, axis=1)
    grid_x = np.repeat(xs[None, :], height, axis=0)
    return _sample_bilinear(arr, grid_y, grid_x)


def _axis_coords(dst, src):
    if dst == 1:
        return np.zeros(1)
    return np.arange(dst, dtype=np.float64) * ((src - 1) / (dst - 1))


def _sample_bilinear(arr, ys, xs):
    """Sample ``arr`` at fractional coordinates, clamped to the border."""
    src_h, src_w = arr.shape[:2]
    ys = np.clip(ys, 0.0, src_h - 1.0)
    xs = np.clip(xs, 0.0, src_w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    fy = ys - y0
    fx = xs - x0
    if arr.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = arr[y0, x0] * (1.0 - fx) + arr[y0, x1] * fx
    bottom = arr[y1, x0] * (1.0 - fx) + arr[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


# ---------------------------------------------------------------------------
# Augmentation


@dataclass(frozen=True)
class AugmentSpec:
    """Stochastic augmentation settings.

    Each transform fires independently with per_transform_probability.
    Draws come from a private stdlib random.Random(seed) in a fixed
    order (rotation, horizontal flip, vertical flip, zoom, brightness),
    with one gate draw per transform and a parameter draw only when the
    gate fires, so a given seed always yields the same output.
    """

    rotation_max_degrees: float = 30.0
    zoom_range: tuple[float, float] = (0.8, 1.2)
    brightness_delta: float = 0.2
    flip_horizontal: bool = True
    flip_vertical: bool = True
    per_transform_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.rotation_max_degrees < 0:
            raise ParameterError("rotation_max_degrees must be >= 0")
        lo, hi = self.zoom_range
        if not (0 < lo <= hi):
            raise ParameterError("zoom_range must satisfy 0 < low <= high")
        if self.brightness_delta < 0:
            raise ParameterError("brightness_delta must be >= 0")
        if not (0.0 <= self.per_transform_probability <= 1.0):
            raise ParameterError("per_transform_probability must be in [0, 1]")


def augment(img, spec=None):
    """Apply the augmentation pipeline to one image, deterministically."""
    if spec is None:
        spec = AugmentSpec()
    arr = check_image(img)
    rng = random.Random(spec.seed)
    p = spec.per_transform_probability
    out = arr

    if rng.random() < p:
        angle = rng.uniform(-spec.rotation_max_degrees, spec.rotation_max_degrees)
        out = _rotate(out, angle)
    if rng.random() < p and spec.flip_horizontal:
        out = out[:, ::-1].copy()
    if rng.random() < p and spec.flip_vertical:
        out = out[::-1, :].copy()
    if rng.random() < p:
        lo, hi = spec.zoom_range
        factor = rng.uniform(lo, hi)
        out = _zoom(out, factor)
    if rng.random() < p:
        delta = rng.uniform(-spec.brightness_delta, spec.brightness_delta)
        out = np.clip(out + delta, 0.0, 1.0)
    return out


def _center_grid(height, width):
    cy = (height - 1) / 2.0
    cx = (width - 1) / 2.0
    yy = np.arange(height, dtype=np.float64)[:, None] - cy
    xx = np.arange(width, dtype=np.float64)[None, :] - cx
    return cy, cx, yy, xx


def _rotate(arr, degrees):
    """Rotate about the image center; positive angles turn counterclockwise.

    Out-of-frame samples read edge-replicated values.
    """
    height, width = arr.shape[:2]
    theta = math.radians(degrees)
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    cy, cx, yy, xx = _center_grid(height, width)
    src_y = cy + cos_t * yy + sin_t * xx
    src_x = cx - sin_t * yy + cos_t * xx
    return _sample_bilinear(arr, src_y, src_x)


def _zoom(arr, factor):
    """Scale about the image center; factor > 1 magnifies."""
    height, width = arr.shape[:2]
    cy, cx, yy, xx = _center_grid(height, width)
    src_y = cy + yy / factor
    src_x = cx + xx / factor
    return _sample_bilinear(arr, src_y, src_x)


# ---------------------------------------------------------------------------
# Transformer wrappers


def _map_images(x, fn):
    """Apply ``fn`` to one image or a batch of images.

    Accepts a single (H, W) or (H, W, C) array, a 4d (N, H, W, C) stack,
    or a list/tuple of images. Returns the matching container.
    """
    if isinstance(x, np.ndarray) and x.ndim == 4:
        return np.stack([fn(frame) for frame in x])
    if isinstance(x, (list, tuple)):
        return [fn(frame) for frame in x]
    return fn(x)


class NlmDenoiser(TransformerMixin, BaseEstimator):
    """Stateless transformer around :func:`denoise_nlm`."""

    def __init__(self, patch_radius=3, search_radius=10, h=0.1):
        self.patch_radius = patch_radius
        self.search_radius = search_radius
        self.h = h

    def _make_params(self):
        return NlmParams(
            patch_radius=self.patch_radius,
            search_radius=self.search_radius,
            h=self.h,
        )

    def fit(self, X=None, y=None):
        self._make_params()
        return self

    def transform(self, X):
        params = self._make_params()
        return _map_images(X, lambda img: denoise_nlm(img, params))


class HistogramEqualizer(TransformerMixin, BaseEstimator):
    """Stateless transformer around :func:`equalize_histogram`."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return _map_images(X, equalize_histogram)


class BilinearResizer(TransformerMixin, BaseEstimator):
    """Stateless transformer around :func:`resize`."""

    def __init__(self, width=224, height=224):
        self.width = width
        self.height = height

    def fit(self, X=None, y=None):
        if self.width < 1 or self.height < 1:
            raise ParameterError("target dimensions must be >= 1")
        return self

    def transform(self, X):
        return _map_images(X, lambda img: resize(img, self.width, self.height))


class LesionAugmenter(TransformerMixin, BaseEstimator):
    """Transformer around :func:`augment`.

    In a batch, image i is augmented with seed ``seed + i`` so items
    receive different draws while the whole batch stays reproducible.
    """

    def __init__(
        self,
        rotation_max_degrees=30.0,
        zoom_low=0.8,
        zoom_high=1.2,
        brightness_delta=0.2,
        flip_horizontal=True,
        flip_vertical=True,
        per_transform_probability=0.5,
        seed=0,
    ):
        self.rotation_max_degrees = rotation_max_degrees
        self.zoom_low = zoom_low
        self.zoom_high = zoom_high
        self.brightness_delta = brightness_delta
        self.flip_horizontal = flip_horizontal
        self.flip_vertical = flip_vertical
        self.per_transform_probability = per_transform_probability
        self.seed = seed

    def _make_spec(self):
        return AugmentSpec(
            rotation_max_degrees=self.rotation_max_degrees,
            zoom_range=(self.zoom_low, self.zoom_high),
            brightness_delta=self.brightness_delta,
            flip_horizontal=self.flip_horizontal,
            flip_vertical=self.flip_vertical,
            per_transform_probability=self.per_transform_probability,
            seed=self.seed,
        )

    def fit(self, X=None, y=None):
        self._make_spec()
        return self

    def transform(self, X):
        spec = self._make_spec()
        if (isinstance(X, np.ndarray) and X.ndim == 4) or isinstance(X, (list, tuple)):
            frames = [
                augment(frame, replace(spec, seed=spec.seed + i))
                for i, frame in enumerate(X)
            ]
            if isinstance(X, np.ndarray):
                return np.stack(frames)
            return frames
        return augment(X, spec)
