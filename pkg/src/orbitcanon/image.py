"""Continuous-rotation canonicalization of square grayscale rasters.

The raster lives on the unit square with coordinates z = (z1, z2), z1
increasing upward and z2 increasing rightward, origin at the lower-left
corner.  Array row 0 is the top of the image, so the pixel at (row r,
col c) of an H x W raster has center z1 = (H - r - 0.5) / H,
z2 = (c + 0.5) / W.

A rotation by alpha turns the image content counter-clockwise about the
square's center.  The canonical orientation is found from a smoothed,
bilinearly interpolated model of the image: the model gradient is averaged
over two circles around the center, and the image is rotated so that this
mean gradient points along +z1 ("uphill is up").  Because the mean
gradient rotates with the image, alpha(rotated by beta) = alpha - beta,
which is what makes the composed map invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .groups import CanonResult

SCHEMES = ("nearest", "bilinear", "bicubic")

# Sampling pattern for the mean gradient: two centered circles, each
# probed at this many equally spaced points, averaged with equal weight.
CIRCLE_RADII = (0.05, 0.4)
CIRCLE_SAMPLES = 1000

GRADIENT_THRESHOLD = 1e-8


@dataclass(frozen=True)
class GrayImage:
    """An H x W grayscale raster with float values in [0, 1].

    Values are clamped into [0, 1] on construction and the array is
    frozen; non-finite input is rejected.
    """

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("expected a 2-D raster with at least one pixel")
        if not np.all(np.isfinite(p)):
            raise ValueError("raster contains non-finite values")
        p = np.clip(p, 0.0, 1.0)
        p.flags.writeable = False
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def is_square(self) -> bool:
        return self.height == self.width


def _require_square(img: GrayImage) -> int:
    if not img.is_square:
        raise ValueError(
            f"rotation needs a square raster, got {img.height} x {img.width}")
    return img.height


def _check_scheme(scheme: str) -> str:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown interpolation scheme {scheme!r}")
    return scheme


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur with edge replication.

    Kernel radius is ceil(3 * sigma); taps are normalized to sum to 1, so
    a constant image is exactly preserved.  sigma must be positive.
    """
    if not (sigma > 0.0):
        raise ValueError("sigma must be positive")
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=float)
    taps = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    taps /= taps.sum()

    out = img.pixels
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="edge")
        acc = np.zeros_like(out)
        for k, t in enumerate(taps):
            if axis == 0:
                acc += t * padded[k:k + out.shape[0], :]
            else:
                acc += t * padded[:, k:k + out.shape[1]]
        out = acc
    return GrayImage(out)


class SmoothImageModel:
    """Bilinear continuous model u(z1, z2) of a raster, with exact gradients.

    Between pixel centers the model interpolates bilinearly; beyond the
    outermost centers the value is clamped to the edge, where the gradient
    is zero.  On cell boundaries the lower-left-closed cell is used, so
    value and gradient are total deterministic functions of z.
    """

    def __init__(self, image: GrayImage):
        self.image = image

    def _fractional(self, points):
        z = np.asarray(points, dtype=float)
        if z.shape[-1] != 2:
            raise ValueError("points must have a trailing axis of size 2 (z1, z2)")
        h, w = self.image.height, self.image.width
        row_f = (1.0 - z[..., 0]) * h - 0.5
        col_f = z[..., 1] * w - 0.5
        return row_f, col_f

    @staticmethod
    def _cell(f, n):
        # Clamp to the pixel-center band [0, n-1]; 'live' marks points whose
        # coordinate actually varies the value (gradient factor 1 vs 0).
        live = (f >= 0.0) & (f <= n - 1.0)
        fc = np.clip(f, 0.0, n - 1.0)
        i0 = np.minimum(np.floor(fc), n - 2.0).astype(int)
        t = fc - i0
        return i0, t, live

    def _gather(self, points):
        p = self.image.pixels
        h, w = p.shape
        row_f, col_f = self._fractional(points)
        r0, tr, live_r = self._cell(row_f, h)
        c0, tc, live_c = self._cell(col_f, w)
        v00 = p[r0, c0]
        v01 = p[r0, c0 + 1]
        v10 = p[r0 + 1, c0]
        v11 = p[r0 + 1, c0 + 1]
        return v00, v01, v10, v11, tr, tc, live_r, live_c

    def value(self, points) -> np.ndarray:
        """Model value at points (..., 2) given as (z1, z2)."""
        v00, v01, v10, v11, tr, tc, _, _ = self._gather(points)
        top = v00 * (1.0 - tc) + v01 * tc
        bottom = v10 * (1.0 - tc) + v11 * tc
        return top * (1.0 - tr) + bottom * tr

    def gradient(self, points) -> np.ndarray:
        """Exact model gradient (du/dz1, du/dz2) at points (..., 2).

        Within a cell the bilinear surface is differentiated analytically;
        in clamped regions the corresponding component is zero.  du/dz1
        carries a factor -height because z1 runs against the row index.
        """
        h, w = self.image.height, self.image.width
        v00, v01, v10, v11, tr, tc, live_r, live_c = self._gather(points)
        d_row = (v10 - v00) * (1.0 - tc) + (v11 - v01) * tc
        d_col = (v01 - v00) * (1.0 - tr) + (v11 - v10) * tr
        g1 = -h * d_row * live_r
        g2 = w * d_col * live_c
        return np.stack([g1, g2], axis=-1)


@dataclass(frozen=True)
class MeanGradient:
    """Mean model gradient over the probe circles, in (z1, z2) components."""

    g1: float
    g2: float
    magnitude: float
    sample_count: int


def smooth_model(img: GrayImage, sigma: float = 1.0) -> SmoothImageModel:
    """Blur the raster and wrap it in the continuous model."""
    return SmoothImageModel(gaussian_blur(img, sigma))


def model_gradient(model: SmoothImageModel, points) -> np.ndarray:
    """Gradient of the continuous model at arbitrary points."""
    return model.gradient(points)


def mean_gradient(model: SmoothImageModel) -> MeanGradient:
    """Average the model gradient over the two probe circles.

    Each circle contributes the mean of its CIRCLE_SAMPLES gradient
    samples; the circles are then averaged with equal weight.  The small
    circle reads orientation near the center, the large one near the
    border, and both lie inside the square so rotation moves their probe
    values with the image.
    """
    n = _require_square(model.image)
    if n < 2:
        raise ValueError("need at least a 2 x 2 raster for a gradient")
    theta = 2.0 * np.pi * np.arange(CIRCLE_SAMPLES) / CIRCLE_SAMPLES
    per_circle = []
    for radius in CIRCLE_RADII:
        pts = np.stack([0.5 + radius * np.cos(theta),
                        0.5 + radius * np.sin(theta)], axis=-1)
        per_circle.append(model.gradient(pts).mean(axis=0))
    g1, g2 = np.mean(per_circle, axis=0)
    return MeanGradient(g1=float(g1), g2=float(g2),
                        magnitude=float(np.hypot(g1, g2)),
                        sample_count=len(CIRCLE_RADII) * CIRCLE_SAMPLES)


def canonical_angle(mg: MeanGradient,
                    threshold: float = GRADIENT_THRESHOLD) -> tuple[float, bool]:
    """Angle that rotates the mean gradient onto the +z1 axis.

    Returns (alpha, degenerate).  alpha = atan2(g2, g1) lies in (-pi, pi];
    rotating the image content counter-clockwise by alpha turns the mean
    gradient to point "up".  When the mean gradient magnitude is at or
    below the threshold the orientation is undefined and (0.0, True) is
    returned.
    """
    if mg.magnitude <= threshold:
        return 0.0, True
    return math.atan2(mg.g2, mg.g1), False


def rotate_image(img: GrayImage, alpha: float, scheme: str = "bilinear") -> GrayImage:
    """Rotate image content counter-clockwise by alpha about the center.

    Resamples by inverse mapping: each output pixel center is rotated back
    by alpha and the source raster is sampled there with the requested
    scheme (nearest, bilinear, or bicubic with the Catmull-Rom kernel).
    Source samples falling outside the unit square give 0; interpolation
    stencils reaching past the raster clamp to the border row/column.
    Output values are clamped to [0, 1], and alpha = 0 reproduces the
    input bit for bit under every scheme.
    """
    _check_scheme(scheme)
    n = _require_square(img)
    p = img.pixels

    # Inverse map in index space.  With center m = (n - 1) / 2 the source
    # index of output pixel (r, c) is
    #   col_f = m + cos(a) (c - m) + sin(a) (m - r)
    #   row_f = m + sin(a) (c - m) + cos(a) (r - m)
    # (derived from the unit-square rotation; z1 runs against rows).  At
    # alpha = 0 this is exactly (r, c) in floating point, which is what
    # makes the zero rotation the bit-exact identity for every scheme.
    m = (n - 1) / 2.0
    idx = np.arange(n, dtype=float)
    u = idx[None, :] - m                 # signed column offset
    v = idx[:, None] - m                 # signed row offset
    ca, sa = math.cos(alpha), math.sin(alpha)
    col_f = m + ca * u - sa * v
    row_f = m + sa * u + ca * v

    # Source position inside the unit square <=> index within [-1/2, n-1/2].
    inside = ((col_f >= -0.5) & (col_f <= n - 0.5)
              & (row_f >= -0.5) & (row_f <= n - 0.5))

    out = np.zeros((n, n))
    if scheme == "nearest":
        c = np.clip(np.floor(col_f + 0.5), 0, n - 1).astype(int)
        r = np.clip(np.floor(row_f + 0.5), 0, n - 1).astype(int)
        out[inside] = p[r[inside], c[inside]]
    elif scheme == "bilinear":
        c0 = np.floor(col_f).astype(int)
        r0 = np.floor(row_f).astype(int)
        tc = col_f - c0
        tr = row_f - r0
        acc = np.zeros((n, n))
        for dr, wr in ((0, 1.0 - tr), (1, tr)):
            rr = np.clip(r0 + dr, 0, n - 1)
            for dc, wc in ((0, 1.0 - tc), (1, tc)):
                cc = np.clip(c0 + dc, 0, n - 1)
                acc += wr * wc * p[rr, cc]
        out[inside] = acc[inside]
    else:
        c0 = np.floor(col_f).astype(int)
        r0 = np.floor(row_f).astype(int)
        tc = col_f - c0
        tr = row_f - r0
        wc = _catmull_rom_weights(tc)
        wr = _catmull_rom_weights(tr)
        acc = np.zeros((n, n))
        for i in range(4):
            rr = np.clip(r0 + i - 1, 0, n - 1)
            for j in range(4):
                cc = np.clip(c0 + j - 1, 0, n - 1)
                acc += wr[i] * wc[j] * p[rr, cc]
        out[inside] = acc[inside]
    return GrayImage(np.clip(out, 0.0, 1.0))


def _catmull_rom_weights(t):
    """Catmull-Rom (a = -1/2) cubic weights for taps at offsets -1, 0, 1, 2.

    At t = 0 the weights are exactly (0, 1, 0, 0), which is what makes a
    zero-angle rotation reproduce the input exactly.
    """
    t2 = t * t
    t3 = t2 * t
    return (
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    )


def canonicalize_image(img: GrayImage, scheme: str = "bilinear",
                       sigma: float = 1.0,
                       threshold: float = GRADIENT_THRESHOLD) -> CanonResult:
    """Rotate an image into its canonical orientation.

    Estimates the orientation angle from the blurred model's mean gradient
    and resamples the original (unblurred) image by that angle; the blur
    feeds only the angle estimate.  Degenerate images (mean gradient at or
    below threshold) are returned unrotated with the flag set.  The
    element of the result is the applied angle alpha; its energy is the
    mean gradient magnitude.
    """
    _require_square(img)
    mg = mean_gradient(smooth_model(img, sigma))
    alpha, degenerate = canonical_angle(mg, threshold)
    if degenerate:
        return CanonResult(canonical=img, element=0.0, degenerate=True,
                           energy=mg.magnitude)
    return CanonResult(canonical=rotate_image(img, alpha, scheme),
                       element=alpha, degenerate=False, energy=mg.magnitude)


class RotationMapping:
    """Image canonicalizer in the interface the equivariant wrapper expects.

    Elements are rotation angles in radians acting by
    apply(alpha, img) = rotate_image(img, alpha, scheme).
    """

    def __init__(self, scheme: str = "bilinear", sigma: float = 1.0,
                 threshold: float = GRADIENT_THRESHOLD):
        self.scheme = _check_scheme(scheme)
        self.sigma = sigma
        self.threshold = threshold

    def __call__(self, img: GrayImage) -> CanonResult:
        return canonicalize_image(img, scheme=self.scheme, sigma=self.sigma,
                                  threshold=self.threshold)

    def apply(self, alpha: float, img: GrayImage) -> GrayImage:
        return rotate_image(img, alpha, self.scheme)

    @staticmethod
    def inverse(alpha: float) -> float:
        return -alpha
