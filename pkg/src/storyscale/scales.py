"""Next-scale prediction substrate: schedules, upsampling, residual accumulation.

Generation runs over an ordered list of latent grid sizes. Each step emits a
binary residual map (one sign bit per channel per location, dequantized to
+/-gamma), which is bilinearly upsampled to the final grid and added onto the
running feature map. A seeded per-pixel map turns the final features into an
8-bit RGB raster.

The bilinear kernel uses the half-pixel-center convention with edge clamping:
    src = (dst + 0.5) * (in_size / out_size) - 0.5, clamped to [0, in_size-1]
and blends the four surrounding source cells per channel. Equal input and
output sizes return a bitwise copy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StateError, ValidationError
from .rng import stream

TOY_SIZES = ((1, 1), (2, 2), (4, 4), (8, 8))
FULL_SIZES = tuple((s, s) for s in (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64))
DEFAULT_EARLY_STEPS = (2, 3)


def logistic(x):
    """Numerically stable elementwise logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class ScaleSchedule:
    """Ordered latent grid sizes; the last entry is the output grid (H, W)."""

    sizes: tuple[tuple[int, int], ...]
    early_steps: frozenset[int]

    @property
    def n_steps(self) -> int:
        return len(self.sizes)

    @property
    def final_size(self) -> tuple[int, int]:
        return self.sizes[-1]

    def size_at(self, step: int) -> tuple[int, int]:
        if not 1 <= step <= self.n_steps:
            raise ValidationError(f"step {step} outside schedule 1..{self.n_steps}")
        return self.sizes[step - 1]


def make_schedule(sizes="toy", early_steps=None) -> ScaleSchedule:
    """Build and validate a schedule.

    ``sizes`` is "toy", "full", or a sequence of (h, w) pairs. Presets default
    to early steps {2, 3}; custom size lists default to no early steps.
    """
    if isinstance(sizes, str):
        if sizes == "toy":
            resolved = TOY_SIZES
        elif sizes == "full":
            resolved = FULL_SIZES
        else:
            raise ValidationError(f"unknown schedule preset {sizes!r}")
        if early_steps is None:
            early_steps = DEFAULT_EARLY_STEPS
    else:
        resolved = tuple((int(h), int(w)) for h, w in sizes)
        if early_steps is None:
            early_steps = ()

    if len(resolved) < 1:
        raise ValidationError("schedule needs at least one size")
    for h, w in resolved:
        if h < 1 or w < 1:
            raise ValidationError(f"non-positive grid size ({h}, {w})")
    for (h0, w0), (h1, w1) in zip(resolved, resolved[1:]):
        if h1 < h0 or w1 < w0:
            raise ValidationError(
                f"schedule sizes must be non-decreasing, got ({h0},{w0}) then ({h1},{w1})"
            )

    early = frozenset(int(s) for s in early_steps)
    bad = sorted(s for s in early if not 1 <= s <= len(resolved))
    if bad:
        raise ValidationError(f"early steps {bad} outside schedule 1..{len(resolved)}")
    return ScaleSchedule(sizes=resolved, early_steps=early)


def resize_bilinear(arr: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an (h, w, d) array to (h', w'), either direction."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise ValidationError(f"expected (h, w, d) array, got shape {arr.shape}")
    h, w, _ = arr.shape
    h2, w2 = int(target[0]), int(target[1])
    if h2 < 1 or w2 < 1:
        raise ValidationError(f"non-positive target size ({h2}, {w2})")
    if (h2, w2) == (h, w):
        return arr.copy()

    rs = np.clip((np.arange(h2) + 0.5) * (h / h2) - 0.5, 0.0, h - 1.0)
    cs = np.clip((np.arange(w2) + 0.5) * (w / w2) - 0.5, 0.0, w - 1.0)
    r0 = np.floor(rs).astype(np.intp)
    c0 = np.floor(cs).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rs - r0)[:, None, None]
    fc = (cs - c0)[None, :, None]

    v00 = arr[np.ix_(r0, c0)]
    v01 = arr[np.ix_(r0, c1)]
    v10 = arr[np.ix_(r1, c0)]
    v11 = arr[np.ix_(r1, c1)]
    return (
        (1.0 - fr) * (1.0 - fc) * v00
        + (1.0 - fr) * fc * v01
        + fr * (1.0 - fc) * v10
        + fr * fc * v11
    )


def upsample_bilinear(arr: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear upsample; residual accumulation never downsamples."""
    h, w = np.asarray(arr).shape[:2]
    if target[0] < h or target[1] < w:
        raise ValidationError(f"downscale from ({h}, {w}) to {tuple(target)} not allowed")
    return resize_bilinear(arr, target)


@dataclass
class ResidualMap:
    """Per-step quantized residual: sign bits plus their +/-gamma values."""

    bits: np.ndarray  # (h, w, d) uint8 in {0, 1}
    values: np.ndarray  # (h, w, d) float64, gamma * (2*bits - 1)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.bits.shape != self.values.shape:
            raise ValidationError("bits and values shapes differ")
        self.bits.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def channels(self) -> int:
        return self.bits.shape[-1]


def default_gamma(d: int) -> float:
    """Dequantized bit magnitude; 1/sqrt(d) keeps residual norms scale-free."""
    return 1.0 / np.sqrt(d)


def quantize_bits(raw: np.ndarray, gamma: float | None = None) -> ResidualMap:
    """Sign-quantize an (h, w, d) array; ties at 0 quantize to bit 1."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3:
        raise ValidationError(f"expected (h, w, d) array, got shape {raw.shape}")
    if raw.size and not np.all(np.isfinite(raw)):
        raise ValidationError("quantizer input contains non-finite entries")
    if gamma is None:
        gamma = default_gamma(raw.shape[-1])
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    bits = (raw >= 0.0).astype(np.uint8)
    values = gamma * (2.0 * bits - 1.0)
    return ResidualMap(bits=bits, values=values)


@dataclass
class FeatureMap:
    """Running sum of upsampled residuals at the output grid."""

    data: np.ndarray  # (H, W, d) float64
    step: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValidationError(f"expected (H, W, d) features, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("feature map contains non-finite entries")
        if self.step < 0:
            raise ValidationError("feature step must be >= 0")
        self.data.setflags(write=False)


def initial_features(data: np.ndarray) -> FeatureMap:
    return FeatureMap(data=data, step=0)


def accumulate(prev: FeatureMap, residual: ResidualMap, step: int | None = None) -> FeatureMap:
    """Add the upsampled step-s residual onto the step s-1 feature map."""
    if step is None:
        step = prev.step + 1
    if step != prev.step + 1:
        raise StateError(f"accumulating step {step} onto features at step {prev.step}")
    target = prev.data.shape[:2]
    data = prev.data + upsample_bilinear(residual.values, target)
    return FeatureMap(data=data, step=step)


@dataclass
class ImageRaster:
    """8-bit RGB raster."""

    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[-1] != 3:
            raise ValidationError(f"expected (H, W, 3) pixels, got shape {self.pixels.shape}")
        self.pixels.setflags(write=False)

    @property
    def size(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


def decoder_constants(seed: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (M, b) of the per-pixel map, shared by a whole run."""
    rng = stream("decoder", seed)
    m = rng.standard_normal((3, d)) / np.sqrt(d)
    b = 0.1 * rng.standard_normal(3)
    return m, b


def raster_from_features(data: np.ndarray, m: np.ndarray, b: np.ndarray) -> ImageRaster:
    """Per-pixel map RGB = round(255 * logistic(M f + b)), round half up."""
    z = data @ m.T + b
    pixels = np.floor(255.0 * logistic(z) + 0.5).astype(np.uint8)
    return ImageRaster(pixels)


def decode_image(final: FeatureMap, seed: int, n_steps: int, upscale: int = 1) -> ImageRaster:
    """Decode the finished feature map; optionally enlarge by nearest neighbor."""
    if final.step != n_steps:
        raise StateError(f"decoding features at step {final.step}, schedule has {n_steps}")
    m, b = decoder_constants(seed, final.data.shape[-1])
    raster = raster_from_features(final.data, m, b)
    if upscale != 1:
        raster = nearest_upscale(raster, upscale)
    return raster


def nearest_upscale(raster: ImageRaster, factor: int) -> ImageRaster:
    """Integer nearest-neighbor enlargement for visual inspection."""
    if factor < 1:
        raise ValidationError("upscale factor must be >= 1")
    if factor == 1:
        return raster
    pixels = raster.pixels.repeat(factor, axis=0).repeat(factor, axis=1)
    return ImageRaster(pixels)
