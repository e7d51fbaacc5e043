"""Orthonormal wavelet split of clips into low/high frequency bands.

Supports Haar and 4-tap Daubechies filters along the temporal axis, the
two spatial axes, or all three, at one or more levels, with periodic or
symmetric boundary handling.  Both boundary modes reconstruct exactly:

* periodic — band length n/2 per axis step (n must be even); the Haar
  step is literally low[t] = (x[2t]+x[2t+1])/√2 and
  high[t] = (x[2t]-x[2t+1])/√2.
* symmetric — the signal is extended symmetrically by L-1 samples, fully
  correlated, and decimated at even phase; band length is
  ceil((n + 3L - 3) / 2).  The extra boundary coefficients make the
  inverse exact at the cost of mild redundancy (so Parseval holds only
  for the periodic mode).

All operations are linear in the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("haar", "db2")
AXES = ("temporal", "spatial", "spatiotemporal")
BOUNDARIES = ("symmetric", "periodic")

_SQ2 = math.sqrt(2.0)
_LOWPASS = {
    "haar": np.array([1.0, 1.0]) / _SQ2,
    "db2": np.array(
        [1.0 + math.sqrt(3.0), 3.0 + math.sqrt(3.0),
         3.0 - math.sqrt(3.0), 1.0 - math.sqrt(3.0)]
    ) / (4.0 * _SQ2),
}


class TransformError(ValueError):
    """Raised for invalid transform configurations or shape mismatches."""


def _highpass(lo: np.ndarray) -> np.ndarray:
    length = len(lo)
    return np.array([(-1.0) ** m * lo[length - 1 - m] for m in range(length)])


def _axes_for(axis_kind: str) -> tuple[int, ...]:
    return {"temporal": (0,), "spatial": (1, 2), "spatiotemporal": (0, 1, 2)}[axis_kind]


@dataclass(frozen=True)
class TransformConfig:
    family: str = "haar"
    axis: str = "temporal"
    levels: int = 1
    boundary: str = "periodic"

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise TransformError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.axis not in AXES:
            raise TransformError(f"unknown axis {self.axis!r}; choose from {AXES}")
        if self.boundary not in BOUNDARIES:
            raise TransformError(
                f"unknown boundary {self.boundary!r}; choose from {BOUNDARIES}"
            )
        if self.levels < 1:
            raise TransformError(f"levels must be >= 1, got {self.levels}")

    def validate_shape(self, shape: tuple[int, ...]) -> None:
        if len(shape) != 4:
            raise TransformError(f"expected a T×H×W×C array, got shape {shape}")
        for ax in _axes_for(self.axis):
            extent = shape[ax]
            max_levels = int(math.floor(math.log2(extent))) if extent > 1 else 0
            if self.levels > max_levels:
                raise TransformError(
                    f"levels={self.levels} too deep for extent {extent} along "
                    f"axis {ax}; max admissible levels is {max_levels}"
                )
            if self.boundary == "periodic":
                for lvl in range(self.levels):
                    if extent % 2 != 0:
                        raise TransformError(
                            f"periodic boundary needs an even extent at every "
                            f"level; axis {ax} reaches odd extent {extent} at "
                            f"level {lvl + 1}"
                        )
                    extent //= 2

    def is_orthonormal(self) -> bool:
        return self.boundary == "periodic"


@dataclass
class FrequencyPair:
    """Approximation band plus detail bands and the metadata needed to invert.

    ``high`` holds one array per (level, orientation); ``band_keys`` names
    them in the same order, e.g. [(1, "H")] for a one-level temporal split
    or [(1, "LH"), (1, "HL"), (1, "HH")] for a one-level spatial split.
    ``level_shapes`` records the approximation shape entering each level,
    which the symmetric mode needs to crop its redundant coefficients.
    """

    low: np.ndarray
    high: list[np.ndarray]
    config: TransformConfig
    original_shape: tuple[int, ...]
    band_keys: list[tuple[int, str]] = field(default_factory=list)
    level_shapes: list[tuple[int, ...]] = field(default_factory=list)

    def detail(self, level: int = 1, code: str | None = None) -> np.ndarray:
        if code is None:
            code = "H" * len(_axes_for(self.config.axis))
        return self.high[self.band_keys.index((level, code))]


def _step_1d(x: np.ndarray, axis: int, lo: np.ndarray, hi: np.ndarray,
             boundary: str) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[axis]
    length = len(lo)
    x = np.moveaxis(x, axis, -1)
    if boundary == "periodic":
        if n % 2 != 0:
            raise TransformError(
                f"periodic boundary requires an even extent, got {n}"
            )
        out_lo = np.zeros(x.shape[:-1] + (n // 2,), dtype=x.dtype)
        out_hi = np.zeros_like(out_lo)
        for m in range(length):
            shifted = np.roll(x, -m, axis=-1)[..., ::2]
            out_lo += lo[m] * shifted
            out_hi += hi[m] * shifted
    else:
        pad = length - 1
        xe = np.concatenate(
            [x[..., :pad][..., ::-1], x, x[..., -pad:][..., ::-1]], axis=-1
        ) if pad else x
        zeros = np.zeros(x.shape[:-1] + (pad,), dtype=x.dtype)
        xe = np.concatenate([zeros, xe, zeros], axis=-1)
        full = xe.shape[-1] - length + 1
        acc_lo = np.zeros(x.shape[:-1] + (full,), dtype=x.dtype)
        acc_hi = np.zeros_like(acc_lo)
        for m in range(length):
            seg = xe[..., m:m + full]
            acc_lo += lo[m] * seg
            acc_hi += hi[m] * seg
        out_lo = acc_lo[..., ::2]
        out_hi = acc_hi[..., ::2]
    return np.moveaxis(out_lo, -1, axis), np.moveaxis(out_hi, -1, axis)


def _inverse_step_1d(lo_band: np.ndarray, hi_band: np.ndarray, axis: int,
                     lo: np.ndarray, hi: np.ndarray, boundary: str,
                     out_extent: int) -> np.ndarray:
    length = len(lo)
    a = np.moveaxis(lo_band, axis, -1)
    d = np.moveaxis(hi_band, axis, -1)
    count = a.shape[-1]
    if boundary == "periodic":
        n = out_extent
        x = np.zeros(a.shape[:-1] + (n,), dtype=a.dtype)
        for m in range(length):
            z = np.zeros_like(x)
            z[..., ::2] = lo[m] * a + hi[m] * d
            x += np.roll(z, m, axis=-1)
    else:
        up_lo = np.zeros(a.shape[:-1] + (2 * count,), dtype=a.dtype)
        up_lo[..., ::2] = a
        up_hi = np.zeros_like(up_lo)
        up_hi[..., ::2] = d
        pad = length - 1
        zeros = np.zeros(a.shape[:-1] + (pad,), dtype=a.dtype)
        ze_lo = np.concatenate([zeros, up_lo, zeros], axis=-1)
        ze_hi = np.concatenate([zeros, up_hi, zeros], axis=-1)
        full = ze_lo.shape[-1] - length + 1
        rec = np.zeros(a.shape[:-1] + (full,), dtype=a.dtype)
        rlo, rhi = lo[::-1], hi[::-1]
        for m in range(length):
            rec += rlo[m] * ze_lo[..., m:m + full] + rhi[m] * ze_hi[..., m:m + full]
        x = rec[..., 2 * pad:2 * pad + out_extent]
    return np.moveaxis(x, -1, axis)


def decompose(clip_frames: np.ndarray, config: TransformConfig) -> FrequencyPair:
    """Split a T×H×W×C array into approximation and detail bands."""
    x = np.asarray(clip_frames)
    config.validate_shape(x.shape)
    lo_f = _LOWPASS[config.family].astype(x.dtype if x.dtype.kind == "f" else np.float64)
    hi_f = _highpass(lo_f)
    axes = _axes_for(config.axis)

    approx = x.astype(lo_f.dtype, copy=True)
    high: list[np.ndarray] = []
    band_keys: list[tuple[int, str]] = []
    level_shapes: list[tuple[int, ...]] = []
    for level in range(1, config.levels + 1):
        level_shapes.append(approx.shape)
        bands = {"": approx}
        for ax in axes:
            next_bands: dict[str, np.ndarray] = {}
            for code, arr in bands.items():
                lo_b, hi_b = _step_1d(arr, ax, lo_f, hi_f, config.boundary)
                next_bands[code + "L"] = lo_b
                next_bands[code + "H"] = hi_b
            bands = next_bands
        approx = bands.pop("L" * len(axes))
        for code in sorted(bands):
            high.append(bands[code])
            band_keys.append((level, code))
    return FrequencyPair(low=approx, high=high, config=config,
                         original_shape=tuple(x.shape), band_keys=band_keys,
                         level_shapes=level_shapes)


def reconstruct(pair: FrequencyPair) -> np.ndarray:
    """Exact inverse of :func:`decompose`; accepts modified coefficients."""
    config = pair.config
    axes = _axes_for(config.axis)
    lo_f = _LOWPASS[config.family].astype(pair.low.dtype)
    hi_f = _highpass(lo_f)

    expected_keys = [
        (level, code)
        for level in range(1, config.levels + 1)
        for code in sorted(
            "".join(c) for c in _binary_codes(len(axes)) if "H" in c
        )
    ]
    if pair.band_keys != expected_keys or len(pair.high) != len(expected_keys):
        raise TransformError(
            f"detail bands {pair.band_keys} inconsistent with config "
            f"(expected {expected_keys})"
        )

    approx = np.asarray(pair.low)
    for level in range(config.levels, 0, -1):
        target_shape = pair.level_shapes[level - 1]
        bands = {("L" * len(axes)): approx}
        for key, arr in zip(pair.band_keys, pair.high):
            if key[0] == level:
                bands[key[1]] = np.asarray(arr)
        shapes = {c: b.shape for c, b in bands.items()}
        ref = bands["L" * len(axes)].shape
        for code, shp in shapes.items():
            if shp != ref:
                raise TransformError(
                    f"band {code!r} at level {level} has shape {shp}, "
                    f"expected {ref}"
                )
        for pos in range(len(axes) - 1, -1, -1):
            ax = axes[pos]
            merged: dict[str, np.ndarray] = {}
            prefixes = sorted({c[:pos] + c[pos + 1:] for c in bands})
            for rest in prefixes:
                code_lo = rest[:pos] + "L" + rest[pos:]
                code_hi = rest[:pos] + "H" + rest[pos:]
                merged[rest] = _inverse_step_1d(
                    bands[code_lo], bands[code_hi], ax, lo_f, hi_f,
                    config.boundary, target_shape[ax]
                )
            bands = merged
        approx = bands[""]
        if approx.shape != target_shape:
            raise TransformError(
                f"level {level} inverse produced shape {approx.shape}, "
                f"expected {target_shape}"
            )
    if approx.shape != pair.original_shape:
        raise TransformError(
            f"reconstruction shape {approx.shape} != original {pair.original_shape}"
        )
    return approx


def _binary_codes(width: int) -> list[str]:
    codes = [""]
    for _ in range(width):
        codes = [c + s for c in codes for s in ("L", "H")]
    return codes


def energy_split(pair: FrequencyPair) -> tuple[float, float]:
    """Sum of squared coefficients in the low band and across all detail
    bands.  For the periodic (orthonormal) mode the two add up to the
    squared norm of the input; the symmetric mode is redundant and does not
    conserve energy exactly."""
    low_e = float(np.sum(np.square(pair.low, dtype=np.float64)))
    high_e = float(sum(np.sum(np.square(b, dtype=np.float64)) for b in pair.high))
    return low_e, high_e
