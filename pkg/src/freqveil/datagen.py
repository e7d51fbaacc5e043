"""Synthetic factor-controlled video data and labelled-directory ingest.

Synthetic clips are built from two separable factors: a static smooth
spatial field per identity and a class-specific temporally oscillating
masked pattern per expression, plus optional white noise.  The temporal
frequency split is exact on this data: a temporal Haar step removes the
identity field from the detail band entirely, which is what makes the
downstream two-stream training testable at desk scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from freqveil.arrayio import read_array, write_array
from freqveil.rngs import stream


class ValidationError(ValueError):
    """Raised when an input violates a declared bound."""


class IngestError(ValueError):
    """Raised when a labelled directory cannot be ingested; message lists
    every offending file."""


@dataclass(frozen=True)
class VideoClip:
    """A T×H×W×C float array in [0, 1] with identity/expression labels."""

    frames: np.ndarray
    identity: int
    expression: int
    clip_id: str

    def __post_init__(self) -> None:
        f = self.frames
        if f.ndim != 4:
            raise ValidationError(
                f"clip {self.clip_id}: frames must be T×H×W×C, got shape {f.shape}"
            )
        if f.shape[0] < 2:
            raise ValidationError(
                f"clip {self.clip_id}: temporal extent must be >= 2, got {f.shape[0]}"
            )
        if not np.all(np.isfinite(f)):
            raise ValidationError(f"clip {self.clip_id}: non-finite pixel values")
        if f.min() < 0.0 or f.max() > 1.0:
            raise ValidationError(
                f"clip {self.clip_id}: pixel values outside [0, 1] "
                f"(min {f.min():.4g}, max {f.max():.4g})"
            )

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.frames.shape  # type: ignore[return-value]


@dataclass
class Dataset:
    clips: list[VideoClip]
    num_identities: int
    num_expressions: int
    provenance: str = "synthetic"
    seed: int | None = None

    def __post_init__(self) -> None:
        ids = [c.clip_id for c in self.clips]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate clip_ids in dataset")
        for c in self.clips:
            if not (0 <= c.identity < self.num_identities):
                raise ValidationError(
                    f"clip {c.clip_id}: identity {c.identity} outside "
                    f"[0, {self.num_identities})"
                )
            if not (0 <= c.expression < self.num_expressions):
                raise ValidationError(
                    f"clip {c.clip_id}: expression {c.expression} outside "
                    f"[0, {self.num_expressions})"
                )
        seen_i = {c.identity for c in self.clips}
        seen_e = {c.expression for c in self.clips}
        if seen_i != set(range(self.num_identities)):
            raise ValidationError("every identity must appear in at least one clip")
        if seen_e != set(range(self.num_expressions)):
            raise ValidationError("every expression must appear in at least one clip")

    def __len__(self) -> int:
        return len(self.clips)

    def clip_shape(self) -> tuple[int, int, int, int]:
        return self.clips[0].shape

    def frames_array(self) -> np.ndarray:
        """Stack all clips into an (N, T, H, W, C) array."""
        return np.stack([c.frames for c in self.clips])

    def identities(self) -> np.ndarray:
        return np.array([c.identity for c in self.clips], dtype=np.int64)

    def expressions(self) -> np.ndarray:
        return np.array([c.expression for c in self.clips], dtype=np.int64)

    def with_expressions(self, labels: np.ndarray) -> "Dataset":
        """Copy with replaced expression labels (null-model controls)."""
        clips = [replace(c, expression=int(l)) for c, l in zip(self.clips, labels)]
        return Dataset(clips, self.num_identities, self.num_expressions,
                       self.provenance, self.seed)


@dataclass(frozen=True)
class SynthesisSpec:
    num_identities: int = 10
    num_expressions: int = 4
    clips_per_pair: int = 5
    frames: int = 16
    height: int = 32
    width: int = 32
    channels: int = 1
    identity_pattern_scale: float = 0.25
    expression_amplitude: float = 0.2
    noise_std: float = 0.02
    seed: int = 0

    def validate(self) -> None:
        checks = [
            (self.num_identities >= 2, f"num_identities must be >= 2, got {self.num_identities}"),
            (self.num_expressions >= 2, f"num_expressions must be >= 2, got {self.num_expressions}"),
            (self.clips_per_pair >= 1, f"clips_per_pair must be >= 1, got {self.clips_per_pair}"),
            (self.frames >= 2, f"frames must be >= 2, got {self.frames}"),
            (self.height >= 1 and self.width >= 1 and self.channels >= 1,
             "spatial dims and channels must be >= 1"),
            (self.noise_std >= 0, f"noise_std must be >= 0, got {self.noise_std}"),
            (self.expression_amplitude >= 0,
             f"expression_amplitude must be >= 0, got {self.expression_amplitude}"),
        ]
        bad = [msg for ok, msg in checks if not ok]
        if bad:
            raise ValidationError("; ".join(bad))


def _smooth_field(rng: np.random.Generator, height: int, width: int,
                  channels: int, cutoff: int = 3) -> np.ndarray:
    """Smooth zero-mean random field from a truncated 2-D cosine basis,
    normalized to unit max magnitude."""
    ys = np.arange(height)[:, None]
    xs = np.arange(width)[None, :]
    out = np.zeros((height, width, channels))
    for c in range(channels):
        plane = np.zeros((height, width))
        for u in range(cutoff + 1):
            for v in range(cutoff + 1):
                if u == 0 and v == 0:
                    continue
                amp = rng.normal()
                plane += amp * np.cos(math.pi * u * (ys + 0.5) / height) * \
                    np.cos(math.pi * v * (xs + 0.5) / width)
        plane -= plane.mean()
        peak = np.abs(plane).max()
        if peak > 0:
            plane /= peak
        out[:, :, c] = plane
    return out


def identity_pattern(spec: SynthesisSpec, identity: int) -> np.ndarray:
    """Static per-identity field, centred at mid-gray."""
    rng = stream(spec.seed, "identity", identity)
    base = _smooth_field(rng, spec.height, spec.width, spec.channels)
    return 0.5 + spec.identity_pattern_scale * base


def _mode_order(count: int) -> list[tuple[int, int]]:
    modes = [(u, v) for u in range(count + 2) for v in range(count + 2)
             if (u, v) != (0, 0)]
    modes.sort(key=lambda uv: (uv[0] + uv[1], uv))
    return modes[:count]


def expression_mask(spec: SynthesisSpec, expression: int) -> np.ndarray:
    """Class-specific spatial mask: one low-order 2-D cosine mode per class,
    unit peak magnitude.  Deterministic and well separated across classes,
    so the expression factor is legible to small classifiers."""
    u, v = _mode_order(spec.num_expressions)[expression]
    ys = np.arange(spec.height)[:, None]
    xs = np.arange(spec.width)[None, :]
    plane = np.cos(math.pi * u * (ys + 0.5) / spec.height) * \
        np.cos(math.pi * v * (xs + 0.5) / spec.width)
    plane /= np.abs(plane).max()
    return np.repeat(plane[:, :, None], spec.channels, axis=2)


def expression_cycles(spec: SynthesisSpec, expression: int) -> int:
    """Distinct whole-clip cycle count per class, starting at one cycle.

    Slow oscillations put most of the expression's energy into the
    approximation band of a temporal split, alongside the identity field,
    so identity removal genuinely costs expression fidelity (which feature
    compensation must then restore).  Tiny clips with fewer admissible
    frequencies than classes reuse them cyclically."""
    available = list(range(1, (spec.frames - 1) // 2 + 1))
    if not available:
        return 1
    return available[expression % len(available)]


def expression_modulation(spec: SynthesisSpec, expression: int,
                          phase: float = 0.0) -> np.ndarray:
    """Per-class oscillation over time applied to the class mask: T×H×W×C.

    The whole-cycle count and the mask identify the class; the phase is an
    instance parameter (clips draw it at random, like noise), so a clip's
    temporal alignment never identifies its class.  Integer cycle counts
    keep the temporal mean of the modulation at zero for any phase.
    """
    cycles = expression_cycles(spec, expression)
    t = np.arange(spec.frames)
    envelope = np.sin(2.0 * math.pi * cycles * t / spec.frames + phase)
    mask = expression_mask(spec, expression)
    return spec.expression_amplitude * envelope[:, None, None, None] * mask[None]


def _synthesize_clip(spec: SynthesisSpec, index: int, identity: int,
                     expression: int) -> VideoClip:
    base = identity_pattern(spec, identity)
    frames = np.broadcast_to(base, (spec.frames, *base.shape)).copy()
    if spec.expression_amplitude > 0:
        phase = float(stream(spec.seed, "clip_phase", index).uniform(0, 2 * math.pi))
        frames = frames + expression_modulation(spec, expression, phase)
    if spec.noise_std > 0:
        rng = stream(spec.seed, "clip", index)
        frames += spec.noise_std * rng.standard_normal(frames.shape)
    frames = np.clip(frames, 0.0, 1.0).astype(np.float32)
    return VideoClip(frames=frames, identity=identity, expression=expression,
                     clip_id=f"i{identity:03d}_e{expression:02d}_c{index:05d}")


def generate_synthetic(spec: SynthesisSpec) -> Dataset:
    """Generate K·E·clips_per_pair labelled clips, deterministic in the seed.

    Each clip's noise stream is keyed by (seed, clip index), so generation
    may be parallelized over clips without changing the result.
    """
    spec.validate()
    clips: list[VideoClip] = []
    index = 0
    for identity in range(spec.num_identities):
        for expression in range(spec.num_expressions):
            for _ in range(spec.clips_per_pair):
                clips.append(_synthesize_clip(spec, index, identity, expression))
                index += 1
    return Dataset(clips, spec.num_identities, spec.num_expressions,
                   provenance="synthetic", seed=spec.seed)


def split_dataset(dataset: Dataset, test_fraction: float,
                  seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split over (identity, expression); both halves keep every
    stratum, so every identity and expression appears on both sides."""
    if not (0.0 < test_fraction < 1.0):
        raise ValidationError(
            f"test_fraction must be in (0, 1), got {test_fraction}"
        )
    strata: dict[tuple[int, int], list[int]] = {}
    for i, clip in enumerate(dataset.clips):
        strata.setdefault((clip.identity, clip.expression), []).append(i)

    too_small = [k for k, v in sorted(strata.items()) if len(v) < 2]
    if too_small:
        raise ValidationError(
            "strata too small to split (need >= 2 clips): "
            + ", ".join(f"(identity={i}, expression={e})" for i, e in too_small)
        )

    target_test = int(round(test_fraction * len(dataset)))
    keys = sorted(strata)
    quotas = {k: test_fraction * len(strata[k]) for k in keys}
    counts = {k: min(max(int(math.floor(quotas[k])), 1), len(strata[k]) - 1)
              for k in keys}
    # largest-remainder top-up toward the global target, deterministic order
    remainder_order = sorted(
        keys, key=lambda k: (-(quotas[k] - math.floor(quotas[k])), k)
    )
    deficit = target_test - sum(counts.values())
    for k in remainder_order:
        if deficit <= 0:
            break
        if counts[k] < len(strata[k]) - 1:
            counts[k] += 1
            deficit -= 1
    for k in reversed(remainder_order):
        if deficit >= 0:
            break
        if counts[k] > 1:
            counts[k] -= 1
            deficit += 1

    test_idx: list[int] = []
    for k in keys:
        members = np.array(strata[k])
        rng_k = stream(seed, "split", k[0], k[1])
        picked = rng_k.permutation(len(members))[: counts[k]]
        test_idx.extend(members[picked].tolist())
    test_set = set(test_idx)
    train_clips = [c for i, c in enumerate(dataset.clips) if i not in test_set]
    test_clips = [c for i, c in enumerate(dataset.clips) if i in test_set]
    mk = lambda clips: Dataset(clips, dataset.num_identities,
                               dataset.num_expressions, dataset.provenance,
                               dataset.seed)
    return mk(train_clips), mk(test_clips)


def _load_clip_array(path: Path) -> np.ndarray:
    if path.suffix == ".arr":
        return read_array(path)
    if path.suffix == ".npy":
        return np.load(path)
    raise IngestError(f"{path}: unsupported file type {path.suffix!r}")


def _normalize_frames(arr: np.ndarray, origin: str) -> np.ndarray:
    if arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4:
        raise IngestError(f"{origin}: expected T×H×W[×C] frames, got shape {arr.shape}")
    if np.issubdtype(arr.dtype, np.integer):
        peak = float(np.iinfo(arr.dtype).max)
        arr = arr.astype(np.float32) / peak
    else:
        arr = arr.astype(np.float32)
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise IngestError(
                f"{origin}: float frames must lie in [0, 1] "
                f"(min {arr.min():.4g}, max {arr.max():.4g})"
            )
    return arr


def ingest_directory(path: str | Path, manifest: list[dict] | str | Path) -> Dataset:
    """Build a Dataset from per-clip array files plus a label manifest.

    ``manifest`` is either a list of records or a path to a JSON file with
    {"clips": [{"file", "identity", "expression", "clip_id"?}, ...]}.  Any
    per-file problem is collected and reported in one error.
    """
    root = Path(path)
    if isinstance(manifest, (str, Path)):
        with open(manifest) as fh:
            manifest = json.load(fh)["clips"]
    problems: list[str] = []
    clips: list[VideoClip] = []
    for i, rec in enumerate(manifest):
        fname = rec.get("file")
        if fname is None:
            problems.append(f"record {i}: missing 'file'")
            continue
        fpath = root / fname
        if not fpath.exists():
            problems.append(f"{fname}: file not found")
            continue
        try:
            identity = int(rec["identity"])
            expression = int(rec["expression"])
        except (KeyError, TypeError, ValueError):
            problems.append(f"{fname}: missing or non-integer labels")
            continue
        if identity < 0 or expression < 0:
            problems.append(f"{fname}: labels must be non-negative integers")
            continue
        try:
            arr = _normalize_frames(_load_clip_array(fpath), fname)
            clip = VideoClip(frames=arr, identity=identity, expression=expression,
                             clip_id=str(rec.get("clip_id", fname)))
        except (IngestError, ValidationError, OSError, ValueError) as exc:
            problems.append(str(exc))
            continue
        clips.append(clip)
    if problems:
        raise IngestError("ingest aborted:\n  " + "\n  ".join(problems))
    if not clips:
        raise IngestError("ingest aborted: manifest lists no clips")
    num_identities = max(c.identity for c in clips) + 1
    num_expressions = max(c.expression for c in clips) + 1
    return Dataset(clips, num_identities, num_expressions, provenance="ingested")


def save_dataset(dataset: Dataset, directory: str | Path) -> None:
    """Serialize as per-clip float32 containers plus a JSON manifest."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, clip in enumerate(dataset.clips):
        fname = f"clip_{i:05d}.arr"
        write_array(out / fname, clip.frames.astype(np.float32))
        records.append({
            "clip_id": clip.clip_id,
            "identity": clip.identity,
            "expression": clip.expression,
            "file": fname,
        })
    manifest = {
        "num_identities": dataset.num_identities,
        "num_expressions": dataset.num_expressions,
        "provenance": dataset.provenance,
        "seed": dataset.seed,
        "clips": records,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_dataset(directory: str | Path) -> Dataset:
    root = Path(directory)
    with open(root / "manifest.json") as fh:
        manifest = json.load(fh)
    clips = [
        VideoClip(frames=read_array(root / rec["file"]),
                  identity=rec["identity"], expression=rec["expression"],
                  clip_id=rec["clip_id"])
        for rec in manifest["clips"]
    ]
    return Dataset(clips, manifest["num_identities"], manifest["num_expressions"],
                   provenance=manifest["provenance"], seed=manifest["seed"])
