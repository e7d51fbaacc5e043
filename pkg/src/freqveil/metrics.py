"""Leakage, utility and image-quality metrics, and comparison tables.

The leakage ratio follows the closed-set protocol: a frozen identity
classifier reads one seeded random frame per clip, and the fraction of
clips whose identity it recovers is the leakage.  Chance level is 1/K.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from freqveil.datagen import Dataset, VideoClip
from freqveil.rngs import stream

TABLE_COLUMNS = ["variant", "PLR", "ACC", "SSIM", "PSNR", "chance"]


class MetricError(ValueError):
    """Raised for shape or class-count mismatches in metric calls."""


@dataclass
class PrivacyReport:
    plr: float
    utility_accuracy: float
    per_class_accuracy: dict[str, float | None]
    identity_confusion: list[list[int]]
    chance_level: float
    variant_id: str
    seed: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.plr <= 1.0):
            raise MetricError(f"plr must lie in [0, 1], got {self.plr}")
        if not (0.0 <= self.utility_accuracy <= 1.0):
            raise MetricError(
                f"utility_accuracy must lie in [0, 1], got {self.utility_accuracy}"
            )
        conf = np.asarray(self.identity_confusion)
        if conf.ndim != 2 or conf.shape[0] != conf.shape[1]:
            raise MetricError(f"identity_confusion must be square, got {conf.shape}")
        total = conf.sum()
        if total > 0 and abs(self.plr - np.trace(conf) / total) > 1e-12:
            raise MetricError("plr must equal trace(confusion)/total")
        if abs(self.chance_level - 1.0 / conf.shape[0]) > 1e-12:
            raise MetricError("chance_level must be 1/K")

    def to_json(self) -> str:
        payload = {
            "plr": self.plr,
            "utility_accuracy": self.utility_accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "identity_confusion": self.identity_confusion,
            "chance_level": self.chance_level,
            "variant_id": self.variant_id,
            "seed": self.seed,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PrivacyReport":
        data = json.loads(text)
        return cls(**data)


@dataclass
class ThreatReport:
    ssim: float
    psnr: float
    plr: float
    method_id: str

    def __post_init__(self) -> None:
        if not (-1.0 <= self.ssim <= 1.0):
            raise MetricError(f"ssim must lie in [-1, 1], got {self.ssim}")
        if not (0.0 <= self.plr <= 1.0):
            raise MetricError(f"plr must lie in [0, 1], got {self.plr}")

    def to_json(self) -> str:
        return json.dumps(
            {"ssim": self.ssim, "psnr": self.psnr, "plr": self.plr,
             "method_id": self.method_id},
            sort_keys=True, indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ThreatReport":
        return cls(**json.loads(text))


def _as_clips(clips) -> list[VideoClip]:
    if isinstance(clips, Dataset):
        return clips.clips
    if hasattr(clips, "clips"):
        return list(clips.clips)
    return list(clips)


def privacy_leakage_ratio(validator, clips, frame_seed: int,
                          frame_level: bool = False
                          ) -> tuple[float, np.ndarray]:
    """Fraction of clips (or frames, if frame_level) whose identity the
    validator recovers, plus the K×K identity confusion matrix."""
    clip_list = _as_clips(clips)
    k = validator.num_classes
    if k is None:
        raise MetricError("validator exposes no class count")
    bad = [c.clip_id for c in clip_list if c.identity >= k]
    if bad:
        raise MetricError(
            f"clips with identity label >= validator classes ({k}): {bad[:5]}"
        )
    frames, labels = [], []
    for idx, clip in enumerate(clip_list):
        if frame_level:
            frames.append(clip.frames)
            labels.extend([clip.identity] * clip.frames.shape[0])
        else:
            t = int(stream(frame_seed, "plr_frame", idx).integers(clip.frames.shape[0]))
            frames.append(clip.frames[t:t + 1])
            labels.append(clip.identity)
    x = np.concatenate(frames, axis=0)
    labels = np.array(labels)
    confusion = np.zeros((k, k), dtype=np.int64)
    for start in range(0, len(x), 512):
        logits = validator.forward(x[start:start + 512])
        pred = np.argmax(logits, axis=1)
        for t, p in zip(labels[start:start + 512], pred):
            confusion[t, p] += 1
    plr = float(np.trace(confusion) / confusion.sum())
    return plr, confusion


def accuracy(classifier, clips, label_field: str
             ) -> tuple[float, dict[str, float | None]]:
    """Top-1 clip-level accuracy plus per-class accuracies (absent classes
    map to None, not zero)."""
    clip_list = _as_clips(clips)
    k = classifier.num_classes
    if k is None:
        raise MetricError("classifier exposes no class count")
    labels = np.array([getattr(c, label_field) for c in clip_list])
    if labels.max() >= k:
        raise MetricError(
            f"label {labels.max()} out of range for {k}-class classifier"
        )
    x = np.stack([c.frames for c in clip_list])
    preds = []
    for start in range(0, len(x), 64):
        logits = classifier.forward(x[start:start + 64])
        preds.append(np.argmax(logits, axis=1))
    pred = np.concatenate(preds)
    acc = float(np.mean(pred == labels))
    per_class: dict[str, float | None] = {}
    for c in range(k):
        mask = labels == c
        per_class[str(c)] = float(np.mean(pred[mask] == c)) if mask.any() else None
    return acc, per_class


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _local_stats(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    wins = sliding_window_view(img, window.shape)
    return np.einsum("ijkl,kl->ij", wins, window)


def ssim(a: np.ndarray, b: np.ndarray, window_size: int = 11,
         sigma: float = 1.5, dynamic_range: float = 1.0) -> float:
    """Mean local structural similarity with an 11×11 Gaussian window
    (σ=1.5) and the standard stabilisation constants for L=1 data."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise MetricError(f"ssim expects H×W or H×W×C frames, got shape {a.shape}")
    if a.shape[0] < window_size or a.shape[1] < window_size:
        raise MetricError(
            f"ssim needs frames of at least {window_size}×{window_size}, "
            f"got {a.shape[:2]}"
        )
    window = _gaussian_window(window_size, sigma)
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    values = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mu_x = _local_stats(x, window)
        mu_y = _local_stats(y, window)
        exx = _local_stats(x * x, window)
        eyy = _local_stats(y * y, window)
        exy = _local_stats(x * y, window)
        var_x = exx - mu_x * mu_x
        var_y = eyy - mu_y * mu_y
        cov = exy - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


def psnr(a: np.ndarray, b: np.ndarray, dynamic_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the inputs coincide."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(dynamic_range ** 2 / mse)


def assemble_report(privacy_reports, threat_reports=None) -> list[dict]:
    """Collate reports into comparison-table rows keyed by variant.

    Columns are fixed (variant, PLR, ACC, SSIM, PSNR, chance); metrics a
    variant lacks are listed as None.
    """
    threat_by_id = {t.method_id: t for t in (threat_reports or [])}
    rows = []
    for rep in privacy_reports:
        threat = threat_by_id.pop(rep.variant_id, None)
        rows.append({
            "variant": rep.variant_id,
            "PLR": rep.plr,
            "ACC": rep.utility_accuracy,
            "SSIM": threat.ssim if threat else None,
            "PSNR": threat.psnr if threat else None,
            "chance": rep.chance_level,
        })
    for method_id, threat in threat_by_id.items():
        rows.append({
            "variant": method_id,
            "PLR": threat.plr,
            "ACC": None,
            "SSIM": threat.ssim,
            "PSNR": threat.psnr,
            "chance": None,
        })
    return rows


def report_rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k))
                         for k in TABLE_COLUMNS})
    return buf.getvalue()


def report_rows_to_json(rows: list[dict]) -> str:
    return json.dumps(rows, sort_keys=True, indent=2)
