"""Model handles: the unit every training procedure operates on.

A handle couples a reference architecture with its flat parameter vector,
a train/eval mode flag and a freeze flag.  Frozen handles are guaranteed
bitwise-stable: training entry points refuse them, and the digest gives
tests an exact way to assert that.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from freqveil.arrayio import read_array, write_array
from freqveil.models.nets import ConvClassifier2d, ConvClassifier3d, EncoderDecoder2d
from freqveil.rngs import stream

ROLES = ("enhancer", "classifier", "compensator", "utility", "recovery")


class ModelSpecError(ValueError):
    """Raised when a shape_spec is inconsistent with the requested role."""


class FrozenModelError(RuntimeError):
    """Raised when a training step is attempted on a frozen handle."""


@dataclass
class ModelHandle:
    role: str
    architecture: object
    params: np.ndarray
    architecture_id: str
    init_seed: int
    shape_spec: dict
    mode: str = "train"
    frozen: bool = False

    @property
    def n_params(self) -> int:
        return int(self.params.size)

    @property
    def named_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return list(self.architecture.pack.specs)

    @property
    def num_classes(self) -> int | None:
        return getattr(self.architecture, "num_classes", None)

    def _batched(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        expect = len(self.architecture.input_shape)
        x = np.asarray(x, dtype=self.params.dtype)
        if x.ndim == expect:
            return x[None], True
        if x.ndim == expect + 1:
            return x, False
        # image-to-image maps accept deeper stacks (e.g. N clips of slices)
        if self.role in ("enhancer", "compensator", "recovery") and x.ndim > expect + 1:
            return x, False
        raise ValueError(
            f"{self.role} forward expects input of shape {self.architecture.input_shape}"
            f" (optionally batched), got {x.shape}"
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Deterministic forward pass (no stochastic layers in any
        reference architecture)."""
        xb, single = self._batched(x)
        lead = xb.shape[: xb.ndim - len(self.architecture.input_shape)]
        flat = xb.reshape((-1,) + tuple(self.architecture.input_shape))
        y, _ = self.architecture.forward(self.params, flat, want_cache=False)
        y = y.reshape(lead + y.shape[1:])
        return y[0] if single else y

    def forward_backward(self, x: np.ndarray, loss_fn):
        """Run loss_fn(outputs) -> (loss, dOutputs); return
        (loss, dParams, dInputs)."""
        xb, _ = self._batched(x)
        lead = xb.shape[: xb.ndim - len(self.architecture.input_shape)]
        flat = xb.reshape((-1,) + tuple(self.architecture.input_shape))
        y, cache = self.architecture.forward(self.params, flat, want_cache=True)
        loss, dy = loss_fn(y.reshape(lead + y.shape[1:]))
        dy = np.asarray(dy, dtype=self.params.dtype).reshape(y.shape)
        grad, dx = self.architecture.backward(cache, dy)
        return loss, grad, dx.reshape(xb.shape)

    def clone(self, role: str | None = None) -> "ModelHandle":
        return ModelHandle(
            role=role or self.role,
            architecture=self.architecture,
            params=self.params.copy(),
            architecture_id=self.architecture_id,
            init_seed=self.init_seed,
            shape_spec=dict(self.shape_spec),
            mode=self.mode,
            frozen=False,
        )


def _require(spec: dict, keys: tuple[str, ...], role: str) -> None:
    missing = [k for k in keys if k not in spec]
    if missing:
        raise ModelSpecError(f"role {role!r} requires shape_spec keys {missing}")


def make_reference_model(role: str, shape_spec: dict, init_seed: int) -> ModelHandle:
    """Build a reference model for one of the five roles.

    shape_spec keys: height/width/channels always; num_classes for
    classifier and utility; frames for utility; optional width_factor and
    dtype ("float32"/"float64").
    """
    if role not in ROLES:
        raise ModelSpecError(f"unknown role {role!r}; choose from {ROLES}")
    spec = dict(shape_spec)
    dtype = np.dtype(spec.pop("dtype", "float32"))
    if role in ("enhancer", "compensator", "recovery"):
        _require(spec, ("height", "width", "channels"), role)
        if "num_classes" in spec:
            raise ModelSpecError(f"role {role!r} does not take num_classes")
        arch = EncoderDecoder2d(
            spec["height"], spec["width"], spec["channels"],
            width_factor=spec.get("width_factor", 8), dtype=dtype,
        )
    elif role == "classifier":
        _require(spec, ("height", "width", "channels", "num_classes"), role)
        arch = ConvClassifier2d(
            spec["height"], spec["width"], spec["channels"], spec["num_classes"],
            width_factor=spec.get("width_factor", 8), dtype=dtype,
        )
    else:
        _require(spec, ("frames", "height", "width", "channels", "num_classes"), role)
        arch = ConvClassifier3d(
            spec["frames"], spec["height"], spec["width"], spec["channels"],
            spec["num_classes"], width_factor=spec.get("width_factor", 6),
            dtype=dtype,
        )
    params = arch.init_params(stream(init_seed, "init", role, arch.architecture_id))
    spec["dtype"] = dtype.name
    return ModelHandle(role=role, architecture=arch, params=params,
                       architecture_id=arch.architecture_id,
                       init_seed=init_seed, shape_spec=spec)


def freeze(model: ModelHandle) -> ModelHandle:
    model.frozen = True
    model.mode = "eval"
    return model


def param_digest(model: ModelHandle) -> str:
    """Content hash of the parameter vector; stable across restarts."""
    h = hashlib.sha256()
    h.update(model.architecture_id.encode())
    h.update(model.params.dtype.str.encode())
    h.update(np.ascontiguousarray(model.params).tobytes())
    return h.hexdigest()


def save_model(model: ModelHandle, directory: str | Path) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    views = model.architecture.pack.views(model.params)
    files = {}
    for i, (name, _) in enumerate(model.named_shapes):
        fname = f"p{i:03d}_{name}.arr"
        write_array(out / fname, views[name])
        files[name] = fname
    meta = {
        "role": model.role,
        "architecture_id": model.architecture_id,
        "init_seed": model.init_seed,
        "shape_spec": model.shape_spec,
        "mode": model.mode,
        "frozen": model.frozen,
        "digest": param_digest(model),
        "files": files,
    }
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_model(directory: str | Path) -> ModelHandle:
    root = Path(directory)
    with open(root / "meta.json") as fh:
        meta = json.load(fh)
    handle = make_reference_model(meta["role"], meta["shape_spec"], meta["init_seed"])
    views = handle.architecture.pack.views(handle.params)
    for name, fname in meta["files"].items():
        views[name][...] = read_array(root / fname)
    handle.mode = meta["mode"]
    handle.frozen = meta["frozen"]
    if meta["architecture_id"] != handle.architecture_id:
        raise ModelSpecError(
            f"{root}: architecture_id mismatch "
            f"({meta['architecture_id']} vs {handle.architecture_id})"
        )
    got = param_digest(handle)
    if got != meta["digest"]:
        raise ModelSpecError(f"{root}: parameter digest mismatch after load")
    return handle
