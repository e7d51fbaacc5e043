"""Reference architectures: tiny encoder-decoder and convolutional
classifiers with hand-derived backward passes.

All three stay in the low thousands of parameters at default widths so a
full training run finishes in seconds on a CPU; wider or pretrained
backbones can be slotted in behind the same handle interface.
"""

from __future__ import annotations

import numpy as np

from freqveil.models import layers as L


class ParamPack:
    """Maps a flat parameter vector to named, shaped views."""

    def __init__(self, specs: list[tuple[str, tuple[int, ...]]]):
        self.specs = specs
        self.offsets: dict[str, tuple[int, int]] = {}
        pos = 0
        for name, shape in specs:
            size = int(np.prod(shape))
            self.offsets[name] = (pos, pos + size)
            pos += size
        self.size = pos

    def views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        for name, shape in self.specs:
            a, b = self.offsets[name]
            out[name] = flat[a:b].reshape(shape)
        return out

    def pack(self, arrays: dict[str, np.ndarray], dtype) -> np.ndarray:
        flat = np.zeros(self.size, dtype=dtype)
        for name, shape in self.specs:
            a, b = self.offsets[name]
            flat[a:b] = arrays[name].ravel()
        return flat


def _he_conv(rng, shape, dtype, scale=2.0):
    fan_in = int(np.prod(shape[:-1]))
    return (rng.standard_normal(shape) * np.sqrt(scale / fan_in)).astype(dtype)


def _coord_channels_2d(height: int, width: int, dtype) -> np.ndarray:
    """Fixed per-pixel coordinate planes in [-1, 1]; concatenated to the
    input so that filters followed by global pooling can still express
    position-dependent features."""
    ys = np.linspace(-1.0, 1.0, height, dtype=dtype)[:, None]
    xs = np.linspace(-1.0, 1.0, width, dtype=dtype)[None, :]
    return np.stack([np.broadcast_to(ys, (height, width)),
                     np.broadcast_to(xs, (height, width))], axis=-1)


def _coord_channels_3d(frames: int, height: int, width: int, dtype) -> np.ndarray:
    ts = np.linspace(-1.0, 1.0, frames, dtype=dtype)[:, None, None]
    ys = np.linspace(-1.0, 1.0, height, dtype=dtype)[None, :, None]
    xs = np.linspace(-1.0, 1.0, width, dtype=dtype)[None, None, :]
    shape = (frames, height, width)
    return np.stack([np.broadcast_to(ts, shape), np.broadcast_to(ys, shape),
                     np.broadcast_to(xs, shape)], axis=-1)


class EncoderDecoder2d:
    """Per-frame image-to-image map: two-scale encoder, bottleneck, nearest
    upsample, full-resolution skip concatenation, linear output head with a
    global input residual (so the identity map is cheap to represent).

    Needs even spatial extents.  Applies to any (..., H, W, C) stack by
    flattening the leading axes into the batch.
    """

    def __init__(self, height: int, width: int, channels: int,
                 width_factor: int = 8, dtype=np.float32):
        if height % 2 or width % 2:
            raise ValueError(f"encoder-decoder needs even extents, got {height}×{width}")
        self.height, self.width, self.channels = height, width, channels
        self.wf = width_factor
        self.dtype = np.dtype(dtype)
        w = width_factor
        c = channels
        self.pack = ParamPack([
            ("enc1_w", (3, 3, c, w)), ("enc1_b", (w,)),
            ("enc2_w", (3, 3, w, 2 * w)), ("enc2_b", (2 * w,)),
            ("mid_w", (3, 3, 2 * w, 2 * w)), ("mid_b", (2 * w,)),
            ("dec_w", (3, 3, 3 * w, w)), ("dec_b", (w,)),
            ("out_w", (3, 3, w, c)), ("out_b", (c,)),
        ])

    @property
    def architecture_id(self) -> str:
        return (f"enc_dec2d_w{self.wf}_{self.height}x{self.width}x"
                f"{self.channels}_{self.dtype.name}")

    @property
    def input_shape(self) -> tuple[int, ...]:
        return (self.height, self.width, self.channels)

    @property
    def n_params(self) -> int:
        return self.pack.size

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        arrays = {}
        for name, shape in self.pack.specs:
            if name.endswith("_b"):
                arrays[name] = np.zeros(shape, dtype=self.dtype)
            elif name == "out_w":
                arrays[name] = _he_conv(rng, shape, self.dtype, scale=1.0)
            else:
                arrays[name] = _he_conv(rng, shape, self.dtype)
        return self.pack.pack(arrays, self.dtype)

    def forward(self, params: np.ndarray, x: np.ndarray, want_cache=False):
        p = self.pack.views(params)
        a1, c1 = L.conv2d_forward(x, p["enc1_w"], p["enc1_b"])
        r1, m1 = L.relu_forward(a1)
        a2, c2 = L.conv2d_forward(r1, p["enc2_w"], p["enc2_b"], stride=2)
        r2, m2 = L.relu_forward(a2)
        a3, c3 = L.conv2d_forward(r2, p["mid_w"], p["mid_b"])
        r3, m3 = L.relu_forward(a3)
        up, cu = L.upsample2d_forward(r3)
        cat = np.concatenate([up, r1], axis=-1)
        a4, c4 = L.conv2d_forward(cat, p["dec_w"], p["dec_b"])
        r4, m4 = L.relu_forward(a4)
        y, c5 = L.conv2d_forward(r4, p["out_w"], p["out_b"])
        y = y + x
        if not want_cache:
            return y, None
        return y, (c1, m1, c2, m2, c3, m3, cu, c4, m4, c5, up.shape[-1])

    def backward(self, cache, dy):
        c1, m1, c2, m2, c3, m3, cu, c4, m4, c5, up_ch = cache
        g: dict[str, np.ndarray] = {}
        dr4, g["out_w"], g["out_b"] = L.conv2d_backward(dy, c5)
        da4 = L.relu_backward(dr4, m4)
        dcat, g["dec_w"], g["dec_b"] = L.conv2d_backward(da4, c4)
        dup, dr1_skip = dcat[..., :up_ch], dcat[..., up_ch:]
        dr3 = L.upsample2d_backward(dup, cu)
        da3 = L.relu_backward(dr3, m3)
        dr2, g["mid_w"], g["mid_b"] = L.conv2d_backward(da3, c3)
        da2 = L.relu_backward(dr2, m2)
        dr1, g["enc2_w"], g["enc2_b"] = L.conv2d_backward(da2, c2)
        da1 = L.relu_backward(dr1 + dr1_skip, m1)
        dx, g["enc1_w"], g["enc1_b"] = L.conv2d_backward(da1, c1)
        return self.pack.pack(g, dy.dtype), dx + dy


class ConvClassifier2d:
    """Frame classifier: two conv/pool stages over the input plus fixed
    coordinate channels, global average pooling and a linear head.  The
    input is centred at mid-gray before convolution (pixel data lives in
    [0, 1]).  Needs extents divisible by 4."""

    INPUT_OFFSET = 0.5

    def __init__(self, height: int, width: int, channels: int,
                 num_classes: int, width_factor: int = 8, dtype=np.float32):
        if height % 4 or width % 4:
            raise ValueError(
                f"classifier needs extents divisible by 4, got {height}×{width}"
            )
        self.height, self.width, self.channels = height, width, channels
        self.num_classes = num_classes
        self.wf = width_factor
        self.dtype = np.dtype(dtype)
        self.coords = _coord_channels_2d(height, width, self.dtype)
        w, c = width_factor, channels
        self.pack = ParamPack([
            ("c1_w", (3, 3, c + 2, w)), ("c1_b", (w,)),
            ("c2_w", (3, 3, w, 2 * w)), ("c2_b", (2 * w,)),
            ("head_w", (2 * w, num_classes)), ("head_b", (num_classes,)),
        ])

    @property
    def architecture_id(self) -> str:
        return (f"conv_cls2d_w{self.wf}_{self.height}x{self.width}x"
                f"{self.channels}_k{self.num_classes}_{self.dtype.name}")

    @property
    def input_shape(self) -> tuple[int, ...]:
        return (self.height, self.width, self.channels)

    @property
    def n_params(self) -> int:
        return self.pack.size

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        arrays = {}
        for name, shape in self.pack.specs:
            if name.endswith("_b"):
                arrays[name] = np.zeros(shape, dtype=self.dtype)
            elif name == "head_w":
                arrays[name] = _he_conv(rng, shape, self.dtype, scale=1.0)
            else:
                arrays[name] = _he_conv(rng, shape, self.dtype)
        return self.pack.pack(arrays, self.dtype)

    def forward(self, params, x, want_cache=False):
        p = self.pack.views(params)
        coords = np.broadcast_to(self.coords, x.shape[:1] + self.coords.shape)
        xc = np.concatenate([x - self.INPUT_OFFSET, coords.astype(x.dtype)], axis=-1)
        a1, c1 = L.conv2d_forward(xc, p["c1_w"], p["c1_b"])
        r1, m1 = L.relu_forward(a1)
        p1, cp1 = L.avgpool2d_forward(r1)
        a2, c2 = L.conv2d_forward(p1, p["c2_w"], p["c2_b"])
        r2, m2 = L.relu_forward(a2)
        p2, cp2 = L.avgpool2d_forward(r2)
        g, cg = L.gap_forward(p2)
        y, cd = L.dense_forward(g, p["head_w"], p["head_b"])
        if not want_cache:
            return y, None
        return y, (c1, m1, cp1, c2, m2, cp2, cg, cd, p["head_w"])

    def backward(self, cache, dy):
        c1, m1, cp1, c2, m2, cp2, cg, cd, head_w = cache
        g: dict[str, np.ndarray] = {}
        dg, g["head_w"], g["head_b"] = L.dense_backward(dy, cd, head_w)
        dp2 = L.gap_backward(dg, cg)
        dr2 = L.avgpool2d_backward(dp2, cp2)
        da2 = L.relu_backward(dr2, m2)
        dp1, g["c2_w"], g["c2_b"] = L.conv2d_backward(da2, c2)
        dr1 = L.avgpool2d_backward(dp1, cp1)
        da1 = L.relu_backward(dr1, m1)
        dx, g["c1_w"], g["c1_b"] = L.conv2d_backward(da1, c1)
        return self.pack.pack(g, dy.dtype), dx[..., : self.channels]


class ConvClassifier3d:
    """Clip classifier over T×H×W×C input: two 3-D conv/pool stages over
    the mid-gray-centred input plus coordinate channels, global average
    pooling, linear head.  Needs all extents divisible by 4."""

    INPUT_OFFSET = 0.5

    def __init__(self, frames: int, height: int, width: int, channels: int,
                 num_classes: int, width_factor: int = 6, dtype=np.float32):
        if frames % 4 or height % 4 or width % 4:
            raise ValueError(
                f"clip classifier needs extents divisible by 4, got "
                f"{frames}×{height}×{width}"
            )
        self.frames = frames
        self.height, self.width, self.channels = height, width, channels
        self.num_classes = num_classes
        self.wf = width_factor
        self.dtype = np.dtype(dtype)
        self.coords = _coord_channels_3d(frames, height, width, self.dtype)
        w, c = width_factor, channels
        self.pack = ParamPack([
            ("c1_w", (3, 3, 3, c + 3, w)), ("c1_b", (w,)),
            ("c2_w", (3, 3, 3, w, 2 * w)), ("c2_b", (2 * w,)),
            ("head_w", (2 * w, num_classes)), ("head_b", (num_classes,)),
        ])

    @property
    def architecture_id(self) -> str:
        return (f"conv_cls3d_w{self.wf}_{self.frames}x{self.height}x"
                f"{self.width}x{self.channels}_k{self.num_classes}_{self.dtype.name}")

    @property
    def input_shape(self) -> tuple[int, ...]:
        return (self.frames, self.height, self.width, self.channels)

    @property
    def n_params(self) -> int:
        return self.pack.size

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        arrays = {}
        for name, shape in self.pack.specs:
            if name.endswith("_b"):
                arrays[name] = np.zeros(shape, dtype=self.dtype)
            elif name == "head_w":
                arrays[name] = _he_conv(rng, shape, self.dtype, scale=1.0)
            else:
                arrays[name] = _he_conv(rng, shape, self.dtype)
        return self.pack.pack(arrays, self.dtype)

    def forward(self, params, x, want_cache=False):
        p = self.pack.views(params)
        coords = np.broadcast_to(self.coords, x.shape[:1] + self.coords.shape)
        xc = np.concatenate([x - self.INPUT_OFFSET, coords.astype(x.dtype)], axis=-1)
        a1, c1 = L.conv3d_forward(xc, p["c1_w"], p["c1_b"])
        r1, m1 = L.relu_forward(a1)
        p1, cp1 = L.avgpool3d_forward(r1)
        a2, c2 = L.conv3d_forward(p1, p["c2_w"], p["c2_b"])
        r2, m2 = L.relu_forward(a2)
        p2, cp2 = L.avgpool3d_forward(r2)
        g, cg = L.gap_forward(p2)
        y, cd = L.dense_forward(g, p["head_w"], p["head_b"])
        if not want_cache:
            return y, None
        return y, (c1, m1, cp1, c2, m2, cp2, cg, cd, p["head_w"])

    def backward(self, cache, dy):
        c1, m1, cp1, c2, m2, cp2, cg, cd, head_w = cache
        g: dict[str, np.ndarray] = {}
        dg, g["head_w"], g["head_b"] = L.dense_backward(dy, cd, head_w)
        dp2 = L.gap_backward(dg, cg)
        dr2 = L.avgpool3d_backward(dp2, cp2)
        da2 = L.relu_backward(dr2, m2)
        dp1, g["c2_w"], g["c2_b"] = L.conv3d_backward(da2, c2)
        dr1 = L.avgpool3d_backward(dp1, cp1)
        da1 = L.relu_backward(dr1, m1)
        dx, g["c1_w"], g["c1_b"] = L.conv3d_backward(da1, c1)
        return self.pack.pack(g, dy.dtype), dx[..., : self.channels]
