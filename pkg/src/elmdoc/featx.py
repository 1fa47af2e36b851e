"""Forward-only convolutional feature extractor.

Maps a raster image to a fixed-length float32 feature vector by running a
stack of conv / relu / cross-channel-normalization / max-pool layers with
frozen weights.  The canonical stack mirrors the convolutional portion of
AlexNet and turns a (3, 227, 227) input into 256 maps of 6x6, flattened to a
9216-vector.  Nothing here trains; weights are loaded from an EFW1 file or
supplied in memory.

Tensors are float32 numpy arrays laid out (channels, height, width).
"""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin

from . import fileio, rng

NETSPEC_MAGIC = b"EFW1"
NETSPEC_VERSION = 1

_FLAG_MEAN_IMAGE = 1 << 0
_FLAG_CHANNEL_MEAN = 1 << 1

_LAYER_TAGS = {"conv": 0, "relu": 1, "maxpool": 2, "lrn": 3}


class LayerShapeError(ValueError):
    """A layer's declared shape is incompatible with its input."""


@dataclass(frozen=True)
class ConvLayer:
    """Grouped 2-D cross-correlation with zero padding and bias."""

    out_channels: int
    kernel: int
    stride: int
    pad: int
    groups: int
    weights: np.ndarray  # (out_channels, in_channels // groups, kernel, kernel) f32
    bias: np.ndarray  # (out_channels,) f32

    kind = "conv"

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1] * self.groups

    def validate(self) -> None:
        if self.kernel < 1 or self.stride < 1:
            raise LayerShapeError(
                f"conv kernel and stride must be >= 1, got kernel={self.kernel} "
                f"stride={self.stride}"
            )
        if self.groups < 1 or self.out_channels % self.groups:
            raise LayerShapeError(
                f"out_channels {self.out_channels} not divisible by groups {self.groups}"
            )
        expected = (
            self.out_channels,
            self.weights.shape[1],
            self.kernel,
            self.kernel,
        )
        if self.weights.shape != expected:
            raise LayerShapeError(
                f"conv weights shape {self.weights.shape}, expected {expected}"
            )
        if self.bias.shape != (self.out_channels,):
            raise LayerShapeError(
                f"conv bias shape {self.bias.shape}, expected ({self.out_channels},)"
            )

    def out_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise LayerShapeError(
                f"conv expects {self.in_channels} input channels, got {c}"
            )
        if c % self.groups:
            raise LayerShapeError(
                f"in_channels {c} not divisible by groups {self.groups}"
            )
        out_h = (h + 2 * self.pad - self.kernel) // self.stride + 1
        out_w = (w + 2 * self.pad - self.kernel) // self.stride + 1
        if out_h < 1 or out_w < 1:
            raise LayerShapeError(
                f"conv kernel {self.kernel} (pad {self.pad}) does not fit "
                f"input {h}x{w}"
            )
        return (self.out_channels, out_h, out_w)


@dataclass(frozen=True)
class ReluLayer:
    kind = "relu"

    def validate(self) -> None:
        pass

    def out_shape(self, shape):
        return shape


@dataclass(frozen=True)
class MaxPoolLayer:
    """Max pooling with ceil-mode output sizing; border windows are clipped."""

    kernel: int
    stride: int

    kind = "maxpool"

    def validate(self) -> None:
        if self.kernel < 1 or self.stride < 1:
            raise LayerShapeError(
                f"maxpool kernel and stride must be >= 1, got kernel={self.kernel} "
                f"stride={self.stride}"
            )

    def out_shape(self, shape):
        c, h, w = shape
        out_h = _pool_extent(h, self.kernel, self.stride)
        out_w = _pool_extent(w, self.kernel, self.stride)
        return (c, out_h, out_w)


@dataclass(frozen=True)
class LrnLayer:
    """Cross-channel response normalization over a window of local_size maps.

    out = in / (k + alpha/local_size * sum(in^2 over window))^beta, with the
    window centered on each channel and clipped at the channel borders.
    Parameters are kept at float32 precision, matching their file encoding.
    """

    local_size: int
    alpha: float
    beta: float
    k: float

    kind = "lrn"

    def __post_init__(self):
        for name in ("alpha", "beta", "k"):
            object.__setattr__(self, name, float(np.float32(getattr(self, name))))

    def validate(self) -> None:
        if self.local_size < 1 or self.local_size % 2 == 0:
            raise LayerShapeError(
                f"lrn local_size must be odd and >= 1, got {self.local_size}"
            )

    def out_shape(self, shape):
        return shape


Layer = Union[ConvLayer, ReluLayer, MaxPoolLayer, LrnLayer]


@dataclass(frozen=True)
class NetSpec:
    """Frozen layer stack plus the preprocessing constants it was built for."""

    layers: tuple
    input_shape: tuple = (3, 227, 227)
    mean_image: Optional[np.ndarray] = None  # (c, h, w) f32, same as input_shape
    channel_mean: np.ndarray = field(
        default_factory=lambda: np.zeros(3, dtype=np.float32)
    )

    def validate(self) -> tuple:
        """Check the whole shape chain; returns the final tensor shape."""
        shape = tuple(self.input_shape)
        if self.mean_image is not None and tuple(self.mean_image.shape) != shape:
            raise LayerShapeError(
                f"mean image shape {self.mean_image.shape} does not match "
                f"input shape {shape}"
            )
        for index, layer in enumerate(self.layers):
            try:
                layer.validate()
                shape = layer.out_shape(shape)
            except LayerShapeError as exc:
                raise LayerShapeError(f"layer {index} ({layer.kind}): {exc}") from exc
        return shape

    @property
    def feature_dim(self) -> int:
        c, h, w = self.validate()
        return c * h * w


def _pool_extent(size: int, kernel: int, stride: int) -> int:
    # ceil-mode count; the final window may be clipped at the border
    out = -((size - kernel) // -stride) + 1
    if out < 1:
        out = 1
    # never start a window beyond the input
    if (out - 1) * stride >= size:
        out -= 1
    return out


def conv_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Cross-correlation (no kernel flip) with zero padding and groups."""
    layer.validate()
    c, h, w = x.shape
    out_c, out_h, out_w = layer.out_shape(x.shape)
    k, s, p, g = layer.kernel, layer.stride, layer.pad, layer.groups
    x = np.ascontiguousarray(x, dtype=np.float32)
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p)))
    windows = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
    out = np.empty((out_c, out_h, out_w), dtype=np.float32)
    in_per_group = c // g
    out_per_group = out_c // g
    for gi in range(g):
        w_g = layer.weights[gi * out_per_group : (gi + 1) * out_per_group]
        x_g = windows[gi * in_per_group : (gi + 1) * in_per_group]
        out[gi * out_per_group : (gi + 1) * out_per_group] = np.tensordot(
            w_g, x_g, axes=([1, 2, 3], [0, 3, 4])
        )
    out += layer.bias.astype(np.float32)[:, None, None]
    return out


def maxpool_forward(x: np.ndarray, layer: MaxPoolLayer) -> np.ndarray:
    layer.validate()
    c, h, w = x.shape
    _, out_h, out_w = layer.out_shape(x.shape)
    k, s = layer.kernel, layer.stride
    out = np.empty((c, out_h, out_w), dtype=x.dtype)
    for i in range(out_h):
        y0 = i * s
        y1 = min(y0 + k, h)
        for j in range(out_w):
            x0 = j * s
            x1 = min(x0 + k, w)
            out[:, i, j] = x[:, y0:y1, x0:x1].max(axis=(1, 2))
    return out


def lrn_forward(x: np.ndarray, layer: LrnLayer) -> np.ndarray:
    layer.validate()
    c, h, w = x.shape
    half = layer.local_size // 2
    squared = np.square(x, dtype=np.float64)
    # zero-padded channel axis makes the clipped-window sums a plain
    # cumulative-sum difference
    padded = np.zeros((c + 2 * half + 1, h, w))
    np.cumsum(squared, axis=0, out=padded[half + 1 : half + 1 + c])
    padded[half + 1 + c :] = padded[half + c]
    window_sum = padded[layer.local_size :] - padded[:c]
    denom = (layer.k + (layer.alpha / layer.local_size) * window_sum) ** layer.beta
    return (x / denom).astype(np.float32)


_FORWARD = {
    "conv": conv_forward,
    "relu": lambda x, layer: np.maximum(x, np.float32(0.0)),
    "maxpool": maxpool_forward,
    "lrn": lrn_forward,
}


def run_layers(x: np.ndarray, layers) -> np.ndarray:
    for index, layer in enumerate(layers):
        try:
            x = _FORWARD[layer.kind](x, layer)
        except (LayerShapeError, ValueError) as exc:
            raise LayerShapeError(f"layer {index} ({layer.kind}): {exc}") from exc
    return x


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers; edges clamp.

    img is (h, w) or (h, w, channels); the output keeps the channel axis.
    """
    if img.ndim == 2:
        return bilinear_resize(img[:, :, None], out_h, out_w)[:, :, 0]
    h, w = img.shape[:2]
    if h < 1 or w < 1 or out_h < 1 or out_w < 1:
        raise ValueError(f"cannot resize {h}x{w} to {out_h}x{out_w}")
    img = np.asarray(img, dtype=np.float32)

    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = ys.astype(np.int64)
    x0 = xs.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(np.float32)[:, None, None]
    wx = (xs - x0).astype(np.float32)[None, :, None]

    top = img[y0][:, x0] * (1.0 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1.0 - wx) + img[y1][:, x1] * wx
    return top * (1.0 - wy) + bottom * wy


def preprocess(image: np.ndarray, spec: NetSpec) -> np.ndarray:
    """Image raster -> network input tensor.

    Squash-resizes the whole image to the spec's spatial size (no cropping),
    replicates grayscale to three channels, and subtracts the stored mean
    image (or per-channel means).  Input is (h, w) or (h, w, 3), any numeric
    dtype; pixel values are used as-is (0..255 for 8-bit sources).
    """
    image = np.asarray(image)
    if image.ndim not in (2, 3) or image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError(f"cannot preprocess image of shape {image.shape}")
    channels, height, width = spec.input_shape
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], channels, axis=2)
    if image.shape[2] != channels:
        raise ValueError(
            f"image has {image.shape[2]} channels, network expects {channels}"
        )
    resized = bilinear_resize(image.astype(np.float32), height, width)
    tensor = np.ascontiguousarray(resized.transpose(2, 0, 1))
    if spec.mean_image is not None:
        tensor -= spec.mean_image
    else:
        tensor -= spec.channel_mean.astype(np.float32)[:, None, None]
    return tensor


def extract(image: np.ndarray, spec: NetSpec) -> np.ndarray:
    """Run the full stack on one image; returns a flat float32 vector.

    The flattening is channel-major (all of map 0, then map 1, ...).
    """
    out = run_layers(preprocess(image, spec), spec.layers)
    return out.reshape(-1)


def extract_batch(images, spec: NetSpec, threads: int = 1) -> np.ndarray:
    """Feature matrix for a sequence of images, optionally in parallel.

    Per-image results are independent of thread count.
    """
    images = list(images)
    if not images:
        return np.zeros((0, spec.feature_dim), dtype=np.float32)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda img: extract(img, spec), images))
    else:
        rows = [extract(img, spec) for img in images]
    return np.stack(rows)


class ConvFeatureExtractor(TransformerMixin, BaseEstimator):
    """Transformer wrapper so the frozen conv stack composes in pipelines.

    transform() maps a sequence of rasters (each (h, w) or (h, w, 3)) to the
    (n_images, feature_dim) float32 matrix.  There is nothing to fit.
    """

    def __init__(self, spec: NetSpec = None, threads: int = 1):
        self.spec = spec
        self.threads = threads

    def fit(self, X=None, y=None):
        if self.spec is None:
            raise ValueError("a NetSpec is required")
        self.spec.validate()
        return self

    def transform(self, X):
        if self.spec is None:
            raise ValueError("a NetSpec is required")
        return extract_batch(X, self.spec, threads=self.threads)


def alexnet_stub(seed: int = 0) -> NetSpec:
    """The canonical five-conv stack with placeholder random weights.

    Shape chain from (3, 227, 227): 55 -> 27 -> 13 -> 6 spatial, ending in
    (256, 6, 6) = 9216 features.  Real deployments overwrite the weights by
    loading a converted pretrained EFW1 file; random weights still exercise
    every shape and are enough for testing.
    """

    def conv(i, out_c, in_c, k, s, p, g):
        gen = rng.stream(seed, "conv", i)
        return ConvLayer(
            out_channels=out_c,
            kernel=k,
            stride=s,
            pad=p,
            groups=g,
            weights=gen.normal(0.0, 0.01, size=(out_c, in_c // g, k, k)).astype(
                np.float32
            ),
            bias=np.zeros(out_c, dtype=np.float32),
        )

    lrn = LrnLayer(local_size=5, alpha=1e-4, beta=0.75, k=1.0)
    pool = MaxPoolLayer(kernel=3, stride=2)
    layers = (
        conv(0, 96, 3, 11, 4, 0, 1),
        ReluLayer(),
        lrn,
        pool,
        conv(1, 256, 96, 5, 1, 2, 2),
        ReluLayer(),
        lrn,
        pool,
        conv(2, 384, 256, 3, 1, 1, 1),
        ReluLayer(),
        conv(3, 384, 384, 3, 1, 1, 2),
        ReluLayer(),
        conv(4, 256, 384, 3, 1, 1, 2),
        ReluLayer(),
        pool,
    )
    spec = NetSpec(layers=layers)
    spec.validate()
    return spec


def identity_netspec(channels: int = 3, height: int = 227, width: int = 227) -> NetSpec:
    """Single 1x1 identity conv; features are the preprocessed pixels."""
    weights = np.zeros((channels, channels, 1, 1), dtype=np.float32)
    for c in range(channels):
        weights[c, c, 0, 0] = 1.0
    layer = ConvLayer(
        out_channels=channels,
        kernel=1,
        stride=1,
        pad=0,
        groups=1,
        weights=weights,
        bias=np.zeros(channels, dtype=np.float32),
    )
    return NetSpec(layers=(layer,), input_shape=(channels, height, width))


def save_netspec(spec: NetSpec, path) -> None:
    """Write a NetSpec in the EFW1 binary format."""
    spec.validate()
    buf = io.BytesIO()
    buf.write(NETSPEC_MAGIC)
    fileio.write_u32(buf, NETSPEC_VERSION)
    flags = 0
    if spec.mean_image is not None:
        flags |= _FLAG_MEAN_IMAGE
    if np.any(spec.channel_mean != 0.0):
        flags |= _FLAG_CHANNEL_MEAN
    fileio.write_u32(buf, flags)
    fileio.write_u32(buf, len(spec.layers))
    for dim in spec.input_shape:
        fileio.write_u32(buf, dim)
    if flags & _FLAG_CHANNEL_MEAN:
        fileio.write_array(buf, spec.channel_mean, np.float32)
    if flags & _FLAG_MEAN_IMAGE:
        fileio.write_array(buf, spec.mean_image, np.float32)
    for layer in spec.layers:
        fileio.write_u8(buf, _LAYER_TAGS[layer.kind])
        if layer.kind == "conv":
            for value in (
                layer.out_channels,
                layer.in_channels,
                layer.kernel,
                layer.stride,
                layer.pad,
                layer.groups,
            ):
                fileio.write_u32(buf, value)
            fileio.write_array(buf, layer.weights, np.float32)
            fileio.write_array(buf, layer.bias, np.float32)
        elif layer.kind == "maxpool":
            fileio.write_u32(buf, layer.kernel)
            fileio.write_u32(buf, layer.stride)
        elif layer.kind == "lrn":
            fileio.write_u32(buf, layer.local_size)
            fileio.write_f32(buf, layer.alpha)
            fileio.write_f32(buf, layer.beta)
            fileio.write_f32(buf, layer.k)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_netspec(path) -> NetSpec:
    """Read and validate an EFW1 file; raises distinct errors for bad magic,
    unsupported version, truncation, and shape incompatibilities."""
    with open(path, "rb") as f:
        fileio.expect_magic(f, NETSPEC_MAGIC)
        fileio.expect_version(f, NETSPEC_VERSION, "network")
        flags = fileio.read_u32(f, "flags")
        layer_count = fileio.read_u32(f, "layer count")
        input_shape = tuple(fileio.read_u32(f, "input shape") for _ in range(3))
        channel_mean = np.zeros(input_shape[0], dtype=np.float32)
        mean_image = None
        if flags & _FLAG_CHANNEL_MEAN:
            channel_mean = fileio.read_array(
                f, np.float32, (input_shape[0],), "channel means"
            )
        if flags & _FLAG_MEAN_IMAGE:
            mean_image = fileio.read_array(f, np.float32, input_shape, "mean image")
        layers = []
        for index in range(layer_count):
            tag = fileio.read_u8(f, f"layer {index} tag")
            if tag == _LAYER_TAGS["conv"]:
                out_c = fileio.read_u32(f, f"layer {index} out_channels")
                in_c = fileio.read_u32(f, f"layer {index} in_channels")
                kernel = fileio.read_u32(f, f"layer {index} kernel")
                stride = fileio.read_u32(f, f"layer {index} stride")
                pad = fileio.read_u32(f, f"layer {index} pad")
                groups = fileio.read_u32(f, f"layer {index} groups")
                if groups < 1 or in_c % groups or out_c % groups:
                    raise LayerShapeError(
                        f"layer {index} (conv): channels {in_c}->{out_c} not "
                        f"divisible by groups {groups}"
                    )
                weights = fileio.read_array(
                    f,
                    np.float32,
                    (out_c, in_c // groups, kernel, kernel),
                    f"layer {index} weights",
                )
                bias = fileio.read_array(f, np.float32, (out_c,), f"layer {index} bias")
                layers.append(
                    ConvLayer(
                        out_channels=out_c,
                        kernel=kernel,
                        stride=stride,
                        pad=pad,
                        groups=groups,
                        weights=weights,
                        bias=bias,
                    )
                )
            elif tag == _LAYER_TAGS["relu"]:
                layers.append(ReluLayer())
            elif tag == _LAYER_TAGS["maxpool"]:
                kernel = fileio.read_u32(f, f"layer {index} kernel")
                stride = fileio.read_u32(f, f"layer {index} stride")
                layers.append(MaxPoolLayer(kernel=kernel, stride=stride))
            elif tag == _LAYER_TAGS["lrn"]:
                local_size = fileio.read_u32(f, f"layer {index} local_size")
                alpha = fileio.read_f32(f, f"layer {index} alpha")
                beta = fileio.read_f32(f, f"layer {index} beta")
                k = fileio.read_f32(f, f"layer {index} k")
                layers.append(
                    LrnLayer(local_size=local_size, alpha=alpha, beta=beta, k=k)
                )
            else:
                raise fileio.FileFormatError(f"unknown layer tag {tag} at layer {index}")
    spec = NetSpec(
        layers=tuple(layers),
        input_shape=input_shape,
        mean_image=mean_image,
        channel_mean=channel_mean,
    )
    spec.validate()
    return spec


def netspec_equal(a: NetSpec, b: NetSpec) -> bool:
    """Structural equality including all weight blocks."""
    if tuple(a.input_shape) != tuple(b.input_shape):
        return False
    if (a.mean_image is None) != (b.mean_image is None):
        return False
    if a.mean_image is not None and not np.array_equal(a.mean_image, b.mean_image):
        return False
    if not np.array_equal(a.channel_mean, b.channel_mean):
        return False
    if len(a.layers) != len(b.layers):
        return False
    for la, lb in zip(a.layers, b.layers):
        if la.kind != lb.kind:
            return False
        if la.kind == "conv":
            if (la.out_channels, la.kernel, la.stride, la.pad, la.groups) != (
                lb.out_channels,
                lb.kernel,
                lb.stride,
                lb.pad,
                lb.groups,
            ):
                return False
            if not np.array_equal(la.weights, lb.weights):
                return False
            if not np.array_equal(la.bias, lb.bias):
                return False
        elif la != lb:
            return False
    return True
