"""Differentiable layer primitives over float64 numpy arrays.

Every operation is a pure function: forward passes return ``(output,
cache)`` and the matching backward consumes the cache plus the upstream
gradient. Video tensors are laid out ``(T, C, H, W)`` and per-timestep
feature tensors ``(T, F)``.

Convolutions accumulate one kernel offset at a time over strided views,
so the hot loop runs over the (small) kernel volume while numpy
vectorizes over the output volume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeMismatchError(ValueError):
    """Input shape incompatible with layer parameters; names the axis."""


def _out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


@dataclass
class ConvKernel:
    """Spatiotemporal convolution parameters.

    weights: (C_out, C_in, k_t, k_h, k_w); stride/padding ordered (t, h, w).
    Bias is per output channel and defaults to zeros so the plain
    convolution formula holds at initialization.
    """

    weights: np.ndarray
    stride: tuple[int, int, int] = (1, 1, 1)
    padding: tuple[int, int, int] = (0, 0, 0)
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.weights.ndim != 5:
            raise ShapeMismatchError("kernel weights must be 5D (C_out, C_in, k_t, k_h, k_w)")
        if min(self.weights.shape[2:]) < 1:
            raise ValueError("kernel dims must be >= 1")
        if min(self.stride) < 1:
            raise ValueError("strides must be >= 1")
        if min(self.padding) < 0:
            raise ValueError("paddings must be >= 0")
        if self.bias is None:
            self.bias = np.zeros(self.weights.shape[0])
        elif self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatchError("bias length must equal output channel count")

    def output_shape(self, x_shape: tuple[int, ...]) -> tuple[int, int, int, int]:
        t, c, h, w = x_shape
        cout, cin, kt, kh, kw = self.weights.shape
        if c != cin:
            raise ShapeMismatchError(
                f"channel axis mismatch: input has {c} channels, kernel expects {cin}"
            )
        (st, sh, sw), (pt, ph, pw) = self.stride, self.padding
        for name, size, k, p in (("time", t, kt, pt), ("height", h, kh, ph), ("width", w, kw, pw)):
            if size + 2 * p < k:
                raise ShapeMismatchError(
                    f"{name} axis too small: {size} (+2*{p} pad) < kernel {k}"
                )
        return (
            _out_size(t, kt, st, pt),
            cout,
            _out_size(h, kh, sh, ph),
            _out_size(w, kw, sw, pw),
        )


def conv3d_forward(x: np.ndarray, kernel: ConvKernel):
    """Spatiotemporal convolution of a (T, C, H, W) input.

    Out-of-bounds reads are zero (zero padding). Returns (y, cache) with
    y shaped (T', C_out, H', W'). Internally the input is held
    channels-first and each kernel offset contributes one matmul, so the
    Python loop runs only over the kernel volume.
    """
    to, cout, ho, wo = kernel.output_shape(x.shape)
    t, c, h, w = x.shape
    _, _, kt, kh, kw = kernel.weights.shape
    (st, sh, sw), (pt, ph, pw) = kernel.stride, kernel.padding

    xpc = np.zeros((c, t + 2 * pt, h + 2 * ph, w + 2 * pw))
    xpc[:, pt:pt + t, ph:ph + h, pw:pw + w] = x.transpose(1, 0, 2, 3)

    yacc = np.zeros((cout, to * ho * wo))
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                xs = xpc[:, dt:dt + to * st:st, dh:dh + ho * sh:sh, dw:dw + wo * sw:sw]
                yacc += kernel.weights[:, :, dt, dh, dw] @ xs.reshape(c, -1)
    yacc += kernel.bias[:, None]
    y = yacc.reshape(cout, to, ho, wo).transpose(1, 0, 2, 3)
    cache = (xpc, x.shape, kernel)
    return y, cache


def conv3d_backward(cache, grad_out: np.ndarray):
    """Gradients of the convolution w.r.t. input, weights, and bias."""
    xpc, x_shape, kernel = cache
    t, c, h, w = x_shape
    to, cout, ho, wo = grad_out.shape
    _, _, kt, kh, kw = kernel.weights.shape
    (st, sh, sw), (pt, ph, pw) = kernel.stride, kernel.padding

    gyc = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3)).reshape(cout, -1)
    grad_w = np.zeros_like(kernel.weights)
    grad_xpc = np.zeros_like(xpc)
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                tsl = slice(dt, dt + to * st, st)
                hsl = slice(dh, dh + ho * sh, sh)
                wsl = slice(dw, dw + wo * sw, sw)
                xs = xpc[:, tsl, hsl, wsl].reshape(c, -1)
                grad_w[:, :, dt, dh, dw] = gyc @ xs.T
                grad_xpc[:, tsl, hsl, wsl] += (
                    kernel.weights[:, :, dt, dh, dw].T @ gyc
                ).reshape(c, to, ho, wo)
    grad_x = grad_xpc[:, pt:pt + t, ph:ph + h, pw:pw + w].transpose(1, 0, 2, 3)
    grad_b = gyc.sum(axis=1)
    return grad_x, grad_w, grad_b


def maxpool_forward(x: np.ndarray, window: tuple[int, int], stride: tuple[int, int]):
    """Spatial max pooling over (T, C, H, W); time and channel untouched.

    Returns (y, cache); the cache holds argmax offsets for backward routing.
    """
    t, c, h, w = x.shape
    wh, ww = window
    sh, sw = stride
    if h < wh or w < ww:
        raise ShapeMismatchError(
            f"pool window {window} larger than spatial input {(h, w)}"
        )
    ho = (h - wh) // sh + 1
    wo = (w - ww) // sw + 1
    cand = np.empty((wh * ww, t, c, ho, wo))
    for k, (dh, dw) in enumerate((i, j) for i in range(wh) for j in range(ww)):
        cand[k] = x[:, :, dh:dh + ho * sh:sh, dw:dw + wo * sw:sw]
    arg = cand.argmax(axis=0)
    y = np.take_along_axis(cand, arg[None], axis=0)[0]
    cache = (x.shape, window, stride, arg)
    return y, cache


def maxpool_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    x_shape, (wh, ww), (sh, sw), arg = cache
    grad_x = np.zeros(x_shape)
    _, _, ho, wo = grad_out.shape
    for k, (dh, dw) in enumerate((i, j) for i in range(wh) for j in range(ww)):
        mask = arg == k
        grad_x[:, :, dh:dh + ho * sh:sh, dw:dw + wo * sw:sw] += grad_out * mask
    return grad_x


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), x


def relu_backward(cache, grad_out: np.ndarray, guided: bool = False) -> np.ndarray:
    """Subgradient at 0 is 0. In guided mode the gradient additionally
    passes only where it is itself positive."""
    grad = grad_out * (cache > 0)
    if guided:
        grad = grad * (grad_out > 0)
    return grad


def channel_dropout_forward(x: np.ndarray, p: float, rng: np.random.Generator | None,
                            training: bool):
    """Zero whole channels (axis 1) with probability p, scaling survivors
    by 1/(1-p) so evaluation is identity (inverted dropout)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout rate must be in [0, 1], got {p}")
    if not training or p == 0.0:
        return x, None
    if p == 1.0:
        raise ValueError("dropout rate 1 in training mode zeroes every channel")
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = rng.random(x.shape[1]) >= p
    mask = keep.astype(float) / (1.0 - p)
    y = x * mask[None, :, None, None]
    return y, mask


def channel_dropout_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    if cache is None:
        return grad_out
    return grad_out * cache[None, :, None, None]


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Per-timestep affine map: (T, F) -> (T, F') with weight (F', F)."""
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(
            f"feature axis mismatch: input has {x.shape[1]}, weight expects {weight.shape[1]}"
        )
    return x @ weight.T + bias, (x, weight)


def linear_backward(cache, grad_out: np.ndarray):
    x, weight = cache
    grad_x = grad_out @ weight
    grad_w = grad_out.T @ x
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax along an axis; rejects non-finite input."""
    if not np.isfinite(x).all():
        raise ValueError("softmax input contains non-finite values")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    if not np.isfinite(x).all():
        raise ValueError("log_softmax input contains non-finite values")
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax_backward(y: np.ndarray, grad_out: np.ndarray, axis: int = -1) -> np.ndarray:
    dot = (grad_out * y).sum(axis=axis, keepdims=True)
    return y * (grad_out - dot)


@dataclass
class InitSpec:
    """Seeded parameter initialization recipe.

    scheme: "he" | "orthogonal" | "uniform" | "zeros"; uniform carries
    (lo, hi). Seeded draws are bit-reproducible.
    """

    scheme: str
    seed: int = 0
    lo: float = field(default=0.0)
    hi: float = field(default=0.0)

    def __post_init__(self):
        if self.scheme == "uniform" and not self.lo < self.hi:
            raise ValueError("uniform init requires lo < hi")


def he_init(rng: np.random.Generator, shape: tuple[int, ...],
            fan_in: int | None = None) -> np.ndarray:
    """Zero-mean normal with variance 2/fan_in (fan_in defaults to the
    product of all non-leading axes)."""
    if fan_in is None:
        if len(shape) < 2:
            raise ValueError("he init needs a fan-in derivable from shape")
        fan_in = int(np.prod(shape[1:]))
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def orthogonal_init(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Matrix Q with Q^T Q = I. Requires 2D shape with rows >= cols."""
    if len(shape) != 2 or shape[0] < shape[1]:
        raise ValueError(f"orthogonal init needs 2D (rows >= cols) shape, got {shape}")
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a)
    # Sign fix makes the distribution well-defined and runs reproducible.
    q = q * np.sign(np.diag(r))[None, :]
    return q


def init_parameters(spec: InitSpec, shape: tuple[int, ...]) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    if spec.scheme == "zeros":
        return np.zeros(shape)
    if spec.scheme == "he":
        return he_init(rng, shape)
    if spec.scheme == "orthogonal":
        return orthogonal_init(rng, shape)
    if spec.scheme == "uniform":
        return rng.uniform(spec.lo, spec.hi, size=shape)
    raise ValueError(f"unknown init scheme {spec.scheme!r}")
