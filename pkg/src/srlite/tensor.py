"""Dense rank-4 tensor kernels in (batch, channel, height, width) layout.

Every other module is built on the operations here: convolution, pooling,
activations, normalization, pixel shuffle, and the reshapes between spatial
maps and token sequences. Tensors are plain ``numpy.ndarray`` values; a
feature map is ``(b, C, H, W)`` float32/float64 and a token sequence is
``(b, n, C)`` with token ``t = h * W + w`` carrying the channel vector at one
spatial position.

All functions are pure: they never mutate their inputs, so values are safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConvKernel",
    "adaptive_max_pool2d",
    "apply_activation",
    "batch_norm_inference",
    "check_finite",
    "conv2d",
    "conv2d_direct",
    "elu",
    "elu_plus_one",
    "ensure_seq",
    "ensure_tensor4",
    "flatten_spatial",
    "layer_norm",
    "max_pool2d",
    "pixel_shuffle",
    "pixel_unshuffle",
    "relu",
    "sinusoidal_pos_embed",
    "softmax_rows",
    "unflatten_spatial",
]


def check_finite(name: str, a: np.ndarray) -> np.ndarray:
    """Raise FloatingPointError if ``a`` contains NaN or Inf."""
    if not np.isfinite(a).all():
        raise FloatingPointError(f"{name} contains non-finite values")
    return a


def ensure_tensor4(x: np.ndarray, name: str = "x") -> np.ndarray:
    """Validate a (b, C, H, W) float array and return it unchanged."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name} must be rank 4 (b, C, H, W), got shape {x.shape}")
    if x.dtype not in (np.float32, np.float64):
        raise ValueError(f"{name} must be float32 or float64, got {x.dtype}")
    return check_finite(name, x)


def ensure_seq(x: np.ndarray, name: str = "x") -> np.ndarray:
    """Validate a (b, n, C) float array and return it unchanged."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"{name} must be rank 3 (b, n, C), got shape {x.shape}")
    if x.dtype not in (np.float32, np.float64):
        raise ValueError(f"{name} must be float32 or float64, got {x.dtype}")
    return check_finite(name, x)


@dataclass
class ConvKernel:
    """Weights and bias of one stride-1 convolution.

    Parameters
    ----------
    weight : ndarray
        Shape (out_ch, in_ch, kh, kw) with kh == kw in {1, 3}.
    bias : ndarray
        Shape (out_ch,).
    padding : int
        Symmetric zero padding; must equal (kh - 1) // 2 so the spatial size
        is preserved.
    """

    weight: np.ndarray
    bias: np.ndarray = field(default=None)  # type: ignore[assignment]
    padding: int = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight)
        if self.weight.ndim != 4:
            raise ValueError(f"weight must be rank 4, got shape {self.weight.shape}")
        o, _, kh, kw = self.weight.shape
        if kh != kw or kh not in (1, 3):
            raise ValueError(f"kernel size must be 1x1 or 3x3, got {kh}x{kw}")
        if self.bias is None:
            self.bias = np.zeros(o, dtype=self.weight.dtype)
        self.bias = np.asarray(self.bias)
        if self.bias.shape != (o,):
            raise ValueError(f"bias must have shape ({o},), got {self.bias.shape}")
        if self.padding is None:
            self.padding = (kh - 1) // 2
        if self.padding != (kh - 1) // 2:
            raise ValueError(f"padding must be {(kh - 1) // 2} for a {kh}x{kw} kernel")
        check_finite("weight", self.weight)
        check_finite("bias", self.bias)

    @property
    def out_ch(self) -> int:
        return self.weight.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weight.shape[1]

    @property
    def ksize(self) -> int:
        return self.weight.shape[2]

    def astype(self, dtype) -> "ConvKernel":
        return ConvKernel(self.weight.astype(dtype), self.bias.astype(dtype), self.padding)


def _conv_check(x: np.ndarray, k: ConvKernel, padding: int | None) -> int:
    x = ensure_tensor4(x)
    if x.shape[1] != k.in_ch:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, kernel expects {k.in_ch}")
    pad = k.padding if padding is None else padding
    if pad < 0:
        raise ValueError("padding must be non-negative")
    return pad


def conv2d(x: np.ndarray, k: ConvKernel, padding: int | None = None) -> np.ndarray:
    """Stride-1 2D convolution (cross-correlation), im2col + one matmul.

    Parameters
    ----------
    x : ndarray
        Input map (b, in_ch, H, W).
    k : ConvKernel
        Kernel; ``k.padding`` preserves the spatial size.
    padding : int, optional
        Override of ``k.padding``. ``padding=0`` on a pre-padded input runs
        the kernel in valid mode; used when a padding step has been hoisted
        out of a chain of convolutions.

    Returns
    -------
    ndarray of shape (b, out_ch, H + 2p - kh + 1, W + 2p - kw + 1), same
    dtype as ``x``.
    """
    pad = _conv_check(x, k, padding)
    b, _, _, _ = x.shape
    o, i, kh, kw = k.weight.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho * wo, i * kh * kw)
    out = cols @ k.weight.reshape(o, -1).T + k.bias
    out = out.transpose(0, 2, 1).reshape(b, o, ho, wo)
    out = out.astype(x.dtype, copy=False)
    return check_finite("conv2d output", out)


def conv2d_direct(x: np.ndarray, k: ConvKernel, padding: int | None = None) -> np.ndarray:
    """Reference convolution via explicit loops; the oracle for conv2d.

    Slow by design. Accumulation order differs from the matmul path, which is
    what makes it an independent reference.
    """
    pad = _conv_check(x, k, padding)
    b = x.shape[0]
    o, _, kh, kw = k.weight.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    ho = xp.shape[2] - kh + 1
    wo = xp.shape[3] - kw + 1
    out = np.empty((b, o, ho, wo), dtype=x.dtype)
    for bi in range(b):
        for oi in range(o):
            w = k.weight[oi]
            for hi in range(ho):
                for wi in range(wo):
                    patch = xp[bi, :, hi : hi + kh, wi : wi + kw]
                    out[bi, oi, hi, wi] = (w * patch).sum() + k.bias[oi]
    return check_finite("conv2d_direct output", out)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def elu(x: np.ndarray) -> np.ndarray:
    """ELU with alpha = 1: x for x >= 0, exp(x) - 1 for x < 0."""
    # exp argument clipped to 0 so the unused branch cannot overflow
    return np.where(x < 0, np.expm1(np.minimum(x, 0)), x)


def elu_plus_one(x: np.ndarray) -> np.ndarray:
    """ELU(x) + 1; strictly positive wherever exp(x) does not underflow.

    The negative branch is computed as exp(x) rather than (exp(x) - 1) + 1,
    which would round to exactly 0 in float32 for x below about -17.
    """
    return np.where(x < 0, np.exp(np.minimum(x, 0)), x + 1)


_ACTIVATIONS = {"relu": relu, "elu": elu, "elu_plus_one": elu_plus_one}


def apply_activation(x: np.ndarray, kind: str) -> np.ndarray:
    """Elementwise activation; ``kind`` in {'relu', 'elu', 'elu_plus_one'}."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}")
    return fn(x)


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, computed with row-max subtraction."""
    m = np.asarray(m)
    check_finite("softmax input", m)
    e = np.exp(m - m.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def max_pool2d(x: np.ndarray, window: int, stride: int | None = None) -> np.ndarray:
    """Max pooling with a square window; stride defaults to the window."""
    x = ensure_tensor4(x)
    stride = window if stride is None else stride
    b, c, h, w = x.shape
    if window > h or window > w:
        raise ValueError(f"window {window} exceeds spatial dims {h}x{w}")
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (window, window), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :ho, :wo].max(axis=(4, 5))


def adaptive_max_pool2d(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Max pooling onto a fixed (out_h, out_w) grid of near-equal bins.

    Bin i along an axis of size s covers [floor(i*s/o), ceil((i+1)*s/o));
    bins are never empty, so the result is defined for any H, W >= 1.
    """
    x = ensure_tensor4(x)
    b, c, h, w = x.shape
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    out = np.empty((b, c, out_h, out_w), dtype=x.dtype)
    for i in range(out_h):
        h0, h1 = (i * h) // out_h, -((-(i + 1) * h) // out_h)
        for j in range(out_w):
            w0, w1 = (j * w) // out_w, -((-(j + 1) * w) // out_w)
            out[:, :, i, j] = x[:, :, h0:h1, w0:w1].max(axis=(2, 3))
    return out


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange (b, C*r^2, H, W) into (b, C, r*H, r*W).

    out[b, c, r*h + u, r*w + v] = x[b, c*r^2 + u*r + v, h, w].
    """
    x = ensure_tensor4(x)
    b, c, h, w = x.shape
    if c % (r * r) != 0:
        raise ValueError(f"channels {c} not divisible by r^2 = {r * r}")
    co = c // (r * r)
    out = x.reshape(b, co, r, r, h, w)
    out = out.transpose(0, 1, 4, 2, 5, 3)
    return out.reshape(b, co, h * r, w * r)


def pixel_unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Inverse of pixel_shuffle: (b, C, r*H, r*W) -> (b, C*r^2, H, W)."""
    x = ensure_tensor4(x)
    b, c, h, w = x.shape
    if h % r != 0 or w % r != 0:
        raise ValueError(f"spatial dims {h}x{w} not divisible by r = {r}")
    out = x.reshape(b, c, h // r, r, w // r, r)
    out = out.transpose(0, 1, 3, 5, 2, 4)
    return out.reshape(b, c * r * r, h // r, w // r)


def layer_norm(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Normalize each token over the last (model) dimension."""
    x = np.asarray(x)
    gamma = np.asarray(gamma)
    beta = np.asarray(beta)
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise ValueError("gamma/beta must match the last dimension of x")
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    out = (x - mu) / np.sqrt(var + eps) * gamma + beta
    return out.astype(x.dtype, copy=False)


def batch_norm_inference(
    x: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Per-channel normalization of a (b, C, H, W) map with fixed statistics."""
    x = ensure_tensor4(x)
    c = x.shape[1]
    for name, p in (("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)):
        if np.asarray(p).shape != (c,):
            raise ValueError(f"{name} must have shape ({c},)")
    shp = (1, c, 1, 1)
    out = (x - np.reshape(mean, shp)) / np.sqrt(np.reshape(var, shp) + eps)
    out = out * np.reshape(gamma, shp) + np.reshape(beta, shp)
    return out.astype(x.dtype, copy=False)


def flatten_spatial(x: np.ndarray) -> np.ndarray:
    """(b, C, H, W) -> (b, H*W, C); token t = h * W + w."""
    x = ensure_tensor4(x)
    b, c, h, w = x.shape
    return x.transpose(0, 2, 3, 1).reshape(b, h * w, c)


def unflatten_spatial(s: np.ndarray, h: int, w: int) -> np.ndarray:
    """(b, H*W, C) -> (b, C, H, W); inverse of flatten_spatial."""
    s = ensure_seq(s)
    b, n, c = s.shape
    if n != h * w:
        raise ValueError(f"sequence length {n} != {h} * {w}")
    return s.reshape(b, h, w, c).transpose(0, 3, 1, 2)


def sinusoidal_pos_embed(n: int, c: int, dtype=np.float32) -> np.ndarray:
    """Sine/cosine positional embedding, shape (n, c); c must be even.

    Row t, column pair (2i, 2i+1) is (sin(t * f_i), cos(t * f_i)) with
    f_i = 10000 ** (-2i / c).
    """
    if c % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {c}")
    t = np.arange(n, dtype=np.float64)[:, None]
    freq = 10000.0 ** (-2.0 * np.arange(c // 2, dtype=np.float64) / c)
    out = np.empty((n, c), dtype=np.float64)
    out[:, 0::2] = np.sin(t * freq)
    out[:, 1::2] = np.cos(t * freq)
    return out.astype(dtype)
