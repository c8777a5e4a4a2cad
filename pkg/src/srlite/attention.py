"""Self-attention variants: quadratic baseline and two linear-time forms.

The quadratic baseline materializes the n x n attention matrix. The linear
variants never do: a positive elementwise feature map ``phi`` replaces the
row softmax, and matrix-product associativity lets the key-value product be
reduced to d x d (kernel form) or routed through a small d x d mixing matrix
(shrinking form) before the queries touch it, so cost and auxiliary memory
grow linearly in sequence length at fixed head width.

Per-head inputs are (n, d) matrices; ``multi_head_attention`` handles the
projections, head split, and concatenation for (b, n, C) sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    ConvKernel,
    adaptive_max_pool2d,
    conv2d,
    elu_plus_one,
    ensure_seq,
    ensure_tensor4,
    relu,
    softmax_rows,
)

VARIANTS = ("vanilla", "kernel", "shrinking")

__all__ = [
    "VARIANTS",
    "AttentionParams",
    "CorruptionSpec",
    "LowLevelGenParams",
    "corrupt_sequence",
    "kernel_linear_attention",
    "low_level_similarity",
    "multi_head_attention",
    "softmax_shrinking_attention",
    "vanilla_attention",
]


def _check_qkv(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> None:
    if q.ndim != 2 or q.shape != k.shape or k.shape != v.shape:
        raise ValueError(
            f"q, k, v must share one (n, d) shape, got {q.shape}, {k.shape}, {v.shape}"
        )


def vanilla_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """softmax(q k^T / sqrt(d)) v, materializing the n x n matrix.

    This is the quadratic baseline; the 1/sqrt(d) scale belongs to this
    variant only.
    """
    _check_qkv(q, k, v)
    d = q.shape[1]
    scores = q @ k.T / math.sqrt(d)
    return softmax_rows(scores) @ v


def kernel_linear_attention(q, k, v, phi=elu_plus_one) -> np.ndarray:
    """phi(q) (phi(k)^T v), evaluated right to left.

    Auxiliary storage is O(n d + d^2); no n x n buffer exists. ``phi`` must
    be elementwise and positive-valued; default is ELU + 1.
    """
    _check_qkv(q, k, v)
    return phi(q) @ (phi(k).T @ v)


def softmax_shrinking_attention(q, k, v, s, phi=elu_plus_one) -> np.ndarray:
    """phi(q) ((softmax_rows(s) phi(k)^T) v) with a d x d mixing matrix s.

    The row softmax that the quadratic form spends on an n x n matrix is
    shrunk to the d x d matrix ``s`` produced by the low-level feature
    generator; everything stays O(n d^2) time and O(n d + d^2) memory.
    """
    _check_qkv(q, k, v)
    s = np.asarray(s)
    d = q.shape[1]
    if s.shape != (d, d):
        raise ValueError(f"s must be ({d}, {d}), got {s.shape}")
    a = softmax_rows(s)
    return phi(q) @ ((a @ phi(k).T) @ v)


@dataclass
class AttentionParams:
    """Projection matrices and head layout of one attention layer.

    w_q, w_k, w_v, w_o are (C, C); tokens are row vectors, projected as
    ``x @ w``. C must be divisible by ``heads``; head i uses columns
    [i * d, (i + 1) * d) with d = C // heads.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    heads: int

    def __post_init__(self) -> None:
        c = np.asarray(self.w_q).shape[0]
        for name in ("w_q", "w_k", "w_v", "w_o"):
            m = np.asarray(getattr(self, name))
            if m.shape != (c, c):
                raise ValueError(f"{name} must be ({c}, {c}), got {m.shape}")
            if not np.isfinite(m).all():
                raise FloatingPointError(f"{name} contains non-finite values")
        if self.heads < 1 or c % self.heads != 0:
            raise ValueError(f"model dim {c} not divisible by heads {self.heads}")

    @property
    def model_dim(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


@dataclass
class LowLevelGenParams:
    """Small conv net producing the d x d mixing matrix from a feature map.

    conv1 : 3x3, C -> C_g; conv2 : 3x3, C_g -> 1; each followed by ReLU,
    then an adaptive max pool onto (target_dim, target_dim).
    """

    conv1: ConvKernel
    conv2: ConvKernel
    target_dim: int

    def __post_init__(self) -> None:
        if self.conv2.in_ch != self.conv1.out_ch:
            raise ValueError("conv2 input channels must match conv1 output")
        if self.conv2.out_ch != 1:
            raise ValueError("conv2 must produce a single channel")
        if self.target_dim < 1:
            raise ValueError("target_dim must be >= 1")


def low_level_similarity(feature: np.ndarray, g: LowLevelGenParams) -> np.ndarray:
    """conv -> ReLU -> conv -> ReLU -> adaptive max pool to (d, d).

    Returns one d x d matrix per batch item, shape (b, d, d). Defined for
    any spatial size H, W >= 1.
    """
    feature = ensure_tensor4(feature, "feature")
    y = relu(conv2d(feature, g.conv1))
    y = relu(conv2d(y, g.conv2))
    pooled = adaptive_max_pool2d(y, g.target_dim, g.target_dim)
    return pooled[:, 0]


def multi_head_attention(
    x: np.ndarray,
    ap: AttentionParams,
    variant: str = "shrinking",
    s: np.ndarray | None = None,
    phi=elu_plus_one,
) -> np.ndarray:
    """Project, split into heads, run the per-head variant, and re-project.

    Parameters
    ----------
    x : ndarray
        Token sequence (b, n, C).
    variant : str
        One of 'vanilla', 'kernel', 'shrinking'.
    s : ndarray, optional
        Mixing matrix for the shrinking variant: (d, d) shared across the
        batch, or (b, d, d) per item. All heads share ``s``.
    """
    x = ensure_seq(x)
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if x.shape[2] != ap.model_dim:
        raise ValueError(f"model dim mismatch: {x.shape[2]} != {ap.model_dim}")
    if variant == "shrinking":
        if s is None:
            raise ValueError("the shrinking variant requires the mixing matrix s")
        s = np.asarray(s)
        if s.ndim == 2:
            s = np.broadcast_to(s, (x.shape[0],) + s.shape)
    elif s is not None:
        raise ValueError(f"variant {variant!r} does not take a mixing matrix")

    b, n, c = x.shape
    d = ap.head_dim
    q = x @ ap.w_q
    k = x @ ap.w_k
    v = x @ ap.w_v
    out = np.empty_like(q)
    for bi in range(b):
        for h in range(ap.heads):
            cols = slice(h * d, (h + 1) * d)
            qh, kh, vh = q[bi, :, cols], k[bi, :, cols], v[bi, :, cols]
            if variant == "vanilla":
                out[bi, :, cols] = vanilla_attention(qh, kh, vh)
            elif variant == "kernel":
                out[bi, :, cols] = kernel_linear_attention(qh, kh, vh, phi)
            else:
                out[bi, :, cols] = softmax_shrinking_attention(qh, kh, vh, s[bi], phi)
    return out @ ap.w_o


@dataclass
class CorruptionSpec:
    """Noise injection settings for sequence corruption.

    At least ceil(p * l) of the l token positions are replaced; noise values
    are integers in [noise_low, noise_high] mapped onto the [0, 1] image
    scale as value / 255.
    """

    p: float
    noise_low: int = 0
    noise_high: int = 255
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if not 0 <= self.noise_low <= self.noise_high <= 255:
            raise ValueError("need 0 <= noise_low <= noise_high <= 255")


def corrupt_sequence(x: np.ndarray, spec: CorruptionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Replace a random subset of token positions with quantized noise.

    Per batch item: a count m is drawn uniformly from the integers
    [ceil(p * l), l], then m distinct positions are drawn uniformly and every
    element of those tokens is replaced by an independent draw from
    {noise_low, ..., noise_high} / 255. The remaining l - m positions are
    returned bit-identical.

    Returns
    -------
    (corrupted, mask)
        ``corrupted`` has x's shape and dtype; ``mask`` is (b, l) uint8 with
        1 at replaced positions. Deterministic per ``spec.seed``.
    """
    x = ensure_seq(x)
    rng = np.random.default_rng(spec.seed)
    b, l, c = x.shape
    lo = math.ceil(spec.p * l)
    out = x.copy()
    mask = np.zeros((b, l), dtype=np.uint8)
    for bi in range(b):
        m = int(rng.integers(lo, l, endpoint=True))
        pos = rng.choice(l, size=m, replace=False)
        noise = rng.integers(spec.noise_low, spec.noise_high, size=(m, c), endpoint=True)
        out[bi, pos] = (noise / 255.0).astype(x.dtype)
        mask[bi, pos] = 1
    return out, mask
