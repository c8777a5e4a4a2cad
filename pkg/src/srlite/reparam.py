"""Fusion algebra for the residual inverted bottleneck block.

A block is the linear chain Conv1x1 (expand) -> Conv3x3 (spatial) -> Conv1x1
(project), optionally plus an identity skip. With no activations between the
layers the whole block is one linear map and can be collapsed into a single
3x3 convolution whose forward output matches the block exactly.

Border semantics: the merged bias folds the expansion bias into every spatial
tap, which is only exact if the 3x3 stage sees that bias in its padding ring.
``rirb_forward_unfused`` therefore zero-pads the block input once up front
and runs the 3x3 in valid mode, so the expansion bias reaches the ring and
fused == unfused holds on the full output, borders included. A naive chain
that zero-pads between the 1x1 and the 3x3 agrees only on the interior when
the expansion bias is nonzero.

All merge arithmetic runs in float64 and is cast back to the common input
dtype at the end, so kernel merging does not consume the forward-pass
tolerance budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import etsr
from .tensor import ConvKernel, conv2d, ensure_tensor4

__all__ = [
    "FusedConv",
    "FusionReport",
    "RirbParams",
    "fuse_rirb",
    "identity_kernel",
    "load_fused_conv",
    "load_rirb",
    "make_random_rirb",
    "merge_1x1_3x3",
    "merge_3x3_1x1",
    "rirb_forward_fused",
    "rirb_forward_unfused",
    "save_fused_conv",
    "save_rirb",
    "verify_fusion",
]


@dataclass
class RirbParams:
    """Parameters of one residual inverted bottleneck block.

    expand : 1x1, C_in -> C_mid; spatial : 3x3, C_mid -> C_mid, pad 1;
    project : 1x1, C_mid -> C_out. ``use_skip`` adds the input back and
    requires C_in == C_out. C_mid must be an integer multiple of C_in.
    """

    expand: ConvKernel
    spatial: ConvKernel
    project: ConvKernel
    use_skip: bool = True

    def __post_init__(self) -> None:
        if self.expand.ksize != 1 or self.project.ksize != 1:
            raise ValueError("expand and project must be 1x1 kernels")
        if self.spatial.ksize != 3:
            raise ValueError("spatial must be a 3x3 kernel")
        if self.spatial.in_ch != self.expand.out_ch:
            raise ValueError("spatial input channels must match expand output")
        if self.project.in_ch != self.spatial.out_ch:
            raise ValueError("project input channels must match spatial output")
        if self.expand.out_ch % self.expand.in_ch != 0:
            raise ValueError("mid channels must be an integer multiple of in channels")
        if self.use_skip and self.in_ch != self.out_ch:
            raise ValueError("skip requires in_ch == out_ch")

    @property
    def in_ch(self) -> int:
        return self.expand.in_ch

    @property
    def mid_ch(self) -> int:
        return self.expand.out_ch

    @property
    def out_ch(self) -> int:
        return self.project.out_ch

    @property
    def expand_ratio(self) -> int:
        return self.mid_ch // self.in_ch


@dataclass
class FusedConv:
    """A fused block: one 3x3 size-preserving convolution."""

    kernel: ConvKernel

    def __post_init__(self) -> None:
        if self.kernel.ksize != 3 or self.kernel.padding != 1:
            raise ValueError("fused kernel must be 3x3 with padding 1")


def identity_kernel(c: int, dtype=np.float32) -> ConvKernel:
    """3x3 kernel whose convolution is the identity map: center taps only."""
    if c < 1:
        raise ValueError("channel count must be >= 1")
    w = np.zeros((c, c, 3, 3), dtype=dtype)
    w[np.arange(c), np.arange(c), 1, 1] = 1
    return ConvKernel(w, np.zeros(c, dtype=dtype), padding=1)


def merge_1x1_3x3(k0: ConvKernel, k1: ConvKernel) -> ConvKernel:
    """Collapse Conv1x1 (k0) followed by Conv3x3 (k1) into one 3x3 kernel.

    W[m, i, u, v] = sum_c k1.w[m, c, u, v] * k0.w[c, i, 0, 0]
    B[m]          = sum_{c,u,v} k1.w[m, c, u, v] * k0.b[c] + k1.b[m]

    The bias term assumes k0's bias fills the 3x3 stage's padding ring; see
    the module docstring for the matching forward composition.
    """
    if k0.ksize != 1 or k1.ksize != 3:
        raise ValueError("expected a 1x1 kernel followed by a 3x3 kernel")
    if k1.in_ch != k0.out_ch:
        raise ValueError(f"channel mismatch: {k1.in_ch} != {k0.out_ch}")
    dtype = np.result_type(k0.weight, k1.weight)
    w0 = k0.weight.astype(np.float64)[:, :, 0, 0]
    w1 = k1.weight.astype(np.float64)
    w = np.einsum("mcuv,ci->miuv", w1, w0)
    b = np.einsum("mcuv,c->m", w1, k0.bias.astype(np.float64)) + k1.bias.astype(np.float64)
    return ConvKernel(w.astype(dtype), b.astype(dtype), padding=1)


def merge_3x3_1x1(k01: ConvKernel, k2: ConvKernel) -> ConvKernel:
    """Collapse Conv3x3 (k01) followed by Conv1x1 (k2) into one 3x3 kernel.

    W[o, i, u, v] = sum_c k2.w[o, c, 0, 0] * k01.w[c, i, u, v]
    B[o]          = sum_c k2.w[o, c, 0, 0] * k01.b[c] + k2.b[o]
    """
    if k01.ksize != 3 or k2.ksize != 1:
        raise ValueError("expected a 3x3 kernel followed by a 1x1 kernel")
    if k2.in_ch != k01.out_ch:
        raise ValueError(f"channel mismatch: {k2.in_ch} != {k01.out_ch}")
    dtype = np.result_type(k01.weight, k2.weight)
    w2 = k2.weight.astype(np.float64)[:, :, 0, 0]
    w01 = k01.weight.astype(np.float64)
    w = np.einsum("oc,ciuv->oiuv", w2, w01)
    b = w2 @ k01.bias.astype(np.float64) + k2.bias.astype(np.float64)
    return ConvKernel(w.astype(dtype), b.astype(dtype), padding=1)


def fuse_rirb(p: RirbParams) -> FusedConv:
    """Collapse a whole block into one 3x3 convolution.

    Merges expand into spatial, then the result into project; with the skip
    enabled the identity map is added to the weight as center taps (biases
    unchanged). Output kernel is always 3x3 with padding 1, for any expand
    ratio.
    """
    merged = merge_3x3_1x1(merge_1x1_3x3(p.expand, p.spatial), p.project)
    if not p.use_skip:
        return FusedConv(merged)
    w = merged.weight.copy()
    c = p.in_ch
    w[np.arange(c), np.arange(c), 1, 1] += 1
    return FusedConv(ConvKernel(w, merged.bias, padding=1))


def rirb_forward_unfused(p: RirbParams, x: np.ndarray) -> np.ndarray:
    """Run the three-convolution block (plus skip) layer by layer.

    The block input is zero-padded once before the expansion, and the 3x3
    stage then runs in valid mode. This places the expansion bias in the 3x3
    receptive fields at the borders, making the block exactly the linear map
    that ``fuse_rirb`` produces.
    """
    x = ensure_tensor4(x)
    if x.shape[1] != p.in_ch:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, block expects {p.in_ch}")
    pad = p.spatial.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    y = conv2d(xp, p.expand)
    y = conv2d(y, p.spatial, padding=0)
    y = conv2d(y, p.project)
    return y + x if p.use_skip else y


def rirb_forward_fused(f: FusedConv, x: np.ndarray) -> np.ndarray:
    """Run the fused block: exactly one convolution."""
    return conv2d(x, f.kernel)


@dataclass
class FusionReport:
    """Worst-case fused-vs-unfused errors over seeded random inputs."""

    max_abs_err: float
    max_rel_err: float
    passed: bool
    trials: int
    tol: float
    seed: int


def verify_fusion(
    p: RirbParams,
    trials: int = 20,
    tol: float = 1e-4,
    seed: int = 0,
    input_hw: tuple[int, int] = (8, 16),
    batch: int = 4,
) -> FusionReport:
    """Compare fused vs unfused forwards on seeded N(0, 1) inputs.

    Deterministic per seed: the same seed always yields the same report.
    ``passed`` is max_abs_err <= tol. Inputs are drawn in the parameter
    dtype, so an all-float64 block is verified at float64.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dtype = p.expand.weight.dtype
    fused = fuse_rirb(p)
    rng = np.random.default_rng(seed)
    h, w = input_hw
    max_abs = 0.0
    max_rel = 0.0
    for _ in range(trials):
        x = rng.standard_normal((batch, p.in_ch, h, w)).astype(dtype)
        ref = rirb_forward_unfused(p, x)
        got = rirb_forward_fused(fused, x)
        diff = np.abs(got - ref)
        max_abs = max(max_abs, float(diff.max()))
        max_rel = max(max_rel, float((diff / (np.abs(ref) + 1e-12)).max()))
    return FusionReport(max_abs, max_rel, max_abs <= tol, trials, tol, seed)


def make_random_rirb(
    c_in: int,
    ratio: int = 2,
    use_skip: bool = True,
    seed: int | np.random.Generator = 0,
    c_out: int | None = None,
    dtype=np.float32,
) -> RirbParams:
    """Draw a random block with fan-in-scaled weights and nonzero biases.

    Nonzero biases exercise the bias-folding path of the fusion algebra.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    c_mid = ratio * c_in
    c_out = c_in if c_out is None else c_out

    def draw(o, i, k):
        std = np.sqrt(2.0 / (i * k * k))
        w = (rng.standard_normal((o, i, k, k)) * std).astype(dtype)
        b = (rng.standard_normal(o) * 0.1).astype(dtype)
        return ConvKernel(w, b)

    return RirbParams(
        expand=draw(c_mid, c_in, 1),
        spatial=draw(c_mid, c_mid, 3),
        project=draw(c_out, c_mid, 1),
        use_skip=use_skip,
    )


_RIRB_TENSORS = {
    "expand": ("expand_weight.etsr", "expand_bias.etsr"),
    "spatial": ("spatial_weight.etsr", "spatial_bias.etsr"),
    "project": ("project_weight.etsr", "project_bias.etsr"),
}


def save_rirb(directory: str | Path, p: RirbParams) -> None:
    """Write a block as ETSR tensors plus rirb.json into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, (wfile, bfile) in _RIRB_TENSORS.items():
        k: ConvKernel = getattr(p, name)
        etsr.write_tensor(directory / wfile, k.weight)
        etsr.write_tensor(directory / bfile, k.bias)
    meta = {"use_skip": p.use_skip, "in_ch": p.in_ch, "mid_ch": p.mid_ch, "out_ch": p.out_ch}
    (directory / "rirb.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_rirb(directory: str | Path) -> RirbParams:
    directory = Path(directory)
    meta = json.loads((directory / "rirb.json").read_text())
    kernels = {}
    for name, (wfile, bfile) in _RIRB_TENSORS.items():
        kernels[name] = ConvKernel(
            etsr.read_tensor(directory / wfile), etsr.read_tensor(directory / bfile)
        )
    p = RirbParams(use_skip=bool(meta["use_skip"]), **kernels)
    for key in ("in_ch", "mid_ch", "out_ch"):
        if getattr(p, key) != meta[key]:
            raise ValueError(f"rirb.json {key}={meta[key]} disagrees with tensor shapes")
    return p


def save_fused_conv(directory: str | Path, f: FusedConv) -> None:
    """Write a fused kernel: weight.etsr, bias.etsr, and a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    etsr.write_tensor(directory / "weight.etsr", f.kernel.weight)
    etsr.write_tensor(directory / "bias.etsr", f.kernel.bias)
    sidecar = {
        "in_ch": f.kernel.in_ch,
        "out_ch": f.kernel.out_ch,
        "ksize": f.kernel.ksize,
        "pad": f.kernel.padding,
    }
    (directory / "fused.json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_fused_conv(directory: str | Path) -> FusedConv:
    directory = Path(directory)
    sidecar = json.loads((directory / "fused.json").read_text())
    w = etsr.read_tensor(directory / "weight.etsr")
    b = etsr.read_tensor(directory / "bias.etsr")
    k = ConvKernel(w, b, padding=int(sidecar["pad"]))
    if (k.in_ch, k.out_ch, k.ksize) != (sidecar["in_ch"], sidecar["out_ch"], sidecar["ksize"]):
        raise ValueError("fused.json sidecar disagrees with tensor shapes")
    return FusedConv(k)
