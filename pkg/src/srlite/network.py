"""Desk-scale x2 super-resolution network assembled from the other modules.

Forward pipeline: 3x3 head convolution -> two residual inverted bottleneck
blocks (run fused or unfused per config) -> flatten to a token sequence and
add a sinusoidal positional embedding -> a stack of pre-norm decoder layers
(multi-head attention + feed-forward, residual around each) -> unflatten ->
3x3 tail convolution -> pixel shuffle to twice the spatial size -> clamp to
[0, 1].

For the shrinking attention variant the d x d mixing matrix is recomputed
before every decoder layer from the current features (unflattened back to a
spatial map) by that layer's own generator; heads share the matrix.

There is no training here: parameters come from seeded random initialization
or from a saved parameter directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import etsr
from .attention import (
    VARIANTS,
    AttentionParams,
    CorruptionSpec,
    LowLevelGenParams,
    corrupt_sequence,
    low_level_similarity,
    multi_head_attention,
)
from .reparam import FusedConv, RirbParams, fuse_rirb, rirb_forward_fused, rirb_forward_unfused
from .tensor import (
    ConvKernel,
    conv2d,
    ensure_tensor4,
    flatten_spatial,
    layer_norm,
    pixel_shuffle,
    relu,
    sinusoidal_pos_embed,
    unflatten_spatial,
)

__all__ = [
    "DecoderLayerParams",
    "NetworkConfig",
    "NetworkParams",
    "count_params",
    "decoder_layer_forward",
    "fuse_network",
    "init_params",
    "load_params",
    "param_count",
    "save_params",
    "super_resolve",
]

RIRB_COUNT = 2
UPSCALE = 2


@dataclass
class NetworkConfig:
    """Architecture hyperparameters; serializes to JSON with these exact keys.

    ``rirb_count`` and ``upscale`` are fixed at 2 in this artifact and are
    validated, not free. ``in_channels`` defaults to 3 (RGB) but is a knob.
    The positional embedding is sinusoidal and added once before the decoder
    stack; the feed-forward activation is ReLU.
    """

    in_channels: int = 3
    model_dim: int = 64
    heads: int = 8
    decoder_layers: int = 4
    rirb_count: int = RIRB_COUNT
    rirb_expand_ratio: int = 2
    ffn_expansion: int = 4
    upscale: int = UPSCALE
    attention_variant: str = "shrinking"
    fuse_rirbs: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rirb_count != RIRB_COUNT:
            raise ValueError(f"rirb_count is fixed at {RIRB_COUNT}")
        if self.upscale != UPSCALE:
            raise ValueError(f"upscale is fixed at {UPSCALE}")
        if self.model_dim < 1 or self.heads < 1 or self.model_dim % self.heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} must be a positive multiple of heads {self.heads}"
            )
        if self.model_dim % 2 != 0 and self.decoder_layers > 0:
            raise ValueError("model_dim must be even for the positional embedding")
        if self.attention_variant not in VARIANTS:
            raise ValueError(
                f"attention_variant must be one of {VARIANTS}, got {self.attention_variant!r}"
            )
        for name in ("in_channels", "decoder_layers", "rirb_expand_ratio", "ffn_expansion"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < (0 if name == "decoder_layers" else 1):
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "NetworkConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("config JSON must be an object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class DecoderLayerParams:
    """One decoder layer: attention, two layer norms, feed-forward, generator.

    The generator is initialized for every layer so the parameter set is a
    function of the config alone; it is only used by the shrinking variant.
    """

    ap: AttentionParams
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    generator: LowLevelGenParams

    def __post_init__(self) -> None:
        c = self.ap.model_dim
        e = self.ffn_w1.shape[1]
        checks = {
            "ln1_gamma": (c,), "ln1_beta": (c,), "ln2_gamma": (c,), "ln2_beta": (c,),
            "ffn_w1": (c, e), "ffn_b1": (e,), "ffn_w2": (e, c), "ffn_b2": (c,),
        }
        for name, shape in checks.items():
            got = np.asarray(getattr(self, name)).shape
            if got != shape:
                raise ValueError(f"{name} must have shape {shape}, got {got}")


@dataclass
class NetworkParams:
    """All parameters of one network instance."""

    head_conv: ConvKernel
    rirbs: list  # RirbParams or FusedConv entries
    layers: list  # DecoderLayerParams entries
    tail_conv: ConvKernel


def _generator_channels(c: int) -> int:
    # channel schedule C -> C_g -> 1 with C_g = max(1, C // 2)
    return max(1, c // 2)


def init_params(cfg: NetworkConfig) -> NetworkParams:
    """Seeded random initialization, bitwise-deterministic per cfg.seed.

    Weights are He fan-in normals (std = sqrt(2 / fan_in), fan_in counting
    kernel taps for convolutions); all biases start at zero, layer norm at
    gamma = 1, beta = 0. Draw order: head conv; each block's expand, spatial,
    project; per layer w_q, w_k, w_v, w_o, ffn_w1, ffn_w2, generator conv1,
    conv2; tail conv.
    """
    rng = np.random.default_rng(cfg.seed)
    c = cfg.model_dim

    def conv(o, i, k):
        std = math.sqrt(2.0 / (i * k * k))
        w = (rng.standard_normal((o, i, k, k)) * std).astype(np.float32)
        return ConvKernel(w, np.zeros(o, dtype=np.float32))

    def mat(rows, cols):
        std = math.sqrt(2.0 / rows)
        return (rng.standard_normal((rows, cols)) * std).astype(np.float32)

    head = conv(c, cfg.in_channels, 3)
    rirbs = []
    for _ in range(cfg.rirb_count):
        mid = cfg.rirb_expand_ratio * c
        rirbs.append(
            RirbParams(
                expand=conv(mid, c, 1),
                spatial=conv(mid, mid, 3),
                project=conv(c, mid, 1),
                use_skip=True,
            )
        )
    layers = []
    ones = np.ones(c, dtype=np.float32)
    zeros = np.zeros(c, dtype=np.float32)
    e = cfg.ffn_expansion * c
    cg = _generator_channels(c)
    for _ in range(cfg.decoder_layers):
        ap = AttentionParams(mat(c, c), mat(c, c), mat(c, c), mat(c, c), heads=cfg.heads)
        ffn_w1 = mat(c, e)
        ffn_w2 = mat(e, c)
        gen = LowLevelGenParams(conv(cg, c, 3), conv(1, cg, 3), target_dim=cfg.head_dim)
        layers.append(
            DecoderLayerParams(
                ap=ap,
                ln1_gamma=ones.copy(), ln1_beta=zeros.copy(),
                ln2_gamma=ones.copy(), ln2_beta=zeros.copy(),
                ffn_w1=ffn_w1, ffn_b1=np.zeros(e, dtype=np.float32),
                ffn_w2=ffn_w2, ffn_b2=zeros.copy(),
                generator=gen,
            )
        )
    tail = conv(cfg.in_channels * cfg.upscale**2, c, 3)
    return NetworkParams(head_conv=head, rirbs=rirbs, layers=layers, tail_conv=tail)


def fuse_network(params: NetworkParams) -> NetworkParams:
    """Return a copy whose blocks are collapsed to single convolutions."""
    rirbs = [r if isinstance(r, FusedConv) else fuse_rirb(r) for r in params.rirbs]
    return NetworkParams(params.head_conv, rirbs, params.layers, params.tail_conv)


def decoder_layer_forward(
    x: np.ndarray, p: DecoderLayerParams, variant: str, s: np.ndarray | None = None
) -> np.ndarray:
    """Pre-norm residual layer: x += MHA(LN(x)); x += FFN(LN(x))."""
    h = layer_norm(x, p.ln1_gamma, p.ln1_beta)
    x = x + multi_head_attention(h, p.ap, variant, s)
    h = layer_norm(x, p.ln2_gamma, p.ln2_beta)
    x = x + (relu(h @ p.ffn_w1 + p.ffn_b1) @ p.ffn_w2 + p.ffn_b2)
    return x


def _rirb_forward(r, x: np.ndarray, fuse: bool) -> np.ndarray:
    if isinstance(r, FusedConv):
        return rirb_forward_fused(r, x)
    if fuse:
        return rirb_forward_fused(fuse_rirb(r), x)
    return rirb_forward_unfused(r, x)


def super_resolve(
    params: NetworkParams,
    cfg: NetworkConfig,
    lr: np.ndarray,
    *,
    corruption: CorruptionSpec | None = None,
) -> np.ndarray:
    """Upscale (b, in_channels, H, W) in [0, 1] to (b, in_channels, 2H, 2W).

    With ``corruption`` unset (the inference default) the forward pass is a
    pure deterministic function of its inputs; the optional corruption is a
    training-time regularizer applied to the token sequence and is
    deterministic per its own seed.
    """
    lr = ensure_tensor4(lr, "lr")
    if lr.shape[1] != cfg.in_channels:
        raise ValueError(f"input has {lr.shape[1]} channels, config says {cfg.in_channels}")
    y = conv2d(lr, params.head_conv)
    for r in params.rirbs:
        y = _rirb_forward(r, y, cfg.fuse_rirbs)
    b, c, h, w = y.shape
    seq = flatten_spatial(y)
    seq = seq + sinusoidal_pos_embed(h * w, c, dtype=seq.dtype)
    if corruption is not None:
        seq, _ = corrupt_sequence(seq, corruption)
    for layer in params.layers:
        s = None
        if cfg.attention_variant == "shrinking":
            feats = unflatten_spatial(seq, h, w)
            s = low_level_similarity(feats, layer.generator)
        seq = decoder_layer_forward(seq, layer, cfg.attention_variant, s)
    y = unflatten_spatial(seq, h, w)
    y = conv2d(y, params.tail_conv)
    y = pixel_shuffle(y, cfg.upscale)
    return np.clip(y, 0.0, 1.0)


def param_count(cfg: NetworkConfig) -> int:
    """Exact scalar parameter count for a config; closed form per component.

    With C = model_dim, r = rirb_expand_ratio, e = ffn_expansion,
    i = in_channels, u = upscale, C_g = max(1, C // 2):

      head conv        9iC + C
      block, unfused   9r^2C^2 + 2rC^2 + 2rC + C   (expand + spatial + project)
      block, fused     9C^2 + C
      decoder layer    4C^2                         (four projections, no bias)
                       + 4C                         (two layer norms)
                       + 2eC^2 + eC + C             (feed-forward with biases)
                       + 9C_gC + C_g + 9C_g + 1     (generator, always counted)
      tail conv        9C(iu^2) + iu^2
    """
    c, r, e = cfg.model_dim, cfg.rirb_expand_ratio, cfg.ffn_expansion
    i, u = cfg.in_channels, cfg.upscale
    cg = _generator_channels(c)
    head = 9 * i * c + c
    if cfg.fuse_rirbs:
        block = 9 * c * c + c
    else:
        block = 9 * r * r * c * c + 2 * r * c * c + 2 * r * c + c
    layer = (4 * c * c) + (4 * c) + (2 * e * c * c + e * c + c) + (9 * cg * c + cg + 9 * cg + 1)
    tail = 9 * c * (i * u * u) + i * u * u
    return head + cfg.rirb_count * block + cfg.decoder_layers * layer + tail


def _param_arrays(params: NetworkParams) -> dict[str, np.ndarray]:
    """Flatten a parameter set into an ordered {role: array} mapping."""
    out: dict[str, np.ndarray] = {}

    def put_conv(prefix: str, k: ConvKernel) -> None:
        out[f"{prefix}.weight"] = k.weight
        out[f"{prefix}.bias"] = k.bias

    put_conv("head_conv", params.head_conv)
    for idx, r in enumerate(params.rirbs):
        if isinstance(r, FusedConv):
            put_conv(f"rirb{idx}.fused", r.kernel)
        else:
            put_conv(f"rirb{idx}.expand", r.expand)
            put_conv(f"rirb{idx}.spatial", r.spatial)
            put_conv(f"rirb{idx}.project", r.project)
    for idx, layer in enumerate(params.layers):
        pre = f"layer{idx}"
        for name in ("w_q", "w_k", "w_v", "w_o"):
            out[f"{pre}.attn.{name}"] = getattr(layer.ap, name)
        for name in ("ln1_gamma", "ln1_beta", "ln2_gamma", "ln2_beta",
                     "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2"):
            out[f"{pre}.{name}"] = getattr(layer, name)
        put_conv(f"{pre}.gen.conv1", layer.generator.conv1)
        put_conv(f"{pre}.gen.conv2", layer.generator.conv2)
    put_conv("tail_conv", params.tail_conv)
    return out


def count_params(params: NetworkParams) -> int:
    """Actual element count of a parameter set; oracle for param_count."""
    return sum(a.size for a in _param_arrays(params).values())


def save_params(directory: str | Path, params: NetworkParams, cfg: NetworkConfig) -> None:
    """Write parameters as ETSR tensors plus manifest.json naming each role."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = _param_arrays(params)
    tensors = {}
    for name, a in arrays.items():
        fname = name + ".etsr"
        etsr.write_tensor(directory / fname, a)
        tensors[name] = fname
    manifest = {
        "config": asdict(cfg),
        "rirb_fused": [isinstance(r, FusedConv) for r in params.rirbs],
        "rirb_use_skip": [
            (None if isinstance(r, FusedConv) else r.use_skip) for r in params.rirbs
        ],
        "tensors": tensors,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_params(directory: str | Path) -> tuple[NetworkParams, NetworkConfig]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    cfg = NetworkConfig(**manifest["config"])
    tensors = manifest["tensors"]

    def get(name: str) -> np.ndarray:
        return etsr.read_tensor(directory / tensors[name])

    def get_conv(prefix: str, padding: int | None = None) -> ConvKernel:
        return ConvKernel(get(f"{prefix}.weight"), get(f"{prefix}.bias"), padding)

    head = get_conv("head_conv")
    rirbs = []
    for idx in range(cfg.rirb_count):
        if manifest["rirb_fused"][idx]:
            rirbs.append(FusedConv(get_conv(f"rirb{idx}.fused")))
        else:
            rirbs.append(
                RirbParams(
                    expand=get_conv(f"rirb{idx}.expand"),
                    spatial=get_conv(f"rirb{idx}.spatial"),
                    project=get_conv(f"rirb{idx}.project"),
                    use_skip=bool(manifest["rirb_use_skip"][idx]),
                )
            )
    layers = []
    for idx in range(cfg.decoder_layers):
        pre = f"layer{idx}"
        ap = AttentionParams(
            get(f"{pre}.attn.w_q"), get(f"{pre}.attn.w_k"),
            get(f"{pre}.attn.w_v"), get(f"{pre}.attn.w_o"), heads=cfg.heads,
        )
        gen = LowLevelGenParams(
            get_conv(f"{pre}.gen.conv1"), get_conv(f"{pre}.gen.conv2"), target_dim=cfg.head_dim
        )
        layers.append(
            DecoderLayerParams(
                ap=ap,
                ln1_gamma=get(f"{pre}.ln1_gamma"), ln1_beta=get(f"{pre}.ln1_beta"),
                ln2_gamma=get(f"{pre}.ln2_gamma"), ln2_beta=get(f"{pre}.ln2_beta"),
                ffn_w1=get(f"{pre}.ffn_w1"), ffn_b1=get(f"{pre}.ffn_b1"),
                ffn_w2=get(f"{pre}.ffn_w2"), ffn_b2=get(f"{pre}.ffn_b2"),
                generator=gen,
            )
        )
    tail = get_conv("tail_conv")
    return NetworkParams(head, rirbs, layers, tail), cfg
