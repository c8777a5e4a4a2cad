"""Inference-oriented numpy library: convolution block fusion, linear-time
self-attention, and a small x2 super-resolution forward pass with a
benchmark and verification harness.

Modules
-------
tensor    dense (b, C, H, W) kernels: convolution, pooling, activations,
          normalization, pixel shuffle, sequence reshapes
etsr      minimal binary tensor file format
reparam   fusion of the 1x1 -> 3x3 -> 1x1 (+ skip) block into one 3x3 conv
attention quadratic baseline and two linear-complexity attention variants
network   config, init, and forward pass of the full upscaler
metrics   PSNR and SSIM on 8-bit images
image     PNG I/O and tensor conversions
bench     wall-clock and memory benchmark reports
cli       the `srlite` command-line tool
"""

__version__ = "0.1.0"

from .attention import (
    AttentionParams,
    CorruptionSpec,
    LowLevelGenParams,
    corrupt_sequence,
    kernel_linear_attention,
    low_level_similarity,
    multi_head_attention,
    softmax_shrinking_attention,
    vanilla_attention,
)
from .bench import BenchEntry, BenchReport, bench_attention, bench_fusion
from .metrics import psnr, ssim
from .network import (
    NetworkConfig,
    NetworkParams,
    init_params,
    param_count,
    super_resolve,
)
from .reparam import (
    FusedConv,
    RirbParams,
    fuse_rirb,
    identity_kernel,
    merge_1x1_3x3,
    merge_3x3_1x1,
    rirb_forward_fused,
    rirb_forward_unfused,
    verify_fusion,
)
from .tensor import (
    ConvKernel,
    adaptive_max_pool2d,
    apply_activation,
    batch_norm_inference,
    conv2d,
    conv2d_direct,
    elu,
    elu_plus_one,
    flatten_spatial,
    layer_norm,
    max_pool2d,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    sinusoidal_pos_embed,
    softmax_rows,
    unflatten_spatial,
)

__all__ = [name for name in dir() if not name.startswith("_")]
