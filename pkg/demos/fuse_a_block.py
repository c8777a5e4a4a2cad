"""Collapse an inverted residual block into a single 3x3 convolution.

The block is 1x1 expand -> 3x3 spatial -> 1x1 project with a skip
connection and no activations between the stages. Because every stage is
linear, the whole thing folds into one 3x3 kernel whose forward pass is
exactly equivalent, not an approximation.
"""

import numpy as np

from srlite.reparam import (
    fuse_rirb,
    make_random_rirb,
    rirb_forward_fused,
    rirb_forward_unfused,
    verify_fusion,
)


def main():
    channels, ratio = 16, 2
    block = make_random_rirb(channels, ratio=ratio, use_skip=True, seed=0)
    print(f"block: {block.in_ch} -> {block.mid_ch} -> {block.out_ch} channels, skip=True")
    print(f"  expand  {block.expand.weight.shape}")
    print(f"  spatial {block.spatial.weight.shape}")
    print(f"  project {block.project.weight.shape}")

    fused = fuse_rirb(block)
    print(f"fused kernel: {fused.kernel.weight.shape}, bias {fused.kernel.bias.shape}")

    n_block = sum(k.weight.size + k.bias.size for k in (block.expand, block.spatial, block.project))
    n_fused = fused.kernel.weight.size + fused.kernel.bias.size
    print(f"parameters: {n_block} unfused -> {n_fused} fused ({n_fused / n_block:.1%})")

    # one forward through each path on the same input
    x = np.random.default_rng(1).standard_normal((2, channels, 12, 20)).astype(np.float32)
    gap = np.abs(rirb_forward_fused(fused, x) - rirb_forward_unfused(block, x)).max()
    print(f"max |fused - unfused| on a random input: {gap:.3e}")

    # the bundled verifier repeats this over fresh seeded inputs
    report = verify_fusion(block, trials=20, tol=1e-4, seed=0)
    print(f"verify_fusion: max_abs_err={report.max_abs_err:.3e} "
          f"max_rel_err={report.max_rel_err:.3e} -> {'pass' if report.passed else 'FAIL'}")


if __name__ == "__main__":
    main()
