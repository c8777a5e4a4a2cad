"""Show how the three attention variants scale with sequence length.

The quadratic baseline materializes an n x n attention matrix, so doubling
the sequence roughly quadruples its cost. The kernel and shrinking variants
exploit matrix-product associativity to keep every intermediate at
n x d or d x d, so their cost and auxiliary memory grow linearly in n.
"""

from srlite.bench import attention_aux_floats, bench_attention


def main():
    lengths = [256, 512, 1024, 2048]
    print(f"timing multi-head attention, d=8, heads=8, n in {lengths}")
    print("(median of 5 runs each, single BLAS thread)\n")
    report = bench_attention(lengths, d=8, heads=8, repeats=5, seed=0)
    print(report.to_table())

    times = {(e.label, e.n): e.wall_time_ms for e in report.entries}
    lo, hi = lengths[0], lengths[-1]
    print(f"wall-time growth from n={lo} to n={hi} ({hi // lo}x more tokens):")
    for variant in ("vanilla", "kernel", "shrinking"):
        ratio = times[(variant, hi)] / times[(variant, lo)]
        print(f"  {variant:<10} {ratio:5.1f}x")

    n = 4096
    print(f"\nanalytic auxiliary floats per head at n={n}, d=8:")
    for variant in ("vanilla", "kernel", "shrinking"):
        floats = attention_aux_floats(variant, n, 8)
        print(f"  {variant:<10} {floats:>12,} floats = {4 * floats / 2**20:8.2f} MiB")
    print("the linear variants never allocate the n x n matrix the baseline pays for")


if __name__ == "__main__":
    main()
