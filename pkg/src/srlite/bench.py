"""Benchmark harness: wall-clock timing, memory accounting, reports.

Timing is the median of k runs (default 20) after 3 warmups, measured with
``time.perf_counter`` with BLAS pinned to a fixed thread count (default 1)
via threadpoolctl; the report records the setting.

Auxiliary memory is accounted analytically: the named per-head intermediate
buffers of each attention variant (inputs and the returned output excluded),
with heads processed sequentially so the per-head peak is what an
implementation must hold. The analytic count is exact and portable where
allocator-level measurements are not. In floats:

    vanilla    2 n^2            (score matrix, softmax matrix)
    kernel     2 n d + d^2      (phi(q), phi(k), key-value product)
    shrinking  3 n d + 2 d^2    (phi(q), phi(k), mixing softmax, mixed keys,
                                 key-value product)

``max_abs_err`` compares each timed float32 run against an explicit
left-associated float64 reference on the same inputs. For the unnormalized
linear variants the raw outputs grow with sequence length, so this gap grows
with n as ordinary float32 rounding at larger magnitudes; it is a report
column, not a pass/fail gate.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import VARIANTS, AttentionParams, multi_head_attention
from .reparam import fuse_rirb, make_random_rirb, rirb_forward_fused, rirb_forward_unfused
from .tensor import elu_plus_one, softmax_rows

__all__ = [
    "BenchEntry",
    "BenchReport",
    "attention_aux_floats",
    "bench_attention",
    "bench_fusion",
    "fusion_aux_floats",
    "median_wall_time_ms",
]

DEFAULT_REPEATS = 20
WARMUP_RUNS = 3


@dataclass
class BenchEntry:
    label: str
    n: int
    d: int
    heads: int
    wall_time_ms: float
    aux_bytes_peak: int
    max_abs_err: float


@dataclass
class BenchReport:
    """Benchmark entries plus the environment they were measured in.

    Entries are kept sorted by (label, n).
    """

    entries: list[BenchEntry]
    environment: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.entries = sorted(self.entries, key=lambda e: (e.label, e.n))
        for e in self.entries:
            if e.wall_time_ms <= 0:
                raise ValueError(f"non-positive wall time in entry {e.label!r} n={e.n}")

    def to_json(self) -> str:
        doc = {"environment": self.environment, "entries": [asdict(e) for e in self.entries]}
        return json.dumps(doc, indent=2) + "\n"

    CSV_COLUMNS = ("label", "n", "d", "heads", "wall_time_ms", "aux_bytes_peak", "max_abs_err")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for e in self.entries:
            writer.writerow(
                [e.label, e.n, e.d, e.heads, repr(e.wall_time_ms), e.aux_bytes_peak,
                 repr(e.max_abs_err)]
            )
        return buf.getvalue()

    def to_table(self) -> str:
        header = f"{'label':<12} {'n':>6} {'d':>4} {'heads':>5} {'ms':>12} {'aux_bytes':>12} {'max_abs_err':>12}"
        lines = [header, "-" * len(header)]
        for e in self.entries:
            lines.append(
                f"{e.label:<12} {e.n:>6} {e.d:>4} {e.heads:>5} {e.wall_time_ms:>12.3f} "
                f"{e.aux_bytes_peak:>12} {e.max_abs_err:>12.3e}"
            )
        return "\n".join(lines) + "\n"


def _environment(threads: int, seed: int, dtype: str = "float32") -> dict:
    return {
        "thread_count": threads,
        "dtype": dtype,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def median_wall_time_ms(fn, repeats: int = DEFAULT_REPEATS, warmup: int = WARMUP_RUNS) -> float:
    """Median wall time of ``fn()`` over ``repeats`` runs after warmups."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def attention_aux_floats(variant: str, n: int, d: int) -> int:
    """Analytic per-head auxiliary buffer count, in floats."""
    if variant == "vanilla":
        return 2 * n * n
    if variant == "kernel":
        return 2 * n * d + d * d
    if variant == "shrinking":
        return 3 * n * d + 2 * d * d
    raise ValueError(f"unknown variant {variant!r}")


def fusion_aux_floats(c: int, h: int, w: int, ratio: int, fused: bool) -> int:
    """Analytic transient floats of one block forward (input/output excluded).

    Fused: the single convolution's patch matrix. Unfused: the padded input,
    both patch matrices, and the intermediate feature maps of the three
    stages.
    """
    if fused:
        return h * w * c * 9
    mid = ratio * c
    hp, wp = h + 2, w + 2
    padded = hp * wp * c
    cols_expand = hp * wp * c
    expanded = hp * wp * mid
    cols_spatial = h * w * mid * 9
    mixed = h * w * mid
    cols_project = h * w * mid
    projected = h * w * c
    return padded + cols_expand + expanded + cols_spatial + mixed + cols_project + projected


def _mha_reference_f64(x, ap, variant, s) -> np.ndarray:
    """Left-associated float64 reference for one multi-head forward."""
    x = x.astype(np.float64)
    wq, wk, wv, wo = (m.astype(np.float64) for m in (ap.w_q, ap.w_k, ap.w_v, ap.w_o))
    q, k, v = x @ wq, x @ wk, x @ wv
    d = ap.head_dim
    out = np.empty_like(q)
    for bi in range(x.shape[0]):
        for h in range(ap.heads):
            cols = slice(h * d, (h + 1) * d)
            qh, kh, vh = q[bi, :, cols], k[bi, :, cols], v[bi, :, cols]
            if variant == "vanilla":
                out[bi, :, cols] = softmax_rows(qh @ kh.T / math.sqrt(d)) @ vh
            elif variant == "kernel":
                out[bi, :, cols] = (elu_plus_one(qh) @ elu_plus_one(kh).T) @ vh
            else:
                a = softmax_rows(np.asarray(s, dtype=np.float64))
                out[bi, :, cols] = (elu_plus_one(qh) @ a @ elu_plus_one(kh).T) @ vh
    return out @ wo


def bench_attention(
    n_list,
    d: int = 8,
    heads: int = 8,
    variants=VARIANTS,
    repeats: int = DEFAULT_REPEATS,
    seed: int = 0,
    threads: int = 1,
) -> BenchReport:
    """Time multi-head attention per variant and sequence length.

    Inputs are seeded N(0, 1) float32 sequences of shape (1, n, d * heads);
    one random mixing matrix is drawn per n for the shrinking variant.
    """
    if not n_list:
        raise ValueError("n_list must be non-empty")
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    c = d * heads
    entries = []
    with threadpool_limits(limits=threads):
        for n in sorted(set(int(v) for v in n_list)):
            rng = np.random.default_rng(seed + n)
            std = math.sqrt(2.0 / c)
            ap = AttentionParams(
                *((rng.standard_normal((c, c)) * std).astype(np.float32) for _ in range(4)),
                heads=heads,
            )
            x = rng.standard_normal((1, n, c)).astype(np.float32)
            s = rng.standard_normal((d, d)).astype(np.float32)
            for variant in variants:
                sv = s if variant == "shrinking" else None
                out = multi_head_attention(x, ap, variant, sv)
                err = float(np.abs(out - _mha_reference_f64(x, ap, variant, sv)).max())
                ms = median_wall_time_ms(
                    lambda: multi_head_attention(x, ap, variant, sv), repeats
                )
                entries.append(
                    BenchEntry(
                        label=variant, n=n, d=d, heads=heads, wall_time_ms=ms,
                        aux_bytes_peak=4 * attention_aux_floats(variant, n, d),
                        max_abs_err=err,
                    )
                )
    return BenchReport(entries, _environment(threads, seed))


def bench_fusion(
    shapes=((8, 16, 64), (16, 16, 64), (32, 32, 64), (64, 32, 128)),
    ratio: int = 2,
    repeats: int = DEFAULT_REPEATS,
    seed: int = 0,
    threads: int = 1,
) -> BenchReport:
    """Time fused vs unfused block forwards over (channels, H, W) shapes.

    Each shape yields two entries labeled 'fused' and 'unfused' with
    n = H * W and d = channels; the fused entry's max_abs_err is the
    fused-vs-unfused forward gap on the benchmark input.
    """
    entries = []
    with threadpool_limits(limits=threads):
        for c, h, w in shapes:
            rng = np.random.default_rng(seed + c * h * w)
            p = make_random_rirb(c, ratio=ratio, use_skip=True, seed=rng)
            fused = fuse_rirb(p)
            x = rng.standard_normal((1, c, h, w)).astype(np.float32)
            err = float(np.abs(rirb_forward_fused(fused, x) - rirb_forward_unfused(p, x)).max())
            t_unfused = median_wall_time_ms(lambda: rirb_forward_unfused(p, x), repeats)
            t_fused = median_wall_time_ms(lambda: rirb_forward_fused(fused, x), repeats)
            entries.append(
                BenchEntry("unfused", h * w, c, 1, t_unfused,
                           4 * fusion_aux_floats(c, h, w, ratio, fused=False), 0.0)
            )
            entries.append(
                BenchEntry("fused", h * w, c, 1, t_fused,
                           4 * fusion_aux_floats(c, h, w, ratio, fused=True), err)
            )
    return BenchReport(entries, _environment(threads, seed))
