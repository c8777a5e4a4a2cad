"""Command-line interface.

Subcommands: fuse, verify-fusion, bench-attn, bench-fusion, forward,
param-count, info. Exit codes: 0 success, 1 tolerance failure,
2 bad input/config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, image, network, reparam

_OVERRIDE_FLAGS = {
    "in_channels": "--in-channels",
    "model_dim": "--model-dim",
    "heads": "--heads",
    "decoder_layers": "--decoder-layers",
    "rirb_expand_ratio": "--rirb-expand-ratio",
    "ffn_expansion": "--ffn-expansion",
    "attention_variant": "--variant",
    "seed": "--seed",
}


def _parse_shapes(text: str) -> list[tuple[int, int, int]]:
    shapes = []
    for part in text.split(","):
        dims = part.lower().split("x")
        if len(dims) != 3:
            raise ValueError(f"bad shape {part!r}; expected CxHxW like 64x32x128")
        shapes.append(tuple(int(v) for v in dims))
    return shapes


def _emit_report(report: bench.BenchReport, args) -> None:
    emitted = False
    if args.json is not None:
        text = report.to_json()
        if args.json == "-":
            sys.stdout.write(text)
        else:
            Path(args.json).write_text(text)
            print(f"wrote {args.json}")
        emitted = True
    if args.csv is not None:
        text = report.to_csv()
        if args.csv == "-":
            sys.stdout.write(text)
        else:
            Path(args.csv).write_text(text)
            print(f"wrote {args.csv}")
        emitted = True
    if not emitted:
        sys.stdout.write(report.to_table())


def _add_report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", nargs="?", const="-", default=None, metavar="PATH",
                   help="emit the report as JSON to PATH (or stdout if no PATH)")
    p.add_argument("--csv", nargs="?", const="-", default=None, metavar="PATH",
                   help="emit the report as CSV to PATH (or stdout if no PATH)")
    p.add_argument("--repeats", type=int, default=bench.DEFAULT_REPEATS,
                   help="timing runs per entry (median is reported)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS thread count during timing (default 1)")


def _load_config(args) -> network.NetworkConfig:
    if getattr(args, "config", None):
        cfg = network.NetworkConfig.from_json(Path(args.config).read_text())
    else:
        cfg = network.NetworkConfig()
    overrides = {}
    for fieldname in _OVERRIDE_FLAGS:
        value = getattr(args, fieldname, None)
        if value is not None:
            overrides[fieldname] = value
    if getattr(args, "fused", False):
        overrides["fuse_rirbs"] = True
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_fuse(args) -> int:
    p = reparam.load_rirb(args.params_dir)
    fused = reparam.fuse_rirb(p)
    reparam.save_fused_conv(args.out_dir, fused)
    k = fused.kernel
    print(f"fused {p.in_ch}->{p.mid_ch}->{p.out_ch} block (skip={p.use_skip}) "
          f"into one {k.ksize}x{k.ksize} kernel at {args.out_dir}")
    return 0


def cmd_verify_fusion(args) -> int:
    if args.params_dir:
        p = reparam.load_rirb(args.params_dir)
    else:
        p = reparam.make_random_rirb(
            args.channels, ratio=args.ratio, use_skip=not args.no_skip, seed=args.seed
        )
    if args.dtype == "f64":
        p = reparam.RirbParams(
            expand=p.expand.astype(np.float64),
            spatial=p.spatial.astype(np.float64),
            project=p.project.astype(np.float64),
            use_skip=p.use_skip,
        )
    rep = reparam.verify_fusion(p, trials=args.trials, tol=args.tol, seed=args.seed)
    status = "pass" if rep.passed else "FAIL"
    print(f"max_abs_err={rep.max_abs_err:.6e} max_rel_err={rep.max_rel_err:.6e} "
          f"tol={rep.tol:.1e} trials={rep.trials} -> {status}")
    return 0 if rep.passed else 1


def cmd_bench_attn(args) -> int:
    report = bench.bench_attention(
        n_list=args.n, d=args.d, heads=args.heads,
        variants=tuple(args.variants.split(",")),
        repeats=args.repeats, seed=args.seed, threads=args.threads,
    )
    _emit_report(report, args)
    return 0


def cmd_bench_fusion(args) -> int:
    report = bench.bench_fusion(
        shapes=_parse_shapes(args.shapes), ratio=args.ratio,
        repeats=args.repeats, seed=args.seed, threads=args.threads,
    )
    _emit_report(report, args)
    return 0


def cmd_forward(args) -> int:
    cfg = network.NetworkConfig.from_json(Path(args.config).read_text())
    if cfg.in_channels != 3:
        raise ValueError("forward reads RGB PNGs; config must set in_channels = 3")
    if args.params:
        params, saved_cfg = network.load_params(args.params)
        if dataclasses.asdict(saved_cfg) != dataclasses.asdict(cfg):
            raise ValueError("--params directory was saved with a different config")
    else:
        params = network.init_params(cfg)
    lr = image.to_tensor(image.load_png(args.input))
    if args.threads is not None:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            hr = network.super_resolve(params, cfg, lr)
    else:
        hr = network.super_resolve(params, cfg, lr)
    image.save_png(args.output, image.from_tensor(hr))
    print(f"{lr.shape[3]}x{lr.shape[2]} -> {hr.shape[3]}x{hr.shape[2]} ({args.output})")
    return 0


def cmd_param_count(args) -> int:
    cfg = _load_config(args)
    total = network.param_count(cfg)
    if args.verbose:
        base = dataclasses.replace(cfg, decoder_layers=0)
        per_layer = 0
        if cfg.decoder_layers:
            per_layer = (total - network.param_count(base)) // cfg.decoder_layers
        print(f"config: {json.dumps(dataclasses.asdict(cfg))}")
        print(f"per_decoder_layer: {per_layer}")
    print(total)
    return 0


def cmd_info(args) -> int:
    import scipy

    print(f"srlite {__version__}")
    print(f"python {platform.python_version()} on {platform.system().lower()}")
    print(f"numpy {np.__version__}, scipy {scipy.__version__}")
    print("default config:")
    print(network.NetworkConfig().to_json(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srlite",
        description="Convolution block fusion, linear-attention benchmarks, and a small x2 "
                    "super-resolution forward pass.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="collapse a saved block into one 3x3 kernel")
    p.add_argument("params_dir", help="directory written by save_rirb (rirb.json + ETSR tensors)")
    p.add_argument("out_dir", help="destination for weight.etsr, bias.etsr, fused.json")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("verify-fusion", help="compare fused vs unfused forwards")
    p.add_argument("--params-dir", default=None, help="saved block; random if omitted")
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--ratio", type=int, default=2)
    p.add_argument("--no-skip", action="store_true")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.set_defaults(func=cmd_verify_fusion)

    p = sub.add_parser("bench-attn", help="time attention variants over sequence lengths")
    p.add_argument("--n", type=int, nargs="+", default=[512, 1024, 2048])
    p.add_argument("--d", type=int, default=8, help="head width")
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--variants", default="vanilla,kernel,shrinking")
    _add_report_flags(p)
    p.set_defaults(func=cmd_bench_attn)

    p = sub.add_parser("bench-fusion", help="time fused vs unfused block forwards")
    p.add_argument("--shapes", default="8x16x64,16x16x64,32x32x64,64x32x128",
                   help="comma-separated CxHxW list")
    p.add_argument("--ratio", type=int, default=2)
    _add_report_flags(p)
    p.set_defaults(func=cmd_bench_fusion)

    p = sub.add_parser("forward", help="upscale a PNG x2 with a config JSON")
    p.add_argument("--config", required=True, help="network config JSON")
    p.add_argument("--input", required=True, help="input PNG")
    p.add_argument("--output", required=True, help="output PNG (2x width and height)")
    p.add_argument("--params", default=None, help="parameter directory from save_params")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("param-count", help="closed-form parameter total for a config")
    p.add_argument("--config", default=None, help="config JSON; defaults if omitted")
    for fieldname, flag in _OVERRIDE_FLAGS.items():
        kind = str if fieldname == "attention_variant" else int
        p.add_argument(flag, dest=fieldname, type=kind, default=None)
    p.add_argument("--fused", action="store_true", help="count the fused form")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_param_count)

    p = sub.add_parser("info", help="print build and default-config metadata")
    p.set_defaults(func=cmd_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, FloatingPointError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
