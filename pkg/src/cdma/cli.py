"""Command-line front end.

Exit codes: 0 success, 2 invalid configuration or usage, 3 I/O failure,
4 corrupt or malformed input.  Output files are written through a
temporary file and renamed, so a failed command never leaves a partial
file behind.
"""
from __future__ import annotations

import argparse
import os
import sys
import tempfile
import time
from typing import List, Optional, Sequence

import numpy as np

from . import codecs as cz
from .errors import CdmaError, ConfigError, CorruptStreamError, InvalidInputError
from .tensor import (ActivationTensor, Layout, density, dump_tensor, load_tensor,
                     parse_dims, permute_layout)
from .transfer import OVERLAP_MODES, PlatformConfig, simulate
from .workload import (PRESET_NAMES, SparsityProfile, estimate_ratio, format_trace,
                       generate, generate_words, load_trace_preset, read_trace)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CORRUPT = 4


def fmt(x: float) -> str:
    """Three significant digits, trailing zeros kept."""
    text = f"{x:#.3g}"
    if "e" not in text:
        text = text.rstrip(".")
    return text


class Emitter:
    """Collects a human table and key=value lines for one report."""

    def __init__(self, fmt_mode: str = "both"):
        self.mode = fmt_mode
        self.table: List[str] = []
        self.kv: List[str] = []

    def line(self, text: str = ""):
        self.table.append(text)

    def key(self, k: str, v):
        if isinstance(v, float):
            v = fmt(v)
        self.kv.append(f"{k}={v}")

    def render(self) -> str:
        parts = []
        if self.mode in ("table", "both"):
            parts.extend(self.table)
        if self.mode == "both" and self.table and self.kv:
            parts.append("")
        if self.mode in ("kv", "both"):
            parts.extend(self.kv)
        return "\n".join(parts) + "\n"


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _write_atomic(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".cdma-", dir=d)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_layouts(text: str) -> List[Layout]:
    if text.lower() == "all":
        return list(Layout)
    return [Layout.parse(p) for p in text.split(",")]


def _parse_size(text: str) -> int:
    try:
        return int(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a size: {text!r}") from None


# -- subcommands ---------------------------------------------------------------

def cmd_compress(args) -> str:
    t = load_tensor(_read_bytes(args.input))
    blocks, rep = cz.compress_tensor(t, args.codec, args.window)
    _write_atomic(args.output, cz.dump_compressed(blocks, cz.CodecId.parse(args.codec), args.window))
    em = Emitter(args.format)
    em.line(f"{args.input} -> {args.output}  codec {cz.CodecId.parse(args.codec).name}  "
            f"window {args.window} B  blocks {rep.blocks}")
    em.line(f"input {rep.input_bytes} B  payload {rep.payload_bytes} B  "
            f"with headers {rep.output_bytes} B")
    em.line(f"ratio payload-only {fmt(rep.payload_ratio)}x  with-metadata {fmt(rep.ratio)}x")
    for k in ("input_bytes", "payload_bytes", "output_bytes", "blocks"):
        em.key(k, getattr(rep, k))
    em.key("payload_ratio", rep.payload_ratio)
    em.key("ratio", rep.ratio)
    em.key("data_only_ratio", rep.data_only_ratio)
    return em.render()


def cmd_decompress(args) -> str:
    blocks = cz.load_compressed(_read_bytes(args.input))
    words = cz.decompress_blocks(blocks)
    if args.dims:
        n, c, h, w = parse_dims(args.dims)
        t = ActivationTensor(n, c, h, w, Layout.parse(args.layout), words)
        data = dump_tensor(t)
    else:
        data = words.astype("<u4").tobytes()
    _write_atomic(args.output, data)
    return f"{args.input} -> {args.output}  {words.size * 4} B\n"


def cmd_analyze(args) -> str:
    t = load_tensor(_read_bytes(args.input))
    st = density(t)
    em = Emitter(args.format)
    em.line(f"tensor {args.input}  dims N,C,H,W = {','.join(map(str, t.dims))}  "
            f"stored {t.layout.name}  {t.nbytes} B")
    em.line(f"density {fmt(st.density)}  sparsity {fmt(st.sparsity)}  "
            f"nonzero {st.nonzero_count}/{st.total_count}")
    em.key("density", st.density)
    em.key("sparsity", st.sparsity)
    em.line("")
    em.line(f"{'codec':<8}{'layout':<8}{'payload':>10}{'with-meta':>11}")
    for codec in cz.CodecId:
        for layout in _parse_layouts(args.layouts):
            _, rep = cz.compress_tensor(permute_layout(t, layout), codec, args.window)
            em.line(f"{codec.name:<8}{layout.name:<8}{fmt(rep.payload_ratio):>10}"
                    f"{fmt(rep.ratio):>11}")
            tag = f"{codec.name.lower()}.{layout.name.lower()}"
            em.key(f"ratio.{tag}", rep.ratio)
            em.key(f"payload_ratio.{tag}", rep.payload_ratio)
    return em.render()


def cmd_gen_tensor(args) -> str:
    profile = SparsityProfile(args.density, args.clustering, args.seed)
    t = generate(parse_dims(args.dims), args.layout, profile)
    _write_atomic(args.output, dump_tensor(t))
    st = density(t)
    return f"wrote {args.output}  {t.nbytes} B  density {fmt(st.density)}\n"


def cmd_gen_trace(args) -> str:
    records = load_trace_preset(args.preset, args.density)
    text = format_trace(records, f"preset {args.preset}; compute times are synthetic")
    if args.output:
        _write_atomic(args.output, text.encode("utf-8"))
        return f"wrote {args.output}  {len(records)} layers\n"
    return text


def layer_ratios(records, codec, source: str, clustering: float, seed: int,
                 sample_bytes: int, window: int) -> List[float]:
    """Per-layer ratios: trace-supplied, else closed form or sampled.

    Ratios below 1 are clamped to 1: a window that would grow is shipped raw.
    """
    codec = cz.CodecId.parse(codec)
    out = []
    for i, r in enumerate(records):
        if r.ratio is not None:
            x = r.ratio
        elif source == "closed-form":
            if codec != cz.CodecId.ZVC:
                raise ConfigError("closed-form ratios exist only for ZVC")
            x = cz.zvc_closed_form_ratio(r.density)
        else:
            x = estimate_ratio(r.density, codec, clustering, seed + i, sample_bytes,
                               window, r.offload_bytes)
        out.append(max(1.0, x))
    return out


def cmd_simulate(args) -> str:
    records = read_trace(args.input)
    cfg = PlatformConfig(pcie_bw=args.pcie_gbps * 1e9,
                         dram_comp_budget=args.comp_budget_gbps * 1e9,
                         dram_leftover=args.dram_leftover_gbps * 1e9,
                         memory_latency=args.latency_ns * 1e-9,
                         overlap=args.overlap)
    ratios = layer_ratios(records, args.codec, args.ratio_source, args.clustering,
                          args.seed, args.sample_bytes, args.window)
    rep = simulate(records, ratios, cfg)
    codec = cz.CodecId.parse(args.codec).name
    em = Emitter(args.format)
    em.line(f"trace {args.input}  codec {codec}  PCIe {fmt(args.pcie_gbps)} GB/s  "
            f"budget {fmt(args.comp_budget_gbps)} GB/s  overlap {cfg.overlap}")
    em.line("")
    em.line(f"{'layer':<10}{'MB':>10}{'density':>9}{'ratio':>8}{'vdnn ms':>10}"
            f"{'cdma ms':>10}{'fwd ms':>10}{'stall ms':>10}")
    for rec, lr in zip(records, rep.layers):
        em.line(f"{rec.name:<10}{fmt(rec.offload_bytes / 1e6):>10}{fmt(rec.density):>9}"
                f"{fmt(lr.ratio):>8}{fmt(lr.vdnn_transfer * 1e3):>10}"
                f"{fmt(lr.offload_time * 1e3):>10}{fmt(rec.fwd_time * 1e3):>10}"
                f"{fmt(lr.stall_time * 1e3):>10}")
        em.key(f"layer.{rec.name}.ratio", lr.ratio)
        em.key(f"layer.{rec.name}.offload_ms", lr.offload_time * 1e3)
        em.key(f"layer.{rec.name}.stall_ms", lr.stall_time * 1e3)
    em.line("")
    em.line("offloaded size (normalized to vDNN)")
    em.line(f"  vDNN {fmt(1.0)}   cDMA {fmt(rep.traffic_quotient)}   "
            f"avg ratio {fmt(rep.effective_ratio)}x   max ratio {fmt(rep.max_ratio)}x")
    em.line("performance (normalized to oracle)")
    em.line(f"  vDNN {fmt(rep.vdnn_perf)}   cDMA {fmt(rep.cdma_perf)}   oracle {fmt(1.0)}")
    em.line(f"iteration time ms: vDNN {fmt(rep.vdnn_time * 1e3)}  cDMA {fmt(rep.cdma_time * 1e3)}"
            f"  oracle {fmt(rep.oracle_time * 1e3)}")
    em.line(f"speedup vs vDNN {fmt(rep.speedup_vs_vdnn)}")
    em.key("traffic_quotient", rep.traffic_quotient)
    em.key("avg_ratio", rep.effective_ratio)
    em.key("max_ratio", rep.max_ratio)
    em.key("vdnn_ms", rep.vdnn_time * 1e3)
    em.key("cdma_ms", rep.cdma_time * 1e3)
    em.key("oracle_ms", rep.oracle_time * 1e3)
    em.key("perf_vdnn", rep.vdnn_perf)
    em.key("perf_cdma", rep.cdma_perf)
    em.key("speedup", rep.speedup_vs_vdnn)
    return em.render()


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_codec(words: np.ndarray, codec, window: int, repeat: int = 3) -> dict:
    nbytes = words.size * 4
    blocks = cz.compress_words(words, codec, window)
    t_c = _best_of(lambda: cz.compress_words(words, codec, window), repeat)
    t_d = _best_of(lambda: cz.decompress_blocks(blocks), repeat)
    return {
        "compress_Bps": nbytes / t_c,
        "decompress_Bps": nbytes / t_d,
        "ratio": cz.report(words, blocks).ratio,
    }


def cmd_bench(args) -> str:
    words = generate_words(max(1, args.bytes // 4),
                           SparsityProfile(args.density, args.clustering, args.seed))
    codecs = list(cz.CodecId) if args.codec == "all" else [cz.CodecId.parse(args.codec)]
    em = Emitter(args.format)
    em.line(f"bench {words.size * 4} B  density {fmt(args.density)}  "
            f"clustering {fmt(args.clustering)}  window {args.window} B  single thread")
    em.line(f"{'codec':<8}{'compress GB/s':>15}{'decompress GB/s':>17}{'ratio':>8}")
    for codec in codecs:
        r = bench_codec(words, codec, args.window, args.repeat)
        em.line(f"{codec.name:<8}{fmt(r['compress_Bps'] / 1e9):>15}"
                f"{fmt(r['decompress_Bps'] / 1e9):>17}{fmt(r['ratio']):>8}")
        name = codec.name.lower()
        em.key(f"{name}.compress_Bps", r["compress_Bps"])
        em.key(f"{name}.decompress_Bps", r["decompress_Bps"])
        em.key(f"{name}.ratio", r["ratio"])
    return em.render()


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdma", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--format", choices=("table", "kv", "both"), default="both")

    codec_names = [c.name.lower() for c in cz.CodecId]

    sp = sub.add_parser("compress", help="compress a CDMA tensor file to CDMZ")
    sp.add_argument("--codec", choices=codec_names, default="zvc")
    sp.add_argument("--window", type=int, default=cz.DEFAULT_WINDOW)
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-o", "--output", required=True)
    common(sp)
    sp.set_defaults(func=cmd_compress)

    sp = sub.add_parser("decompress", help="decompress a CDMZ file")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--dims", help="N,C,H,W; write a CDMA tensor file instead of raw words")
    sp.add_argument("--layout", default="NCHW")
    sp.set_defaults(func=cmd_decompress)

    sp = sub.add_parser("analyze", help="density and per-codec ratios across layouts")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("--layouts", default="all")
    sp.add_argument("--window", type=int, default=cz.DEFAULT_WINDOW)
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    gen = sub.add_parser("gen", help="generate synthetic tensors or preset traces")
    gsub = gen.add_subparsers(dest="what", required=True)
    sp = gsub.add_parser("tensor")
    sp.add_argument("--dims", required=True)
    sp.add_argument("--density", type=float, default=0.5)
    sp.add_argument("--clustering", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--layout", default="NCHW")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_gen_tensor)
    sp = gsub.add_parser("trace")
    sp.add_argument("--preset", choices=PRESET_NAMES, required=True)
    sp.add_argument("--density", type=float)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_gen_trace)

    sp = sub.add_parser("simulate", help="vDNN / cDMA / oracle timing for a trace")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("--pcie-gbps", type=float, default=16.0)
    sp.add_argument("--comp-budget-gbps", type=float, default=200.0)
    sp.add_argument("--dram-leftover-gbps", type=float, default=236.0)
    sp.add_argument("--latency-ns", type=float, default=350.0)
    sp.add_argument("--codec", choices=codec_names, default="zvc")
    sp.add_argument("--ratio-source", choices=("sample", "closed-form"), default="sample")
    sp.add_argument("--clustering", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sample-bytes", type=_parse_size, default=1 << 20)
    sp.add_argument("--window", type=int, default=cz.DEFAULT_WINDOW)
    sp.add_argument("--overlap", choices=OVERLAP_MODES, default="same")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bench", help="codec throughput on generated data")
    sp.add_argument("--bytes", type=_parse_size, default=1 << 26)
    sp.add_argument("--density", type=float, default=0.4)
    sp.add_argument("--clustering", type=float, default=0.0)
    sp.add_argument("--codec", choices=codec_names + ["all"], default="all")
    sp.add_argument("--window", type=int, default=cz.DEFAULT_WINDOW)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--repeat", type=int, default=3)
    common(sp)
    sp.set_defaults(func=cmd_bench)
    return p


def run(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        text = args.func(args)
    except CorruptStreamError as exc:
        print(f"cdma: corrupt input: {exc}", file=err)
        return EXIT_CORRUPT
    except (ConfigError, InvalidInputError) as exc:
        print(f"cdma: invalid configuration: {exc}", file=err)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cdma: I/O error: {exc}", file=err)
        return EXIT_IO
    except CdmaError as exc:
        print(f"cdma: {exc}", file=err)
        return EXIT_CONFIG
    out.write(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
