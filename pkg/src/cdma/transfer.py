"""Analytical offload/prefetch model for virtualized DNN training.

Every layer's activations go to host memory over PCIe during the forward
pass and come back during the backward pass.  Transfers overlap compute
at layer granularity, so a layer step costs ``max(compute, transfer)``.

With compression, PCIe carries ``bytes / ratio``.  Keeping the link busy
then requires reading GPU DRAM at ``ratio * pcie_bw``; above the DRAM
budget the transfer stretches by ``ratio * pcie_bw / budget``, which
reduces to ``bytes / budget``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .errors import ConfigError, InvalidInputError

OVERLAP_MODES = ("same", "next")


@dataclass(frozen=True)
class PlatformConfig:
    pcie_bw: float = 16e9
    dram_comp_budget: float = 200e9
    dram_leftover: float = 236e9
    memory_latency: float = 350e-9
    # "same": layer n's transfer overlaps layer n's compute.
    # "next": it overlaps the following layer's compute instead.
    overlap: str = "same"

    def __post_init__(self):
        for name in ("pcie_bw", "dram_comp_budget", "dram_leftover", "memory_latency"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.dram_comp_budget > self.dram_leftover:
            raise ConfigError("compression budget exceeds the leftover DRAM bandwidth")
        if self.overlap not in OVERLAP_MODES:
            raise ConfigError(f"overlap must be one of {OVERLAP_MODES}")


@dataclass(frozen=True)
class LayerTraceRecord:
    name: str
    offload_bytes: int
    density: float
    fwd_time: float
    bwd_time: float
    ratio: Optional[float] = None

    def __post_init__(self):
        if self.offload_bytes <= 0:
            raise InvalidInputError(f"layer {self.name}: offload_bytes must be positive")
        if self.fwd_time < 0 or self.bwd_time < 0:
            raise InvalidInputError(f"layer {self.name}: negative compute time")
        if not 0.0 <= self.density <= 1.0:
            raise InvalidInputError(f"layer {self.name}: density outside [0, 1]")
        if self.ratio is not None and not self.ratio >= 1.0:
            raise InvalidInputError(f"layer {self.name}: ratio below 1")


@dataclass
class LayerResult:
    name: str
    ratio: float
    offload_time: float
    prefetch_time: float
    vdnn_transfer: float
    fwd_step: float
    bwd_step: float
    stall_time: float


@dataclass
class SimReport:
    layers: List[LayerResult]
    vdnn_time: float
    cdma_time: float
    oracle_time: float
    vdnn_bytes: int
    cdma_bytes: float
    max_ratio: float
    config: PlatformConfig = field(default_factory=PlatformConfig)

    @property
    def speedup_vs_vdnn(self) -> float:
        return self.vdnn_time / self.cdma_time

    @property
    def traffic_quotient(self) -> float:
        return self.cdma_bytes / self.vdnn_bytes

    @property
    def effective_ratio(self) -> float:
        return self.vdnn_bytes / self.cdma_bytes

    @property
    def vdnn_perf(self) -> float:
        """vDNN performance normalized to the oracle (1.0 = no stalls)."""
        return self.oracle_time / self.vdnn_time if self.vdnn_time else 1.0

    @property
    def cdma_perf(self) -> float:
        return self.oracle_time / self.cdma_time if self.cdma_time else 1.0


def offload_time(nbytes: float, ratio: float, cfg: PlatformConfig = PlatformConfig()) -> float:
    if not nbytes > 0:
        raise InvalidInputError("transfer size must be positive")
    if not ratio >= 1.0:
        raise InvalidInputError(f"compression ratio {ratio} is below 1")
    base = (nbytes / ratio) / cfg.pcie_bw
    comp_bw = ratio * cfg.pcie_bw
    if comp_bw <= cfg.dram_comp_budget:
        return base
    # base * (comp_bw / budget), simplified so the saturated branch is flat in ratio
    return nbytes / cfg.dram_comp_budget


prefetch_time = offload_time


def layer_step_time(compute: float, transfer: float) -> float:
    return max(compute, transfer)


def _pass_time(compute: Sequence[float], transfer: Sequence[float], overlap: str,
               prefetch: bool = False) -> List[float]:
    """Per-layer step times for one pass, in execution order.

    In "next" mode an offload trails its layer and drains at the end of the
    pass, while a prefetch must lead its layer, so the first one is exposed.
    """
    if overlap == "same":
        return [layer_step_time(c, t) for c, t in zip(compute, transfer)]
    n = len(compute)
    if prefetch:
        steps = [layer_step_time(compute[i], transfer[i + 1] if i + 1 < n else 0.0)
                 for i in range(n)]
        steps[0] += transfer[0]
    else:
        steps = [layer_step_time(compute[i], transfer[i - 1] if i else 0.0)
                 for i in range(n)]
        steps[-1] += transfer[-1]
    return steps


def _resolve_ratios(trace: Sequence[LayerTraceRecord], ratios) -> List[float]:
    if ratios is None:
        ratios = [r.ratio for r in trace]
        if any(r is None for r in ratios):
            raise InvalidInputError("trace has layers without a ratio and none were given")
    elif isinstance(ratios, (int, float)):
        ratios = [float(ratios)] * len(trace)
    ratios = [float(r) for r in ratios]
    if len(ratios) != len(trace):
        raise InvalidInputError("one ratio per layer is required")
    for r in ratios:
        if not r >= 1.0:
            raise InvalidInputError(f"compression ratio {r} is below 1")
    return ratios


def simulate(trace: Sequence[LayerTraceRecord], ratios=None,
             cfg: PlatformConfig = PlatformConfig()) -> SimReport:
    """Time one training iteration under vDNN, cDMA and the oracle.

    ``ratios`` is a per-layer sequence, a scalar for all layers, or None to
    use each record's own ``ratio``.
    """
    trace = list(trace)
    if not trace:
        raise InvalidInputError("trace is empty")
    ratios = _resolve_ratios(trace, ratios)
    fwd = [r.fwd_time for r in trace]
    bwd = [r.bwd_time for r in trace]
    off = [offload_time(r.offload_bytes, x, cfg) for r, x in zip(trace, ratios)]
    pre = off  # prefetch follows the same bandwidth rule
    raw = [offload_time(r.offload_bytes, 1.0, cfg) for r in trace]

    def total(transfers):
        f = _pass_time(fwd, transfers, cfg.overlap)
        b = _pass_time(bwd[::-1], transfers[::-1], cfg.overlap, prefetch=True)[::-1]
        return f, b

    f_c, b_c = total(off)
    f_v, b_v = total(raw)
    layers = [
        LayerResult(rec.name, x, o, p, v, fs, bs, (fs - rec.fwd_time) + (bs - rec.bwd_time))
        for rec, x, o, p, v, fs, bs in zip(trace, ratios, off, pre, raw, f_c, b_c)
    ]
    return SimReport(
        layers=layers,
        vdnn_time=math.fsum(f_v) + math.fsum(b_v),
        cdma_time=math.fsum(f_c) + math.fsum(b_c),
        oracle_time=math.fsum(fwd) + math.fsum(bwd),
        vdnn_bytes=sum(r.offload_bytes for r in trace),
        cdma_bytes=math.fsum(r.offload_bytes / x for r, x in zip(trace, ratios)),
        max_ratio=max(ratios),
        config=cfg,
    )


@dataclass(frozen=True)
class TrafficReport:
    vdnn_bytes: int
    cdma_bytes: float

    @property
    def quotient(self) -> float:
        return self.cdma_bytes / self.vdnn_bytes


def traffic_report(trace: Sequence[LayerTraceRecord], ratios=None) -> TrafficReport:
    trace = list(trace)
    if not trace:
        raise InvalidInputError("trace is empty")
    ratios = _resolve_ratios(trace, ratios)
    return TrafficReport(sum(r.offload_bytes for r in trace),
                         math.fsum(r.offload_bytes / x for r, x in zip(trace, ratios)))


def weighted_avg_ratio(trace: Sequence[LayerTraceRecord], ratios=None):
    """Traffic-weighted network ratio and the per-layer maximum.

    Returns ``(average, maximum)`` where the average is total bytes over
    total compressed bytes.
    """
    t = traffic_report(trace, ratios)
    ratios = _resolve_ratios(list(trace), ratios)
    return t.vdnn_bytes / t.cdma_bytes, max(ratios)
