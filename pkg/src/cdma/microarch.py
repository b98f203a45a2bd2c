"""Cycle-approximate model of the ZVC (de)compression engines and DMA buffer.

The compressor consumes one 32-byte sector (8 words) per cycle through a
three stage pipeline: zero compare and prefix sum, shift, append.  A
128-byte line is four sectors.  Streamed lines overlap with an initiation
interval of one sector per cycle, which is a modeling choice
interpolated from the single-line latency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Tuple

import numpy as np

from .codecs import GROUP_WORDS, zvc_compress
from .errors import ConfigError, InvalidInputError
from .tensor import WORD, WORD_BYTES, as_words


@dataclass(frozen=True)
class EngineConfig:
    sector_bytes: int = 32
    line_bytes: int = 128
    compress_pipeline_stages: int = 3
    decompress_extra_cycles: int = 2
    clock_hz: float = 1e9

    def __post_init__(self):
        if self.sector_bytes <= 0 or self.sector_bytes % WORD_BYTES:
            raise ConfigError("sector must be a positive whole number of words")
        if self.line_bytes <= 0 or self.line_bytes % self.sector_bytes:
            raise ConfigError("line_bytes must be a multiple of sector_bytes")
        if self.compress_pipeline_stages < 1:
            raise ConfigError("pipeline needs at least one stage")
        if self.decompress_extra_cycles < 0:
            raise ConfigError("decompress_extra_cycles must be >= 0")
        if not self.clock_hz > 0:
            raise ConfigError("clock frequency must be positive")

    @property
    def sectors_per_line(self) -> int:
        return self.line_bytes // self.sector_bytes

    @property
    def sector_words(self) -> int:
        return self.sector_bytes // WORD_BYTES


@dataclass(frozen=True)
class BufferSpec:
    read_bandwidth: float
    round_trip_latency: float
    required_bytes: int


def compress_latency_cycles(lines: int, cfg: EngineConfig = EngineConfig()) -> int:
    if lines < 0:
        raise InvalidInputError("line count must be >= 0")
    if lines == 0:
        return 0
    return lines * cfg.sectors_per_line + cfg.compress_pipeline_stages - 1


def decompress_latency_cycles(lines: int, cfg: EngineConfig = EngineConfig()) -> int:
    if lines < 0:
        raise InvalidInputError("line count must be >= 0")
    if lines == 0:
        return 0
    return lines * cfg.sectors_per_line + cfg.decompress_extra_cycles


def engine_throughput(cfg: EngineConfig = EngineConfig()) -> float:
    """Sustained input bytes per second of one engine."""
    return cfg.sector_bytes * cfg.clock_hz


def size_buffer(read_bandwidth: float, round_trip_latency: float) -> BufferSpec:
    """Bandwidth-delay product of the memory feeding the DMA engine."""
    if not read_bandwidth > 0:
        raise ConfigError("read bandwidth must be positive")
    if not round_trip_latency >= 0:
        raise ConfigError("round-trip latency must be non-negative")
    # decimal-exact product so 200e9 * 350e-9 is 70000, not 70000.00000000001
    product = Fraction(repr(float(read_bandwidth))) * Fraction(repr(float(round_trip_latency)))
    return BufferSpec(read_bandwidth, round_trip_latency, math.ceil(product))


# -- datapath ----------------------------------------------------------------

def brent_kung_network(width: int = 8) -> List[Tuple[int, int]]:
    """Adders ``(dst, src)`` of an inclusive Brent-Kung prefix sum over ``width`` inputs.

    Each adder performs ``x[dst] += x[src]``; applying them in order yields
    inclusive prefix sums.
    """
    if width < 1 or width & (width - 1):
        raise ConfigError("prefix network width must be a power of two")
    adders = []
    step = 1
    while step < width:
        for dst in range(2 * step - 1, width, 2 * step):
            adders.append((dst, dst - step))
        step *= 2
    step //= 2
    while step >= 1:
        for dst in range(3 * step - 1, width, 2 * step):
            adders.append((dst, dst - step))
        step //= 2
    return adders


def prefix_network_stats(width: int = 8) -> dict:
    """Static analysis of the mask prefix-sum network.

    ``adder_bits`` is the width needed for every partial sum that drives a
    mux select; the full-width total only feeds the carry-out used as the
    sector's pop-count.
    """
    adders = brent_kung_network(width)
    peak = [1] * width
    for dst, src in adders:
        peak[dst] += peak[src]
    select_max = max(peak[:-1]) if width > 1 else 0
    return {
        "adders": len(adders),
        "adder_bits": max(1, select_max.bit_length()),
        "total_bits": peak[-1].bit_length(),
    }


def _prefix_sum(bits: List[int], adders) -> List[int]:
    acc = list(bits)
    for dst, src in adders:
        acc[dst] += acc[src]
    return acc


def simulate_compress_datapath(words, cfg: EngineConfig = EngineConfig()) -> bytes:
    """Sector-by-sector model of the compression engine.

    Per sector: compare words to zero (mask segment), prefix-sum the mask
    to get each nonzero word's output slot, mux the words into place, then
    append data and mask segment to the line's record.
    """
    if cfg.line_bytes != GROUP_WORDS * WORD_BYTES:
        raise ConfigError("datapath model emits 32-bit masks, needs 128-byte lines")
    words = as_words(words).tolist()
    sw = cfg.sector_words
    adders = brent_kung_network(sw)
    out = bytearray()
    for line_start in range(0, len(words), GROUP_WORDS):
        line = words[line_start:line_start + GROUP_WORDS]
        line += [0] * (GROUP_WORDS - len(line))
        mask = 0
        data: List[int] = []
        for s in range(cfg.sectors_per_line):
            sector = line[s * sw:(s + 1) * sw]
            seg = [1 if v != 0 else 0 for v in sector]
            prefix = _prefix_sum(seg, adders)
            shifted = [0] * sw
            for i, v in enumerate(sector):
                if seg[i]:
                    shifted[prefix[i] - 1] = v
            count = prefix[-1]
            data.extend(shifted[:count])
            for i, bit in enumerate(seg):
                mask |= bit << (s * sw + i)
        out += np.array([mask] + data, dtype=WORD).tobytes()
    return bytes(out)


def simulate_decompress_datapath(payload: bytes, original_len_bytes: int,
                                 cfg: EngineConfig = EngineConfig()) -> bytes:
    """Expand ZVC records one sector per cycle: pop-count the mask segment,
    then mux payload words or zeros into the sector."""
    enc = np.frombuffer(payload, dtype=WORD).tolist()
    sw = cfg.sector_words
    adders = brent_kung_network(sw)
    n = original_len_bytes // WORD_BYTES
    out: List[int] = []
    pos = 0
    while len(out) < n:
        mask = enc[pos]
        pos += 1
        for s in range(cfg.sectors_per_line):
            seg = [(mask >> (s * sw + i)) & 1 for i in range(sw)]
            prefix = _prefix_sum(seg, adders)
            used = enc[pos:pos + prefix[-1]]
            out.extend(used[prefix[i] - 1] if seg[i] else 0 for i in range(sw))
            pos += prefix[-1]
    return np.array(out[:n], dtype=WORD).tobytes()


def functional_equivalence_check(words) -> bool:
    """True when the datapath model and the reference ZVC codec agree byte for byte."""
    words = as_words(words)
    ref = zvc_compress(words)
    if simulate_compress_datapath(words) != ref.payload:
        return False
    return simulate_decompress_datapath(ref.payload, ref.original_len_bytes) == words.tobytes()
