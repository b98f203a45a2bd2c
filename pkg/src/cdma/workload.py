"""Synthetic activation tensors and example layer traces.

Zero placement follows a two-state Markov chain over the zero/nonzero
indicator.  With stationary density ``d`` and lag-1 correlation ``k``
(the clustering knob) the transition probabilities are

    P(zero -> nonzero) = d * (1 - k)
    P(nonzero -> zero) = (1 - d) * (1 - k)

so ``k = 0`` gives i.i.d. Bernoulli zeros and larger ``k`` gives longer
runs.  ``k = 1`` is the degenerate limit: one zero run followed by one
nonzero run.  After sampling, zero and nonzero run lengths are rescaled
so exactly ``round(d * size)`` words are nonzero.

The chain runs along the NCHW order (spatially within each channel) and
the result is then permuted into the requested layout, which is what
makes RLE sensitive to layout.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from importlib import resources
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .codecs import DEFAULT_WINDOW, CodecId, compress_words, report
from .errors import FormatError, InvalidInputError
from .tensor import WORD, ActivationTensor, Layout, permute_layout
from .transfer import LayerTraceRecord

PRESET_NAMES = ("alexnet", "overfeat", "nin", "vgg", "squeezenet", "googlenet")


@dataclass(frozen=True)
class SparsityProfile:
    density: float
    clustering: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise InvalidInputError(f"density {self.density} outside [0, 1]")
        if not 0.0 <= self.clustering <= 1.0:
            raise InvalidInputError(f"clustering {self.clustering} outside [0, 1]")


def _indicator(size: int, d: float, k: float, rng: np.random.Generator) -> np.ndarray:
    """Nonzero indicator with exactly round(d * size) ones."""
    target = int(round(d * size))
    if target == 0:
        return np.zeros(size, dtype=bool)
    if target == size:
        return np.ones(size, dtype=bool)
    if k >= 1.0:
        ind = np.zeros(size, dtype=bool)
        ind[size - target:] = True
        return ind

    p_on = d * (1.0 - k)        # zero -> nonzero
    p_off = (1.0 - d) * (1.0 - k)  # nonzero -> zero
    state = rng.random() < d
    lengths = []
    filled = 0
    mean_pair = 1.0 / p_on + 1.0 / p_off
    while filled < size:
        pairs = int((size - filled) / mean_pair * 1.1) + 16
        zero_runs = rng.geometric(p_on, pairs)
        nz_runs = rng.geometric(p_off, pairs)
        first, second = (nz_runs, zero_runs) if state else (zero_runs, nz_runs)
        chunk = np.column_stack((first, second)).reshape(-1)
        lengths.append(chunk)
        filled += int(chunk.sum())
    runs = np.concatenate(lengths)
    flags = np.zeros(runs.size, dtype=bool)
    flags[0 if state else 1::2] = True
    # truncate to size
    ends = np.cumsum(runs)
    last = int(np.searchsorted(ends, size))
    runs = runs[:last + 1].copy()
    runs[-1] -= int(ends[last]) - size
    flags = flags[:last + 1]
    if flags.all() or not flags.any():
        # sample too short to visit both states
        return np.arange(size) >= size - target
    return np.repeat(flags, _rescale_runs(runs, flags, target, size))


def _apportion(lengths: np.ndarray, total: int) -> np.ndarray:
    """Scale integer run lengths to sum to ``total`` (largest remainder rounding)."""
    exact = lengths * (total / lengths.sum())
    out = np.floor(exact).astype(np.int64)
    short = total - int(out.sum())
    if short:
        order = np.argsort(-(exact - out), kind="stable")
        out[order[:short]] += 1
    return out


def _rescale_runs(runs: np.ndarray, flags: np.ndarray, target: int, size: int) -> np.ndarray:
    """Stretch nonzero and zero runs so exactly ``target`` words are nonzero.

    Scaling whole runs keeps the run structure that a bit-flip correction
    would break up.
    """
    runs = runs.astype(np.int64)
    runs[flags] = _apportion(runs[flags], target)
    runs[~flags] = _apportion(runs[~flags], size - target)
    return runs


def generate_words(size: int, profile: SparsityProfile) -> np.ndarray:
    """Flat stream of ``size`` words with the profile's zero pattern."""
    rng = np.random.default_rng(np.random.SeedSequence(profile.seed & (2**64 - 1)))
    ind = _indicator(size, profile.density, profile.clustering, rng)
    out = np.zeros(size, dtype=WORD)
    k = int(ind.sum())
    if k:
        vals = np.abs(rng.standard_normal(k)).astype(np.float32)
        vals = np.maximum(vals, np.finfo(np.float32).tiny)
        out[ind] = vals.view(np.uint32)
    return out


def generate(dims: Sequence[int], layout=Layout.NCHW,
             profile: SparsityProfile = SparsityProfile(0.5)) -> ActivationTensor:
    n, c, h, w = (int(x) for x in dims)
    size = n * c * h * w
    if size <= 0:
        raise InvalidInputError(f"dims {tuple(dims)} hold no elements")
    t = ActivationTensor(n, c, h, w, Layout.NCHW, generate_words(size, profile))
    return permute_layout(t, layout)


def mean_zero_run(words) -> float:
    """Average length of maximal runs of zero words."""
    z = np.asarray(words) == 0
    if not z.any():
        return 0.0
    edges = np.diff(np.concatenate(([0], z.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return float((ends - starts).mean())


def estimate_ratio(density: float, codec, clustering: float = 0.0, seed: int = 0,
                   sample_bytes: int = 1 << 20, window_bytes: int = DEFAULT_WINDOW,
                   total_bytes: Optional[int] = None) -> float:
    """Compression ratio (headers included) measured on a generated sample."""
    nbytes = sample_bytes if total_bytes is None else min(sample_bytes, total_bytes)
    size = max(1, nbytes // 4)
    words = generate_words(size, SparsityProfile(density, clustering, seed))
    blocks = compress_words(words, codec, window_bytes)
    return report(words, blocks).ratio


# -- traces ------------------------------------------------------------------

TRACE_FIELDS = ("name", "offload_bytes", "density", "fwd_ms", "bwd_ms", "ratio")


def parse_trace(text: str) -> List[LayerTraceRecord]:
    """Parse delimiter-separated trace text.

    Columns: name, offload_bytes, density, fwd_ms, bwd_ms and an optional
    precomputed compression ratio.  Lines starting with '#' are comments.
    Commas, tabs and semicolons are accepted as delimiters.
    """
    records = []
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        return records
    try:
        dialect = csv.Sniffer().sniff(lines[0], delimiters=",\t;")
    except csv.Error:
        dialect = csv.excel
    for lineno, row in enumerate(csv.reader(lines, dialect), 1):
        row = [f.strip() for f in row]
        if len(row) not in (5, 6):
            raise FormatError(f"trace row {lineno}: expected 5 or 6 fields, got {len(row)}")
        try:
            fields = (int(float(row[1])), float(row[2]), float(row[3]) * 1e-3,
                      float(row[4]) * 1e-3, float(row[5]) if len(row) == 6 and row[5] else None)
        except ValueError as exc:
            raise FormatError(f"trace row {lineno}: {exc}") from None
        rec = LayerTraceRecord(row[0], *fields)
        records.append(rec)
    return records


def read_trace(path) -> List[LayerTraceRecord]:
    with open(path, encoding="utf-8") as f:
        return parse_trace(f.read())


def format_trace(records: Iterable[LayerTraceRecord], comment: str = "") -> str:
    buf = io.StringIO()
    for line in comment.splitlines():
        buf.write(f"# {line}\n")
    buf.write("# " + ",".join(TRACE_FIELDS) + "\n")
    for r in records:
        row = [r.name, str(r.offload_bytes), repr(r.density),
               f"{r.fwd_time * 1e3:.6g}", f"{r.bwd_time * 1e3:.6g}"]
        if r.ratio is not None:
            row.append(repr(r.ratio))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def load_trace_presets(density: Optional[float] = None) -> Dict[str, List[LayerTraceRecord]]:
    """The six bundled example networks, keyed by name.

    Layer sizes follow the published architectures; compute times are
    synthetic placeholders.  ``density`` overrides every layer's density.
    """
    out = {}
    for name in PRESET_NAMES:
        out[name] = load_trace_preset(name, density)
    return out


def load_trace_preset(name: str, density: Optional[float] = None) -> List[LayerTraceRecord]:
    name = name.lower()
    if name not in PRESET_NAMES:
        raise InvalidInputError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    text = resources.files("cdma").joinpath("data", f"{name}.trace").read_text("utf-8")
    records = parse_trace(text)
    if density is not None:
        records = [replace(r, density=density) for r in records]
    return records
