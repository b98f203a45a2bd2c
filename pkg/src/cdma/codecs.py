"""Lossless codecs for sparse activation streams.

Three codecs share one block contract:

ZVC
    Zero-value compression.  Each group of 32 words becomes a 32-bit mask
    (bit i set, LSB first, iff word i is nonzero) followed by the nonzero
    words.  A short tail group still gets a full mask with its high bits
    clear.
RLE
    A stream of 16-bit little-endian tokens.  Top bit set: a run of L zero
    words.  Top bit clear: L literal words follow.  L is 1..32767; longer
    runs split.  The token format is local to this package.
DEFLATE
    Raw DEFLATE (no zlib/gzip wrapper) at zlib's default level.  Serves as
    the general-purpose compressibility bound.

``compress_tensor`` cuts a flat word stream into independent windows and
reports sizes with and without the 10 byte per-block header.
"""
from __future__ import annotations

import enum
import math
import struct
import zlib
from dataclasses import dataclass
from typing import BinaryIO, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, CorruptStreamError, FormatError, InvalidInputError
from .tensor import WORD, WORD_BYTES, ActivationTensor, as_words

GROUP_WORDS = 32
GROUP_BYTES = GROUP_WORDS * WORD_BYTES
DEFAULT_WINDOW = 4096
RLE_MAX_RUN = 0x7FFF
RLE_ZERO_FLAG = 0x8000
DEFLATE_LEVEL = 6  # zlib's Z_DEFAULT_COMPRESSION

BLOCK_HEADER = struct.Struct("<BBII")
FILE_MAGIC = b"CDMZ"
FILE_VERSION = 1
_FILE_HEADER = struct.Struct("<4sHBIQ")
_LEN_PREFIX = struct.Struct("<I")


class CodecId(enum.IntEnum):
    ZVC = 0
    RLE = 1
    DEFLATE = 2

    @classmethod
    def parse(cls, name) -> "CodecId":
        if isinstance(name, CodecId):
            return name
        if isinstance(name, int):
            try:
                return cls(name)
            except ValueError:
                raise InvalidInputError(f"unknown codec tag {name}") from None
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise InvalidInputError(f"unknown codec {name!r}") from None


@dataclass(frozen=True)
class CompressedBlock:
    codec: CodecId
    original_len_bytes: int
    window_bytes: int
    payload: bytes
    level: int = 0

    def header(self) -> bytes:
        return BLOCK_HEADER.pack(int(self.codec), self.level,
                                 self.window_bytes, self.original_len_bytes)

    @property
    def encoded_bytes(self) -> int:
        """Payload size plus the per-block header."""
        return BLOCK_HEADER.size + len(self.payload)


@dataclass(frozen=True)
class CompressionReport:
    """Size accounting for one compressed stream.

    ``ratio`` counts every byte that would be stored or moved: codec
    payload (masks included) plus per-block headers.  ``payload_ratio``
    drops the block headers.  ``data_only_ratio`` counts only the
    nonzero words, i.e. ignores all zero-tracking metadata; it is the
    figure obtained from ``1 / density``.
    """

    input_bytes: int
    output_bytes: int
    payload_bytes: int
    nonzero_bytes: int
    blocks: int

    @property
    def ratio(self) -> float:
        return self.input_bytes / self.output_bytes if self.output_bytes else math.inf

    @property
    def payload_ratio(self) -> float:
        return self.input_bytes / self.payload_bytes if self.payload_bytes else math.inf

    @property
    def data_only_ratio(self) -> float:
        return self.input_bytes / self.nonzero_bytes if self.nonzero_bytes else math.inf


# -- ZVC ---------------------------------------------------------------------

def _zvc_encode(words: np.ndarray, positions: bool = False):
    """Encode ``words`` as ZVC records.

    Returns the encoded word array and, if ``positions``, the index of each
    group's mask word within it.
    """
    n = words.size
    groups = -(-n // GROUP_WORDS)
    if groups == 0:
        return np.zeros(0, dtype=WORD), np.zeros(0, dtype=np.int64)
    if n % GROUP_WORDS:
        padded = np.zeros(groups * GROUP_WORDS, dtype=WORD)
        padded[:n] = words
        words = padded
    wg = words.reshape(groups, GROUP_WORDS)
    nz = wg != 0
    masks = np.packbits(nz, axis=1, bitorder="little").view("<u4")
    # row-major compaction of [mask, w0..w31] keeps the mask and then the
    # nonzero words in order, which is exactly one record per group
    ext = np.empty((groups, GROUP_WORDS + 1), dtype=WORD)
    ext[:, :1] = masks
    ext[:, 1:] = wg
    ext = ext.reshape(-1)
    keep = ext != 0
    keep[::GROUP_WORDS + 1] = True
    out = np.compress(keep, ext)
    mask_pos = None
    if positions:
        counts = nz.sum(axis=1)
        mask_pos = np.arange(groups, dtype=np.int64)
        mask_pos[1:] += np.cumsum(counts[:-1])
    return out, mask_pos


def _zvc_decode(payload, original_len_bytes: int) -> np.ndarray:
    if original_len_bytes % WORD_BYTES:
        raise CorruptStreamError("original length is not word aligned")
    if len(payload) % WORD_BYTES:
        raise CorruptStreamError("ZVC payload is not word aligned")
    enc = np.frombuffer(payload, dtype=WORD)
    n = original_len_bytes // WORD_BYTES
    groups = -(-n // GROUP_WORDS)
    mask_pos = np.empty(groups, dtype=np.int64)
    masks = np.empty(groups, dtype=np.uint32)
    enc_list = enc.tolist()
    size = len(enc_list)
    pos = 0
    for g in range(groups):
        if pos >= size:
            raise CorruptStreamError(f"ZVC stream truncated at group {g}")
        m = enc_list[pos]
        mask_pos[g] = pos
        masks[g] = m
        pos += 1 + bin(m).count("1")
    if pos > size:
        raise CorruptStreamError("ZVC stream truncated inside the last group")
    if pos < size:
        raise CorruptStreamError(f"{size - pos} trailing words after ZVC stream")
    if groups and n % GROUP_WORDS:
        tail = n % GROUP_WORDS
        if int(masks[-1]) >> tail:
            raise CorruptStreamError("ZVC tail mask marks words past the end")

    bits = np.unpackbits(masks.view(np.uint8).reshape(groups, 4), axis=1,
                         bitorder="little").reshape(-1).astype(bool)
    out = np.zeros(groups * GROUP_WORDS, dtype=WORD)
    is_value = np.ones(size, dtype=bool)
    is_value[mask_pos] = False
    out[bits] = enc[is_value]
    return out[:n]


def zvc_compress(words) -> CompressedBlock:
    words = as_words(words)
    enc, _ = _zvc_encode(words)
    return CompressedBlock(CodecId.ZVC, words.size * WORD_BYTES,
                           _window_for(words.size), enc.tobytes())


def zvc_decompress(block: CompressedBlock) -> np.ndarray:
    _expect(block, CodecId.ZVC)
    return _zvc_decode(block.payload, block.original_len_bytes)


# -- RLE ---------------------------------------------------------------------

def _rle_tokens(words: np.ndarray, window_words: int = 0):
    """Token boundaries for greedy maximal runs, broken at window edges.

    Returns (start, length, is_literal) arrays, one entry per token.
    """
    n = words.size
    nz = words != 0
    edges = np.flatnonzero(nz[1:] != nz[:-1]) + 1
    if window_words:
        edges = np.union1d(edges, np.arange(window_words, n, window_words))
    starts = np.concatenate(([0], edges)).astype(np.int64)
    ends = np.concatenate((edges, [n])).astype(np.int64)
    lengths = ends - starts
    chunks = -(-lengths // RLE_MAX_RUN)
    if np.all(chunks == 1):
        return starts, lengths, nz[starts]
    run = np.repeat(np.arange(starts.size), chunks)
    first = np.repeat(np.cumsum(chunks) - chunks, chunks)
    tstart = starts[run] + (np.arange(run.size) - first) * RLE_MAX_RUN
    tlen = np.minimum(RLE_MAX_RUN, ends[run] - tstart)
    return tstart, tlen, nz[starts][run]


def _rle_encode(words: np.ndarray, window_words: int = 0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode to a byte array; also return token byte offsets and starts."""
    if words.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return np.zeros(0, dtype=np.uint8), empty, empty
    tstart, tlen, lit = _rle_tokens(words, window_words)
    tbytes = 2 + WORD_BYTES * tlen * lit
    offs = np.cumsum(tbytes) - tbytes
    out = np.zeros(int(tbytes.sum()), dtype=np.uint8)
    hdr = np.where(lit, tlen, tlen | RLE_ZERO_FLAG).astype(np.uint16)
    out[offs] = hdr & 0xFF
    out[offs + 1] = hdr >> 8

    lit_len = tlen[lit]
    if lit_len.size:
        base = np.repeat(offs[lit] + 2 - WORD_BYTES * tstart[lit], lit_len)
        src = np.repeat(tstart[lit], lit_len) + (
            np.arange(lit_len.sum()) - np.repeat(np.cumsum(lit_len) - lit_len, lit_len))
        dest = base + WORD_BYTES * src
        data = words[src].astype("<u4").view(np.uint8).reshape(-1, WORD_BYTES)
        out[dest[:, None] + np.arange(WORD_BYTES)] = data
    return out, offs, tstart


def _rle_decode(payload, original_len_bytes: int) -> np.ndarray:
    if original_len_bytes % WORD_BYTES:
        raise CorruptStreamError("original length is not word aligned")
    buf = bytes(payload)
    size = len(buf)
    expect = original_len_bytes
    out = bytearray()
    pos = 0
    while pos < size:
        if pos + 2 > size:
            raise CorruptStreamError("RLE token header truncated")
        tok = buf[pos] | (buf[pos + 1] << 8)
        pos += 2
        length = tok & RLE_MAX_RUN
        if length == 0:
            raise CorruptStreamError("zero-length RLE token")
        nbytes = length * WORD_BYTES
        if len(out) + nbytes > expect:
            raise CorruptStreamError("RLE stream decodes past the original length")
        if tok & RLE_ZERO_FLAG:
            out += bytes(nbytes)
        else:
            if pos + nbytes > size:
                raise CorruptStreamError("RLE literal run truncated")
            out += buf[pos:pos + nbytes]
            pos += nbytes
    if len(out) != expect:
        raise CorruptStreamError(
            f"RLE stream decodes to {len(out)} bytes, expected {expect}")
    return np.frombuffer(bytes(out), dtype=WORD)


def rle_compress(words) -> CompressedBlock:
    words = as_words(words)
    enc, _, _ = _rle_encode(words)
    return CompressedBlock(CodecId.RLE, words.size * WORD_BYTES,
                           _window_for(words.size), enc.tobytes())


def rle_decompress(block: CompressedBlock) -> np.ndarray:
    _expect(block, CodecId.RLE)
    return _rle_decode(block.payload, block.original_len_bytes)


# -- DEFLATE -----------------------------------------------------------------

def _deflate(raw: bytes) -> bytes:
    c = zlib.compressobj(DEFLATE_LEVEL, zlib.DEFLATED, -15)
    return c.compress(raw) + c.flush()


def _inflate(payload, original_len_bytes: int) -> np.ndarray:
    if original_len_bytes % WORD_BYTES:
        raise CorruptStreamError("original length is not word aligned")
    d = zlib.decompressobj(-15)
    try:
        raw = d.decompress(bytes(payload), original_len_bytes + 1)
    except zlib.error as exc:
        raise CorruptStreamError(f"malformed DEFLATE stream: {exc}") from None
    if not d.eof:
        raise CorruptStreamError("DEFLATE stream truncated or oversized")
    if d.unused_data or d.unconsumed_tail:
        raise CorruptStreamError("trailing bytes after DEFLATE stream")
    if len(raw) != original_len_bytes:
        raise CorruptStreamError(
            f"DEFLATE stream decodes to {len(raw)} bytes, expected {original_len_bytes}")
    return np.frombuffer(raw, dtype=WORD)


def deflate_compress(words) -> CompressedBlock:
    words = as_words(words)
    return CompressedBlock(CodecId.DEFLATE, words.size * WORD_BYTES,
                           _window_for(words.size), _deflate(words.tobytes()),
                           level=DEFLATE_LEVEL)


def deflate_decompress(block: CompressedBlock) -> np.ndarray:
    _expect(block, CodecId.DEFLATE)
    return _inflate(block.payload, block.original_len_bytes)


# -- dispatch ----------------------------------------------------------------

_DECODERS = {
    CodecId.ZVC: _zvc_decode,
    CodecId.RLE: _rle_decode,
    CodecId.DEFLATE: _inflate,
}


def compress(words, codec) -> CompressedBlock:
    codec = CodecId.parse(codec)
    return {CodecId.ZVC: zvc_compress, CodecId.RLE: rle_compress,
            CodecId.DEFLATE: deflate_compress}[codec](words)


def decompress(block: CompressedBlock) -> np.ndarray:
    return _DECODERS[CodecId.parse(block.codec)](block.payload, block.original_len_bytes)


def _expect(block: CompressedBlock, codec: CodecId) -> None:
    if block.codec != codec:
        raise InvalidInputError(f"expected a {codec.name} block, got {CodecId(block.codec).name}")


def _window_for(n_words: int) -> int:
    # single-block helpers report the smallest power-of-two window holding the input
    nbytes = max(n_words * WORD_BYTES, GROUP_BYTES)
    return 1 << (nbytes - 1).bit_length()


def check_window(window_bytes: int) -> int:
    window_bytes = int(window_bytes)
    if window_bytes <= 0 or window_bytes % GROUP_BYTES:
        raise ConfigError(f"window of {window_bytes} bytes is not a positive multiple of 128")
    return window_bytes


def compress_words(words, codec, window_bytes: int = DEFAULT_WINDOW) -> List[CompressedBlock]:
    """Split a word stream into windows and compress each independently."""
    codec = CodecId.parse(codec)
    window_bytes = check_window(window_bytes)
    words = as_words(words)
    ww = window_bytes // WORD_BYTES
    n = words.size
    starts = list(range(0, n, ww))
    lens = [min(ww, n - s) * WORD_BYTES for s in starts]

    if codec == CodecId.ZVC:
        # windows hold whole groups, so the stream splits at mask boundaries
        enc, mask_pos = _zvc_encode(words, positions=True)
        cuts = [int(mask_pos[s // GROUP_WORDS]) for s in starts] + [enc.size]
        raw = enc.view(np.uint8)
        payloads = [raw[a * 4:b * 4].tobytes() for a, b in zip(cuts[:-1], cuts[1:])]
        level = 0
    elif codec == CodecId.RLE:
        enc, offs, tstart = _rle_encode(words, ww)
        first_tok = np.searchsorted(tstart, starts)
        cuts = [int(offs[i]) for i in first_tok] + [enc.size]
        payloads = [enc[a:b].tobytes() for a, b in zip(cuts[:-1], cuts[1:])]
        level = 0
    else:
        raw = words.tobytes()
        payloads = [_deflate(raw[s * 4:s * 4 + ln]) for s, ln in zip(starts, lens)]
        level = DEFLATE_LEVEL
    return [CompressedBlock(codec, ln, window_bytes, p, level) for ln, p in zip(lens, payloads)]


def decompress_blocks(blocks: Sequence[CompressedBlock]) -> np.ndarray:
    parts = [decompress(b) for b in blocks]
    if not parts:
        return np.zeros(0, dtype=WORD)
    return np.concatenate(parts)


def report(words, blocks: Sequence[CompressedBlock]) -> CompressionReport:
    words = as_words(words)
    payload = sum(len(b.payload) for b in blocks)
    return CompressionReport(
        input_bytes=words.size * WORD_BYTES,
        output_bytes=payload + BLOCK_HEADER.size * len(blocks),
        payload_bytes=payload,
        nonzero_bytes=int(np.count_nonzero(words)) * WORD_BYTES,
        blocks=len(blocks),
    )


def compress_tensor(t: ActivationTensor, codec, window_bytes: int = DEFAULT_WINDOW
                    ) -> Tuple[List[CompressedBlock], CompressionReport]:
    blocks = compress_words(t.data, codec, window_bytes)
    return blocks, report(t.data, blocks)


def zvc_closed_form_ratio(d: float) -> float:
    """Expected ZVC ratio (masks included) at nonzero fraction ``d``."""
    return GROUP_WORDS / (1 + GROUP_WORDS * d)


# -- CDMZ container ----------------------------------------------------------

def dump_compressed(blocks: Sequence[CompressedBlock], codec=None, window_bytes=None) -> bytes:
    if blocks:
        codec = blocks[0].codec
        window_bytes = blocks[0].window_bytes
    if codec is None or window_bytes is None:
        raise InvalidInputError("codec and window are needed for an empty stream")
    parts = [_FILE_HEADER.pack(FILE_MAGIC, FILE_VERSION, int(codec), int(window_bytes),
                               sum(b.original_len_bytes for b in blocks))]
    for b in blocks:
        if b.codec != codec or b.window_bytes != window_bytes:
            raise InvalidInputError("all blocks in a file must share codec and window")
        parts.append(_LEN_PREFIX.pack(b.encoded_bytes))
        parts.append(b.header())
        parts.append(b.payload)
    return b"".join(parts)


def load_compressed(buf: bytes) -> List[CompressedBlock]:
    """Parse a CDMZ container; payloads are not decoded here.

    Each block is stored as a length prefix, its 10 byte header and its
    payload, so the file size matches ``CompressionReport.output_bytes``
    plus the prefixes and the file header.
    """
    if len(buf) < _FILE_HEADER.size:
        raise FormatError("compressed file shorter than its header")
    magic, version, codec, window, original = _FILE_HEADER.unpack_from(buf)
    if magic != FILE_MAGIC:
        raise FormatError(f"bad compressed-file magic {magic!r}")
    if version != FILE_VERSION:
        raise FormatError(f"unsupported compressed-file version {version}")
    if codec not in CodecId._value2member_map_:
        raise FormatError(f"unknown codec tag {codec}")
    if window == 0 or window % GROUP_BYTES:
        raise FormatError(f"invalid window size {window}")
    if original % WORD_BYTES:
        raise FormatError("original length is not word aligned")
    codec = CodecId(codec)
    level = DEFLATE_LEVEL if codec == CodecId.DEFLATE else 0
    nblocks = -(-original // window)
    pos = _FILE_HEADER.size
    blocks = []
    for i in range(nblocks):
        if pos + _LEN_PREFIX.size > len(buf):
            raise FormatError(f"compressed file truncated before block {i}")
        (blen,) = _LEN_PREFIX.unpack_from(buf, pos)
        pos += _LEN_PREFIX.size
        if blen < BLOCK_HEADER.size or pos + blen > len(buf):
            raise FormatError(f"block {i} truncated")
        olen = min(window, original - i * window)
        # the block header repeats what the file header implies; any mismatch is corruption
        if BLOCK_HEADER.unpack_from(buf, pos) != (int(codec), level, window, olen):
            raise FormatError(f"block {i} header disagrees with the file header")
        start = pos + BLOCK_HEADER.size
        blocks.append(CompressedBlock(codec, olen, window, bytes(buf[start:pos + blen]), level))
        pos += blen
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after last block")
    return blocks


def write_compressed(f: BinaryIO, blocks: Sequence[CompressedBlock], codec=None,
                     window_bytes=None) -> None:
    f.write(dump_compressed(blocks, codec, window_bytes))


def read_compressed(f: BinaryIO) -> List[CompressedBlock]:
    return load_compressed(f.read())
