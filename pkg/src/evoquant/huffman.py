"""Canonical Huffman codec for quantization code streams.

A codebook is fully described by its per-symbol code lengths (0 = symbol
absent). Codewords are assigned canonically, ordered by (length, symbol),
so two sides holding the same lengths always agree on the codes. Streams
pack codewords MSB-first; pad bits in the final byte are zero.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Codebook:
    code_lengths: tuple[int, ...]

    def __post_init__(self) -> None:
        if not any(self.code_lengths):
            raise ValueError("codebook has no coded symbols")
        if any(l < 0 for l in self.code_lengths):
            raise ValueError("negative code length")
        max_len = max(self.code_lengths)
        kraft = sum(1 << (max_len - l) for l in self.code_lengths if l > 0)
        if kraft > (1 << max_len):
            raise ValueError("code lengths violate the Kraft inequality")

    @property
    def symbol_count(self) -> int:
        return len(self.code_lengths)

    def assignments(self) -> dict[int, tuple[int, int]]:
        """Canonical codeword per symbol as {symbol: (code, length)}."""
        coded = sorted(
            (l, s) for s, l in enumerate(self.code_lengths) if l > 0
        )
        out: dict[int, tuple[int, int]] = {}
        code = 0
        prev_len = 0
        for length, sym in coded:
            code <<= length - prev_len
            prev_len = length
            out[sym] = (code, length)
            code += 1
        return out


@dataclass(frozen=True)
class EncodedStream:
    bit_count: int
    payload: bytes

    def __post_init__(self) -> None:
        if self.bit_count < 0:
            raise ValueError("negative bit count")
        if len(self.payload) != (self.bit_count + 7) // 8:
            raise ValueError("payload length does not match bit count")
        if self.bit_count % 8 and self.payload:
            pad = 8 - self.bit_count % 8
            if self.payload[-1] & ((1 << pad) - 1):
                raise ValueError("nonzero pad bits")


def build_codebook(frequencies) -> Codebook:
    """Optimal prefix-code lengths for per-symbol counts, canonically assigned.

    Symbols with zero count get length 0 (absent). A single coded symbol gets
    length 1 so the stream stays self-delimiting.
    """
    freqs = [int(f) for f in frequencies]
    if any(f < 0 for f in freqs):
        raise ValueError("negative frequency")
    coded = [(f, s) for s, f in enumerate(freqs) if f > 0]
    if not coded:
        raise ValueError("all frequencies are zero")
    lengths = [0] * len(freqs)
    if len(coded) == 1:
        lengths[coded[0][1]] = 1
        return Codebook(tuple(lengths))

    # Heap entries carry an insertion counter so merges are deterministic.
    counter = 0
    heap: list[tuple[int, int, list[int]]] = []
    for f, s in coded:
        heap.append((f, counter, [s]))
        counter += 1
    heapq.heapify(heap)
    depth: dict[int, int] = {s: 0 for _, s in coded}
    while len(heap) > 1:
        fa, _, syms_a = heapq.heappop(heap)
        fb, _, syms_b = heapq.heappop(heap)
        for s in syms_a:
            depth[s] += 1
        for s in syms_b:
            depth[s] += 1
        heapq.heappush(heap, (fa + fb, counter, syms_a + syms_b))
        counter += 1
    for s, d in depth.items():
        lengths[s] = d
    return Codebook(tuple(lengths))


def encode(symbols, book: Codebook) -> EncodedStream:
    codes = book.assignments()
    table: list[tuple[int, int] | None] = [None] * book.symbol_count
    for sym, cw in codes.items():
        table[sym] = cw
    acc = 0
    pending = 0
    out = bytearray()
    for sym in symbols:
        s = int(sym)
        if s < 0 or s >= len(table) or table[s] is None:
            raise ValueError(f"symbol {s} absent from codebook")
        code, length = table[s]
        acc = (acc << length) | code
        pending += length
        while pending >= 8:
            pending -= 8
            out.append((acc >> pending) & 0xFF)
    bit_count = len(out) * 8 + pending
    if pending:
        out.append((acc << (8 - pending)) & 0xFF)
    return EncodedStream(bit_count, bytes(out))


def decode(stream: EncodedStream, book: Codebook, count: int) -> list[int]:
    """Recover exactly `count` symbols from a stream produced with `book`."""
    if count == 0:
        return []
    coded = sorted((l, s) for s, l in enumerate(book.code_lengths) if l > 0)
    max_len = coded[-1][0]
    # Canonical per-length tables: first code value, slice into symbol order.
    first_code = [0] * (max_len + 1)
    offset = [0] * (max_len + 1)
    length_count = [0] * (max_len + 1)
    symbols_in_order = [s for _, s in coded]
    code = 0
    prev_len = 0
    for i, (length, _) in enumerate(coded):
        code <<= length - prev_len
        prev_len = length
        if length_count[length] == 0:
            first_code[length] = code
            offset[length] = i
        length_count[length] += 1
        code += 1

    bits = np.unpackbits(np.frombuffer(stream.payload, dtype=np.uint8))[: stream.bit_count]
    out: list[int] = []
    pos = 0
    total = stream.bit_count
    while len(out) < count:
        acc = 0
        length = 0
        while True:
            if pos >= total:
                raise ValueError("encoded stream exhausted before all symbols were read")
            acc = (acc << 1) | int(bits[pos])
            pos += 1
            length += 1
            if length > max_len:
                raise ValueError("invalid prefix in encoded stream")
            if length_count[length] and acc - first_code[length] < length_count[length] and acc >= first_code[length]:
                out.append(symbols_in_order[offset[length] + acc - first_code[length]])
                break
    return out
