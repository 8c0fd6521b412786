"""Bit-exact binary containers for float and quantized models.

Float container (magic "JSQW"):
    [4B]  magic "JSQW"
    [2B]  format version (u16 LE) = 1
    [2B]  float_width_bits (u16 LE), one of 16/32/64
    [2B]  tensor count (u16 LE)
    per tensor:
        [1B]  name length + UTF-8 name bytes
        [1B]  rank + rank * u32 LE dims
        [1B]  has_cell_index flag + [2B] cell index (u16 LE, 0 when unset)
        values, little-endian IEEE-754 at float_width_bits
    [4B]  metadata length (u32 LE) + UTF-8 JSON object of string pairs

Quantized container (magic "JSQQ"):
    [4B]  magic "JSQQ"
    [2B]  version (u16 LE) = 1
    [2B]  quantized tensor count (u16 LE)
    per quantized tensor:
        name and shape as in JSQW
        [1B]  bit width
        [4B]  bucket size (u32 LE)
        [4B]  bucket count (u32 LE)
        bucket count * (f32 LE offset, f32 LE span)
        [4B]  codebook alphabet size (u32 LE) + per-symbol u8 code lengths
        [8B]  encoded bit count (u64 LE) + payload bytes (MSB-first, zero pad)
    exempt section:
        [2B]  float_width_bits (u16 LE)
        [2B]  exempt tensor count (u16 LE)
        per tensor: JSQW tensor layout (name, shape, cell flag, values)
    [4B]  metadata length (u32 LE) + UTF-8 JSON

Reported model size is the total file byte count.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import huffman
from .quantizer import QuantizedTensor, ScaleParams, encode_payload
from .tensors import FLOAT_DTYPES, FloatModel, MAX_TENSOR_COUNT, QuantizedModel, WeightTensor

MAGIC_FLOAT = b"JSQW"
MAGIC_QUANT = b"JSQQ"
FORMAT_VERSION = 1


class _Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise ValueError("truncated stream")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    @property
    def exhausted(self) -> bool:
        return self._pos >= len(self._data)


def _read_source(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def _write_sink(data: bytes, destination) -> int:
    if destination is None:
        return len(data)
    if isinstance(destination, (str, Path)):
        Path(destination).write_bytes(data)
        return len(data)
    destination.write(data)
    return len(data)


def _pack_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<B", len(raw)) + raw


def _pack_tensor_header(t) -> bytes:
    out = bytearray(_pack_name(t.name))
    out += struct.pack("<B", len(t.shape))
    for d in t.shape:
        out += struct.pack("<I", d)
    cell = getattr(t, "cell_index", None)
    out += struct.pack("<BH", 1 if cell is not None else 0, cell if cell is not None else 0)
    return bytes(out)


def _unpack_tensor_header(r: _Reader) -> tuple[str, tuple[int, ...], int | None]:
    name = r.take(r.u8()).decode("utf-8")
    rank = r.u8()
    shape = tuple(r.u32() for _ in range(rank))
    flag = r.u8()
    cell = r.u16()
    return name, shape, (cell if flag else None)


def _pack_metadata(metadata: dict[str, str]) -> bytes:
    blob = json.dumps(metadata, sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(blob)) + blob


def _unpack_metadata(r: _Reader) -> dict[str, str]:
    blob = r.take(r.u32())
    return {str(k): str(v) for k, v in json.loads(blob.decode("utf-8")).items()}


def float_model_bytes(model: FloatModel) -> bytes:
    if not model.tensors:
        raise ValueError("empty model")
    if len(model.tensors) > MAX_TENSOR_COUNT:
        raise ValueError("too many tensors")
    out = bytearray(MAGIC_FLOAT)
    out += struct.pack("<HHH", FORMAT_VERSION, model.float_width_bits, len(model.tensors))
    for t in model.tensors:
        out += _pack_tensor_header(t)
        out += t.values.tobytes()
    out += _pack_metadata(model.metadata)
    return bytes(out)


def save_float_model(model: FloatModel, destination=None) -> int:
    """Serialize to the float container; returns bytes written."""
    return _write_sink(float_model_bytes(model), destination)


def load_float_model(source) -> FloatModel:
    data = _read_source(source)
    r = _Reader(data)
    if r.take(4) != MAGIC_FLOAT:
        raise ValueError("bad magic: not a float model container")
    version = r.u16()
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported container version {version}")
    fbits = r.u16()
    if fbits not in FLOAT_DTYPES:
        raise ValueError(f"unsupported float width {fbits}")
    dtype = FLOAT_DTYPES[fbits]
    count = r.u16()
    if count == 0:
        raise ValueError("empty model")
    tensors = []
    for _ in range(count):
        name, shape, cell = _unpack_tensor_header(r)
        n = int(np.prod(shape)) if shape else 0
        raw = r.take(n * dtype.itemsize)
        values = np.frombuffer(raw, dtype=dtype)
        tensors.append(WeightTensor(name, shape, values, cell))
    metadata = _unpack_metadata(r)
    return FloatModel(tensors, metadata, fbits)


def _pack_quantized_tensor(qt: QuantizedTensor) -> bytes:
    if qt.codec_payload is None:
        qt, _ = encode_payload(qt)
    book = qt.codebook
    if book is None:
        # codebook derivation from code counts is deterministic, so a tensor
        # carrying only its payload still serializes consistently
        freqs = np.bincount(qt.codes, minlength=qt.alphabet_size)
        book = huffman.build_codebook(freqs)
    stream = qt.codec_payload
    out = bytearray(_pack_tensor_header(qt))
    out += struct.pack("<B", qt.bit_width)
    out += struct.pack("<II", qt.bucket_size, qt.bucket_count)
    scale_arr = np.empty(2 * qt.bucket_count, dtype="<f4")
    for j, p in enumerate(qt.scales):
        scale_arr[2 * j] = p.offset
        scale_arr[2 * j + 1] = p.span
    out += scale_arr.tobytes()
    out += struct.pack("<I", book.symbol_count)
    out += bytes(book.code_lengths)
    out += struct.pack("<Q", stream.bit_count)
    out += stream.payload
    return bytes(out)


def _unpack_quantized_tensor(r: _Reader) -> QuantizedTensor:
    name, shape, _ = _unpack_tensor_header(r)
    bit_width = r.u8()
    bucket_size = r.u32()
    bucket_count = r.u32()
    raw = r.take(8 * bucket_count)
    scale_arr = np.frombuffer(raw, dtype="<f4")
    scales = tuple(
        ScaleParams(float(scale_arr[2 * j]), float(scale_arr[2 * j + 1]))
        for j in range(bucket_count)
    )
    alphabet = r.u32()
    lengths = tuple(r.take(alphabet))
    book = huffman.Codebook(lengths)
    bit_count = r.u64()
    payload = r.take((bit_count + 7) // 8)
    stream = huffman.EncodedStream(bit_count, payload)
    n = int(np.prod(shape))
    codes = np.asarray(huffman.decode(stream, book, n), dtype=np.int64)
    return QuantizedTensor(name, shape, bit_width, bucket_size, scales, codes, stream, book)


def quantized_model_bytes(model: QuantizedModel) -> bytes:
    if not model.tensors and not model.exempt_tensors:
        raise ValueError("empty model")
    out = bytearray(MAGIC_QUANT)
    out += struct.pack("<HH", FORMAT_VERSION, len(model.tensors))
    for qt in model.tensors:
        out += _pack_quantized_tensor(qt)
    out += struct.pack("<HH", model.float_width_bits, len(model.exempt_tensors))
    dtype = FLOAT_DTYPES[model.float_width_bits]
    for t in model.exempt_tensors:
        out += _pack_tensor_header(t)
        out += t.values.astype(dtype).tobytes()
    out += _pack_metadata(model.metadata)
    return bytes(out)


def save_quantized_model(model: QuantizedModel, destination=None) -> int:
    """Serialize to the quantized container; returns bytes written."""
    return _write_sink(quantized_model_bytes(model), destination)


def load_quantized_model(source) -> QuantizedModel:
    data = _read_source(source)
    r = _Reader(data)
    if r.take(4) != MAGIC_QUANT:
        raise ValueError("bad magic: not a quantized model container")
    version = r.u16()
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported container version {version}")
    count = r.u16()
    tensors = [_unpack_quantized_tensor(r) for _ in range(count)]
    fbits = r.u16()
    if fbits not in FLOAT_DTYPES:
        raise ValueError(f"unsupported float width {fbits}")
    dtype = FLOAT_DTYPES[fbits]
    ecount = r.u16()
    exempt = []
    for _ in range(ecount):
        name, shape, cell = _unpack_tensor_header(r)
        n = int(np.prod(shape))
        raw = r.take(n * dtype.itemsize)
        exempt.append(WeightTensor(name, shape, np.frombuffer(raw, dtype=dtype), cell))
    metadata = _unpack_metadata(r)
    return QuantizedModel(tensors, exempt, metadata, fbits)


def sniff_container(source) -> str:
    """Return "float" or "quantized" from the leading magic bytes."""
    data = _read_source(source)
    if data[:4] == MAGIC_FLOAT:
        return "float"
    if data[:4] == MAGIC_QUANT:
        return "quantized"
    raise ValueError("bad magic: unknown container")
