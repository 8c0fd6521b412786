"""Bucketed linear-scaling quantization of weight vectors.

Each tensor is split into fixed-length buckets of consecutive values; every
bucket is min-max scaled into [0,1], snapped to the 2^b+1-point grid
{0, 1/2^b, ..., 1}, and stored as integer codes plus two scale parameters.
The grid deliberately includes the endpoint 1.0, so the code alphabet has
2^b + 1 symbols; the entropy-coded container absorbs the extra symbol while
theoretical_bits keeps the nominal b-bits-per-weight accounting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import huffman
from .tensors import FloatModel, QuantizedModel, WeightTensor

SEARCH_BIT_CHOICES = (4, 8, 16)
BASELINE_BIT_CHOICES = (2, 4, 8, 16)
MAX_BIT_WIDTH = 30
DEFAULT_BUCKET_SIZE = 256

# Buckets whose value range is below this are stored as a constant (span 0).
DEGENERATE_SPAN = 1e-12


def _check_bit_width(bits: int) -> int:
    b = int(bits)
    if not 1 <= b <= MAX_BIT_WIDTH:
        raise ValueError(f"bit width must be in [1, {MAX_BIT_WIDTH}], got {bits}")
    return b


@dataclass(frozen=True)
class ScaleParams:
    """Per-bucket affine parameters: value = offset + span * grid_point."""

    offset: float
    span: float

    def __post_init__(self) -> None:
        if self.span < 0:
            raise ValueError("span must be non-negative")


@dataclass(eq=False)
class QuantizedTensor:
    name: str
    shape: tuple[int, ...]
    bit_width: int
    bucket_size: int
    scales: tuple[ScaleParams, ...]
    codes: np.ndarray
    codec_payload: huffman.EncodedStream | None = None
    codebook: huffman.Codebook | None = None  # set together with codec_payload

    def __post_init__(self) -> None:
        self.shape = tuple(int(d) for d in self.shape)
        self.bit_width = _check_bit_width(self.bit_width)
        self.bucket_size = int(self.bucket_size)
        if self.bucket_size < 2:
            raise ValueError("bucket size must be at least 2")
        self.codes = np.asarray(self.codes, dtype=np.int64).reshape(-1)
        n = int(np.prod(self.shape))
        if n != self.codes.size:
            raise ValueError(f"tensor {self.name!r}: shape does not match code count")
        buckets = -(-n // self.bucket_size)
        if len(self.scales) != buckets:
            raise ValueError(
                f"tensor {self.name!r}: {len(self.scales)} scale entries for {buckets} buckets"
            )
        top = 1 << self.bit_width
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() > top):
            raise ValueError(f"tensor {self.name!r}: code out of range [0, {top}]")

    @property
    def value_count(self) -> int:
        return int(self.codes.size)

    @property
    def bucket_count(self) -> int:
        return len(self.scales)

    @property
    def alphabet_size(self) -> int:
        return (1 << self.bit_width) + 1


def scale_bucket(values) -> tuple[np.ndarray, ScaleParams]:
    """Min-max normalize one bucket into [0,1].

    Returns the scaled values and the (offset, span) pair that inverts the
    map. A bucket whose range is below DEGENERATE_SPAN is encoded as a
    constant: all scaled values 0 and span stored as 0.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("empty bucket")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite values in bucket")
    lo = float(v.min())
    span = float(v.max()) - lo
    if span < DEGENERATE_SPAN:
        return np.zeros_like(v), ScaleParams(lo, 0.0)
    return (v - lo) / span, ScaleParams(lo, span)


def quantize_unit(x, bits: int):
    """Snap values in [0,1] to the closest point of {0, 1/2^b, ..., 1}.

    Ties (fractional part exactly 0.5 after scaling by 2^b) round down.
    Returns (grid_value, code) with code = grid_value * 2^b as an integer.
    Accepts scalars or arrays.
    """
    b = _check_bit_width(bits)
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0):
        raise ValueError("quantize_unit input outside [0, 1]")
    scale = float(1 << b)
    t = arr * scale
    floor_t = np.floor(t)
    bump = (t - floor_t) > 0.5
    codes = (floor_t + bump).astype(np.int64)
    grid = codes / scale
    if np.isscalar(x) or arr.ndim == 0:
        return float(grid), int(codes)
    return grid, codes


def _f32_at_most(x: float) -> float:
    y = np.float32(x)
    if float(y) > x:
        y = np.nextafter(y, np.float32(-np.inf))
    return float(y)


def _f32_span_covering(x: float) -> float:
    y = np.float32(x)
    if float(y) < x:
        y = np.nextafter(y, np.float32(np.inf))
    return float(y)


def quantize_tensor(tensor: WeightTensor, bits: int, bucket_size: int) -> QuantizedTensor:
    """Quantize one tensor bucket by bucket into codes plus scale params.

    Scale params are pre-rounded to float32 (offset down, span up) so the
    in-memory values match the serialized container exactly; the rounding
    keeps every scaled value inside [0,1] and keeps the reconstruction bound
    span * 2^-(b+1) stated on the stored span.
    """
    b = _check_bit_width(bits)
    k = int(bucket_size)
    if k < 2:
        raise ValueError("bucket size must be at least 2")
    v = tensor.values.astype(np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite values in tensor {tensor.name!r}")
    n = v.size
    starts = np.arange(0, n, k)
    lengths = np.minimum(starts + k, n) - starts
    lo = np.minimum.reduceat(v, starts)
    hi = np.maximum.reduceat(v, starts)
    degenerate = (hi - lo) < DEGENERATE_SPAN

    # Round offsets down and spans up in f32 so scaled values stay in [0,1].
    offsets = np.float32(lo)
    too_high = offsets.astype(np.float64) > lo
    offsets[too_high] = np.nextafter(offsets[too_high], np.float32(-np.inf))
    off64 = offsets.astype(np.float64)
    spans = np.float32(hi - off64)
    too_low = spans.astype(np.float64) < hi - off64
    spans[too_low] = np.nextafter(spans[too_low], np.float32(np.inf))
    span64 = spans.astype(np.float64)
    off64[degenerate] = np.float32(lo[degenerate])
    span64[degenerate] = 0.0

    per_value_off = np.repeat(off64, lengths)
    per_value_span = np.repeat(np.where(degenerate, 1.0, span64), lengths)
    scaled = np.clip((v - per_value_off) / per_value_span, 0.0, 1.0)
    _, codes = quantize_unit(scaled, b)
    codes[np.repeat(degenerate, lengths)] = 0
    scales = tuple(ScaleParams(float(o), float(s)) for o, s in zip(off64, span64))
    return QuantizedTensor(tensor.name, tensor.shape, b, k, scales, codes)


def dequantize_tensor(qt: QuantizedTensor) -> WeightTensor:
    """Reconstruct values: offset + span * code / 2^b per bucket."""
    scale = float(1 << qt.bit_width)
    n = qt.value_count
    starts = np.arange(0, n, qt.bucket_size)
    lengths = np.minimum(starts + qt.bucket_size, n) - starts
    offsets = np.repeat(np.array([p.offset for p in qt.scales]), lengths)
    spans = np.repeat(np.array([p.span for p in qt.scales]), lengths)
    out = spans * (qt.codes / scale) + offsets
    return WeightTensor(qt.name, qt.shape, out)


def encode_payload(qt: QuantizedTensor) -> tuple[QuantizedTensor, huffman.Codebook]:
    """Entropy-code the tensor's codes; returns the tensor with its payload attached."""
    freqs = np.bincount(qt.codes, minlength=qt.alphabet_size)
    book = huffman.build_codebook(freqs)
    stream = huffman.encode(qt.codes, book)
    return replace(qt, codec_payload=stream, codebook=book), book


def theoretical_ratio(bucket_size: int, float_bits: int, bits: int) -> float:
    """Nominal compression ratio k*f / (k*b + 2*f) against full precision."""
    k = int(bucket_size)
    f = int(float_bits)
    b = _check_bit_width(bits)
    if k < 2:
        raise ValueError("bucket size must be at least 2")
    if f < b:
        raise ValueError("float width must be at least the quantization width")
    return (k * f) / (k * b + 2 * f)


def theoretical_bits(value_count: int, bits: int, bucket_size: int, float_bits: int) -> int:
    """Nominal storage bits: b per value plus two float scales per bucket."""
    n = int(value_count)
    if n < 1:
        raise ValueError("value count must be positive")
    b = _check_bit_width(bits)
    k = int(bucket_size)
    if k < 2:
        raise ValueError("bucket size must be at least 2")
    return b * n + 2 * int(float_bits) * math.ceil(n / k)


@dataclass(frozen=True)
class ExemptionRules:
    """Tensors excluded from quantization, by name and by cell index.

    Tensors without a cell_index are always exempt regardless of these rules.
    """

    names: frozenset[str] = field(default_factory=frozenset)
    cells: frozenset[int] = field(default_factory=frozenset)

    def exempts(self, tensor: WeightTensor) -> bool:
        if tensor.cell_index is None:
            return True
        return tensor.name in self.names or tensor.cell_index in self.cells


def apply_policy(
    model: FloatModel,
    policy,
    bucket_size: int = DEFAULT_BUCKET_SIZE,
    exemptions: ExemptionRules | None = None,
    extra_metadata: dict[str, str] | None = None,
) -> QuantizedModel:
    """Quantize every cell-tagged tensor with its cell's bit width.

    policy[j] is the bit width for tensors tagged cell_index j. Raises if a
    tagged, non-exempt tensor has no policy entry.
    """
    rules = exemptions or ExemptionRules()
    bit_list = [_check_bit_width(b) for b in policy]
    quantized: list[QuantizedTensor] = []
    exempt: list[WeightTensor] = []
    for t in model.tensors:
        if rules.exempts(t):
            exempt.append(t)
            continue
        if t.cell_index >= len(bit_list):
            raise ValueError(
                f"policy length mismatch: tensor {t.name!r} tagged cell {t.cell_index}, "
                f"policy covers {len(bit_list)} cells"
            )
        qt = quantize_tensor(t, bit_list[t.cell_index], bucket_size)
        qt, _ = encode_payload(qt)
        quantized.append(qt)
    metadata = dict(model.metadata)
    metadata["policy"] = ",".join(str(b) for b in bit_list)
    metadata["bucket_size"] = str(bucket_size)
    if extra_metadata:
        metadata.update(extra_metadata)
    return QuantizedModel(
        tensors=quantized,
        exempt_tensors=exempt,
        metadata=metadata,
        float_width_bits=model.float_width_bits,
    )
