"""Weight tensors and whole-model containers (float and quantized)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .quantizer import QuantizedTensor

# IEEE-754 little-endian interchange dtypes keyed by width in bits.
FLOAT_DTYPES = {16: np.dtype("<f2"), 32: np.dtype("<f4"), 64: np.dtype("<f8")}

MAX_TENSOR_COUNT = 65535
MAX_NAME_BYTES = 255


@dataclass(eq=False)
class WeightTensor:
    """One named weight vector with its logical shape.

    Values are stored flat in row-major order. cell_index ties the tensor to
    a cell of an assembled network; tensors without a cell_index (stem,
    classifier) are never quantized.
    """

    name: str
    shape: tuple[int, ...]
    values: np.ndarray
    cell_index: int | None = None

    def __post_init__(self) -> None:
        self.shape = tuple(int(d) for d in self.shape)
        values = np.asarray(self.values)
        if values.dtype.kind != "f":
            values = values.astype(np.float64)
        self.values = values.reshape(-1)
        if not self.name:
            raise ValueError("tensor name must be non-empty")
        if len(self.name.encode("utf-8")) > MAX_NAME_BYTES:
            raise ValueError(f"tensor name longer than {MAX_NAME_BYTES} bytes: {self.name!r}")
        if not self.shape or any(d <= 0 for d in self.shape):
            raise ValueError(f"tensor {self.name!r}: shape must be positive dimensions, got {self.shape}")
        if int(np.prod(self.shape)) != self.values.size:
            raise ValueError(
                f"tensor {self.name!r}: shape {self.shape} does not match {self.values.size} values"
            )
        if self.cell_index is not None:
            self.cell_index = int(self.cell_index)
            if self.cell_index < 0:
                raise ValueError(f"tensor {self.name!r}: negative cell_index")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite values in tensor {self.name!r}")

    @property
    def value_count(self) -> int:
        return int(self.values.size)

    def astype(self, dtype: np.dtype) -> "WeightTensor":
        return WeightTensor(self.name, self.shape, self.values.astype(dtype), self.cell_index)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightTensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.cell_index == other.cell_index
            and self.values.dtype == other.values.dtype
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass(eq=False)
class FloatModel:
    """Ordered collection of full-precision weight tensors.

    Construction normalizes every tensor to the IEEE dtype implied by
    float_width_bits, so a save/load round trip is bit-exact.
    """

    tensors: list[WeightTensor]
    metadata: dict[str, str] = field(default_factory=dict)
    float_width_bits: int = 32

    def __post_init__(self) -> None:
        if self.float_width_bits not in FLOAT_DTYPES:
            raise ValueError(f"float_width_bits must be one of {sorted(FLOAT_DTYPES)}")
        dtype = FLOAT_DTYPES[self.float_width_bits]
        self.tensors = [t if t.values.dtype == dtype else t.astype(dtype) for t in self.tensors]
        if len(self.tensors) > MAX_TENSOR_COUNT:
            raise ValueError(f"too many tensors ({len(self.tensors)} > {MAX_TENSOR_COUNT})")
        names = [t.name for t in self.tensors]
        if len(set(names)) != len(names):
            raise ValueError("duplicate tensor names in model")
        cells = sorted({t.cell_index for t in self.tensors if t.cell_index is not None})
        if cells and cells != list(range(cells[-1] + 1)):
            raise ValueError(f"cell_index values not contiguous from 0: {cells}")
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}

    @property
    def value_count(self) -> int:
        return sum(t.value_count for t in self.tensors)

    @property
    def cell_count(self) -> int:
        cells = [t.cell_index for t in self.tensors if t.cell_index is not None]
        return max(cells) + 1 if cells else 0

    def tensor(self, name: str) -> WeightTensor:
        for t in self.tensors:
            if t.name == name:
                return t
        raise KeyError(name)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FloatModel):
            return NotImplemented
        return (
            self.float_width_bits == other.float_width_bits
            and self.metadata == other.metadata
            and self.tensors == other.tensors
        )


def float_size_bits(model: FloatModel) -> int:
    """Storage bits of the raw value payload: width times total value count."""
    return model.float_width_bits * model.value_count


@dataclass(eq=False)
class QuantizedModel:
    """Quantized tensors plus the tensors kept at full precision.

    Every quantized member must already carry its entropy-coded payload so
    that total_bits reflects what actually gets serialized.
    """

    tensors: list["QuantizedTensor"]
    exempt_tensors: list[WeightTensor] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)
    float_width_bits: int = 32

    def __post_init__(self) -> None:
        if self.float_width_bits not in FLOAT_DTYPES:
            raise ValueError(f"float_width_bits must be one of {sorted(FLOAT_DTYPES)}")
        dtype = FLOAT_DTYPES[self.float_width_bits]
        self.exempt_tensors = [
            t if t.values.dtype == dtype else t.astype(dtype) for t in self.exempt_tensors
        ]
        q_names = [t.name for t in self.tensors]
        e_names = [t.name for t in self.exempt_tensors]
        if len(set(q_names + e_names)) != len(q_names) + len(e_names):
            raise ValueError("tensor name appears in both quantized and exempt sections")
        for t in self.tensors:
            if t.codec_payload is None:
                raise ValueError(f"quantized tensor {t.name!r} has no encoded payload")
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}

    @property
    def total_bits(self) -> int:
        quantized = sum(t.codec_payload.bit_count for t in self.tensors)
        exempt = sum(self.float_width_bits * t.value_count for t in self.exempt_tensors)
        return quantized + exempt
