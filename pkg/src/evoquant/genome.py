"""Cell-structure genomes, per-cell bit policies, sampling and mutation.

A model genome holds two cell structures (one reused at constant width, one
at width-doubling positions) plus one quantization bit width per cell of the
assembled stack. Each cell is an ordered list of combinations; the
combination at position j may read the cell's two external inputs (-2, -1)
or any earlier combination output (0..j-1).
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, replace

import numpy as np

OPERATIONS = ("sep_conv_3", "sep_conv_5", "avg_pool_3", "max_pool_3", "zero", "identity")

EXTERNAL_INPUTS = (-2, -1)

# bits: one entry per cell of the assembled stack
QuantizationPolicy = tuple[int, ...]


@dataclass(frozen=True)
class Combination:
    input_1: int
    input_2: int
    op_1: str
    op_2: str


@dataclass(frozen=True)
class CellGenome:
    combinations: tuple[Combination, ...]

    @property
    def size(self) -> int:
        return len(self.combinations)


@dataclass(frozen=True)
class ModelGenome:
    normal: CellGenome
    reduction: CellGenome
    policy: QuantizationPolicy


@dataclass(frozen=True)
class SpaceConfig:
    combinations: int = 5
    operations: tuple[str, ...] = OPERATIONS
    bit_choices: tuple[int, ...] = (4, 8, 16)
    cell_count: int = 5

    def __post_init__(self) -> None:
        if self.combinations < 1:
            raise ValueError("need at least one combination per cell")
        if len(self.operations) < 1:
            raise ValueError("empty operation set")
        if len(set(self.bit_choices)) != len(self.bit_choices) or not self.bit_choices:
            raise ValueError("bit choices must be non-empty and unique")
        if any(not 1 <= b <= 30 for b in self.bit_choices):
            raise ValueError("bit choices must lie in [1, 30]")
        if self.cell_count < 1:
            raise ValueError("need at least one cell")


def _input_choices(position: int) -> tuple[int, ...]:
    return EXTERNAL_INPUTS + tuple(range(position))


def random_cell(config: SpaceConfig, rng: np.random.Generator) -> CellGenome:
    combos = []
    for j in range(config.combinations):
        inputs = _input_choices(j)
        combos.append(
            Combination(
                input_1=int(inputs[rng.integers(len(inputs))]),
                input_2=int(inputs[rng.integers(len(inputs))]),
                op_1=config.operations[rng.integers(len(config.operations))],
                op_2=config.operations[rng.integers(len(config.operations))],
            )
        )
    return CellGenome(tuple(combos))


def random_policy(config: SpaceConfig, rng: np.random.Generator) -> QuantizationPolicy:
    return tuple(
        int(config.bit_choices[rng.integers(len(config.bit_choices))])
        for _ in range(config.cell_count)
    )


def random_genome(config: SpaceConfig, rng: np.random.Generator) -> ModelGenome:
    """Uniformly random valid genome; deterministic for a seeded generator."""
    return ModelGenome(
        normal=random_cell(config, rng),
        reduction=random_cell(config, rng),
        policy=random_policy(config, rng),
    )


def validate(genome: ModelGenome, config: SpaceConfig) -> list[str]:
    """Diagnostics for every violated structural invariant; empty when valid."""
    problems: list[str] = []
    for label, cell in (("normal", genome.normal), ("reduction", genome.reduction)):
        if cell.size != config.combinations:
            problems.append(
                f"{label} cell has {cell.size} combinations, expected {config.combinations}"
            )
        for j, c in enumerate(cell.combinations):
            allowed = _input_choices(j)
            for slot, idx in (("input_1", c.input_1), ("input_2", c.input_2)):
                if idx not in allowed:
                    kind = "forward reference" if idx >= j else "invalid input index"
                    problems.append(f"{label} combination {j} {slot}={idx}: {kind}")
            for slot, op in (("op_1", c.op_1), ("op_2", c.op_2)):
                if op not in config.operations:
                    problems.append(f"{label} combination {j} {slot}={op!r}: unknown operation")
    if len(genome.policy) != config.cell_count:
        problems.append(
            f"policy length mismatch: {len(genome.policy)} entries for {config.cell_count} cells"
        )
    for j, b in enumerate(genome.policy):
        if b not in config.bit_choices:
            problems.append(f"policy entry {j}={b} not in configured choices {config.bit_choices}")
    return problems


def mutate_architecture(
    genome: ModelGenome, config: SpaceConfig, rng: np.random.Generator
) -> ModelGenome:
    """Replace exactly one field of one combination with a different valid value."""
    which = int(rng.integers(2))
    cell = genome.normal if which == 0 else genome.reduction
    j = int(rng.integers(cell.size))
    combo = cell.combinations[j]
    field_name = ("input_1", "input_2", "op_1", "op_2")[int(rng.integers(4))]
    if field_name.startswith("input"):
        pool = _input_choices(j)
    else:
        pool = config.operations
    current = getattr(combo, field_name)
    alternatives = [v for v in pool if v != current]
    if not alternatives:
        raise ValueError(f"no alternative value for {field_name} at combination {j}")
    new_value = alternatives[int(rng.integers(len(alternatives)))]
    new_combo = replace(combo, **{field_name: new_value})
    new_combos = tuple(new_combo if i == j else c for i, c in enumerate(cell.combinations))
    new_cell = CellGenome(new_combos)
    if which == 0:
        return replace(genome, normal=new_cell)
    return replace(genome, reduction=new_cell)


def mutate_policy(
    genome: ModelGenome, config: SpaceConfig, rng: np.random.Generator
) -> ModelGenome:
    """Reset exactly one policy entry to a different configured bit width."""
    if len(config.bit_choices) < 2:
        raise ValueError("policy mutation needs at least two bit choices")
    j = int(rng.integers(len(genome.policy)))
    alternatives = [b for b in config.bit_choices if b != genome.policy[j]]
    new_bits = int(alternatives[int(rng.integers(len(alternatives)))])
    new_policy = tuple(new_bits if i == j else b for i, b in enumerate(genome.policy))
    return replace(genome, policy=new_policy)


def cell_cardinality(config: SpaceConfig) -> int:
    """Count of distinct single-cell structures: prod_j (j+2)^2 * |ops|^2."""
    total = 1
    ops = len(config.operations)
    for j in range(config.combinations):
        total *= (j + 2) ** 2 * ops**2
    return total


def policy_cardinality(config: SpaceConfig) -> int:
    return len(config.bit_choices) ** config.cell_count


def space_cardinality(config: SpaceConfig) -> int:
    """Exact size of the joint space: (cell structures)^2 * bit assignments."""
    return cell_cardinality(config) ** 2 * policy_cardinality(config)


def enumerate_cells(config: SpaceConfig):
    """Yield every distinct cell structure (practical only for tiny configs)."""
    per_position = []
    for j in range(config.combinations):
        inputs = _input_choices(j)
        per_position.append(
            [
                Combination(i1, i2, o1, o2)
                for i1 in inputs
                for i2 in inputs
                for o1 in config.operations
                for o2 in config.operations
            ]
        )
    for combos in itertools.product(*per_position):
        yield CellGenome(tuple(combos))


def enumerate_genomes(config: SpaceConfig):
    """Yield every genome of the configured space (tiny configs only)."""
    cells = list(enumerate_cells(config))
    policies = list(itertools.product(config.bit_choices, repeat=config.cell_count))
    for normal in cells:
        for reduction in cells:
            for policy in policies:
                yield ModelGenome(normal, reduction, tuple(int(b) for b in policy))


def genome_to_dict(genome: ModelGenome) -> dict:
    def cell_rows(cell: CellGenome) -> list[list]:
        return [[c.input_1, c.input_2, c.op_1, c.op_2] for c in cell.combinations]

    return {
        "normal": cell_rows(genome.normal),
        "reduction": cell_rows(genome.reduction),
        "policy": list(genome.policy),
    }


def genome_from_dict(data: dict) -> ModelGenome:
    def cell_from_rows(rows) -> CellGenome:
        return CellGenome(
            tuple(Combination(int(r[0]), int(r[1]), str(r[2]), str(r[3])) for r in rows)
        )

    return ModelGenome(
        normal=cell_from_rows(data["normal"]),
        reduction=cell_from_rows(data["reduction"]),
        policy=tuple(int(b) for b in data["policy"]),
    )


def genome_to_json(genome: ModelGenome) -> str:
    return json.dumps(genome_to_dict(genome), separators=(",", ":"))


def genome_from_json(text: str) -> ModelGenome:
    return genome_from_dict(json.loads(text))


def genome_digest(genome: ModelGenome) -> str:
    return hashlib.sha256(genome_to_json(genome).encode("utf-8")).hexdigest()


def architecture_digest(genome: ModelGenome) -> str:
    """Digest over the cell structures only, ignoring the bit policy."""
    data = genome_to_dict(genome)
    del data["policy"]
    blob = json.dumps(data, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
