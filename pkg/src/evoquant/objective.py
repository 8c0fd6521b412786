"""Size-penalized accuracy objective and Pareto-front extraction.

Fitness equals validation accuracy while the serialized size stays within
the target; past the target it is scaled by target/size, which decays the
score in proportion to the overshoot.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class FitnessRecord:
    accuracy: float
    size_bytes: int
    target_bytes: int
    fitness: float


def fitness(accuracy: float, size_bytes: int, target_bytes: int) -> FitnessRecord:
    """Penalized score: accuracy if size <= target, else accuracy * target/size."""
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy outside [0, 1]: {accuracy}")
    size_bytes = int(size_bytes)
    target_bytes = int(target_bytes)
    if size_bytes <= 0 or target_bytes <= 0:
        raise ValueError("sizes must be positive")
    if size_bytes <= target_bytes:
        value = float(accuracy)
    else:
        value = float(accuracy) * (target_bytes / size_bytes)
    return FitnessRecord(float(accuracy), size_bytes, target_bytes, value)


def pareto_front(points) -> list[tuple[float, int]]:
    """Non-dominated (accuracy, size) subset, ordered by size ascending.

    A point is dominated when another has accuracy >= and size <= with at
    least one strict. Duplicate points collapse to the earliest occurrence.
    """
    pts = [(float(a), int(s)) for a, s in points]
    if not pts:
        raise ValueError("empty point list")
    # First occurrence index per distinct point, for deterministic tie handling.
    first_seen: dict[tuple[float, int], int] = {}
    for i, p in enumerate(pts):
        first_seen.setdefault(p, i)
    distinct = sorted(first_seen, key=lambda p: (p[1], -p[0], first_seen[p]))
    front: list[tuple[float, int]] = []
    best_acc = -1.0
    last_size: int | None = None
    for acc, size in distinct:
        if size == last_size:
            continue  # only the top accuracy of an equal-size group survives
        if acc > best_acc:
            front.append((acc, size))
            best_acc = acc
            last_size = size
    return front
