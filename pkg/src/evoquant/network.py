"""Macro-assembly: expand a genome into a concrete layer plan.

Cells are stacked per a profile: a width-F stem, runs of constant-width
cells with width-doubling cells between them, and an affine classifier
head. Every cell receives the two previous outputs (the stem output is
duplicated at the front), projects them to its operating width, runs its
combinations, and projects the concatenation of all combination outputs to
its output width. A doubling ("reduction") cell operates at the incoming
width and emits twice that width.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .genome import CellGenome, Combination, ModelGenome

ROLE_NORMAL = "normal"
ROLE_REDUCTION = "reduction"

CIFAR_STYLE = "cifar-style"
IMAGENET_STYLE = "imagenet-style"


@dataclass(frozen=True)
class StackingProfile:
    """Stack shape: N cells per constant-width run, initial width, dataset tag.

    The standard patterns put a width-doubling cell between three runs of N
    constant-width cells (3N+2 cells); the larger-input variant prepends two
    extra doubling stages. An explicit role list overrides the pattern for
    nonstandard stacks.
    """

    n: int
    f_init: int
    dataset: str = CIFAR_STYLE
    roles: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.n < 1 or self.f_init < 1:
            raise ValueError("stack count and initial width must be positive")
        if self.dataset not in (CIFAR_STYLE, IMAGENET_STYLE):
            raise ValueError(f"unknown dataset tag {self.dataset!r}")
        if self.roles is not None:
            object.__setattr__(self, "roles", tuple(self.roles))
            bad = [r for r in self.roles if r not in (ROLE_NORMAL, ROLE_REDUCTION)]
            if bad or not self.roles:
                raise ValueError(f"invalid cell roles {self.roles}")

    @property
    def cell_roles(self) -> tuple[str, ...]:
        if self.roles is not None:
            return self.roles
        run = [ROLE_NORMAL] * self.n
        roles = run + [ROLE_REDUCTION] + run + [ROLE_REDUCTION] + run
        if self.dataset == IMAGENET_STYLE:
            # Extra front downsampling stages mirror the larger-input stack.
            roles = [ROLE_REDUCTION, ROLE_REDUCTION] + roles
        return tuple(roles)

    @property
    def cell_count(self) -> int:
        return len(self.cell_roles)

    def to_dict(self) -> dict:
        out = {"n": self.n, "f_init": self.f_init, "dataset": self.dataset}
        if self.roles is not None:
            out["roles"] = list(self.roles)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @staticmethod
    def from_dict(data: dict) -> "StackingProfile":
        roles = tuple(data["roles"]) if data.get("roles") else None
        return StackingProfile(
            int(data["n"]), int(data["f_init"]), str(data.get("dataset", CIFAR_STYLE)), roles
        )

    @staticmethod
    def from_json(text: str) -> "StackingProfile":
        return StackingProfile.from_dict(json.loads(text))


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    cell_index: int | None


@dataclass(frozen=True)
class CellPlan:
    index: int
    role: str
    width: int
    out_width: int
    prev1_width: int
    prev2_width: int
    combinations: tuple[Combination, ...]

    def param_specs(self) -> tuple[ParamSpec, ...]:
        j = self.index
        w = self.width
        specs = [
            ParamSpec(f"cell{j}.prev1.proj", (self.prev1_width, w), j),
            ParamSpec(f"cell{j}.prev2.proj", (self.prev2_width, w), j),
        ]
        for c, combo in enumerate(self.combinations):
            for s, op in ((0, combo.op_1), (1, combo.op_2)):
                prefix = f"cell{j}.comb{c}.op{s}"
                if op == "sep_conv_3":
                    specs.append(ParamSpec(f"{prefix}.w0", (w, w), j))
                    specs.append(ParamSpec(f"{prefix}.b0", (w,), j))
                elif op == "sep_conv_5":
                    specs.append(ParamSpec(f"{prefix}.w0", (w, w), j))
                    specs.append(ParamSpec(f"{prefix}.b0", (w,), j))
                    specs.append(ParamSpec(f"{prefix}.w1", (w, w), j))
                    specs.append(ParamSpec(f"{prefix}.b1", (w,), j))
        specs.append(
            ParamSpec(f"cell{j}.out.proj", (len(self.combinations) * w, self.out_width), j)
        )
        return tuple(specs)


@dataclass(frozen=True)
class NetworkPlan:
    profile: StackingProfile
    cells: tuple[CellPlan, ...]
    policy: tuple[int, ...]

    @property
    def cell_count(self) -> int:
        return len(self.cells)

    @property
    def final_width(self) -> int:
        return self.cells[-1].out_width

    def param_specs(self, input_dim: int, num_classes: int) -> tuple[ParamSpec, ...]:
        """All trainable tensors in forward order; stem/classifier untagged."""
        specs = [ParamSpec("stem.weight", (input_dim, self.profile.f_init), None)]
        for cell in self.cells:
            specs.extend(cell.param_specs())
        specs.append(ParamSpec("classifier.weight", (self.final_width, num_classes), None))
        specs.append(ParamSpec("classifier.bias", (num_classes,), None))
        return tuple(specs)

    def parameter_count(self, input_dim: int, num_classes: int) -> int:
        total = 0
        for spec in self.param_specs(input_dim, num_classes):
            n = 1
            for d in spec.shape:
                n *= d
            total += n
        return total


def assemble(genome: ModelGenome, profile: StackingProfile) -> NetworkPlan:
    """Deterministic expansion of a genome along the profile's cell roles."""
    roles = profile.cell_roles
    if len(genome.policy) != len(roles):
        raise ValueError(
            f"policy length mismatch: {len(genome.policy)} entries for {len(roles)} cells"
        )
    cells = []
    width = profile.f_init
    prev1 = profile.f_init  # previous cell output (stem at the front)
    prev2 = profile.f_init  # output before that (stem duplicated)
    for j, role in enumerate(roles):
        structure: CellGenome = genome.reduction if role == ROLE_REDUCTION else genome.normal
        out_width = 2 * width if role == ROLE_REDUCTION else width
        cells.append(
            CellPlan(
                index=j,
                role=role,
                width=width,
                out_width=out_width,
                prev1_width=prev1,
                prev2_width=prev2,
                combinations=structure.combinations,
            )
        )
        prev2 = prev1
        prev1 = out_width
        width = out_width
    return NetworkPlan(profile=profile, cells=tuple(cells), policy=tuple(genome.policy))
