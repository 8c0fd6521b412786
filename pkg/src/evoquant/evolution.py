"""Tournament-selection search over genomes, plus the population-size sweep.

One step samples a subset of the population, clones and mutates the subset's
best member, evaluates the child, inserts it, and evicts the subset's worst
member. Joint mode mutates one architecture gene and one policy entry per
step; policy-only mode freezes the architecture and mutates the policy.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datasets import Dataset, dataset_from_descriptor
from .evaluator import (
    EvalResult,
    EvaluationError,
    SharedParameterCache,
    SurrogateSpec,
    TrainHyper,
    evaluate_quantized,
    plan_from_model,
    surrogate_eval,
    train,
)
from .genome import (
    ModelGenome,
    SpaceConfig,
    architecture_digest,
    genome_from_dict,
    genome_from_json,
    genome_to_dict,
    mutate_architecture,
    mutate_policy,
    random_genome,
    random_policy,
)
from .network import StackingProfile, assemble
from .objective import FitnessRecord, fitness
from .quantizer import DEFAULT_BUCKET_SIZE, ExemptionRules
from .tensors import FloatModel

MODE_JOINT = "joint"
MODE_POLICY_ONLY = "policy-only"

MAX_EVAL_RETRIES = 3


@dataclass(eq=False)
class Individual:
    genome: ModelGenome
    result: EvalResult
    fitness_record: FitnessRecord
    birth_iteration: int
    id: int

    @property
    def fitness(self) -> float:
        return self.fitness_record.fitness


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 16
    sample_size: int = 16
    iterations: int = 100
    target_bytes: int = 1_000_000
    mode: str = MODE_JOINT
    master_seed: int = 0
    bucket_size: int = DEFAULT_BUCKET_SIZE
    space: SpaceConfig = field(default_factory=SpaceConfig)
    profile: StackingProfile = field(default_factory=lambda: StackingProfile(1, 16))
    eval_profile: StackingProfile | None = None
    evaluator: str = "toy"
    dataset: dict | None = None
    hyper: TrainHyper = field(default_factory=TrainHyper)
    exempt_names: tuple[str, ...] = ()
    exempt_cells: tuple[int, ...] = ()
    share_parameters: bool = False
    seed_genomes: tuple[ModelGenome, ...] = ()
    seed_policies: tuple[tuple[int, ...], ...] = ()
    surrogate: dict | None = None
    model_path: str | None = None
    base_genome: ModelGenome | None = None

    def __post_init__(self) -> None:
        if self.mode not in (MODE_JOINT, MODE_POLICY_ONLY):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 2 <= self.sample_size <= self.population_size:
            raise ValueError(
                f"sample size must satisfy 2 <= #S <= #P, got #S={self.sample_size} #P={self.population_size}"
            )
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.master_seed < 0:
            raise ValueError("master seed must be non-negative")
        if self.target_bytes <= 0:
            raise ValueError("target size must be positive")
        if len(self.seed_genomes) + len(self.seed_policies) > self.population_size:
            raise ValueError("more seed individuals than population slots")
        # Policy length always tracks the profile's cell count.
        object.__setattr__(self, "space", replace(self.space, cell_count=self.profile.cell_count))

    @property
    def exemptions(self) -> ExemptionRules:
        return ExemptionRules(frozenset(self.exempt_names), frozenset(int(c) for c in self.exempt_cells))

    @staticmethod
    def from_dict(data: dict) -> "SearchConfig":
        known = {
            "population_size", "sample_size", "iterations", "target_bytes", "mode",
            "master_seed", "bucket_size", "evaluator", "share_parameters", "model_path",
            "space", "profile", "eval_profile", "dataset", "hyper",
            "exempt_names", "exempt_cells", "seed_genomes", "seed_policies", "surrogate",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key in (
            "population_size",
            "sample_size",
            "iterations",
            "target_bytes",
            "mode",
            "master_seed",
            "bucket_size",
            "evaluator",
            "share_parameters",
            "model_path",
        ):
            if key in data:
                kwargs[key] = data[key]
        if "space" in data:
            kwargs["space"] = SpaceConfig(
                combinations=int(data["space"].get("combinations", 5)),
                bit_choices=tuple(int(b) for b in data["space"].get("bit_choices", (4, 8, 16))),
            )
        if "profile" in data:
            kwargs["profile"] = StackingProfile.from_dict(data["profile"])
        if data.get("eval_profile"):
            kwargs["eval_profile"] = StackingProfile.from_dict(data["eval_profile"])
        if "dataset" in data:
            kwargs["dataset"] = dict(data["dataset"])
        if "hyper" in data:
            kwargs["hyper"] = TrainHyper(**data["hyper"])
        if "exempt_names" in data:
            kwargs["exempt_names"] = tuple(data["exempt_names"])
        if "exempt_cells" in data:
            kwargs["exempt_cells"] = tuple(data["exempt_cells"])
        if "seed_genomes" in data:
            kwargs["seed_genomes"] = tuple(genome_from_dict(g) for g in data["seed_genomes"])
        if "seed_policies" in data:
            kwargs["seed_policies"] = tuple(tuple(int(b) for b in p) for p in data["seed_policies"])
        if "surrogate" in data:
            kwargs["surrogate"] = dict(data["surrogate"])
        return SearchConfig(**kwargs)


@dataclass(eq=False)
class SearchHistory:
    records: list[dict]
    final_population: list[Individual]
    best: Individual
    summary: dict

    def write_jsonl(self, path) -> None:
        lines = [json.dumps(rec) for rec in self.records]
        Path(path).write_text("\n".join(lines) + "\n")

    def mean_fitness_curve(self) -> list[float]:
        return [rec["mean_fitness"] for rec in self.records]


def individual_eval_seed(master_seed: int, individual_id: int) -> int:
    """Per-individual training seed, stable across reruns of the same search."""
    return int(np.random.SeedSequence((master_seed, individual_id)).generate_state(1)[0])


class SurrogateEvaluator:
    def __init__(self, spec: SurrogateSpec):
        self.spec = spec

    def evaluate(self, genome: ModelGenome, eval_seed: int) -> EvalResult:
        return surrogate_eval(genome, self.spec)


class ToyEvaluator:
    """Train on the dataset, quantize per the genome's policy, score on val."""

    def __init__(
        self,
        data: Dataset,
        hyper: TrainHyper,
        profile: StackingProfile,
        bucket_size: int = DEFAULT_BUCKET_SIZE,
        exemptions: ExemptionRules | None = None,
        share_parameters: bool = False,
    ):
        self.data = data
        self.hyper = hyper
        self.profile = profile
        self.bucket_size = bucket_size
        self.exemptions = exemptions
        self.cache = SharedParameterCache() if share_parameters else None

    def train_model(self, genome: ModelGenome, eval_seed: int) -> FloatModel:
        plan = assemble(genome, self.profile)
        if self.cache is not None:
            arch = architecture_digest(genome)
            if arch in self.cache.trained:
                return self.cache.trained[arch]
            overrides = self.cache.overrides_for(plan, self.data.dim, self.data.num_classes)
            model = train(plan, self.data, replace(self.hyper, seed=eval_seed), genome=genome,
                          init_overrides=overrides)
            self.cache.trained[arch] = model
            self.cache.store(plan, model)
            return model
        return train(plan, self.data, replace(self.hyper, seed=eval_seed), genome=genome)

    def evaluate(self, genome: ModelGenome, eval_seed: int) -> EvalResult:
        plan = assemble(genome, self.profile)
        model = self.train_model(genome, eval_seed)
        return evaluate_quantized(
            model, genome.policy, self.data, self.bucket_size, self.exemptions, plan
        )


class FixedModelEvaluator:
    """Policy evaluation against one pretrained model; memoized per policy."""

    def __init__(
        self,
        model: FloatModel,
        data: Dataset,
        bucket_size: int = DEFAULT_BUCKET_SIZE,
        exemptions: ExemptionRules | None = None,
    ):
        if model.cell_count == 0:
            raise ValueError("model has no cell tags; cannot search a per-cell policy")
        self.model = model
        self.data = data
        self.bucket_size = bucket_size
        self.exemptions = exemptions
        self.plan = plan_from_model(model)
        self.base_genome = genome_from_json(model.metadata["genome"])
        self._memo: dict[tuple[int, ...], EvalResult] = {}

    def evaluate(self, genome: ModelGenome, eval_seed: int) -> EvalResult:
        key = tuple(genome.policy)
        if key not in self._memo:
            self._memo[key] = evaluate_quantized(
                self.model, genome.policy, self.data, self.bucket_size, self.exemptions, self.plan
            )
        return self._memo[key]


def build_evaluator(config: SearchConfig):
    if config.evaluator == "surrogate":
        if not config.surrogate or "planted" not in config.surrogate:
            raise ValueError("surrogate evaluator needs a planted genome")
        spec = SurrogateSpec(
            planted=genome_from_dict(config.surrogate["planted"]),
            cell_roles=config.profile.cell_roles,
            base_accuracy=float(config.surrogate.get("base_accuracy", 0.5)),
            accuracy_gain=float(config.surrogate.get("accuracy_gain", 0.4)),
        )
        return SurrogateEvaluator(spec)
    if config.dataset is None:
        raise ValueError(f"evaluator {config.evaluator!r} needs a dataset")
    data = dataset_from_descriptor(config.dataset)
    if config.evaluator == "toy":
        return ToyEvaluator(
            data,
            config.hyper,
            config.profile,
            config.bucket_size,
            config.exemptions,
            config.share_parameters,
        )
    if config.evaluator == "fixed":
        if not config.model_path:
            raise ValueError("fixed evaluator needs a model path")
        from .containers import load_float_model

        return FixedModelEvaluator(
            load_float_model(config.model_path), data, config.bucket_size, config.exemptions
        )
    raise ValueError(f"unknown evaluator {config.evaluator!r}")


def population_stats(population: list[Individual]) -> tuple[float, float, float]:
    """(mean, population standard deviation, max) of the current fitnesses."""
    if not population:
        raise ValueError("empty population")
    values = np.array([ind.fitness for ind in population], dtype=np.float64)
    return float(values.mean()), float(values.std()), float(values.max())


def _make_individual(
    genome: ModelGenome, evaluator, config: SearchConfig, ind_id: int, birth: int
) -> Individual:
    result = evaluator.evaluate(genome, individual_eval_seed(config.master_seed, ind_id))
    record = fitness(result.accuracy, result.size_bytes, config.target_bytes)
    return Individual(genome, result, record, birth, ind_id)


def _initial_genomes(
    config: SearchConfig, evaluator, rng: np.random.Generator
) -> list[ModelGenome]:
    base = config.base_genome or getattr(evaluator, "base_genome", None)
    if config.mode == MODE_POLICY_ONLY and base is None:
        raise ValueError("policy-only mode needs a base genome")
    genomes: list[ModelGenome] = list(config.seed_genomes)
    for policy in config.seed_policies:
        if len(policy) != config.space.cell_count:
            raise ValueError(
                f"seed policy length {len(policy)} does not match {config.space.cell_count} cells"
            )
        arch = base if base is not None else random_genome(config.space, rng)
        genomes.append(replace(arch, policy=tuple(policy)))
    while len(genomes) < config.population_size:
        if config.mode == MODE_POLICY_ONLY:
            genomes.append(replace(base, policy=random_policy(config.space, rng)))
        else:
            genomes.append(random_genome(config.space, rng))
    return genomes


def init_population(config: SearchConfig, evaluator, rng: np.random.Generator) -> list[Individual]:
    seeded = len(config.seed_genomes) + len(config.seed_policies)
    genomes = _initial_genomes(config, evaluator, rng)
    population = []
    base = config.base_genome or getattr(evaluator, "base_genome", None)
    for ind_id, g in enumerate(genomes):
        failures = 0
        while True:
            try:
                population.append(_make_individual(g, evaluator, config, ind_id, birth=0))
                break
            except EvaluationError:
                # Seeded individuals are user input; only random fills get redrawn.
                failures += 1
                if ind_id < seeded or failures > MAX_EVAL_RETRIES:
                    raise
                if config.mode == MODE_POLICY_ONLY:
                    g = replace(base, policy=random_policy(config.space, rng))
                else:
                    g = random_genome(config.space, rng)
    return population


def _mutate(parent: ModelGenome, config: SearchConfig, rng: np.random.Generator) -> ModelGenome:
    if config.mode == MODE_JOINT:
        return mutate_policy(mutate_architecture(parent, config.space, rng), config.space, rng)
    return mutate_policy(parent, config.space, rng)


def evolve_step(
    population: list[Individual],
    config: SearchConfig,
    rng: np.random.Generator,
    evaluator,
    iteration: int,
    next_id: int,
    running_best: float,
) -> tuple[dict, Individual, float]:
    """One tournament round; mutates `population` in place and returns the
    step record, the child, and the updated running-best fitness."""
    sample_idx = rng.choice(len(population), size=config.sample_size, replace=False)
    sample = [population[int(i)] for i in sample_idx]
    best = max(sample, key=lambda ind: (ind.fitness, -ind.id))
    worst = min(sample, key=lambda ind: (ind.fitness, ind.id))
    child = None
    failures = 0
    while child is None:
        try:
            child_genome = _mutate(best.genome, config, rng)
            child = _make_individual(child_genome, evaluator, config, next_id, iteration)
        except EvaluationError:
            failures += 1
            if failures > MAX_EVAL_RETRIES:
                raise
    population.remove(worst)
    population.append(child)
    running_best = max(running_best, child.fitness)
    mean, std, _ = population_stats(population)
    record = {
        "iteration": iteration,
        "child_id": child.id,
        "child_fitness": child.fitness,
        "child_accuracy": child.result.accuracy,
        "child_size_bytes": child.result.size_bytes,
        "mean_fitness": mean,
        "std_fitness": std,
        "best_fitness": running_best,
        "evicted_id": worst.id,
        "retries": failures,
    }
    return record, child, running_best


def run_search(config: SearchConfig, evaluator=None) -> SearchHistory:
    """Initialize, run the configured number of steps, and collect history."""
    evaluator = evaluator or build_evaluator(config)
    rng = np.random.default_rng(config.master_seed)
    population = init_population(config, evaluator, rng)
    best_ever = max(population, key=lambda ind: (ind.fitness, -ind.id))
    running_best = best_ever.fitness
    mean, std, _ = population_stats(population)
    records = [
        {
            "iteration": 0,
            "child_id": None,
            "child_fitness": None,
            "child_accuracy": None,
            "child_size_bytes": None,
            "mean_fitness": mean,
            "std_fitness": std,
            "best_fitness": running_best,
            "evicted_id": None,
            "retries": 0,
            "population": [
                {
                    "id": ind.id,
                    "fitness": ind.fitness,
                    "accuracy": ind.result.accuracy,
                    "size_bytes": ind.result.size_bytes,
                    "policy": list(ind.genome.policy),
                }
                for ind in population
            ],
        }
    ]
    next_id = len(population)
    for i in range(1, config.iterations + 1):
        record, child, running_best = evolve_step(
            population, config, rng, evaluator, i, next_id, running_best
        )
        next_id += 1
        records.append(record)
        if (child.fitness, -child.id) > (best_ever.fitness, -best_ever.id):
            best_ever = child
    summary = {
        "best_id": best_ever.id,
        "best_fitness": best_ever.fitness,
        "best_accuracy": best_ever.result.accuracy,
        "best_size_bytes": best_ever.result.size_bytes,
        "best_genome": genome_to_dict(best_ever.genome),
        "target_bytes": config.target_bytes,
    }
    if config.eval_profile is not None and isinstance(evaluator, ToyEvaluator):
        wide = ToyEvaluator(
            evaluator.data,
            config.hyper,
            config.eval_profile,
            config.bucket_size,
            config.exemptions,
        )
        genome = replace(
            best_ever.genome,
            policy=_fit_policy(best_ever.genome.policy, config.eval_profile.cell_count),
        )
        result = wide.evaluate(genome, individual_eval_seed(config.master_seed, best_ever.id))
        rec = fitness(result.accuracy, result.size_bytes, config.target_bytes)
        summary["eval_profile"] = {
            "accuracy": result.accuracy,
            "size_bytes": result.size_bytes,
            "fitness": rec.fitness,
        }
    return SearchHistory(records, population, best_ever, summary)


def _fit_policy(policy: tuple[int, ...], cell_count: int) -> tuple[int, ...]:
    """Stretch or trim a policy to another stack depth by repeating entries."""
    if len(policy) == cell_count:
        return policy
    idx = np.linspace(0, len(policy) - 1, cell_count).round().astype(int)
    return tuple(int(policy[i]) for i in idx)


def sweep(grid, base_config: SearchConfig):
    """Run one search per (#P, #S) pair; returns {(P, S): curve records}.

    Each pair gets a seed derived from (master_seed, pair index) so reruns
    reproduce curves exactly.
    """
    pairs = [(int(p), int(s)) for p, s in grid]
    if not pairs:
        raise ValueError("empty sweep grid")
    curves: dict[tuple[int, int], list[dict]] = {}
    for idx, (pop_size, sample_size) in enumerate(pairs):
        cfg = replace(
            base_config,
            population_size=pop_size,
            sample_size=sample_size,
            master_seed=int(
                np.random.SeedSequence((base_config.master_seed, idx)).generate_state(1)[0]
            ),
        )
        history = run_search(cfg)
        curves[(pop_size, sample_size)] = [
            {
                "iteration": rec["iteration"],
                "mean_fitness": rec["mean_fitness"],
                "std_fitness": rec["std_fitness"],
                "best_fitness": rec["best_fitness"],
            }
            for rec in history.records
        ]
    return curves
