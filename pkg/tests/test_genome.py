import numpy as np
import pytest

from evoquant.genome import (
    CellGenome,
    Combination,
    ModelGenome,
    SpaceConfig,
    architecture_digest,
    cell_cardinality,
    enumerate_cells,
    enumerate_genomes,
    genome_digest,
    genome_from_json,
    genome_to_dict,
    genome_to_json,
    mutate_architecture,
    mutate_policy,
    policy_cardinality,
    random_genome,
    space_cardinality,
    validate,
)

SMALL = SpaceConfig(combinations=1, bit_choices=(4, 8), cell_count=2)
DEFAULT = SpaceConfig(combinations=3, bit_choices=(4, 8, 16), cell_count=5)


def genes_of(genome: ModelGenome):
    out = []
    for cell in (genome.normal, genome.reduction):
        for c in cell.combinations:
            out.extend([c.input_1, c.input_2, c.op_1, c.op_2])
    out.extend(genome.policy)
    return out


class TestRandomGenome:
    def test_deterministic_per_seed(self):
        a = random_genome(DEFAULT, np.random.default_rng(12))
        b = random_genome(DEFAULT, np.random.default_rng(12))
        assert a == b

    def test_always_valid(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            assert validate(random_genome(DEFAULT, rng), DEFAULT) == []

    def test_single_combination_cells_uniform(self):
        # 2*2 input pairs x 6*6 op pairs = 144 distinct single-combination cells
        rng = np.random.default_rng(99)
        counts: dict = {}
        trials = 10_000
        for _ in range(trials):
            g = random_genome(SMALL, rng)
            c = g.normal.combinations[0]
            key = (c.input_1, c.input_2, c.op_1, c.op_2)
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 144
        p = 1 / 144
        sigma = (trials * p * (1 - p)) ** 0.5
        for key, n in counts.items():
            assert abs(n - trials * p) <= 5 * sigma, (key, n)


class TestValidate:
    def test_forward_reference_flagged(self):
        bad = ModelGenome(
            CellGenome((Combination(0, -1, "zero", "zero"),)),
            CellGenome((Combination(-1, -1, "zero", "zero"),)),
            (4, 8),
        )
        problems = validate(bad, SMALL)
        assert any("forward reference" in p for p in problems)

    def test_policy_length_mismatch_flagged(self):
        g = random_genome(SMALL, np.random.default_rng(1))
        short = ModelGenome(g.normal, g.reduction, (4,))
        assert any("policy length mismatch" in p for p in validate(short, SMALL))

    def test_unknown_operation_flagged(self):
        bad = ModelGenome(
            CellGenome((Combination(-1, -1, "conv_7x7", "zero"),)),
            CellGenome((Combination(-1, -1, "zero", "zero"),)),
            (4, 8),
        )
        assert any("unknown operation" in p for p in validate(bad, SMALL))

    def test_valid_genome_clean(self):
        assert validate(random_genome(DEFAULT, np.random.default_rng(2)), DEFAULT) == []


class TestMutation:
    def test_architecture_changes_exactly_one_gene(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            parent = random_genome(DEFAULT, rng)
            child = mutate_architecture(parent, DEFAULT, rng)
            diffs = sum(a != b for a, b in zip(genes_of(parent), genes_of(child)))
            assert diffs == 1
            assert child.policy == parent.policy
            assert validate(child, DEFAULT) == []

    def test_position_zero_inputs_stay_external(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            parent = random_genome(SMALL, rng)
            child = mutate_architecture(parent, SMALL, rng)
            for cell in (child.normal, child.reduction):
                c = cell.combinations[0]
                assert c.input_1 in (-2, -1) and c.input_2 in (-2, -1)

    def test_policy_changes_exactly_one_entry(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            parent = random_genome(DEFAULT, rng)
            child = mutate_policy(parent, DEFAULT, rng)
            hamming = sum(a != b for a, b in zip(parent.policy, child.policy))
            assert hamming == 1
            assert child.normal == parent.normal and child.reduction == parent.reduction

    def test_policy_positions_uniform(self):
        rng = np.random.default_rng(6)
        parent = random_genome(DEFAULT, rng)
        trials = 1000
        counts = [0] * len(parent.policy)
        for _ in range(trials):
            child = mutate_policy(parent, DEFAULT, rng)
            pos = next(i for i, (a, b) in enumerate(zip(parent.policy, child.policy)) if a != b)
            counts[pos] += 1
        p = 1 / len(parent.policy)
        sigma = (trials * p * (1 - p)) ** 0.5
        for n in counts:
            assert abs(n - trials * p) <= 5 * sigma

    def test_mutants_never_equal_parent(self):
        rng = np.random.default_rng(7)
        parent = random_genome(DEFAULT, rng)
        for _ in range(1000):
            assert mutate_architecture(parent, DEFAULT, rng) != parent
            assert mutate_policy(parent, DEFAULT, rng) != parent

    def test_single_bit_choice_rejected(self):
        cfg = SpaceConfig(combinations=1, bit_choices=(8,), cell_count=2)
        g = random_genome(cfg, np.random.default_rng(8))
        with pytest.raises(ValueError, match="two bit choices"):
            mutate_policy(g, cfg, np.random.default_rng(9))


class TestCardinality:
    def test_single_combination_cell_count(self):
        assert cell_cardinality(SMALL) == 144
        assert len(list(enumerate_cells(SMALL))) == 144

    def test_policy_factor_twenty_cells(self):
        cfg = SpaceConfig(combinations=5, bit_choices=(4, 8, 16), cell_count=20)
        assert policy_cardinality(cfg) == 3_486_784_401
        assert policy_cardinality(cfg) == 3**20

    def test_two_cell_policy_factor(self):
        assert policy_cardinality(SpaceConfig(combinations=1, bit_choices=(4, 8), cell_count=2)) == 4

    def test_space_matches_exhaustive_enumeration(self):
        total = space_cardinality(SMALL)
        assert total == 144 * 144 * 4
        seen = set()
        for g in enumerate_genomes(SMALL):
            seen.add(genome_to_json(g))
        assert len(seen) == total

    def test_growth_per_position(self):
        # position j contributes (j+2)^2 * 36 alternatives
        for B in (1, 2, 3, 4):
            cfg = SpaceConfig(combinations=B, cell_count=2)
            expected = 1
            for j in range(B):
                expected *= (j + 2) ** 2 * 36
            assert cell_cardinality(cfg) == expected


class TestSerialization:
    def test_json_round_trip(self):
        g = random_genome(DEFAULT, np.random.default_rng(10))
        assert genome_from_json(genome_to_json(g)) == g

    def test_json_schema_field_names(self):
        g = random_genome(SMALL, np.random.default_rng(11))
        data = genome_to_dict(g)
        assert set(data) == {"normal", "reduction", "policy"}
        row = data["normal"][0]
        assert isinstance(row[0], int) and isinstance(row[2], str)

    def test_digest_distinguishes_policy(self):
        g = random_genome(DEFAULT, np.random.default_rng(12))
        h = mutate_policy(g, DEFAULT, np.random.default_rng(13))
        assert genome_digest(g) != genome_digest(h)
        assert architecture_digest(g) == architecture_digest(h)
