import pytest

from evoquant.datasets import make_blobs
from evoquant.evaluator import TrainHyper, train
from evoquant.genome import CellGenome, Combination, ModelGenome
from evoquant.network import StackingProfile, assemble


def tiny_genome(policy=(8, 8, 8, 8, 8)) -> ModelGenome:
    """Fixed small genome: one conv-ish combination plus pass-throughs."""
    normal = CellGenome(
        (
            Combination(-2, -1, "sep_conv_3", "identity"),
            Combination(-1, 0, "avg_pool_3", "sep_conv_3"),
        )
    )
    reduction = CellGenome(
        (
            Combination(-1, -2, "sep_conv_3", "max_pool_3"),
            Combination(0, -1, "identity", "sep_conv_3"),
        )
    )
    return ModelGenome(normal, reduction, tuple(policy))


@pytest.fixture(scope="session")
def blobs_small():
    return make_blobs(classes=4, dims=12, samples=800, cluster_spread=0.3, seed=17)


@pytest.fixture(scope="session")
def small_profile():
    return StackingProfile(n=1, f_init=10)


@pytest.fixture(scope="session")
def trained_small(blobs_small, small_profile):
    """One trained model shared by read-only tests (training is the slow part)."""
    genome = tiny_genome()
    plan = assemble(genome, small_profile)
    hyper = TrainHyper(epochs=20, batch_size=64, learning_rate=0.05, seed=23)
    model = train(plan, blobs_small, hyper, genome=genome)
    return genome, plan, model
