import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoquant.objective import fitness, pareto_front

MB = 10**6


def pareto_bruteforce(points):
    """O(n^2) dominance filter; the production sweep must match this."""
    pts = [(float(a), int(s)) for a, s in points]
    seen = set()
    out = []
    for i, (a, s) in enumerate(pts):
        if (a, s) in seen:
            continue
        seen.add((a, s))
        dominated = any(
            (a2 >= a and s2 <= s) and (a2 > a or s2 < s) for a2, s2 in pts
        )
        if not dominated:
            out.append((a, s))
    return sorted(out, key=lambda p: p[1])


class TestFitness:
    def test_under_target_is_accuracy(self):
        assert fitness(0.9, 2 * MB, 4 * MB).fitness == pytest.approx(0.9, abs=1e-12)

    def test_over_target_scales_by_ratio(self):
        assert fitness(0.9, 8 * MB, 4 * MB).fitness == pytest.approx(0.45, abs=1e-12)

    def test_boundary_exact(self):
        assert fitness(0.9, 4 * MB, 4 * MB).fitness == pytest.approx(0.9, abs=1e-12)
        just_over = fitness(0.9, 4 * MB + 1, 4 * MB).fitness
        assert just_over == pytest.approx(0.9, abs=1e-6)
        assert just_over < 0.9

    def test_continuity_at_target(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            acc = float(rng.uniform(0, 1))
            target = int(rng.integers(1, 10**8))
            under = fitness(acc, target, target).fitness
            over_branch = acc * (target / target)
            assert abs(under - over_branch) <= 1e-9

    def test_never_exceeds_accuracy(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            acc = float(rng.uniform(0, 1))
            size = int(rng.integers(1, 10**7))
            target = int(rng.integers(1, 10**7))
            rec = fitness(acc, size, target)
            assert rec.fitness <= acc + 1e-15
            assert (rec.fitness == acc) == (size <= target)

    @settings(max_examples=200, deadline=None)
    @given(
        acc=st.floats(min_value=0, max_value=1),
        s1=st.integers(min_value=1, max_value=10**9),
        s2=st.integers(min_value=1, max_value=10**9),
        target=st.integers(min_value=1, max_value=10**9),
    )
    def test_monotone_in_size(self, acc, s1, s2, target):
        if s1 > s2:
            s1, s2 = s2, s1
        assert fitness(acc, s1, target).fitness >= fitness(acc, s2, target).fitness

    @settings(max_examples=200, deadline=None)
    @given(
        a1=st.floats(min_value=0, max_value=1),
        a2=st.floats(min_value=0, max_value=1),
        size=st.integers(min_value=1, max_value=10**9),
        target=st.integers(min_value=1, max_value=10**9),
    )
    def test_monotone_in_accuracy(self, a1, a2, size, target):
        if a1 > a2:
            a1, a2 = a2, a1
        assert fitness(a1, size, target).fitness <= fitness(a2, size, target).fitness

    def test_input_validation(self):
        with pytest.raises(ValueError, match="accuracy"):
            fitness(1.5, 1, 1)
        with pytest.raises(ValueError, match="positive"):
            fitness(0.5, 0, 1)
        with pytest.raises(ValueError, match="positive"):
            fitness(0.5, 1, 0)


class TestParetoFront:
    def test_three_point_example(self):
        front = pareto_front([(0.9, 10), (0.8, 5), (0.7, 20)])
        assert front == [(0.8, 5), (0.9, 10)]

    def test_single_point(self):
        assert pareto_front([(0.5, 7)]) == [(0.5, 7)]

    def test_duplicates_collapse(self):
        assert pareto_front([(0.5, 7), (0.5, 7), (0.5, 7)]) == [(0.5, 7)]

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            pareto_front([])

    def test_matches_bruteforce_on_random_sets(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(1, 400))
            pts = list(
                zip(
                    rng.uniform(0, 1, n).round(3).tolist(),
                    rng.integers(1, 50, n).tolist(),
                )
            )
            assert pareto_front(pts) == pareto_bruteforce(pts)

    @settings(max_examples=150, deadline=None)
    @given(
        pts=st.lists(
            st.tuples(
                st.floats(min_value=0, max_value=1, allow_nan=False),
                st.integers(min_value=1, max_value=100),
            ),
            min_size=1,
            max_size=60,
        )
    )
    def test_matches_bruteforce_property(self, pts):
        assert pareto_front(pts) == pareto_bruteforce(pts)

    def test_order_by_size_ascending(self):
        rng = np.random.default_rng(4)
        pts = list(zip(rng.uniform(0, 1, 100), rng.integers(1, 1000, 100)))
        front = pareto_front(pts)
        sizes = [s for _, s in front]
        assert sizes == sorted(sizes)
        accs = [a for a, _ in front]
        assert accs == sorted(accs)
