"""Sampling: subset uniformity, the batch-mean variance law, reproducibility."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdlab.objective import make_objective
from sgdlab.sampling import (
    WITH_REPLACEMENT,
    WITHOUT_REPLACEMENT,
    MinibatchSpec,
    draw,
    make_rng,
    minibatch_gradient,
    spawn_rngs,
    variance_factor,
)


class TestDraw:
    def test_full_batch_is_a_permutation(self):
        spec = MinibatchSpec(batch_size=7, mode=WITHOUT_REPLACEMENT)
        batch = draw(spec, 7, make_rng(3))
        assert sorted(batch) == list(range(7))

    def test_single_item_population_with_replacement(self):
        spec = MinibatchSpec(batch_size=5, mode=WITH_REPLACEMENT)
        assert list(draw(spec, 1, make_rng(0))) == [0, 0, 0, 0, 0]

    def test_batch_larger_than_population_rejected(self):
        spec = MinibatchSpec(batch_size=4, mode=WITHOUT_REPLACEMENT)
        with pytest.raises(ValueError):
            draw(spec, 3, make_rng(0))

    def test_subsets_uniform(self):
        # all 3 two-element subsets of {0,1,2} occur with frequency 1/3 +- 0.01
        spec = MinibatchSpec(batch_size=2, mode=WITHOUT_REPLACEMENT)
        rng = make_rng(42)
        counts = {frozenset(s): 0 for s in itertools.combinations(range(3), 2)}
        trials = 60_000
        for _ in range(trials):
            counts[frozenset(draw(spec, 3, rng).tolist())] += 1
        for subset, count in counts.items():
            assert abs(count / trials - 1 / 3) < 0.01, (subset, count)

    def test_draws_are_reproducible(self):
        spec = MinibatchSpec(batch_size=3, mode=WITHOUT_REPLACEMENT)
        a = [draw(spec, 10, make_rng(5)).tolist() for _ in range(4)]
        b = [draw(spec, 10, make_rng(5)).tolist() for _ in range(4)]
        assert a == b

    @given(st.integers(2, 9), st.data())
    @settings(max_examples=60, deadline=None)
    def test_without_replacement_gives_distinct_indices(self, population, data):
        batch = data.draw(st.integers(1, population))
        spec = MinibatchSpec(batch_size=batch, mode=WITHOUT_REPLACEMENT)
        drawn = draw(spec, population, make_rng(data.draw(st.integers(0, 999))))
        assert len(set(drawn.tolist())) == batch
        assert all(0 <= i < population for i in drawn)


class TestVarianceFactor:
    def test_m3_b2_quarter(self):
        assert variance_factor(3, 2, WITHOUT_REPLACEMENT) == pytest.approx(0.25, abs=1e-15)

    def test_m3_b2_population_value(self):
        # population {1,2,3}: Var = 2/3; subset means {1.5, 2, 2.5} have
        # variance 1/6 = (1/4) * (2/3)
        factor = variance_factor(3, 2, WITHOUT_REPLACEMENT)
        assert factor * (2 / 3) == pytest.approx(1 / 6, abs=1e-15)
        means = [np.mean(s) for s in itertools.combinations([1.0, 2.0, 3.0], 2)]
        assert np.var(means) == pytest.approx(1 / 6, abs=1e-12)

    def test_full_batch_has_zero_variance(self):
        assert variance_factor(6, 6, WITHOUT_REPLACEMENT) == 0.0

    def test_with_replacement_is_one_over_b(self):
        assert variance_factor(17, 4, WITH_REPLACEMENT) == pytest.approx(0.25, abs=1e-15)

    def test_small_population_rejected(self):
        with pytest.raises(ValueError):
            variance_factor(1, 1, WITHOUT_REPLACEMENT)

    @pytest.mark.parametrize("population", range(2, 9))
    def test_law_matches_enumeration(self, population):
        rng = make_rng((population, 17))
        values = rng.standard_normal(population) * 2.5
        pop_var = float(np.mean(values**2) - np.mean(values) ** 2)
        for batch in range(1, population + 1):
            means = [
                float(np.mean([values[i] for i in subset]))
                for subset in itertools.combinations(range(population), batch)
            ]
            brute = float(np.mean(np.square(means)) - np.mean(means) ** 2)
            law = variance_factor(population, batch, WITHOUT_REPLACEMENT) * pop_var
            assert abs(law - brute) <= 1e-12

    @given(st.integers(2, 8), st.data())
    @settings(max_examples=40, deadline=None)
    def test_without_never_exceeds_with(self, population, data):
        batch = data.draw(st.integers(1, population))
        without = variance_factor(population, batch, WITHOUT_REPLACEMENT)
        with_r = variance_factor(population, batch, WITH_REPLACEMENT)
        assert without <= with_r == 1 / batch


class TestMinibatchGradient:
    def test_full_batch_equals_full_gradient_bitwise(self):
        obj = make_objective(n_samples=9, dim=5, seed=8)
        x = make_rng(1).standard_normal(5)
        spec = MinibatchSpec(batch_size=9, mode=WITHOUT_REPLACEMENT)
        grad = minibatch_gradient(obj, x, spec, make_rng(2))
        assert np.array_equal(grad, obj.full_gradient(x))

    def test_single_sample_batch_matches_sample_gradient(self):
        obj = make_objective(n_samples=6, dim=4, seed=9)
        x = make_rng(3).standard_normal(4)
        spec = MinibatchSpec(batch_size=1, mode=WITHOUT_REPLACEMENT)
        rng_draw = make_rng(4)
        index = int(draw(spec, 6, rng_draw)[0])
        grad = minibatch_gradient(obj, x, spec, make_rng(4))
        assert np.array_equal(grad, obj.sample_gradient(x, index))

    def test_monte_carlo_unbiased(self):
        # mean over many draws lands within 4 standard errors of the gradient
        obj = make_objective(n_samples=10, dim=4, seed=12, noise_scale=0.5)
        x = make_rng(6).standard_normal(4)
        target = obj.full_gradient(x)
        spec = MinibatchSpec(batch_size=3, mode=WITHOUT_REPLACEMENT)
        rng = make_rng(13)
        trials = 20_000
        samples = np.stack([minibatch_gradient(obj, x, spec, rng) for _ in range(trials)])
        columns = [np.ascontiguousarray(samples[:, j]) for j in range(4)]
        mean = np.array([c.mean() for c in columns])
        se = np.array([c.std(ddof=1) for c in columns]) / np.sqrt(trials)
        assert np.all(np.abs(mean - target) <= 4 * se + 1e-13)


def test_spawned_streams_are_independent_and_stable():
    first = spawn_rngs(99, 3)
    second = spawn_rngs(99, 3)
    draws_first = [r.integers(0, 1000, size=5).tolist() for r in first]
    draws_second = [r.integers(0, 1000, size=5).tolist() for r in second]
    assert draws_first == draws_second
    assert draws_first[0] != draws_first[1] != draws_first[2]


def test_spec_round_trip():
    spec = MinibatchSpec(batch_size=4, mode=WITH_REPLACEMENT, seed=11)
    assert MinibatchSpec.from_config(spec.to_config()) == spec
