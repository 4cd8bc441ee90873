import threading

import numpy as np
import pytest

from barycenter import (
    CORPUS_NAMES,
    InvalidValue,
    NoisyOracle,
    NotFound,
    Oracle,
    PartialSumOracle,
    corpus,
    evaluate_noisy,
    evaluate_partial,
    make_oracle,
)


class TestCorpus:
    def test_sphere_at_center(self):
        assert make_oracle("sphere", center=[1.0, -2.0, 0.5])([1.0, -2.0, 0.5]) == 0.0

    def test_rosenbrock_minimum(self):
        assert make_oracle("rosenbrock")([1.0, 1.0]) == 0.0

    def test_asymmetric(self):
        np.testing.assert_allclose(make_oracle("asymmetric")([-0.1]), 0.0097, rtol=1e-13)

    def test_quadratic_default(self):
        f = make_oracle("quadratic")
        assert f([1.0, 1.0]) == pytest.approx(2.5)

    def test_non_smooth_have_smooth_parts(self):
        for name in ("abs", "step_quadratic"):
            o = make_oracle(name)
            assert o.kind == "non-smooth"
            x = np.array([0.3, -0.4])
            assert abs(o.func(x) - o.smooth_part(x)) < 0.11

    def test_linear(self):
        o = make_oracle("linear", offset=0.5, gradient=[1.0, 2.0])
        assert o([2.0, 3.0]) == pytest.approx(8.5)
        assert o.kind == "linear-box"

    def test_vectorized(self):
        for name, o in corpus(2).items():
            x = np.random.default_rng(0).uniform(0.1, 1.0, (5, o.dimension))
            batch = o.func(x)
            assert batch.shape == (5,), name
            np.testing.assert_allclose(batch, [o.func(row) for row in x], rtol=1e-15)

    def test_all_names_present(self):
        assert set(corpus()) == set(CORPUS_NAMES)

    def test_unknown(self):
        with pytest.raises(NotFound):
            make_oracle("rastrigin")

    def test_unknown_param(self):
        with pytest.raises(InvalidValue):
            make_oracle("sphere", hessian=[[1.0]])

    def test_dimension_checked(self):
        with pytest.raises(InvalidValue):
            make_oracle("rosenbrock")([1.0, 2.0, 3.0])

    def test_non_finite_output(self):
        o = Oracle("bad", lambda x: np.inf * x[0], 1)
        with pytest.raises(InvalidValue):
            o([0.5])


class TestCounting:
    def test_counts_and_reset(self):
        o = make_oracle("sphere")
        for _ in range(7):
            o([0.0, 0.0])
        assert o.query_count == 7
        o.reset()
        assert o.query_count == 0

    def test_thread_safe(self):
        o = make_oracle("sphere")

        def work():
            for _ in range(500):
                o([0.1, 0.2])

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert o.query_count == 4000


class TestNoisy:
    def test_zero_sigma(self):
        base = make_oracle("sphere", center=[1.0, 1.0])
        noisy = NoisyOracle(base, 0.0, seed=3)
        assert evaluate_noisy(noisy, [0.2, 0.4]) == base([0.2, 0.4])

    def test_moments(self):
        base = make_oracle("sphere", center=[1.0, 1.0])
        noisy = NoisyOracle(base, 0.1, seed=4)
        x = [0.3, 0.6]
        draws = np.array([evaluate_noisy(noisy, x) for _ in range(100_000)])
        assert abs(draws.mean() - base(x)) <= 0.001
        assert abs(draws.var(ddof=1) / 0.01 - 1.0) <= 0.05
        assert noisy.query_count == 100_000

    def test_reproducible(self):
        base = make_oracle("sphere")
        n1, n2 = NoisyOracle(base, 0.5, seed=9), NoisyOracle(base, 0.5, seed=9)
        assert [n1([0.0, 0.0]) for _ in range(10)] == [n2([0.0, 0.0]) for _ in range(10)]
        assert NoisyOracle(base, 0.5, seed=10)([0.0, 0.0]) != NoisyOracle(base, 0.5, seed=9)([0.0, 0.0])


class TestPartial:
    def test_single_component(self):
        o = PartialSumOracle([lambda x: float(x @ x)])
        for x in ([1.0], [2.0], [-3.0]):
            assert evaluate_partial(o, x) == (x[0] ** 2, 0)

    def test_cycle_sums_to_full(self):
        o = PartialSumOracle([lambda x: x[0] ** 2, lambda x: 1.0])
        x = [1.7]
        (v1, j1), (v2, j2) = evaluate_partial(o, x), evaluate_partial(o, x)
        assert {j1, j2} == {0, 1}
        assert v1 + v2 == pytest.approx(1.7**2 + 1.0)

    def test_round_robin_usage(self):
        o = PartialSumOracle([lambda x, k=k: k * x[0] for k in range(5)])
        for _ in range(100):
            o([1.0])
        assert o.usage == [20] * 5
        assert o.last_component == 4

    def test_custom_schedule(self):
        o = PartialSumOracle([lambda x: 0.0, lambda x: 1.0], schedule=lambda i: 1)
        assert [o.evaluate_partial([0.0])[1] for _ in range(3)] == [1, 1, 1]
