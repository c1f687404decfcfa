import math

import numpy as np
import pytest

from blaze_mr.apps import count_hits, monte_carlo_pi, pi_parallel_loop


class Origin:
    """Random stream that always lands on (0, 0)."""

    def random(self, shape):
        return np.zeros(shape)


def origin_rng(seed, rank, thread):
    return Origin()


@pytest.mark.parametrize("batched", [True, False])
def test_every_sample_hits(cluster, batched):
    def run(ctx):
        return count_hits(ctx, 1000, rng_factory=origin_rng, chunk=64, batched=batched)[0]

    assert cluster(2, run) == [1000, 1000]


def test_estimate_from_certain_hits(ctx):
    assert monte_carlo_pi(ctx, 500, rng_factory=origin_rng) == 4.0


def test_estimates_stay_within_three_sigma(cluster):
    # 0.005 is about 3 binomial standard deviations at 10^6 samples
    def sweep(ctx):
        return [monte_carlo_pi(ctx, 10**6, seed) for seed in range(50)]

    first, second = cluster(2, sweep)
    assert first == second
    assert sum(abs(estimate - math.pi) < 0.005 for estimate in first) >= 48


def test_same_seed_same_hits(cluster):
    first = cluster(3, lambda ctx: count_hits(ctx, 200_000, seed=5)[0])
    second = cluster(3, lambda ctx: count_hits(ctx, 200_000, seed=5)[0])
    assert first == second


def test_matches_thread_loop(cluster):
    def run(ctx):
        hits, counters = count_hits(ctx, 300_000, seed=2, chunk=4096)
        return hits, pi_parallel_loop(ctx, 300_000, seed=2, chunk=4096), counters.path

    for hits, looped, path in cluster(2, run):
        assert hits == looped
        assert path == "dense"


@pytest.mark.parametrize("n", [0, -5])
def test_needs_samples(ctx, n):
    with pytest.raises(ValueError):
        count_hits(ctx, n)
    with pytest.raises(ValueError):
        pi_parallel_loop(ctx, n)
