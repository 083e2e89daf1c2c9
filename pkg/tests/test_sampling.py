import numpy as np
import pytest
from scipy import stats

from lstdq_lab.instances import random_mdp, random_mu_d
from lstdq_lab.mdp import Policy, StateActionDist, TabularMDP
from lstdq_lab.sampling import CHUNK, Dataset, Transition, sample_dataset, substream_seed


def _same(d1, d2):
    return all(np.array_equal(getattr(d1, c), getattr(d2, c))
               for c in ("s", "a", "r", "s_next", "a_next"))


def test_deterministic(small_mdp, small_policy, small_mu_d):
    d1 = sample_dataset(small_mdp, small_policy, small_mu_d, 1000, 42)
    d2 = sample_dataset(small_mdp, small_policy, small_mu_d, 1000, 42)
    d3 = sample_dataset(small_mdp, small_policy, small_mu_d, 1000, 43)
    assert _same(d1, d2)
    assert not _same(d1, d3)


def test_prefix_stable_across_chunks(small_mdp, small_policy, small_mu_d):
    # Chunk-keyed streams: a longer dataset extends a shorter one.
    short = sample_dataset(small_mdp, small_policy, small_mu_d, CHUNK, 9)
    long = sample_dataset(small_mdp, small_policy, small_mu_d, CHUNK + 500, 9)
    assert np.array_equal(long.s[:CHUNK], short.s)
    assert np.array_equal(long.r[:CHUNK], short.r)


def test_substream_seeds_distinct():
    names = ["dataset", "instance:mdp", "sweep:500:0", "sweep:500:1", "sweep:2000:0"]
    seeds = {substream_seed(0, n) for n in names}
    assert len(seeds) == len(names)
    assert substream_seed(0, "dataset") == substream_seed(0, "dataset")
    assert substream_seed(0, "dataset") != substream_seed(1, "dataset")
    assert 0 <= substream_seed(123, "x") < 2**64


def test_pair_frequencies_match_mu_d(small_mdp, small_policy, small_mu_d):
    n = 40_000
    data = sample_dataset(small_mdp, small_policy, small_mu_d, n, 1)
    counts = np.bincount(data.s * 2 + data.a, minlength=8)
    res = stats.chisquare(counts, n * small_mu_d.probs)
    assert res.pvalue > 1e-4


def test_transition_frequencies(small_mdp, small_policy, small_mu_d):
    n = 40_000
    data = sample_dataset(small_mdp, small_policy, small_mu_d, n, 2)
    s, a = 1, 0
    sel = (data.s == s) & (data.a == a)
    counts = np.bincount(data.s_next[sel], minlength=4)
    res = stats.chisquare(counts, sel.sum() * small_mdp.transition[s, a])
    assert res.pvalue > 1e-4
    t = 3
    sel = data.s_next == t
    counts = np.bincount(data.a_next[sel], minlength=2)
    res = stats.chisquare(counts, sel.sum() * small_policy.action_probs[t])
    assert res.pvalue > 1e-4


def test_reward_noise_uniform_and_bounded():
    P = np.full((1, 1, 1), 1.0)
    mdp = TabularMDP(P, [[0.5]], 0.5, [1.0], 1.0, 0.25)
    data = sample_dataset(mdp, Policy.uniform(1, 1), StateActionDist([1.0]), 20_000, 3)
    assert data.r.min() >= 0.25 and data.r.max() <= 0.75
    assert stats.kstest((data.r - 0.25) / 0.5, "uniform").pvalue > 1e-4
    assert data.r.mean() == pytest.approx(0.5, abs=3 * 0.5 / np.sqrt(12 * 20_000))


def test_zero_mass_never_sampled(small_mdp, small_policy):
    p = np.zeros(8)
    p[[0, 5]] = [0.3, 0.7]
    data = sample_dataset(small_mdp, small_policy, StateActionDist(p), 10_000, 5)
    assert set(np.unique(data.s * 2 + data.a)) == {0, 5}


def test_trailing_zero_mass_unreachable():
    # Probabilities summing to a hair under 1 must not leak onto the last category.
    mdp = random_mdp(2, 2, 0.5, seed=0)
    p = np.array([0.1, 0.2, 0.7 - 1e-13, 0.0])
    data = sample_dataset(mdp, Policy.uniform(2, 2), StateActionDist(p), 50_000, 0)
    assert not np.any(data.s * 2 + data.a == 3)


def test_no_reward_noise_gives_mean_reward(small_policy, small_mu_d):
    mdp = random_mdp(4, 2, 0.5, seed=8)
    data = sample_dataset(mdp, small_policy, small_mu_d, 500, 0)
    np.testing.assert_array_equal(data.r, mdp.mean_reward[data.s, data.a])


def test_dataset_access(small_mdp, small_policy, small_mu_d):
    data = sample_dataset(small_mdp, small_policy, small_mu_d, 10, 0)
    t = data[3]
    assert isinstance(t, Transition)
    assert t == Transition(int(data.s[3]), int(data.a[3]), float(data.r[3]),
                           int(data.s_next[3]), int(data.a_next[3]))
    assert len(list(data)) == len(data) == 10
    data.validate_for(small_mdp)
    with pytest.raises(ValueError):
        data.validate_for(random_mdp(2, 2, 0.5, 0))


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset([0], [0], [0.1], [0, 1], [0], seed=0, mu_d=StateActionDist([1.0]))
    with pytest.raises(ValueError):
        Dataset([-1], [0], [0.1], [0], [0], seed=0, mu_d=StateActionDist([1.0]))


def test_bad_arguments(small_mdp, small_policy, small_mu_d):
    with pytest.raises(ValueError):
        sample_dataset(small_mdp, small_policy, small_mu_d, 0, 0)
    with pytest.raises(ValueError):
        sample_dataset(small_mdp, small_policy, random_mu_d(6, 0), 10, 0)
