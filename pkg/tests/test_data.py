import numpy as np
import pytest
from scipy import stats

from acrab.data import OfflineDataset, empirical_mean, exact_mu, make_rng, sample_dataset
from acrab.errors import ValidationError
from acrab.mdp import RewardKind, TabularMdp, compute_occupancy, deterministic_policy, uniform_policy

from conftest import chain_mdp, random_mdp, random_policy


def two_arm(mu2):
    m = TabularMdp(np.ones((1, 2, 1)), [[0.6, 0.5]], 0.0, [1.0], np.array([["det", "bern"]]))
    return m, np.array([[1 - mu2, mu2]])


def test_degenerate_support():
    m = TabularMdp(np.ones((1, 1, 1)), [[0.7]], 0.3, [1.0], RewardKind.DETERMINISTIC)
    ds = sample_dataset(m, [[1.0]], 5, seed=1)
    assert ds.n == 5
    assert list(zip(ds.s, ds.a, ds.r, ds.s_next)) == [(0, 0, 0.7, 0)] * 5


def test_same_seed_same_data(rng):
    m = random_mdp(rng, 4, 3)
    pi = random_policy(rng, 4, 3)
    assert sample_dataset(m, pi, 300, seed=9) == sample_dataset(m, pi, 300, seed=9)
    assert sample_dataset(m, pi, 300, seed=9) != sample_dataset(m, pi, 300, seed=10)
    assert sample_dataset(m, pi, 300, seed=9, stream=1) != sample_dataset(m, pi, 300, seed=9, stream=2)


def test_zero_size_rejected(rng):
    with pytest.raises(ValidationError):
        sample_dataset(random_mdp(rng), uniform_policy(3, 2), 0, seed=0)


def test_arm_frequency_binomial_band():
    m, b = two_arm(0.1)
    inside = 0
    for seed in range(100):
        ds = sample_dataset(m, b, 100_000, seed)
        inside += 0.097 <= np.mean(ds.a == 1) <= 0.103
    assert inside >= 95


def test_rewards_respect_kind():
    m, b = two_arm(0.5)
    ds = sample_dataset(m, b, 2000, seed=3)
    assert np.all(ds.r[ds.a == 0] == 0.6)
    assert set(np.unique(ds.r[ds.a == 1])) <= {0.0, 1.0}


def test_exact_action_frequency():
    m, b = two_arm(0.1)
    ds = sample_dataset(m, b, 1000, seed=0, exact_action_freq=True)
    assert int(np.sum(ds.a == 1)) == 100


def test_empirical_mean_cases():
    ds = OfflineDataset(np.zeros(3, int), np.zeros(3, int), np.array([0.0, 1.0, 1.0]), np.zeros(3, int), 1, 1)
    assert empirical_mean(ds, lambda s, a, r, sn: 1.0) == 1.0
    assert empirical_mean(ds, lambda s, a, r, sn: 0.0) == 0.0
    assert empirical_mean(ds, lambda s, a, r, sn: r) == pytest.approx(2 / 3)
    empty = OfflineDataset(np.zeros(0, int), np.zeros(0, int), np.zeros(0), np.zeros(0, int), 1, 1)
    with pytest.raises(ValidationError):
        empirical_mean(empty, lambda s, a, r, sn: r)


def test_exact_mu_cases():
    m = TabularMdp(np.ones((1, 2, 1)), [[0.5, 0.5]], 0.0, [1.0])
    np.testing.assert_allclose(exact_mu(m, uniform_policy(1, 2)), [[0.5, 0.5]])
    mu = exact_mu(m, deterministic_policy([1], 2))
    assert mu[0, 0] == 0.0 and mu[0, 1] == pytest.approx(1.0)
    c = chain_mdp(0.5)
    assert np.array_equal(exact_mu(c, [[1.0], [1.0]]), compute_occupancy(c, [[1.0], [1.0]]))


def test_dataset_validation():
    with pytest.raises(ValidationError):
        OfflineDataset(np.array([0]), np.array([2]), np.array([0.5]), np.array([0]), 1, 2)
    with pytest.raises(ValidationError):
        OfflineDataset(np.array([0]), np.array([0]), np.array([1.5]), np.array([0]), 1, 2)


def test_csv_round_trip(tmp_path, rng):
    m = random_mdp(rng, 3, 2)
    ds = sample_dataset(m, uniform_policy(3, 2), 50, seed=4)
    path = tmp_path / "d.csv"
    ds.to_csv(path)
    assert path.read_text().splitlines()[0] == "s,a,r,s_next"
    back = OfflineDataset.from_csv(path, 3, 2, m.discount)
    assert back == ds


def test_sufficient_stats_match_tuples(rng):
    m = random_mdp(rng, 3, 2, discount=0.7)
    ds = sample_dataset(m, random_policy(rng, 3, 2), 400, seed=5)
    st = ds.stats
    counts = np.zeros((3, 2))
    nxt = np.zeros((3, 2, 3))
    rsq = np.zeros((3, 2))
    for s, a, r, sn in zip(ds.s, ds.a, ds.r, ds.s_next):
        counts[s, a] += 1
        nxt[s, a, sn] += 1
        rsq[s, a] += r * r
    assert np.array_equal(st.counts, counts)
    assert np.array_equal(st.next_counts, nxt)
    np.testing.assert_allclose(st.reward_sq_sum, rsq, atol=1e-12)


def test_lln_rate():
    """Spread of an empirical mean over 50 seeds shrinks like N^-1/2."""
    m = TabularMdp(np.full((2, 2, 2), 0.5), [[0.2, 0.7], [0.5, 0.9]], 0.5, [0.5, 0.5], RewardKind.BERNOULLI)
    b = uniform_policy(2, 2)
    g = lambda s, a, r, sn: r + 0.5 * sn
    sds = []
    grid = [100, 1000, 10000]
    for n in grid:
        sds.append(np.std([empirical_mean(sample_dataset(m, b, n, seed), g) for seed in range(50)], ddof=1))
    slope = stats.linregress(np.log(grid), np.log(sds)).slope
    assert -0.65 <= slope <= -0.35


def test_histogram_chi_square():
    rng = make_rng(77)
    m = random_mdp(rng, 3, 3, discount=0.8)
    b = random_policy(rng, 3, 3, floor=0.3)
    mu = exact_mu(m, b).ravel()
    passed = 0
    for seed in range(10):
        ds = sample_dataset(m, b, 100_000, seed)
        obs = np.bincount(ds.s * 3 + ds.a, minlength=9)
        passed += stats.chisquare(obs, mu / mu.sum() * ds.n).pvalue > 1e-3
    assert passed >= 9
