import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehlink import montecarlo as mc
from ehlink.fsmc import arrival_pmf
from ehlink.model import UNBOUNDED, ConfigError, EnergyProfile, LinkConfig
from ehlink.policies import PolicySpec, ReceiverMode

RICH = EnergyProfile(2000.0, 2000.0, 1.0, 1.0, 2000.0, 2000.0, 0.0)
HALF_OUTAGE_PS = 100 + 600 / math.log(2)  # channel outage exactly 0.5


def test_same_seed_same_run():
    kw = dict(n_slots=30_000, seed=9, burn_in=1000)
    a = mc.simulate(LinkConfig(), EnergyProfile(rho=0.4), PolicySpec.linear(700, 100), **kw)
    b = mc.simulate(LinkConfig(), EnergyProfile(rho=0.4), PolicySpec.linear(700, 100), **kw)
    assert np.array_equal(a.batches, b.batches)
    assert a.p_out_hat == b.p_out_hat and a.energy == b.energy
    c = mc.simulate(LinkConfig(), EnergyProfile(rho=0.4), PolicySpec.linear(700, 100), n_slots=30_000, seed=10)
    assert not np.array_equal(a.batches, c.batches)


@pytest.mark.parametrize("config,policy", [
    (LinkConfig(), PolicySpec.disjoint(800)),
    (LinkConfig(), PolicySpec.joint(900)),
    (LinkConfig(xi=0.5, eta=0.5), PolicySpec.disjoint(800, ReceiverMode.DETECTION_PROCESSING)),
    (LinkConfig(b_init=400), PolicySpec.disjoint(800, ReceiverMode.CSI_AWARE)),
])
def test_energy_conservation(config, policy):
    r = mc.simulate(config, EnergyProfile(rho=0.2), policy, 50_000, seed=1)
    e = r.energy
    for side in ("s", "d"):
        lhs = e[f"harvested_{side}"] - e[f"spent_{side}"] - e[f"overflow_{side}"]
        assert lhs == pytest.approx(e[f"final_{side}"] - e["initial"], abs=1e-6)
        assert 0 <= e[f"final_{side}"] <= e["b_max"]


def test_sample_arrival_pair_edge_cases():
    rng = np.random.default_rng(0)
    always = arrival_pmf(1.0, 1.0, 0)
    assert all(mc.sample_arrival_pair(always, rng, 1000, 900) == (1000, 900) for _ in range(20))
    never = arrival_pmf(0.0, 0.0, 0)
    assert all(mc.sample_arrival_pair(never, rng, 1000, 900) == (0, 0) for _ in range(20))
    locked = arrival_pmf(0.5, 0.5, 1)
    pairs = {mc.sample_arrival_pair(locked, rng, 1000, 1000) for _ in range(200)}
    assert pairs == {(0.0, 0.0), (1000, 1000)}


def test_sample_arrival_pair_frequencies():
    rng = np.random.default_rng(5)
    pmf = arrival_pmf(0.5, 0.5, 0.5)
    n = 20_000
    draws = [mc.sample_arrival_pair(pmf, rng, 1, 1) for _ in range(n)]
    both = sum(1 for d in draws if d == (1, 1)) / n
    assert abs(both - 0.375) < 4 * math.sqrt(0.375 * 0.625 / n)


@pytest.mark.parametrize("rho", [-0.5, 0.0, 0.5, 0.9])
def test_vectorized_arrivals_correlation(rho):
    gen = mc.BernoulliArrivals(EnergyProfile(rho=rho))
    e_s, e_d = gen.sample(np.random.default_rng(7), 10**6)
    s, d = e_s > 0, e_d > 0
    assert s.mean() == pytest.approx(0.5, abs=0.003)
    assert d.mean() == pytest.approx(0.5, abs=0.003)
    assert np.corrcoef(s, d)[0, 1] == pytest.approx(rho, abs=0.01)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(-1, 1))
def test_vectorized_arrivals_marginals(mu_s, mu_d, rho):
    try:
        profile = EnergyProfile.bernoulli(mu_s * 1000, mu_d * 1000, 1000, 1000, rho)
        gen = mc.BernoulliArrivals(profile)
    except ConfigError:
        return  # correlation infeasible for these marginals
    n = 50_000
    e_s, e_d = gen.sample(np.random.default_rng(1), n)
    assert set(np.unique(e_s)) <= {0.0, 1000.0}
    assert abs((e_s > 0).mean() - mu_s) < 5 * math.sqrt(mu_s * (1 - mu_s) / n)
    assert abs((e_d > 0).mean() - mu_d) < 5 * math.sqrt(mu_d * (1 - mu_d) / n)


def test_energy_rich_outage_is_p_to_the_k():
    r = mc.simulate(LinkConfig(b_max=UNBOUNDED), RICH, PolicySpec.disjoint(HALF_OUTAGE_PS), 10**6, seed=3)
    assert abs(r.p_out_hat - 0.0625) < 3 * r.stderr["p_out"]
    expect_tau = sum(k * 0.5 ** k for k in range(1, 5)) / (1 - 0.0625)
    assert abs(r.tau_hat - expect_tau) < 3 * r.stderr["tau"]
    assert r.psi_s_hat == 1.0 and r.psi_d_hat == 1.0


def test_perfect_channel_never_fails():
    r = mc.simulate(LinkConfig(b_max=UNBOUNDED, noise=1e-200), RICH, PolicySpec.disjoint(800), 20_000, seed=1)
    assert r.p_out_hat == 0.0
    assert r.tau_hat == 1.0


def test_ci_and_counts():
    r = mc.simulate(LinkConfig(), EnergyProfile(), PolicySpec.disjoint(800), 100_000, seed=2)
    assert r.n_slots == 100_000
    assert r.batches.shape == (mc.N_BATCHES, 7)
    assert r.ci_halfwidth_95["p_out"] == pytest.approx(1.959964 * r.stderr["p_out"], rel=1e-6)
    assert 0 < r.stderr["p_out"] < 0.02
    assert 0 <= r.p_out_hat <= 1 and r.tau_hat >= 1


def test_replicas_and_aggregate():
    rs = mc.simulate_replicas(LinkConfig(), EnergyProfile(), PolicySpec.disjoint(800), 20_000, seed=5, replicas=3)
    assert [r.seed for r in rs] == [5, 6, 7]
    assert np.array_equal(rs[1].batches, mc.simulate(LinkConfig(), EnergyProfile(), PolicySpec.disjoint(800),
                                                     20_000, seed=6).batches)
    agg = mc.aggregate(rs)
    assert agg.n_slots == 60_000
    assert agg.batches.shape[0] == 3 * mc.N_BATCHES
    num = sum(r.batches[:, 1].sum() for r in rs)
    den = sum(r.batches[:, :2].sum() for r in rs)
    assert agg.p_out_hat == pytest.approx(num / den)


def test_parallel_replicas_match_serial():
    args = (LinkConfig(), EnergyProfile(), PolicySpec.joint(900), 10_000, 1, 2)
    a = mc.simulate_replicas(*args)
    b = mc.simulate_replicas(*args, workers=2)
    assert all(np.array_equal(x.batches, y.batches) for x, y in zip(a, b))


def test_estimate_psi_matches_closed_form():
    psi_s, psi_d, psi_joint = mc.estimate_psi(LinkConfig(b_max=UNBOUNDED), EnergyProfile(),
                                              PolicySpec.disjoint(1000), 200_000, seed=8)
    assert psi_s == pytest.approx(0.5, abs=0.01)
    assert psi_d == pytest.approx(500 / 700, abs=0.01)


def test_custom_arrival_process():
    class Constant:
        def sample(self, rng, n):
            return np.full(n, 1000.0), np.full(n, 1000.0)

    r = mc.simulate(LinkConfig(), EnergyProfile(), PolicySpec.disjoint(800), 10_000, seed=1, arrivals=Constant())
    assert r.psi_s_hat == 1.0 and r.psi_d_hat == 1.0


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        mc.simulate(LinkConfig(), EnergyProfile(), PolicySpec.disjoint(800), 0)
    with pytest.raises(ValueError):
        mc.simulate(LinkConfig(), EnergyProfile(), PolicySpec.disjoint(800), 100, backend="nope")
