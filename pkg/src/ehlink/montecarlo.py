"""Seeded slot-by-slot simulation of the link.

Random inputs (harvest pairs and channel gains) are drawn in chunks with
numpy and fed to the slot kernel, so a given seed yields the same run on
either kernel backend.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fsmc import ArrivalPmf, arrival_pmf
from .kernel import BACKEND, get_run_chunk
from .model import ConfigError, EnergyProfile, LinkConfig, tx_power_from_budget
from .policies import PolicySpec, SourceKind, receiver_costs

log = logging.getLogger(__name__)

BURN_IN = 10_000
N_BATCHES = 20
UNBOUNDED_CAP_FACTOR = 1e4
CHUNK = 1 << 18
Z95 = 1.959963984540054


def sample_arrival_pair(pmf: ArrivalPmf, rng, e_s_max, e_d_max):
    """One harvest pair (E_S, E_D) from the four-outcome joint pmf."""
    outcome = rng.choice(4, p=pmf.as_array())
    return (e_s_max if outcome >= 2 else 0.0, e_d_max if outcome % 2 else 0.0)


class BernoulliArrivals:
    """Correlated Bernoulli harvests; vectorized counterpart of :func:`sample_arrival_pair`.

    Any object with a ``sample(rng, n) -> (e_s, e_d)`` method producing a
    stationary ergodic sequence can stand in for it.
    """

    def __init__(self, profile: EnergyProfile):
        self.pmf = arrival_pmf(profile.mu_s, profile.mu_d, profile.rho, symmetric=False)
        self.cdf = np.cumsum(self.pmf.as_array())
        self.e_s_max = float(profile.e_s_max)
        self.e_d_max = float(profile.e_d_max)

    def sample(self, rng, n):
        outcome = np.minimum(np.searchsorted(self.cdf, rng.random(n), side="right"), 3)
        e_s = np.where(outcome >= 2, self.e_s_max, 0.0)
        e_d = np.where(outcome % 2 == 1, self.e_d_max, 0.0)
        return e_s, e_d


@dataclass
class SimResult:
    p_out_hat: float
    tau_hat: float
    psi_s_hat: float
    psi_d_hat: float
    psi_joint_hat: float
    n_slots: int
    n_packets: int
    seed: int | None
    stderr: dict
    ci_halfwidth_95: dict
    energy: dict = field(default_factory=dict)
    batches: np.ndarray = field(default=None, repr=False)
    backend: str = BACKEND


def _ratio(num, den):
    """Ratio estimate and its batch-means standard error."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    total = den.sum()
    if total <= 0:
        return math.nan, math.nan
    r = num.sum() / total
    used = den > 0
    nb = int(used.sum())
    if nb < 2:
        return float(r), math.nan
    dev = num[used] - r * den[used]
    mean_den = den[used].mean()
    var = (dev ** 2).sum() / (nb * (nb - 1)) / mean_den ** 2
    return float(r), float(math.sqrt(var))


def summarize(batches, seed=None, energy=None, backend=BACKEND):
    """Estimates and standard errors from per-batch counters.

    Counter columns: successes, outages, attempts over successes, source
    ready, destination ready, both ready, measured slots. Batches from
    independent replicas can simply be stacked.
    """
    b = np.asarray(batches)
    done = b[:, 0] + b[:, 1]
    est = {
        "p_out": _ratio(b[:, 1], done),
        "tau": _ratio(b[:, 2], b[:, 0]),
        "psi_s": _ratio(b[:, 3], b[:, 6]),
        "psi_d": _ratio(b[:, 4], b[:, 6]),
        "psi_joint": _ratio(b[:, 5], b[:, 6]),
    }
    stderr = {k: v[1] for k, v in est.items()}
    return SimResult(
        est["p_out"][0], est["tau"][0], est["psi_s"][0], est["psi_d"][0], est["psi_joint"][0],
        int(b[:, 6].sum()), int(done.sum()), seed, stderr,
        {k: Z95 * v for k, v in stderr.items()}, energy or {}, b, backend,
    )


def _kernel_inputs(config: LinkConfig, profile: EnergyProfile, policy: PolicySpec):
    problems = policy.check(config)
    if problems:
        raise ConfigError(problems)
    K = config.retry_limit
    b_max = config.b_max
    if not math.isfinite(b_max):
        b_max = UNBOUNDED_CAP_FACTOR * max(profile.lambda_s, profile.lambda_d, config.quantum)
        log.info("unbounded battery emulated with a %g mJ cap", b_max)
    levels = np.array([policy.threshold(u) for u in range(-1, K)], dtype=float)
    gthr = np.array([config.gain_scale / tx_power_from_budget(lv, config.alpha, config.p_cs)
                     for lv in levels], dtype=float)
    costs = receiver_costs(config, policy.receiver)
    fparams = np.array([b_max, costs.ready, costs.silent, costs.tx_outage, costs.tx_success])
    joint = int(policy.source is SourceKind.JOINT)
    return levels, gthr, fparams, b_max, joint, int(costs.gated)


def simulate(config: LinkConfig, profile: EnergyProfile, policy: PolicySpec, n_slots, seed=None,
             burn_in=BURN_IN, n_batches=N_BATCHES, arrivals=None, backend=None, chunk=CHUNK) -> SimResult:
    """Run ``burn_in + n_slots`` slots and estimate outage, attempts and readiness.

    Only packets that start after the burn-in are counted. Estimates carry
    batch-means standard errors over ``n_batches`` contiguous batches.
    """
    if n_slots < 1:
        raise ValueError(f"n_slots must be >= 1 (got {n_slots})")
    run_chunk = get_run_chunk(backend)
    levels, gthr, fparams, b_max, joint, gated = _kernel_inputs(config, profile, policy)
    arrivals = arrivals or BernoulliArrivals(profile)
    n_batches = max(1, min(n_batches, n_slots))
    batch_len = -(-n_slots // n_batches)
    iparams = np.array([config.retry_limit, joint, gated, burn_in, batch_len, n_batches], dtype=np.int64)
    b0 = min(config.b_init, b_max)
    fstate = np.array([b0, b0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    istate = np.array([-1, 0, 0], dtype=np.int64)
    counters = np.zeros((n_batches, 7), dtype=np.int64)
    rng = np.random.default_rng(seed)

    remaining = burn_in + n_slots
    while remaining > 0:
        m = min(chunk, remaining)
        e_s, e_d = arrivals.sample(rng, m)
        gain = rng.standard_exponential(m)
        run_chunk(np.ascontiguousarray(e_s, dtype=float), np.ascontiguousarray(e_d, dtype=float),
                  gain, levels, gthr, fparams, iparams, fstate, istate, counters)
        remaining -= m

    energy = {
        "initial": b0, "b_max": b_max,
        "final_s": fstate[0], "harvested_s": fstate[2], "spent_s": fstate[3], "overflow_s": fstate[4],
        "final_d": fstate[1], "harvested_d": fstate[5], "spent_d": fstate[6], "overflow_d": fstate[7],
    }
    return summarize(counters, seed, energy, backend or BACKEND)


def estimate_psi(config, profile, policy, n_slots, seed=None, **kwargs):
    """Empirical (source ready, destination ready, both ready) frequencies."""
    res = simulate(config, profile, policy, n_slots, seed, **kwargs)
    return res.psi_s_hat, res.psi_d_hat, res.psi_joint_hat


def _replica(args):
    config, profile, policy, n_slots, seed, kwargs = args
    return simulate(config, profile, policy, n_slots, seed, **kwargs)


def simulate_replicas(config, profile, policy, n_slots, seed, replicas, workers=1, **kwargs):
    """Independent runs with seeds ``seed, seed + 1, ...``, in seed order."""
    jobs = [(config, profile, policy, n_slots, seed + r, kwargs) for r in range(replicas)]
    if workers > 1 and replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_replica, jobs))
    return [_replica(job) for job in jobs]


def aggregate(results):
    """Pool replicas by stacking their batch counters."""
    stacked = np.vstack([r.batches for r in results])
    out = summarize(stacked, results[0].seed, backend=results[0].backend)
    return out
