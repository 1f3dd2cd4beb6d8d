"""Finite-battery analysis over (source level, destination level, retry state).

Batteries live on a grid of ``config.quantum``; the chain is built with
sparse matrices and solved on the recurrent class reached from an empty
start.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.sparse.linalg import spsolve

from .model import ConfigError, EnergyProfile, LinkConfig, _on_grid, channel_outage_prob, tx_power_from_budget
from .policies import PolicySpec, SourceKind, receiver_costs

log = logging.getLogger(__name__)

ACK_FLOOR = 1e-10
DEFAULT_MAX_STATES = 1_000_000


class StationaryError(RuntimeError):
    """Power iteration hit its cap; ``residual`` is the last L1 change."""

    def __init__(self, message, residual=math.nan, iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SearchError(RuntimeError):
    """No grid point of a threshold scan produced a usable chain."""


class DegenerateChainError(ArithmeticError):
    """The chain never completes a packet, so outage is undefined."""


@dataclass(frozen=True)
class ArrivalPmf:
    """Joint pmf of one slot's harvest: (0,0), (0,E_D), (E_S,0), (E_S,E_D)."""

    mu0: float
    mu1: float
    mu2: float
    mu3: float

    def as_array(self):
        return np.array([self.mu0, self.mu1, self.mu2, self.mu3])


def arrival_pmf(mu_s, mu_d, rho, symmetric=True):
    """Correlated Bernoulli pair with marginals ``mu_s``, ``mu_d`` and correlation ``rho``.

    ``symmetric`` enforces mu1 == mu2 (equal marginals), as the chain model
    requires; the simulator may relax it.
    """
    if symmetric and not math.isclose(mu_s, mu_d, rel_tol=1e-12, abs_tol=1e-12):
        raise ConfigError(f"mu_s: the chain needs mu_s == mu_d (got {mu_s}, {mu_d})")
    mu3 = mu_s * mu_d + rho * math.sqrt(mu_s * (1 - mu_s) * mu_d * (1 - mu_d))
    lo, hi = max(0.0, mu_s + mu_d - 1.0), min(mu_s, mu_d)
    eps = 1e-12
    if not lo - eps <= mu3 <= hi + eps:
        raise ConfigError(f"rho: {rho} infeasible for mu_s={mu_s}, mu_d={mu_d} "
                          f"(joint mass {mu3:.6g} outside [{lo:.6g}, {hi:.6g}])")
    mu3 = min(max(mu3, lo), hi)
    mu2 = mu_s - mu3
    mu1 = mu_d - mu3
    mu0 = 1.0 - mu1 - mu2 - mu3
    return ArrivalPmf(max(mu0, 0.0), mu1, mu2, mu3)


@dataclass
class TransitionKernel:
    matrix: sp.csr_matrix
    levels: int
    retry_limit: int
    quantum: float
    rounded: bool = False

    @property
    def n_states(self):
        return self.matrix.shape[0]

    def index(self, b_s, b_d, u):
        n1, k1 = self.levels + 1, self.retry_limit + 1
        return (b_s * n1 + b_d) * k1 + (u + 1)

    def triple(self, index):
        n1, k1 = self.levels + 1, self.retry_limit + 1
        ij, uidx = divmod(index, k1)
        b_s, b_d = divmod(ij, n1)
        return b_s, b_d, uidx - 1

    def u_of_states(self):
        return np.arange(self.n_states) % (self.retry_limit + 1) - 1


@dataclass
class StationaryDist:
    pi: np.ndarray
    reachable: np.ndarray
    recurrent: np.ndarray
    residual: float
    iterations: int
    method: str

    def u_marginal(self, retry_limit):
        """Stationary mass per retry state, ordered u = -1, 0, ..., K-1."""
        return self.pi.reshape(-1, retry_limit + 1).sum(axis=0)


def _grid_units(value, quantum, key):
    if not _on_grid(value, quantum):
        raise ConfigError(f"{key}: {value} is not a multiple of quantum {quantum}")
    return int(round(value / quantum))


def build_chain(config: LinkConfig, profile: EnergyProfile, policy: PolicySpec,
                max_states=DEFAULT_MAX_STATES) -> TransitionKernel:
    """Transition matrix of the battery/retry chain.

    Each state has at most eight successors: four harvest outcomes times a
    good or bad channel, the latter with probability p(P_tx) for the state's
    transmit level.
    """
    if not config.finite_battery:
        raise ConfigError("b_max: the chain needs a finite battery")
    problems = config.problems() + policy.check(config)
    if problems:
        raise ConfigError(problems)
    q = config.quantum
    n = config.levels()
    K = config.retry_limit
    n_states = (n + 1) ** 2 * (K + 1)
    if n_states > max_states:
        raise ConfigError(f"b_max: {n_states} states exceed the cap of {max_states}")

    pmf = arrival_pmf(profile.mu_s, profile.mu_d, profile.rho).as_array()
    a_s = _grid_units(profile.e_s_max, q, "e_s_max")
    a_d = _grid_units(profile.e_d_max, q, "e_d_max")
    costs, rounded = receiver_costs(config, policy.receiver).to_grid(q)
    if rounded:
        log.info("receiver costs rounded up to the %g mJ grid", q)

    us = np.arange(-1, K)
    levels_u = np.array([_grid_units(policy.threshold(u), q, "p_s") for u in us])
    p_u = np.array([channel_outage_prob(config.rate, config.noise,
                                        tx_power_from_budget(policy.threshold(u), config.alpha, config.p_cs))
                    for u in us])

    idx = np.arange(n_states)
    uidx = idx % (K + 1)
    ij = idx // (K + 1)
    b_d = ij % (n + 1)
    b_s = ij // (n + 1)
    u = uidx - 1
    level = levels_u[uidx]
    s_ready = b_s >= level
    d_ready = b_d >= costs.ready
    joint = policy.source is SourceKind.JOINT
    fail_next = np.where(u == -1, 1 if K > 1 else 0, np.where(u == K - 1, 0, u + 1))

    rows, cols, vals = [], [], []
    for chan_ok, p_chan in ((True, 1.0 - p_u[uidx]), (False, p_u[uidx])):
        if joint:
            tx = s_ready & d_ready & (chan_ok or not costs.gated)
        else:
            tx = s_ready
        spend_s = np.where(tx, level, 0)
        if costs.gated and not chan_ok:
            spend_d = np.zeros(n_states)
        else:
            on_tx = costs.tx_success if chan_ok else costs.tx_outage
            spend_d = np.where(d_ready, np.where(tx, on_tx, 0.0 if joint else costs.silent), 0.0)
        success = tx & d_ready & chan_ok
        nu = np.where(success, -1, fail_next)
        rest_s = b_s - spend_s
        rest_d = (b_d - spend_d).astype(np.int64)
        for outcome, (h_s, h_d) in enumerate(((0, 0), (0, a_d), (a_s, 0), (a_s, a_d))):
            prob = p_chan * pmf[outcome]
            keep = prob > 0
            if not keep.any():
                continue
            ns = np.minimum(rest_s + h_s, n)
            nd = np.minimum(rest_d + h_d, n)
            dest = (ns * (n + 1) + nd) * (K + 1) + (nu + 1)
            rows.append(idx[keep])
            cols.append(dest[keep])
            vals.append(prob[keep])

    matrix = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(n_states, n_states))
    matrix.sum_duplicates()
    return TransitionKernel(matrix, n, K, q, rounded)


def _residual(matrix_t, pi):
    return float(np.abs(matrix_t @ pi - pi).sum())


def stationary(kernel: TransitionKernel, seed_state=(0, 0, -1), method="power",
               tol=1e-12, max_iter=1_000_000) -> StationaryDist:
    """Stationary distribution of the class the chain settles into from ``seed_state``.

    ``method="power"`` iterates the seed distribution under the lazy kernel
    (I + T) / 2 until the L1 change drops below ``tol``; ``method="direct"`` solves the balance equations on
    the closed class reachable from the seed with a sparse LU factorization.
    """
    T = kernel.matrix
    n = T.shape[0]
    seed = kernel.index(*seed_state)
    order = breadth_first_order(T, seed, directed=True, return_predecessors=False)
    reachable = np.zeros(n, dtype=bool)
    reachable[order] = True
    Tt = T.T.tocsr()

    if method == "power":
        pi = np.zeros(n)
        pi[seed] = 1.0
        change = math.inf
        it = 0
        while it < max_iter:
            # lazy step: same fixed point, and aperiodic even when T is not
            nxt = 0.5 * (pi + Tt @ pi)
            change = float(np.abs(nxt - pi).sum())
            pi = nxt
            it += 1
            if change < tol:
                break
        else:
            raise StationaryError(f"power iteration did not converge in {max_iter} steps "
                                  f"(last L1 change {change:.3e})", change, it)
        pi /= pi.sum()
        recurrent = pi > 0
        return StationaryDist(pi, reachable, recurrent, _residual(Tt, pi), it, "power")

    if method != "direct":
        raise ValueError(f"unknown stationary method {method!r}")
    sub = T[order][:, order]
    n_comp, labels = connected_components(sub, directed=True, connection="strong")
    coo = sub.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    open_comp = np.zeros(n_comp, dtype=bool)
    open_comp[labels[coo.row[leaving]]] = True
    closed = np.flatnonzero(~open_comp)
    if len(closed) != 1:
        raise StationaryError(f"{len(closed)} closed classes reachable from the seed; "
                              "the stationary law is not unique")
    members = order[labels == closed[0]]
    members.sort()
    block = T[members][:, members]
    m = len(members)
    A = (block.T - sp.identity(m, format="csr")).tolil()
    A[m - 1, :] = np.ones(m)
    rhs = np.zeros(m)
    rhs[m - 1] = 1.0
    x = spsolve(A.tocsc(), rhs)
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    pi = np.zeros(n)
    pi[members] = x
    recurrent = np.zeros(n, dtype=bool)
    recurrent[members] = True
    return StationaryDist(pi, reachable, recurrent, _residual(Tt, pi), 1, "direct")


def outage_from_stationary(dist: StationaryDist, retry_limit):
    """Fraction of finished packets that were dropped."""
    marg = dist.u_marginal(retry_limit)
    done = marg[0] + marg[1]
    if done <= 0:
        raise DegenerateChainError("the chain never finishes a packet")
    return float(marg[1] / done)


def avg_transmissions(dist: StationaryDist, kernel: TransitionKernel):
    """Mean attempts per delivered packet.

    A packet delivered from retry state k >= 1 took k + 1 attempts; the
    stationary flow into u = -1 from each state weights those counts.
    """
    K = kernel.retry_limit
    u_of = kernel.u_of_states()
    into_ack = kernel.matrix @ (u_of == -1).astype(float)
    flow = np.bincount(u_of + 1, weights=dist.pi * into_ack, minlength=K + 1)
    acked = dist.u_marginal(K)[0]
    # power iteration leaves ~tol of mass on transient states
    if acked <= ACK_FLOOR:
        raise DegenerateChainError("the chain never delivers a packet")
    ks = np.arange(1, K)
    return float(1.0 + (ks * flow[ks + 1]).sum() / acked)


def infinite_battery_stationary(p, retry_limit):
    """Retry-state law when energy never runs short, ordered u = -1, 0, ..., K-1."""
    K = retry_limit
    if p == 1.0:
        # every attempt fails: the chain cycles 0 -> 1 -> ... -> K-1 -> 0
        out = np.full(K + 1, 1.0 / K)
        out[0] = 0.0
        return out
    scale = (1.0 - p) / (1.0 - p ** K)
    return scale * np.array([1.0 - p ** K, p ** K] + [p ** k for k in range(1, K)])


@dataclass
class ChainResult:
    p_out: float
    tau: float
    n_states: int
    residual: float
    iterations: int
    rounded: bool
    u_marginal: np.ndarray = field(repr=False)


def solve(config, profile, policy, method="power", max_states=DEFAULT_MAX_STATES):
    """Build, solve and summarize one configuration."""
    kernel = build_chain(config, profile, policy, max_states=max_states)
    dist = stationary(kernel, method=method)
    return ChainResult(
        outage_from_stationary(dist, kernel.retry_limit),
        avg_transmissions(dist, kernel),
        kernel.n_states,
        dist.residual,
        dist.iterations,
        kernel.rounded,
        dist.u_marginal(kernel.retry_limit),
    )


@dataclass
class ScanPoint:
    p_s: float
    p_out: float
    tau: float
    error: str = ""


@dataclass
class SearchResult:
    p_s: float
    p_tx: float
    p_out: float
    curve: list


def _scan_point(args):
    config, profile, policy, method = args
    try:
        res = solve(config, profile, policy, method=method)
    except (ConfigError, StationaryError, DegenerateChainError) as exc:
        return ScanPoint(policy.p_s, math.nan, math.nan, f"{type(exc).__name__}: {exc}")
    return ScanPoint(policy.p_s, res.p_out, res.tau)


def search_threshold(config: LinkConfig, profile: EnergyProfile, policy: PolicySpec,
                     p_s_range=None, method="power", workers=1) -> SearchResult:
    """One-dimensional grid scan of the (starting) threshold.

    Scans P_CS + E, P_CS + 2E, ... up to B_max, or the inclusive
    ``p_s_range``; ties go to the larger threshold.
    """
    q = config.quantum
    lo, hi = p_s_range if p_s_range is not None else (config.p_cs + q, config.b_max)
    start = max(lo, config.p_cs + q)
    grid = [start + k * q for k in range(int(math.floor((hi - start) / q + 1e-9)) + 1)]
    jobs = [(config, profile, policy.with_threshold(p), method) for p in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            curve = list(pool.map(_scan_point, jobs))
    else:
        curve = [_scan_point(job) for job in jobs]

    best = None
    for point in curve:
        if point.error:
            continue
        if best is None or point.p_out <= best.p_out:
            best = point
    if best is None:
        detail = "; ".join(f"{pt.p_s:g}: {pt.error}" for pt in curve[:3]) or "empty grid"
        raise SearchError(f"threshold scan failed at every grid point ({detail})")
    p_tx = tx_power_from_budget(best.p_s, config.alpha, config.p_cs)
    return SearchResult(best.p_s, p_tx, best.p_out, curve)
