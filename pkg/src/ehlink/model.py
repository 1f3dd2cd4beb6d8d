"""Link physics: domain types and per-slot bookkeeping.

Units follow the unit-slot convention: power (mW) and per-slot energy (mJ)
are interchangeable, so every budget below is a plain float.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNBOUNDED = math.inf


class ConfigError(ValueError):
    """Raised when a configuration violates a domain invariant.

    ``problems`` lists every violation found, each prefixed by the key name.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _on_grid(value, quantum, tol=1e-9):
    ratio = value / quantum
    return abs(ratio - round(ratio)) <= tol * max(1.0, abs(ratio))


@dataclass(frozen=True)
class LinkConfig:
    """Physical and protocol parameters of one link.

    ``p_f`` defaults to ``p_d / eta``; with ``eta == 1`` receive and
    receive-plus-process cost the same.
    """

    rate: float = 2.0
    noise: float = 100.0
    alpha: float = 1.0
    p_cs: float = 100.0
    p_d: float = 700.0
    p_f: float | None = None
    xi: float = 1.0
    eta: float = 1.0
    retry_limit: int = 4
    b_max: float = 3000.0
    quantum: float = 50.0
    b_init: float = 0.0

    def __post_init__(self):
        if self.p_f is None:
            object.__setattr__(self, "p_f", self.p_d / self.eta if self.eta > 0 else math.nan)
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self):
        out = []
        if not self.rate > 0:
            out.append(f"rate: must be > 0 (got {self.rate})")
        if not self.noise > 0:
            out.append(f"noise: must be > 0 (got {self.noise})")
        if not self.alpha >= 0:
            out.append(f"alpha: must be >= 0 (got {self.alpha})")
        if not self.p_cs >= 0:
            out.append(f"p_cs: must be >= 0 (got {self.p_cs})")
        if not self.p_d > 0:
            out.append(f"p_d: must be > 0 (got {self.p_d})")
        if not 0.0 <= self.xi <= 1.0:
            out.append(f"xi: must lie in [0, 1] (got {self.xi})")
        if not 0.0 < self.eta <= 1.0:
            out.append(f"eta: must lie in (0, 1] (got {self.eta})")
        elif not math.isclose(self.p_d, self.eta * self.p_f, rel_tol=1e-9):
            out.append(f"p_f: p_d must equal eta * p_f (p_d={self.p_d}, eta={self.eta}, p_f={self.p_f})")
        if int(self.retry_limit) != self.retry_limit or self.retry_limit < 1:
            out.append(f"retry_limit: must be an integer >= 1 (got {self.retry_limit})")
        if not self.quantum > 0:
            out.append(f"quantum: must be > 0 (got {self.quantum})")
        if not self.b_max > 0:
            out.append(f"b_max: must be > 0 or unbounded (got {self.b_max})")
        if not 0 <= self.b_init <= self.b_max:
            out.append(f"b_init: must lie in [0, b_max] (got {self.b_init})")
        if self.finite_battery and self.quantum > 0:
            for key in ("b_max", "p_cs", "p_d", "p_f", "b_init"):
                if not _on_grid(getattr(self, key), self.quantum):
                    out.append(f"{key}: {getattr(self, key)} is not a multiple of quantum {self.quantum}")
        return out

    @property
    def finite_battery(self):
        return math.isfinite(self.b_max)

    @property
    def c_const(self):
        """(2^R - 1)(1 + alpha) z, the budget-domain outage constant."""
        return (2.0 ** self.rate - 1.0) * (1.0 + self.alpha) * self.noise

    @property
    def gain_scale(self):
        """(2^R - 1) z; channel outage iff |h|^2 < gain_scale / P_tx."""
        return (2.0 ** self.rate - 1.0) * self.noise

    def levels(self):
        """Number of battery grid levels above zero (B_max / E)."""
        if not self.finite_battery:
            raise ConfigError("b_max: grid levels need a finite battery")
        return int(round(self.b_max / self.quantum))


@dataclass(frozen=True)
class EnergyProfile:
    """Harvesting statistics of both nodes under the correlated Bernoulli model."""

    lambda_s: float = 500.0
    lambda_d: float = 500.0
    mu_s: float = 0.5
    mu_d: float = 0.5
    e_s_max: float = 1000.0
    e_d_max: float = 1000.0
    rho: float = 0.0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    @classmethod
    def bernoulli(cls, lambda_s=500.0, lambda_d=500.0, e_s_max=1000.0, e_d_max=1000.0, rho=0.0):
        """Profile whose Bernoulli parameters follow from means and peaks."""
        return cls(lambda_s, lambda_d, lambda_s / e_s_max, lambda_d / e_d_max, e_s_max, e_d_max, rho)

    def problems(self):
        out = []
        for key in ("mu_s", "mu_d"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                out.append(f"{key}: must lie in [0, 1] (got {getattr(self, key)})")
        for key in ("e_s_max", "e_d_max", "lambda_s", "lambda_d"):
            if not getattr(self, key) >= 0:
                out.append(f"{key}: must be >= 0 (got {getattr(self, key)})")
        if not -1.0 <= self.rho <= 1.0:
            out.append(f"rho: must lie in [-1, 1] (got {self.rho})")
        if not math.isclose(self.lambda_s, self.mu_s * self.e_s_max, rel_tol=1e-9, abs_tol=1e-9):
            out.append(f"lambda_s: must equal mu_s * e_s_max ({self.mu_s} * {self.e_s_max})")
        if not math.isclose(self.lambda_d, self.mu_d * self.e_d_max, rel_tol=1e-9, abs_tol=1e-9):
            out.append(f"lambda_d: must equal mu_d * e_d_max ({self.mu_d} * {self.e_d_max})")
        return out


def channel_outage_prob(rate, noise, p_tx):
    """Probability that a unit-mean Rayleigh block cannot carry ``rate``.

    Returns exactly 1 for a silent slot (``p_tx == 0``).
    """
    if not rate > 0 or not noise > 0:
        raise ValueError(f"rate and noise must be positive (got {rate}, {noise})")
    if p_tx < 0:
        raise ValueError(f"transmit power must be >= 0 (got {p_tx})")
    if p_tx == 0:
        return 1.0
    return -math.expm1(-(2.0 ** rate - 1.0) * noise / p_tx)


def tx_power_from_budget(p_s, alpha, p_cs):
    """Radiated power left after circuit and amplifier overhead."""
    if p_s == 0:
        return 0.0
    if p_s <= p_cs:
        raise ValueError(f"budget {p_s} cannot energize the amplifier over circuit power {p_cs}")
    return (p_s - p_cs) / (1.0 + alpha)


def battery_step(level, spend, harvest, b_max=UNBOUNDED):
    if spend > level:
        raise ValueError(f"spend {spend} exceeds stored energy {level}")
    return min(level - spend + harvest, b_max)


def next_retx_state(u, success, retry_limit):
    """Retransmission state after one slot.

    -1 means the last packet was acknowledged, 0 that it was dropped after
    ``retry_limit`` attempts, k >= 1 that k attempts have failed so far.
    """
    if not -1 <= u <= retry_limit - 1:
        raise ValueError(f"u={u} outside [-1, {retry_limit - 1}]")
    if success:
        return -1
    if u == -1:
        return 1 if retry_limit > 1 else 0
    if u == retry_limit - 1:
        return 0
    return u + 1


@dataclass
class ChannelSampler:
    """Per-slot |h|^2 draws, unit-mean exponential. Not thread-safe."""

    seed: int | None = None
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    def draw(self, n=None):
        return self.rng.standard_exponential(n)
