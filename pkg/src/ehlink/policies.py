"""Source power-control policies and receiver energy schedules."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .model import ConfigError, LinkConfig, _on_grid, battery_step, next_retx_state


class SourceKind(enum.Enum):
    DISJOINT = "disjoint"
    JOINT = "joint"
    LINEAR = "linear"


class ReceiverMode(enum.Enum):
    ALWAYS_ON = "always"
    DETECTION = "detect"
    DETECTION_PROCESSING = "detect-process"
    CSI_AWARE = "csi"


@dataclass(frozen=True)
class PolicySpec:
    """Source policy, its threshold parameters and the receiver behavior.

    For the linear policy ``p_s`` is the first-attempt level and ``delta``
    the per-retransmission increment; the other policies ignore ``delta``.
    """

    source: SourceKind = SourceKind.DISJOINT
    p_s: float = 800.0
    delta: float = 0.0
    receiver: ReceiverMode = ReceiverMode.ALWAYS_ON
    bsi_shared: bool = False
    d_knows_policy: bool = False

    def __post_init__(self):
        problems = []
        if self.source is SourceKind.JOINT and not self.bsi_shared:
            problems.append("bsi_shared: the joint policy needs battery state sharing")
        if self.receiver is ReceiverMode.CSI_AWARE and not self.d_knows_policy:
            problems.append("d_knows_policy: a CSI-aware receiver must know the source policy")
        if self.delta < 0:
            problems.append(f"delta: must be >= 0 (got {self.delta})")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def disjoint(cls, p_s, receiver=ReceiverMode.ALWAYS_ON):
        return cls(SourceKind.DISJOINT, p_s, 0.0, receiver, False,
                   receiver is ReceiverMode.CSI_AWARE)

    @classmethod
    def joint(cls, p_s, receiver=ReceiverMode.ALWAYS_ON):
        return cls(SourceKind.JOINT, p_s, 0.0, receiver, True,
                   receiver is ReceiverMode.CSI_AWARE)

    @classmethod
    def linear(cls, start, delta, receiver=ReceiverMode.ALWAYS_ON):
        return cls(SourceKind.LINEAR, start, delta, receiver, False,
                   receiver is ReceiverMode.CSI_AWARE)

    @property
    def csi_aware(self):
        return self.receiver is ReceiverMode.CSI_AWARE

    def with_threshold(self, p_s):
        return PolicySpec(self.source, p_s, self.delta, self.receiver,
                          self.bsi_shared, self.d_knows_policy)

    def threshold(self, u):
        if self.source is SourceKind.LINEAR:
            return linear_threshold(self.p_s, self.delta, u)
        return self.p_s

    def check(self, config: LinkConfig):
        """Validate the policy against a link; returns a list of problems."""
        problems = []
        if not self.p_s > config.p_cs:
            problems.append(f"p_s: threshold {self.p_s} must exceed circuit power {config.p_cs}")
        if config.finite_battery:
            for key in ("p_s", "delta"):
                if not _on_grid(getattr(self, key), config.quantum):
                    problems.append(f"{key}: {getattr(self, key)} is not a multiple of quantum {config.quantum}")
        return problems


def linear_threshold(start, delta, u):
    """Per-retransmission level; u = -1 reuses the first-attempt level."""
    return start + delta * max(u, 0)


@dataclass(frozen=True)
class ReceiverCosts:
    """Energy the destination spends in one slot, by slot outcome.

    ``ready`` is the battery level below which the receiver stays off.
    ``gated`` marks the CSI-aware receiver, which spends nothing in a slot
    whose channel cannot support the rate.
    """

    ready: float
    silent: float
    tx_outage: float
    tx_success: float
    gated: bool

    def to_grid(self, quantum):
        """Costs in grid units, rounded up; returns ``(costs, rounded)``."""
        vals = []
        rounded = False
        for v in (self.ready, self.silent, self.tx_outage, self.tx_success):
            k = v / quantum
            n = math.ceil(k - 1e-9)
            if abs(k - round(k)) > 1e-9:
                rounded = True
            vals.append(float(n))
        return ReceiverCosts(*vals, self.gated), rounded


def receiver_costs(config: LinkConfig, mode: ReceiverMode) -> ReceiverCosts:
    p_d, p_f, xi, eta = config.p_d, config.p_f, config.xi, config.eta
    if mode is ReceiverMode.ALWAYS_ON:
        return ReceiverCosts(p_d, p_d, p_d, p_d, False)
    if mode is ReceiverMode.DETECTION:
        return ReceiverCosts(p_d, xi * p_d, p_d, p_d, False)
    if mode is ReceiverMode.DETECTION_PROCESSING:
        return ReceiverCosts(p_f, xi * eta * p_f, eta * p_f, p_f, False)
    # CSI-aware: the processing schedule with the outage branch removed;
    # with xi = eta = 1 it spends p_d on every good-channel slot.
    return ReceiverCosts(p_f, xi * eta * p_f, 0.0, p_f, True)


def source_action(spec: PolicySpec, b_s, u, dest_ready=True, channel_ok=True):
    """Energy the source draws this slot (0 when silent).

    ``dest_ready`` is the shared battery bit, used by the joint policy only.
    ``channel_ok`` matters only for the joint policy with a CSI-aware
    receiver, where full BSI and CSI sharing keeps both nodes idle on a bad
    channel.
    """
    level = spec.threshold(u)
    if b_s < level:
        return 0.0
    if spec.source is SourceKind.JOINT:
        if not dest_ready:
            return 0.0
        if spec.csi_aware and not channel_ok:
            return 0.0
    return level


def receiver_action(costs: ReceiverCosts, b_d, src_transmitting, channel_ok, joint=False):
    """Energy the destination spends this slot.

    Under the joint policy the destination knows the source is silent and
    stays off.
    """
    if b_d < costs.ready:
        return 0.0
    if costs.gated and not channel_ok:
        return 0.0
    if not src_transmitting:
        return 0.0 if joint else costs.silent
    return costs.tx_success if channel_ok else costs.tx_outage


def slot_step(config: LinkConfig, spec: PolicySpec, costs: ReceiverCosts,
              b_s, b_d, u, e_s, e_d, gain):
    """Reference single-slot transition built from the decision functions.

    Returns ``(b_s', b_d', u', spend_s, spend_d, success)``. The compiled and
    pure-Python kernels must agree with this slot for slot.
    """
    level = spec.threshold(u)
    p_tx = (level - config.p_cs) / (1.0 + config.alpha)
    channel_ok = gain >= config.gain_scale / p_tx
    joint = spec.source is SourceKind.JOINT
    d_ready = b_d >= costs.ready
    spend_s = source_action(spec, b_s, u, dest_ready=d_ready, channel_ok=channel_ok)
    transmitting = spend_s > 0
    spend_d = receiver_action(costs, b_d, transmitting, channel_ok, joint=joint)
    success = transmitting and d_ready and channel_ok
    return (
        battery_step(b_s, spend_s, e_s, config.b_max),
        battery_step(b_d, spend_d, e_d, config.b_max),
        next_retx_state(u, success, config.retry_limit),
        spend_s,
        spend_d,
        success,
    )
