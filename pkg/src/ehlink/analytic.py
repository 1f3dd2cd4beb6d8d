"""Closed-form infinite-battery results.

Transmit/receive probabilities under each information-sharing variant,
optimal thresholds, and the retransmission lower bound on outage.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass

from scipy.optimize import bisect

from .model import LinkConfig, EnergyProfile, channel_outage_prob, tx_power_from_budget
from .policies import PolicySpec, ReceiverMode, SourceKind


class NoClosedFormError(ArithmeticError):
    """No closed form exists for this case; use the chain or the simulator."""


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be > 0 (got {value})")


def _saturating_ratio(num, den):
    # a vanishing load means the node is never short of energy
    if den <= 0:
        return 1.0
    return min(1.0, num / den)


def psi_source(lambda_s, p_s):
    """Long-run fraction of slots in which the source battery clears ``p_s``."""
    _positive("P_S", p_s)
    return min(1.0, lambda_s / p_s)


def psi_dest(lambda_d, p_d):
    _positive("P_D", p_d)
    return min(1.0, lambda_d / p_d)


def psi_joint_disjoint(lambda_s, p_s, lambda_d, p_d, rho=0.0):
    """Both-ready probability for the disjoint policy without shared BSI.

    The product form needs independent harvesting unless one side is
    saturated; otherwise :class:`NoClosedFormError` is raised.
    """
    _positive("P_S", p_s)
    _positive("P_D", p_d)
    if rho != 0 and lambda_s < p_s and lambda_d < p_d:
        raise NoClosedFormError("correlated arrivals with both nodes energy-starved")
    return min(1.0, lambda_s / p_s, lambda_d / p_d, lambda_s * lambda_d / (p_s * p_d))


def psi_joint_policy(lambda_s, p_s, lambda_d, p_d):
    """Both-ready probability under the joint policy; holds for any correlation."""
    _positive("P_S", p_s)
    _positive("P_D", p_d)
    return min(1.0, lambda_s / p_s, lambda_d / p_d)


def joint_marginals(lambda_s, load_s, lambda_d, load_d):
    """Per-node readiness under the joint policy.

    The node with the larger energy surplus never runs dry; the other is
    ready in the fraction of slots its harvest can pay for.
    """
    rs = _saturating_ratio(lambda_s, load_s)
    rd = _saturating_ratio(lambda_d, load_d)
    if rs < rd:
        return rs, 1.0
    if rd < rs:
        return 1.0, rd
    return rs, rd


def psi_dest_detection(lambda_d, p_d, xi, psi_s):
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [0, 1] (got {xi})")
    return _saturating_ratio(lambda_d, (1.0 - (1.0 - xi) * (1.0 - psi_s)) * p_d)


def psi_dest_detection_processing(lambda_d, p_f, xi, eta, psi_s, p_outage):
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1] (got {eta})")
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [0, 1] (got {xi})")
    load = 1.0 - (1.0 - xi * eta) * (1.0 - psi_s) - (1.0 - eta) * p_outage * psi_s
    return _saturating_ratio(lambda_d, load * p_f)


def psi_csi_disjoint(lambda_s, p_s, lambda_d, p_d, p_outage):
    """Disjoint policy, receiver skips slots it knows are in outage."""
    _positive("P_S", p_s)
    good = 1.0 - p_outage
    if good <= 0:
        # the receiver never spends, so only the source can be short
        return psi_source(lambda_s, p_s)
    return min(1.0, lambda_s / p_s, lambda_d / (p_d * good), lambda_s * lambda_d / (p_s * p_d * good))


def psi_csi_joint(lambda_s, p_s, lambda_d, p_d, p_outage):
    """Joint policy with full battery and channel state sharing."""
    good = 1.0 - p_outage
    return min(_saturating_ratio(lambda_s, good * p_s), _saturating_ratio(lambda_d, good * p_d))


def psi_csi_detection_processing(lambda_d, p_f, xi, eta, psi_s, p_outage):
    """Receiving probability with detection, processing and known policy."""
    load = (1.0 - (1.0 - xi * eta) * (1.0 - psi_s)) * (1.0 - p_outage)
    return _saturating_ratio(lambda_d, load * p_f)


def psi_csi_aware(variant, **params):
    """Dispatch to the known-policy variants: ``"disjoint"``, ``"joint"``, ``"detproc"``."""
    table = {
        "disjoint": psi_csi_disjoint,
        "joint": psi_csi_joint,
        "detproc": psi_csi_detection_processing,
    }
    return table[variant](**params)


def b_threshold(rate, noise, alpha, p_cs):
    """Larger root of (P - P_CS)^2 = c P with c = (2^R - 1)(1 + alpha) z."""
    c = (2.0 ** rate - 1.0) * (1.0 + alpha) * noise
    return 0.5 * ((2.0 * p_cs + c) + math.sqrt(c * (4.0 * p_cs + c)))


def optimal_threshold_disjoint(lambda_s, rate, noise, alpha, p_cs):
    return max(lambda_s, b_threshold(rate, noise, alpha, p_cs))


def optimal_threshold_joint(lambda_s, lambda_d, p_d, rate, noise, alpha, p_cs):
    load_match = lambda_s * p_d / lambda_d if lambda_d > 0 else math.inf
    return max(lambda_s, b_threshold(rate, noise, alpha, p_cs), load_match)


def optimal_threshold_joint_csi(lambda_s, rate, noise, alpha, p_cs, xtol=1e-9):
    """Threshold where channel success exp(-c/(P - P_CS)) meets the load lambda_S/P.

    The left side rises and the right side falls on (P_CS, inf), so the
    crossing is unique; it is bracketed by doubling and found by bisection.
    """
    _positive("lambda_S", lambda_s)
    c = (2.0 ** rate - 1.0) * (1.0 + alpha) * noise

    def gap(p):
        return math.exp(-c / (p - p_cs)) - lambda_s / p

    lo = p_cs + max(1e-12, 1e-12 * p_cs)
    if gap(lo) >= 0:
        raise ArithmeticError("fixed point not bracketed above the circuit power")
    hi = max(2.0 * p_cs, lambda_s, 1.0)
    while gap(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("fixed point not bracketed")
    return bisect(gap, lo, hi, xtol=xtol, rtol=4 * sys.float_info.epsilon, maxiter=2000)


def per_slot_success(p_s, psi_joint, rate, noise, alpha, p_cs):
    """Probability that a slot delivers the packet: channel success times both-ready."""
    if p_s <= p_cs or psi_joint == 0:
        return 0.0
    p_tx = tx_power_from_budget(p_s, alpha, p_cs)
    return math.exp(-(2.0 ** rate - 1.0) * noise / p_tx) * psi_joint


def fading_outage_lower_bound(phi, retry_limit):
    """Outage of the non-harvesting fading counterpart: K independent failures."""
    return (1.0 - phi) ** retry_limit


def stable_arrival_rate(rate, p_out):
    """Largest bit arrival rate the link keeps stable."""
    return rate * (1.0 - p_out)


def linear_start_heuristic(p_s_opt, fraction=0.8):
    """Starting level for the linear policy, a fixed fraction of the invariant optimum."""
    return fraction * p_s_opt


@dataclass(frozen=True)
class AnalyticReport:
    psi_s: float
    psi_d: float
    psi_joint: float
    phi: float
    p_out_lower_bound: float
    optimal_p_s: float
    b_th: float
    c_const: float
    p_outage: float
    note: str = ""


def analyze(config: LinkConfig, profile: EnergyProfile, policy: PolicySpec) -> AnalyticReport:
    """Evaluate every closed form that applies to the configured policy.

    ``note`` flags approximations ("product-approximation") and refusals
    ("no-closed-form"); the linear policy is reported at its first-attempt
    level ("first-attempt-level").
    """
    lam_s, lam_d = profile.lambda_s, profile.lambda_d
    p_s = policy.p_s
    p_tx = tx_power_from_budget(p_s, config.alpha, config.p_cs)
    p_out = channel_outage_prob(config.rate, config.noise, p_tx)
    b_th = b_threshold(config.rate, config.noise, config.alpha, config.p_cs)
    psi_s = psi_source(lam_s, p_s)
    notes = []
    mode = policy.receiver
    joint = policy.source is SourceKind.JOINT

    if joint:
        ready = config.p_d if mode in (ReceiverMode.ALWAYS_ON, ReceiverMode.DETECTION) else config.p_f
        good = 1.0 - p_out if mode is ReceiverMode.CSI_AWARE else 1.0
        if mode is ReceiverMode.CSI_AWARE:
            psi_joint = psi_csi_joint(lam_s, p_s, lam_d, ready, p_out)
            p_opt = optimal_threshold_joint_csi(lam_s, config.rate, config.noise, config.alpha, config.p_cs)
        elif mode is ReceiverMode.DETECTION_PROCESSING and config.eta < 1:
            psi_joint = math.nan
            notes.append("no-closed-form")
            p_opt = optimal_threshold_joint(lam_s, lam_d, ready, config.rate, config.noise, config.alpha, config.p_cs)
        else:
            psi_joint = psi_joint_policy(lam_s, p_s, lam_d, ready)
            p_opt = optimal_threshold_joint(lam_s, lam_d, ready, config.rate, config.noise, config.alpha, config.p_cs)
        psi_s, psi_d = joint_marginals(lam_s, p_s * good, lam_d, ready * good)
    else:
        p_opt = optimal_threshold_disjoint(lam_s, config.rate, config.noise, config.alpha, config.p_cs)
        if policy.source is SourceKind.LINEAR:
            notes.append("first-attempt-level")
            p_opt = linear_start_heuristic(p_opt)
        exact = False
        if mode is ReceiverMode.ALWAYS_ON:
            psi_d = psi_dest(lam_d, config.p_d)
            exact = True
        elif mode is ReceiverMode.DETECTION:
            psi_d = psi_dest_detection(lam_d, config.p_d, config.xi, psi_s)
            exact = config.xi == 1
        elif mode is ReceiverMode.DETECTION_PROCESSING:
            psi_d = psi_dest_detection_processing(lam_d, config.p_f, config.xi, config.eta, psi_s, p_out)
            exact = config.xi == 1 and config.eta == 1
        else:
            psi_d = psi_csi_detection_processing(lam_d, config.p_f, config.xi, config.eta, psi_s, p_out)
            exact = config.xi == 1 and config.eta == 1
        if exact and profile.rho != 0 and psi_s < 1 and psi_d < 1:
            psi_joint = math.nan
            notes.append("no-closed-form")
        else:
            psi_joint = psi_s * psi_d
            if not exact and psi_s < 1 and psi_d < 1:
                notes.append("product-approximation")

    if math.isnan(psi_joint):
        phi = lower = math.nan
    else:
        phi = per_slot_success(p_s, psi_joint, config.rate, config.noise, config.alpha, config.p_cs)
        lower = fading_outage_lower_bound(phi, config.retry_limit)
    return AnalyticReport(psi_s, psi_d, psi_joint, phi, lower, p_opt, b_th, config.c_const,
                          p_out, ";".join(notes))
