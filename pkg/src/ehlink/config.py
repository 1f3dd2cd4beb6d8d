"""INI configuration for batch runs.

Three sections, all optional::

    [link]    rate noise alpha p_cs p_d p_f xi eta retry_limit b_max quantum b_init
    [energy]  lambda_s lambda_d e_s_max e_d_max rho
    [policy]  kind p_s delta receiver bsi_shared d_knows_policy

Key names are unique across sections, so a resolved configuration is a flat
mapping and a sweep can address any key by name. ``b_max`` accepts
``unbounded``. ``e_s_max``/``e_d_max`` default to 20 quanta and the
Bernoulli probabilities follow as lambda / e_max.
"""
from __future__ import annotations

import configparser
import math

from .fsmc import arrival_pmf
from .model import UNBOUNDED, ConfigError, EnergyProfile, LinkConfig
from .policies import PolicySpec, ReceiverMode, SourceKind

SECTIONS = {
    "link": ("rate", "noise", "alpha", "p_cs", "p_d", "p_f", "xi", "eta",
             "retry_limit", "b_max", "quantum", "b_init"),
    "energy": ("lambda_s", "lambda_d", "e_s_max", "e_d_max", "rho"),
    "policy": ("kind", "p_s", "delta", "receiver", "bsi_shared", "d_knows_policy"),
}
KEYS = tuple(k for keys in SECTIONS.values() for k in keys)

DEFAULTS = {
    "rate": 2.0, "noise": 100.0, "alpha": 1.0, "p_cs": 100.0, "p_d": 700.0, "p_f": None,
    "xi": 1.0, "eta": 1.0, "retry_limit": 4, "b_max": 3000.0, "quantum": 50.0, "b_init": 0.0,
    "lambda_s": 500.0, "lambda_d": 500.0, "e_s_max": None, "e_d_max": None, "rho": 0.0,
    "kind": "disjoint", "p_s": 800.0, "delta": 100.0, "receiver": "always",
    "bsi_shared": None, "d_knows_policy": None,
}
EMAX_QUANTA = 20

_STRINGS = {"kind", "receiver"}
_BOOLS = {"bsi_shared", "d_knows_policy"}
_INTS = {"retry_limit"}


def _convert(key, raw):
    raw = raw.strip()
    if key in _STRINGS:
        return raw.lower()
    if key in _BOOLS:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if key == "b_max" and raw.lower() in ("unbounded", "inf", "infinite"):
        return UNBOUNDED
    if key in _INTS:
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    return float(raw)


def read_settings(text):
    """Flat mapping of every key, defaults filled in; raises on unknown or malformed keys."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__",
                                       inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    settings = dict(DEFAULTS)
    problems = []
    for section in parser.sections():
        if section not in SECTIONS:
            problems.append(f"[{section}]: unknown section (expected {', '.join(SECTIONS)})")
            continue
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                problems.append(f"{key}: unknown key in [{section}]")
                continue
            try:
                settings[key] = _convert(key, raw)
            except ValueError as exc:
                problems.append(f"{key}: {exc}")
    if problems:
        try:
            build(settings)
        except ConfigError as exc:
            problems.extend(exc.problems)
        raise ConfigError(problems)
    return settings


def set_value(settings, key, value):
    """Copy of ``settings`` with one key replaced (value may be a string)."""
    if key not in settings:
        raise ConfigError(f"{key}: unknown parameter")
    out = dict(settings)
    out[key] = _convert(key, value) if isinstance(value, str) else value
    if key in _INTS:
        out[key] = int(round(out[key]))
    return out


def build(settings):
    """Validated (LinkConfig, EnergyProfile, PolicySpec); every violation is reported."""
    s = settings
    problems = []
    config = profile = policy = None

    try:
        config = LinkConfig(s["rate"], s["noise"], s["alpha"], s["p_cs"], s["p_d"], s["p_f"], s["xi"],
                            s["eta"], s["retry_limit"], s["b_max"], s["quantum"], s["b_init"])
    except ConfigError as exc:
        problems.extend(exc.problems)

    emax_default = EMAX_QUANTA * s["quantum"] if s["quantum"] and s["quantum"] > 0 else math.nan
    e_s_max = s["e_s_max"] if s["e_s_max"] is not None else emax_default
    e_d_max = s["e_d_max"] if s["e_d_max"] is not None else emax_default
    peaks_ok = True
    for key, val in (("e_s_max", e_s_max), ("e_d_max", e_d_max)):
        if not val > 0:
            problems.append(f"{key}: must be > 0 (got {val})")
            peaks_ok = False
    if peaks_ok:
        try:
            profile = EnergyProfile.bernoulli(s["lambda_s"], s["lambda_d"], e_s_max, e_d_max, s["rho"])
            arrival_pmf(profile.mu_s, profile.mu_d, profile.rho, symmetric=False)
        except ConfigError as exc:
            problems.extend(exc.problems)

    try:
        kind = SourceKind(s["kind"])
    except ValueError:
        problems.append(f"kind: unknown policy {s['kind']!r} (expected disjoint, joint or linear)")
        kind = None
    try:
        receiver = ReceiverMode(s["receiver"])
    except ValueError:
        problems.append(f"receiver: unknown mode {s['receiver']!r} "
                        f"(expected {', '.join(m.value for m in ReceiverMode)})")
        receiver = None
    if kind is not None and receiver is not None:
        bsi = s["bsi_shared"] if s["bsi_shared"] is not None else kind is SourceKind.JOINT
        knows = s["d_knows_policy"] if s["d_knows_policy"] is not None else receiver is ReceiverMode.CSI_AWARE
        delta = s["delta"] if kind is SourceKind.LINEAR else 0.0
        try:
            policy = PolicySpec(kind, s["p_s"], delta, receiver, bsi, knows)
        except ConfigError as exc:
            problems.extend(exc.problems)
    if config is not None and policy is not None:
        problems.extend(policy.check(config))

    if problems:
        raise ConfigError(problems)
    return config, profile, policy


def parse_config(text):
    """Parse INI text into validated domain objects."""
    return build(read_settings(text))


def resolved_lines(settings):
    """``key = value`` lines echoing a resolved configuration, in key order."""
    config, profile, policy = build(settings)
    values = {
        "rate": config.rate, "noise": config.noise, "alpha": config.alpha, "p_cs": config.p_cs,
        "p_d": config.p_d, "p_f": config.p_f, "xi": config.xi, "eta": config.eta,
        "retry_limit": config.retry_limit, "b_max": config.b_max, "quantum": config.quantum,
        "b_init": config.b_init, "lambda_s": profile.lambda_s, "lambda_d": profile.lambda_d,
        "e_s_max": profile.e_s_max, "e_d_max": profile.e_d_max, "rho": profile.rho,
        "kind": policy.source.value, "p_s": policy.p_s, "delta": policy.delta,
        "receiver": policy.receiver.value, "bsi_shared": policy.bsi_shared,
        "d_knows_policy": policy.d_knows_policy,
    }
    return [f"{k} = {fmt(values[k])}" for k in KEYS]


def fmt(value):
    """Deterministic text form: 9 significant digits for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "unbounded" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return f"{value:.9g}"
    return str(value)
