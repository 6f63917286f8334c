"""Scenario configuration: defaults, JSON loading, and validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping


class ConfigError(Exception):
    """Invalid or malformed scenario configuration."""


@dataclass(frozen=True)
class DoubleSpendPlan:
    """How many conflicting pairs and cover blocks a run injects."""

    pairs: int = 0
    regular: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a simulation run needs, fully deterministic given a seed."""

    # Topology
    chains: int = 10                    # interoperating chains
    fleet_size: int = 20                # worker nodes per chain
    accounts: int = 100                 # accounts per chain
    tip_sample: int = 2                 # foreign tips checked per epoch (K)

    # Behavior
    straggler_fraction: float = 0.1     # share of silent workers per fleet
    confirm_threshold: float = 0.67     # aggregated-weight confirmation cut
    spam_fraction: float = 0.0          # adversarial share of issuance
    adversary_fraction: float = 0.2     # share of chains that are adversarial
    invalid_tx_fraction: float = 0.5    # overspending rows in spam blocks
    coding: bool = True                 # coded shards vs plain partitions

    # Load
    issuance_rate: float = 60.0         # blocks per minute, all factions
    duration_min: float = 2.0
    genesis_balance: int = 1000         # starting funds per account
    active_rows: int = 10               # populated rows per honest block
    amount_max: int = 10                # largest per-row honest transfer

    # Platform timing
    link_latency_ms: float = 100.0
    bandwidth_mbps: float = 20.0
    task_timeout_ms: float = 500.0
    vote_timeout_ms: float = 500.0
    worker_ms_per_row: float = 2.0      # distributed shard compute cost
    fallback_ms_per_row: float = 40.0   # centralized completion of lost rows
    ledger_interval_s: float = 5.0      # super-block assembly cadence
    tip_pool_sample_s: float = 1.0      # tip-pool size sampling cadence

    # Fault injection
    double_spend: DoubleSpendPlan = field(default_factory=DoubleSpendPlan)

    # Reproducibility
    seed: int = 0

    def adversarial_chains(self) -> tuple[int, ...]:
        if self.spam_fraction <= 0:
            return ()
        count = max(1, round(self.adversary_fraction * self.chains))
        count = min(count, self.chains - 1)   # keep at least one honest chain
        return tuple(range(self.chains - count, self.chains))

    def honest_chains(self) -> tuple[int, ...]:
        bad = set(self.adversarial_chains())
        return tuple(c for c in range(self.chains) if c not in bad)

    def committee_size(self) -> int:
        return max(1, (self.fleet_size + 5) // 10)   # tenth, rounded half-up

    def orphanage_critical_spam(self) -> float:
        """Spam share above which wasted approval slots dominate."""
        return (self.tip_sample - 1) / self.tip_sample


_FIELD_NAMES = {f.name for f in dataclasses.fields(ScenarioConfig)}
_DS_FIELDS = {f.name for f in dataclasses.fields(DoubleSpendPlan)}


def _check(cfg: ScenarioConfig) -> ScenarioConfig:
    if cfg.chains < 1:
        raise ConfigError("chains must be at least 1")
    if cfg.fleet_size < 1:
        raise ConfigError("fleet_size must be at least 1")
    if cfg.accounts < 1:
        raise ConfigError("accounts must be at least 1")
    if cfg.tip_sample < 1:
        raise ConfigError("tip_sample must be at least 1")
    if not 0.0 <= cfg.straggler_fraction <= 1.0:
        raise ConfigError("straggler_fraction must be within [0, 1]")
    if not 0.0 < cfg.confirm_threshold <= 1.0:
        raise ConfigError("confirm_threshold must be within (0, 1]")
    if not 0.0 <= cfg.spam_fraction <= 1.0:
        raise ConfigError("spam_fraction must be within [0, 1]")
    if not 0.0 <= cfg.adversary_fraction <= 1.0:
        raise ConfigError("adversary_fraction must be within [0, 1]")
    if not 0.0 <= cfg.invalid_tx_fraction <= 1.0:
        raise ConfigError("invalid_tx_fraction must be within [0, 1]")
    if cfg.issuance_rate <= 0:
        raise ConfigError("issuance_rate must be positive")
    if cfg.duration_min <= 0:
        raise ConfigError("duration_min must be positive")
    if cfg.genesis_balance < 0:
        raise ConfigError("genesis_balance must be non-negative")
    if cfg.active_rows < 0:
        raise ConfigError("active_rows must be non-negative")
    if cfg.amount_max < 1:
        raise ConfigError("amount_max must be at least 1")
    for name in ("link_latency_ms", "bandwidth_mbps", "task_timeout_ms",
                 "vote_timeout_ms", "worker_ms_per_row",
                 "fallback_ms_per_row", "ledger_interval_s",
                 "tip_pool_sample_s"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.double_spend.pairs < 0 or cfg.double_spend.regular < 0:
        raise ConfigError("double_spend counts must be non-negative")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    return cfg


def config_from_mapping(data: Mapping[str, Any]) -> ScenarioConfig:
    """Build a validated config; unknown fields are rejected by name."""
    if not isinstance(data, Mapping):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown configuration field {unknown[0]!r}")
    kwargs = dict(data)
    if "double_spend" in kwargs:
        ds = kwargs["double_spend"]
        if not isinstance(ds, Mapping):
            raise ConfigError("double_spend must be an object")
        bad = sorted(set(ds) - _DS_FIELDS)
        if bad:
            raise ConfigError(f"unknown configuration field "
                              f"'double_spend.{bad[0]}'")
        kwargs["double_spend"] = DoubleSpendPlan(**{k: int(v)
                                                    for k, v in ds.items()})
    try:
        cfg = ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return _check(cfg)


def load_config(path: str | Path) -> ScenarioConfig:
    """Load and validate a JSON scenario file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return config_from_mapping(data)


def config_to_mapping(cfg: ScenarioConfig) -> dict[str, Any]:
    data = dataclasses.asdict(cfg)
    return data


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_mapping(cfg), indent=2,
                                     sort_keys=True) + "\n")


def replace(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    """Validated copy-with-changes."""
    if "double_spend" in changes and isinstance(changes["double_spend"],
                                                Mapping):
        changes["double_spend"] = DoubleSpendPlan(**changes["double_spend"])
    return _check(dataclasses.replace(cfg, **changes))
