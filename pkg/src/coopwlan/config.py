"""Simulation configuration: bundled defaults and file loading.

A `SimConfig` collects the per-layer knob dataclasses (link budget, rate
adaptation, mobility, MAC timings) plus the handful of scalars that only
the experiment harness cares about.  `load_config` reads overrides from a
JSON or YAML file; every unknown key is a hard error so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .macsim import MacTimings
from .mobility import MobilityConfig
from .phy import LinkBudget
from .rate_adapt import AdaptConfig

__all__ = ["SimConfig", "load_config"]


def _desk_adapt() -> AdaptConfig:
    # Trimmed Monte-Carlo budgets: the harness runs the optimizers for
    # every station of every topology, so the library defaults (600/4800)
    # would dominate the wall clock.  Decision quality degrades gracefully,
    # the PER target itself is unchanged.
    return AdaptConfig(per_trials=240, max_trials=960)


@dataclass(frozen=True)
class SimConfig:
    """Everything a reproducible experiment run depends on."""

    budget: LinkBudget = field(default_factory=LinkBudget)
    adapt: AdaptConfig = field(default_factory=_desk_adapt)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    timings: MacTimings = field(default_factory=MacTimings)
    pdu_bytes: int = 1500
    #: seconds between rate-adaptation updates while stations move
    epoch_s: float = 2.0
    #: per-station constant-bit-rate load for matched-traffic runs (bit/s)
    matched_load_bps: float = 50_000.0
    #: Monte-Carlo topologies per cell when building the position-averaged table
    uc_topologies_per_cell: int = 500
    probe_distances_m: tuple[float, ...] = (100.0, 150.0, 200.0, 250.0, 300.0)

    def __post_init__(self) -> None:
        if self.pdu_bytes <= 0:
            raise ValueError("pdu_bytes must be positive")
        if self.epoch_s <= 0.0:
            raise ValueError("epoch_s must be positive")
        if self.matched_load_bps <= 0.0:
            raise ValueError("matched_load_bps must be positive")
        if self.uc_topologies_per_cell < 2:
            raise ValueError("uc_topologies_per_cell must be at least 2")
        if not self.probe_distances_m:
            raise ValueError("probe_distances_m is empty")
        if any(d <= 0.0 for d in self.probe_distances_m):
            raise ValueError("probe distances must be positive")
        if self.budget.cell_radius_m != self.mobility.cell_radius:
            raise ValueError("budget.cell_radius_m and mobility.cell_radius disagree")
        if self.adapt.pdu_bytes != self.pdu_bytes:
            raise ValueError("adapt.pdu_bytes and pdu_bytes disagree")


# Top-level file keys that name a whole section, with their default factory.
_SECTIONS = {
    "budget": LinkBudget,
    "adapt": _desk_adapt,
    "mobility": MobilityConfig,
    "timings": MacTimings,
}

# Shorthand scalar keys and where they land.  A key may fan out to several
# fields when the layers must stay consistent.
_ALIASES: dict[str, tuple[tuple[str, str], ...]] = {
    "gamma": (("adapt", "gamma"),),
    "cell_radius_m": (("budget", "cell_radius_m"), ("mobility", "cell_radius")),
    "path_loss_exponent": (("budget", "path_loss_exponent"),),
    "edge_es_n0": (("budget", "edge_es_n0"),),
    "v_min": (("mobility", "v_min"),),
    "v_max": (("mobility", "v_max"),),
    "t_min": (("mobility", "t_min"),),
    "t_max": (("mobility", "t_max"),),
    "dwell": (("mobility", "dwell"),),
    "cw_min": (("timings", "cw_min"),),
    "cw_max": (("timings", "cw_max"),),
    "retry_limit": (("timings", "retry_limit"),),
    "per_trials": (("adapt", "per_trials"),),
    "max_trials": (("adapt", "max_trials"),),
    "pdu_bytes": (("", "pdu_bytes"), ("adapt", "pdu_bytes")),
}

_TOP_SCALARS = (
    "epoch_s",
    "matched_load_bps",
    "uc_topologies_per_cell",
    "probe_distances_m",
)


def _parse_file(path: Path) -> dict:
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            import yaml

            data = yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError("config file must hold a mapping at the top level")
    return data


def _build_section(name: str, default, overrides: dict):
    known = {f.name for f in dataclasses.fields(default)}
    for key in overrides:
        if key not in known:
            raise ValueError(f"unknown config field {name + '.' + key!r}")
    return dataclasses.replace(default, **overrides)


def load_config(path) -> SimConfig:
    """Read a JSON/YAML override file on top of the built-in defaults.

    Accepts either per-section mappings (``{"mobility": {"v_max": 5}}``)
    or the flat shorthand keys (``{"v_max": 5, "gamma": 0.1}``).  Raises
    ``ValueError`` naming the offending field for anything unknown or out
    of range; an empty file yields the defaults unchanged.
    """
    data = _parse_file(Path(path))
    sections: dict[str, dict] = {name: {} for name in _SECTIONS}
    top: dict[str, object] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ValueError(f"config section {key!r} must be a mapping")
            sections[key].update(value)
        elif key in _ALIASES:
            for section, fname in _ALIASES[key]:
                if section:
                    sections[section][fname] = value
                else:
                    top[fname] = value
        elif key in _TOP_SCALARS:
            top[key] = value
        else:
            raise ValueError(f"unknown config field {key!r}")
    if "probe_distances_m" in top:
        top["probe_distances_m"] = tuple(float(d) for d in top["probe_distances_m"])

    kwargs: dict[str, object] = dict(top)
    for name, factory in _SECTIONS.items():
        kwargs[name] = _build_section(name, factory(), sections[name])
    return SimConfig(**kwargs)
