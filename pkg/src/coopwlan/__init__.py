"""Single-cell cooperative WLAN simulator.

Implements an uplink 802.11 cell in which a source station can recruit
relays that forward under a randomized distributed space-time code, next
to three baselines: plain direct transmission, single-relay CoopMAC, and
a fixed-relay-set DSTC. The package is organised bottom-up:

- phy: path loss, Rayleigh fading, QAM error formulas, STC reduction
- coding: convolutional code and PER-by-simulation with a memo cache
- per_engine: end-to-end PER estimators for the four schemes
- rate_adapt: the five rate/relay optimizers and the user-count table
- mobility: random walk with mirror reflection inside the cell disk
- macsim: DCF event engine, frame exchanges, interference probe
- harness: experiment orchestration, result rows, CSV/JSON emission
"""

__version__ = "0.1.0"

from .config import SimConfig, load_config
from .harness import (
    EXPERIMENTS,
    SCHEMES,
    ExperimentSpec,
    ResultRow,
    emit_results,
    run_experiment,
)

__all__ = [
    "__version__",
    "SimConfig",
    "load_config",
    "EXPERIMENTS",
    "SCHEMES",
    "ExperimentSpec",
    "ResultRow",
    "run_experiment",
    "emit_results",
]
