"""Tunable limits and defaults, overridable per call and via environment."""

from __future__ import annotations

import os
from dataclasses import dataclass


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None:
        return default
    return int(raw)


# Hard cap on generated space sizes; beyond this a CapacityError is raised.
MAX_POINTS = _env_int("COARSECAT_MAX_POINTS", 20_000_000)

# Pair scans up to this many pairs run exhaustively; larger scans fall back
# to a seeded uniform subsample of SUBSAMPLE_PAIRS pairs (seed recorded in
# the certificate, which is marked "sampled").
PAIR_BUDGET = _env_int("COARSECAT_PAIR_BUDGET", 100_000_000)
SUBSAMPLE_PAIRS = _env_int("COARSECAT_SUBSAMPLE_PAIRS", 2_000_000)

DEFAULT_SEED = 20_240_601

# "Controlled" certification: rho_upper(R_int)/R_int must stay below this
# slope, and rho_lower(R_int/2) must reach the lower threshold.  A finite
# truncation cannot certify the paper's for-all-r quantifier; these are the
# documented stand-ins.
CONTROL_SLOPE_LIMIT = 8
CONTROL_LOWER_THRESHOLD = 1

# Schedule constants; the proof's two separation arguments need factors
# > 2 and > 3, so 4 and 8 leave audit margin.
C_LAMBDA = 4
C_R = 8


class CapacityError(RuntimeError):
    """A construction exceeded the configured point or pair budget."""


class SchemaError(ValueError):
    """A JSON artifact failed validation."""


@dataclass
class ScanBudget:
    """Per-call pair scan policy."""

    budget: int = PAIR_BUDGET
    subsample: int = SUBSAMPLE_PAIRS
    seed: int = DEFAULT_SEED

    def plan(self, total_pairs: int) -> tuple[bool, int]:
        """Return (sampled, n_pairs_to_scan)."""
        if total_pairs <= self.budget:
            return False, total_pairs
        return True, min(self.subsample, total_pairs)
