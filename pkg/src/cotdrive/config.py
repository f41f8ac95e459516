"""Tunable constants of the expert policy, overridable from a scenario's ``[config]`` table."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Mapping

DT = 0.05
FPS = 20
LOG_EVERY = 10
KMH_PER_MPS = 3.6


def kmh_to_mps(v: float) -> float:
    return v / KMH_PER_MPS


def mps_to_kmh(v: float) -> float:
    return v * KMH_PER_MPS


@dataclass(frozen=True)
class AheadThresholds:
    # selector: distance-based when gap < near_gap, or gap < mid_gap and |dv| < mid_dv
    near_gap: float = 5.0
    mid_gap: float = 10.0
    mid_dv: float = 3.0
    # gap cut-points (m) for Brake / SlowDown / FollowAhead
    dist_cuts: tuple[float, float, float] = (4.0, 8.0, 14.0)
    # time-to-collision cut-points (s) for Brake / SlowDown / FollowAhead
    ttc_cuts: tuple[float, float, float] = (2.0, 4.0, 7.0)
    band: float = 0.2
    near_static_kmh: float = 5.0
    search_range: float = 100.0
    lane_half_width: float = 1.75

    def __post_init__(self):
        if not 0.0 <= self.band <= 0.5:
            raise ValueError(f"band must lie in [0, 0.5], got {self.band}")
        for name in ("dist_cuts", "ttc_cuts"):
            cuts = tuple(float(c) for c in getattr(self, name))
            if len(cuts) != 3 or not (0 < cuts[0] < cuts[1] < cuts[2]):
                raise ValueError(f"{name} must be three increasing positive values, got {cuts}")
            object.__setattr__(self, name, cuts)


@dataclass(frozen=True)
class SpeedTable:
    """Target speeds (km/h) per final decision; ``None`` means derived from the scene."""

    slow_approach: float = 10.0
    cautious_turn: float = 30.0
    slow_down_factor: float = 0.75
    brake: float = 0.0


@dataclass(frozen=True)
class PIDGains:
    kp: float
    ki: float
    kd: float
    buffer: int

    def __post_init__(self):
        if self.buffer < 1:
            raise ValueError("PID buffer must hold at least one frame")


LONGITUDINAL_GAINS = PIDGains(0.3, 0.05, 0.0, 20)
LATERAL_GAINS = PIDGains(0.8, 0.3, 0.0, 10)


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.9
    max_steer: float = 1.22
    max_accel: float = 3.0
    max_brake: float = 6.0
    dt: float = DT

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise ValueError("wheelbase must be positive")
        if self.dt != DT:
            raise ValueError(f"dt is fixed at {DT} s (20 FPS lockstep)")


@dataclass(frozen=True)
class HazardConfig:
    brake_decel: float = 5.0
    yellow_is_red: bool = True
    dangerous_after: int = 5
    dangerous_distance: float = 3.0
    short_horizon: int = 40
    long_horizon: int = 60
    horizon_switch_kmh: float = 80.0


@dataclass(frozen=True)
class PolicyConfig:
    ahead: AheadThresholds = field(default_factory=AheadThresholds)
    speeds: SpeedTable = field(default_factory=SpeedTable)
    longitudinal: PIDGains = LONGITUDINAL_GAINS
    lateral: PIDGains = LATERAL_GAINS
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    hazards: HazardConfig = field(default_factory=HazardConfig)

    _SECTIONS = {
        "ahead": AheadThresholds,
        "speeds": SpeedTable,
        "longitudinal": PIDGains,
        "lateral": PIDGains,
        "vehicle": VehicleParams,
        "hazards": HazardConfig,
    }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any] | None) -> "PolicyConfig":
        """Build a config from a nested mapping, overriding defaults key by key."""
        base = cls()
        if not data:
            return base
        updates = {}
        for section, values in data.items():
            if section not in cls._SECTIONS:
                raise ValueError(f"config: unknown section {section!r}")
            if not isinstance(values, Mapping):
                raise ValueError(f"config.{section}: expected a table")
            current = getattr(base, section)
            known = {f.name for f in dataclasses.fields(current)}
            unknown = set(values) - known
            if unknown:
                raise ValueError(f"config.{section}: unknown keys {sorted(unknown)}")
            clean = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
            updates[section] = dataclasses.replace(current, **clean)
        return dataclasses.replace(base, **updates)
