"""Bicycle-model prediction and oriented-box geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .config import DT, VehicleParams
from .world import OBB2D, AgentState, Pose2D

MAX_STEER = 1.22


@dataclass(frozen=True)
class BicycleParams:
    wheelbase: float = 2.9
    max_steer: float = MAX_STEER
    dt: float = DT

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise ValueError("wheelbase must be positive")
        if self.dt != DT:
            raise ValueError(f"dt must be {DT} (20 FPS lockstep)")

    @classmethod
    def from_vehicle(cls, vehicle: VehicleParams) -> "BicycleParams":
        return cls(vehicle.wheelbase, vehicle.max_steer, vehicle.dt)


@dataclass
class Rollout:
    """Predicted states for frames 1..T after the current one.

    ``states`` rows are ``(x, y, yaw, speed)``; ``extents`` are the body half
    extents used to build the boxes.
    """

    states: np.ndarray
    extents: tuple[float, float]

    def __len__(self):
        return self.states.shape[0]

    @property
    def box_rows(self) -> np.ndarray:
        n = len(self)
        rows = np.empty((n, 5))
        rows[:, :3] = self.states[:, :3]
        rows[:, 3] = self.extents[0]
        rows[:, 4] = self.extents[1]
        return rows

    @property
    def poses(self) -> list[Pose2D]:
        return [Pose2D(*r[:3]) for r in self.states]

    @property
    def boxes(self) -> list[OBB2D]:
        return [OBB2D(Pose2D(*r[:3]), *self.extents) for r in self.states]


def bicycle_step(state: AgentState, params: BicycleParams = BicycleParams()) -> AgentState:
    """Advance ``state`` by one frame under its current steer and accel."""
    steer = 0.0 if state.kind == "pedestrian" else state.steer
    x, y, yaw, v = kernels.bicycle_update(
        state.pose.x, state.pose.y, state.pose.yaw, state.speed,
        steer, state.accel, params.wheelbase, params.max_steer, params.dt,
    )
    return replace(state, pose=Pose2D(x, y, yaw), speed=v)


def predict_agent_rollout(agent: AgentState, frames: int, params: BicycleParams = BicycleParams()) -> Rollout:
    """Hold the agent's current action for ``frames`` frames.

    Pedestrians keep constant velocity with no turning.
    """
    if frames <= 0:
        raise ValueError("rollout horizon must be at least one frame")
    if agent.kind == "pedestrian":
        steer, accel = 0.0, 0.0
    else:
        steer, accel = agent.steer, agent.accel
    p = agent.pose
    states = kernels.rollout_constant_action(
        p.x, p.y, p.yaw, agent.speed, steer, accel,
        params.wheelbase, params.max_steer, params.dt, int(frames),
    )
    return Rollout(states, agent.extents)


def obb_overlap(a: OBB2D, b: OBB2D) -> bool:
    """Closed-set intersection test by separating axes (touching counts)."""
    return bool(kernels.overlap_rows(np.array(a.as_row()), np.array(b.as_row()))[0])


def obb_min_distance(a: OBB2D, b: OBB2D) -> float:
    """Smallest gap between the two box boundaries, 0 if they overlap."""
    return float(kernels.min_distance_rows(np.array(a.as_row()), np.array(b.as_row()))[0])


def actuate(throttle: float, brake: float, steer: float, vehicle: VehicleParams) -> tuple[float, float]:
    """Map a normalized control command to (acceleration m/s^2, wheel angle rad)."""
    return throttle * vehicle.max_accel - brake * vehicle.max_brake, steer * vehicle.max_steer


def circle_radius(wheelbase: float, steer: float) -> float:
    return wheelbase / math.tan(steer)
