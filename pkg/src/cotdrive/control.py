"""Longitudinal and lateral PID control."""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .config import DT, LATERAL_GAINS, LONGITUDINAL_GAINS, PIDGains
from .world import EgoState, normalize_yaw


class PIDController:
    """PID whose integral term is the mean of the last ``n`` errors."""

    def __init__(self, kp: float, ki: float, kd: float, n: int, dt: float = DT):
        if n < 1:
            raise ValueError("buffer must hold at least one error")
        self.kp, self.ki, self.kd = kp, ki, kd
        self.n = n
        self.dt = dt
        self.buffer: deque[float] = deque(maxlen=n)

    @classmethod
    def from_gains(cls, gains: PIDGains) -> "PIDController":
        return cls(gains.kp, gains.ki, gains.kd, gains.buffer)

    @classmethod
    def longitudinal(cls) -> "PIDController":
        return cls.from_gains(LONGITUDINAL_GAINS)

    @classmethod
    def lateral(cls) -> "PIDController":
        return cls.from_gains(LATERAL_GAINS)

    def step(self, error: float) -> float:
        if not math.isfinite(error):
            raise ValueError("PID error must be finite")
        prev = self.buffer[-1] if self.buffer else None
        self.buffer.append(float(error))
        integral = sum(self.buffer) / len(self.buffer)
        derivative = 0.0 if prev is None else (error - prev) / self.dt
        return self.kp * error + self.ki * integral + self.kd * derivative

    def copy(self) -> "PIDController":
        return copy.deepcopy(self)

    def ring_state(self) -> tuple[np.ndarray, int, int]:
        """Buffer as (ring array, count, head) for the rollout kernel."""
        ring = np.zeros(self.n)
        count = len(self.buffer)
        ring[:count] = list(self.buffer)
        return ring, count, count % self.n

    def gains(self) -> np.ndarray:
        return np.array([self.kp, self.ki, self.kd])


def pid_step(ctrl: PIDController, error: float) -> float:
    return ctrl.step(error)


@dataclass(frozen=True)
class ControlCommand:
    throttle: float = 0.0
    brake: float = 0.0
    steer: float = 0.0

    def __post_init__(self):
        if self.throttle * self.brake != 0:
            raise ValueError("throttle and brake are mutually exclusive")


def longitudinal_control(ego_speed_kmh: float, target_kmh: float, ctrl: PIDController) -> tuple[float, float]:
    """Return (throttle, brake) driving the ego toward ``target_kmh``."""
    if ego_speed_kmh < 0 or target_kmh < 0:
        raise ValueError("speeds must be >= 0")
    if target_kmh == 0:
        return 0.0, 1.0
    raw = ctrl.step(target_kmh - ego_speed_kmh)
    if raw >= 0:
        return min(raw, 1.0), 0.0
    return 0.0, min(-raw, 1.0)


def heading_error(ego: EgoState, waypoint_local: tuple[float, float]) -> float:
    x, y = waypoint_local
    if x == 0 and y == 0:
        raise ValueError("steering waypoint coincides with the ego position")
    return normalize_yaw(math.atan2(y, x))


def lateral_control(ego: EgoState, first_waypoint: tuple[float, float], ctrl: PIDController) -> float:
    """Steer in [-1, 1] toward a waypoint given in the ego frame."""
    return min(max(ctrl.step(heading_error(ego, first_waypoint)), -1.0), 1.0)
