import math

import pytest
from hypothesis import HealthCheck, settings

from cotdrive.world import scenario_from_dict

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def straight_scenario(length=300.0, limit=40.0, speed=0.0, cap=20.0, agents=(), volumes=(), sid="straight_01",
                      stype="ahead_vehicle", trigger=None):
    """Scenario dict for a straight route along +x."""
    return {
        "scenario_id": sid,
        "scenario_type": stype,
        "weather": "clear",
        "time_of_day": "noon",
        "speed_limit_kmh": limit,
        "duration_cap_s": cap,
        "trigger_point": list(trigger or (length, 0.0)),
        "ego": {"speed_kmh": speed},
        "route": [{"x": 0.0, "y": 0.0}, {"x": length, "y": 0.0}],
        "agents": list(agents),
        "trigger_volumes": list(volumes),
    }


def arc_points(cx, cy, r, a0, a1, n):
    return [(cx + r * math.cos(a0 + (a1 - a0) * k / (n - 1)), cy + r * math.sin(a0 + (a1 - a0) * k / (n - 1)))
            for k in range(n)]


@pytest.fixture
def straight_spec():
    def make(**kw):
        return scenario_from_dict(straight_scenario(**kw))
    return make
