from remsa.sim.scenario import ScenarioConfig, feasible, generate_scenario
from remsa.sim.world import (
    AgentState,
    Building,
    CapabilityError,
    DependencyError,
    SubTask,
    Victim,
    WorldState,
    build_world,
    robot_policy,
    step,
)

__all__ = [
    "AgentState",
    "Building",
    "CapabilityError",
    "DependencyError",
    "ScenarioConfig",
    "SubTask",
    "Victim",
    "WorldState",
    "build_world",
    "feasible",
    "generate_scenario",
    "robot_policy",
    "step",
]
