"""Synthetic human operator for closed-loop testing.

The operator holds a latent trust value per robot, sends status queries and
conflicting go-to instructions at trust-dependent Poisson rates (low trust
means micromanagement), updates its trust in response to robot behavior,
and performs the human's own sub-tasks (treat, search) greedily.  It is a
test double with documented parameters, not a model of human behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from remsa.sim.comms import CommandMessage
from remsa.sim.world import (
    HUMAN,
    SEARCH,
    TREAT,
    AgentState,
    SubTask,
    WorldState,
    _manhattan,
)


@dataclass(frozen=True)
class OperatorParams:
    r0: float = 0.05  # status-query rate per tick at zero trust
    r1: float = 0.02  # conflicting-instruction rate per tick at zero trust
    c: float = 2.0  # exponential trust suppression of both rates
    u_explain: float = 0.05  # trust gain on a refusal carrying a repair
    u_refuse: float = 0.1  # trust loss on a bare refusal
    u_obey: float = 0.02  # trust gain on obedience
    u_success: float = 0.05  # trust gain on an observed rescue
    initial_trust: float = 0.3


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


@dataclass
class SyntheticOperator:
    params: OperatorParams
    robot_ids: tuple[str, ...]
    rng: np.random.Generator
    trust: dict[str, float] = field(init=False)
    # buildings whose priority a robot has explained; instructions toward
    # robots working on these are suppressed (the explanation landed)
    acknowledged: set[int] = field(init=False, default_factory=set)

    def __post_init__(self) -> None:
        self.trust = {r: self.params.initial_trust for r in self.robot_ids}

    # -- command generation -------------------------------------------------

    def query_rate(self, robot: str) -> float:
        return self.params.r0 * math.exp(-self.params.c * self.trust[robot])

    def instruct_rate(self, robot: str) -> float:
        return self.params.r1 * math.exp(-self.params.c * self.trust[robot])

    def commands(self, world: WorldState, tick: int) -> list[CommandMessage]:
        out = []
        for robot in self.robot_ids:
            if self.rng.random() < self.query_rate(robot):
                out.append(CommandMessage("status_query", "H", robot, tick))
            if self.rng.random() < self.instruct_rate(robot):
                target = self._instruct_target(world, robot)
                if target is not None:
                    out.append(
                        CommandMessage(
                            "instruct_goto", "H", robot, tick,
                            slots={"building": target},
                        )
                    )
        return out

    def _robot_target_building(self, world: WorldState, robot: str) -> int | None:
        task = world.agents[robot].current_subtask
        if task is None:
            return None
        if task.kind == "carry_to_shelter":
            return world.victims[task.target].building
        if isinstance(task.target, int):
            return task.target
        return None

    def _desired_buildings(self, world: WorldState) -> list[int]:
        """What the operator (gas-blind) thinks needs doing, best first:
        buildings with known stranded victims, then fires, then unexplored
        buildings."""
        victims = sorted(
            {
                world.victims[v.id].building
                for v in world.victims
                if not v.evacuated
                and v.carried_by is None
                and world.buildings[v.building].searched
            }
        )
        fires = sorted(b.id for b in world.buildings if b.fire_blocked)
        unexplored = sorted(
            b.id for b in world.buildings if not b.searched and not b.fire_blocked
        )
        out = []
        for b in victims + fires + unexplored:
            if b not in out:
                out.append(b)
        return out

    def _instruct_target(self, world: WorldState, robot: str) -> int | None:
        """Pick the building this robot 'should' be at.  Robots working on
        a building whose priority was explained are left alone."""
        current = self._robot_target_building(world, robot)
        if current is not None and current in self.acknowledged:
            return None
        desired = self._desired_buildings(world)
        for b in desired:
            if b != current:
                return b
        return None

    # -- trust updates ------------------------------------------------------

    def note_obeyed(self, robot: str) -> None:
        self.trust[robot] = _clamp01(self.trust[robot] + self.params.u_obey)

    def note_bare_refusal(self, robot: str) -> None:
        self.trust[robot] = _clamp01(self.trust[robot] - self.params.u_refuse)

    def note_repaired_refusal(self, robot: str, explained_building: int | None) -> None:
        self.trust[robot] = _clamp01(self.trust[robot] + self.params.u_explain)
        if explained_building is not None:
            self.acknowledged.add(explained_building)

    def note_info_share(self, explained_building: int) -> None:
        """An unprompted priority explanation; the operator stops
        redirecting robots that work on the explained building."""
        self.acknowledged.add(explained_building)

    def note_success(self, robot: str) -> None:
        self.trust[robot] = _clamp01(self.trust[robot] + self.params.u_success)

    # -- the human's own work ----------------------------------------------

    def human_subtask(self, world: WorldState, human: AgentState) -> SubTask | None:
        """Greedy: treat the nearest known untreated injured victim, else
        help search the nearest unexplored accessible building."""
        assert human.role == HUMAN
        treatable = [
            v
            for v in world.victims
            if v.injured
            and not v.treated
            and not v.evacuated
            and world.buildings[v.building].searched
            and not world.buildings[v.building].fire_blocked
        ]
        if treatable:
            best = min(
                treatable,
                key=lambda v: (
                    _manhattan(human.cell, world.buildings[v.building].cell),
                    v.id,
                ),
            )
            return SubTask(TREAT, best.building)
        robot_searches = {
            a.current_subtask.target
            for a in world.agents.values()
            if a.role != HUMAN
            and a.current_subtask is not None
            and a.current_subtask.kind == SEARCH
        }
        unsearched = [
            b
            for b in world.buildings
            if not b.searched and not b.fire_blocked and b.id not in robot_searches
        ]
        if unsearched:
            best = min(
                unsearched, key=lambda b: (_manhattan(human.cell, b.cell), b.id)
            )
            return SubTask(SEARCH, best.id)
        return None
