"""Discrete-tick world dynamics and the robot task planner.

Agents move one 4-neighbor step per tick; building work (search, treat,
extinguish, shut) completes after a fixed number of consecutive ticks on
site.  Capabilities are complementary and enforced: only the human treats,
only robots carry, extinguish, and sense gas.  Everything is deterministic
given the actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from remsa.sim.scenario import (
    EXTINGUISH_TICKS,
    GAS_DETECT_DENSITY,
    SEARCH_TICKS,
    SHUT_TICKS,
    TREAT_TICKS,
    Cell,
    ScenarioConfig,
)

HUMAN = "human"
ROBOT = "robot"

GOTO = "goto"
SEARCH = "search_assess"
EXTINGUISH = "extinguish_fire"
TREAT = "treat"
CARRY = "carry_to_shelter"
SHUT_GAS = "shut_gas"

TASK_DURATIONS = {
    SEARCH: SEARCH_TICKS,
    TREAT: TREAT_TICKS,
    EXTINGUISH: EXTINGUISH_TICKS,
    SHUT_GAS: SHUT_TICKS,
}

RULE_HUMAN_CARRY = "humans cannot carry"
RULE_HUMAN_EXTINGUISH = "humans cannot extinguish fires"
RULE_ROBOT_TREAT = "robots cannot treat"
RULE_FIRE_BLOCKS = "building cannot be accessed until the fire is put down"
RULE_TREAT_BEFORE_CARRY = "an injured victim must be treated before being carried"


class CapabilityError(ValueError):
    """An agent attempted a sub-task outside its role's capabilities."""


class DependencyError(ValueError):
    """A sub-task was attempted before its prerequisite completed."""


@dataclass(frozen=True)
class SubTask:
    kind: str
    target: int | Cell | None = None  # building id, victim id, or cell

    def to_dict(self) -> dict:
        target = list(self.target) if isinstance(self.target, tuple) else self.target
        return {"kind": self.kind, "target": target}


@dataclass
class Victim:
    id: int
    building: int
    injured: bool
    treated: bool = False
    evacuated: bool = False
    carried_by: str | None = None


@dataclass
class Building:
    id: int
    cell: Cell
    fire_blocked: bool
    gas_leak: bool
    gas_density: float = 0.0
    searched: bool = False


@dataclass
class AgentState:
    id: str
    role: str
    cell: Cell
    carrying: int | None = None
    current_subtask: SubTask | None = None
    last_task: SubTask | None = None
    work_ticks: int = 0
    L_alpha: float | None = None  # robots only


@dataclass
class WorldState:
    config: ScenarioConfig
    tick: int
    buildings: list[Building]
    victims: list[Victim]
    agents: dict[str, AgentState]
    shelter_cell: Cell
    exploded: bool = False
    gas_shut: bool = False
    gas_known: bool = False  # latched when a robot first senses the leak
    completions: list[dict] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.config.width

    @property
    def height(self) -> int:
        return self.config.height

    def leak_active(self) -> bool:
        return (
            self.config.gas_building is not None
            and not self.gas_shut
            and not self.exploded
        )

    def task_complete(self) -> bool:
        if self.exploded:
            return False
        if any(not v.evacuated for v in self.victims):
            return False
        if any(b.fire_blocked or not b.searched for b in self.buildings):
            return False
        return not self.leak_active()

    def to_dict(self) -> dict:
        """Full snapshot; gas readings are robot-side only and therefore
        reported per building but flagged, so servers can redact them for
        the human-facing view."""
        return {
            "tick": self.tick,
            "width": self.width,
            "height": self.height,
            "shelter": list(self.shelter_cell),
            "exploded": self.exploded,
            "gas_shut": self.gas_shut,
            "buildings": [
                {
                    "id": b.id,
                    "cell": list(b.cell),
                    "fire_blocked": b.fire_blocked,
                    "searched": b.searched,
                    "gas_leak": b.gas_leak,
                    "gas_density": b.gas_density,
                }
                for b in self.buildings
            ],
            "victims": [
                {
                    "id": v.id,
                    "building": v.building,
                    "injured": v.injured,
                    "treated": v.treated,
                    "evacuated": v.evacuated,
                    "carried_by": v.carried_by,
                }
                for v in self.victims
            ],
            "agents": [
                {
                    "id": a.id,
                    "role": a.role,
                    "cell": list(a.cell),
                    "carrying": a.carrying,
                    "subtask": None
                    if a.current_subtask is None
                    else a.current_subtask.to_dict(),
                }
                for a in sorted(self.agents.values(), key=lambda a: a.id)
            ],
        }


def build_world(config: ScenarioConfig) -> WorldState:
    buildings = [
        Building(
            id=b,
            cell=cell,
            fire_blocked=config.fire_blocked[b],
            gas_leak=(b == config.gas_building),
        )
        for b, cell in enumerate(config.building_cells)
    ]
    victims = [
        Victim(id=v, building=b, injured=injured)
        for v, (b, injured) in enumerate(config.victims)
    ]
    agents = {
        "H": AgentState(id="H", role=HUMAN, cell=config.shelter_cell),
        "R1": AgentState(id="R1", role=ROBOT, cell=config.shelter_cell, L_alpha=0.5),
        "R2": AgentState(id="R2", role=ROBOT, cell=config.shelter_cell, L_alpha=0.5),
    }
    return WorldState(
        config=config,
        tick=0,
        buildings=buildings,
        victims=victims,
        agents=agents,
        shelter_cell=config.shelter_cell,
    )


def _manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _step_toward(cell: Cell, dest: Cell) -> Cell:
    x, y = cell
    if x != dest[0]:
        return (x + (1 if dest[0] > x else -1), y)
    if y != dest[1]:
        return (x, y + (1 if dest[1] > y else -1))
    return cell


def validate_action(world: WorldState, agent: AgentState, task: SubTask) -> None:
    """Reject illegal actions outright, naming the violated rule."""
    if agent.role == HUMAN:
        if task.kind == CARRY:
            raise CapabilityError(RULE_HUMAN_CARRY)
        if task.kind == EXTINGUISH:
            raise CapabilityError(RULE_HUMAN_EXTINGUISH)
    else:
        if task.kind == TREAT:
            raise CapabilityError(RULE_ROBOT_TREAT)
    if task.kind in (SEARCH, TREAT):
        building = world.buildings[task.target]
        if building.fire_blocked:
            raise DependencyError(RULE_FIRE_BLOCKS)
    if task.kind == CARRY:
        victim = world.victims[task.target]
        if victim.injured and not victim.treated:
            raise DependencyError(RULE_TREAT_BEFORE_CARRY)
        if world.buildings[victim.building].fire_blocked and not victim.evacuated:
            raise DependencyError(RULE_FIRE_BLOCKS)


def _task_destination(world: WorldState, agent: AgentState, task: SubTask) -> Cell:
    if task.kind == GOTO:
        if isinstance(task.target, int):
            return world.buildings[task.target].cell
        return task.target
    if task.kind == CARRY:
        if agent.carrying is not None:
            return world.shelter_cell
        return world.buildings[world.victims[task.target].building].cell
    return world.buildings[task.target].cell


def step(world: WorldState, actions: dict[str, SubTask | None]) -> WorldState:
    """Advance one tick: validate, move/work each agent (in id order),
    then apply gas dynamics.  Mutates and returns the world."""
    world.completions = []
    for agent_id in sorted(actions):
        task = actions[agent_id]
        if task is not None:
            validate_action(world, world.agents[agent_id], task)
    for agent_id in sorted(world.agents):
        agent = world.agents[agent_id]
        task = actions.get(agent_id)
        if task != agent.last_task:
            agent.work_ticks = 0
        agent.last_task = task
        agent.current_subtask = task
        if task is None:
            continue
        dest = _task_destination(world, agent, task)
        if agent.cell != dest:
            agent.cell = _step_toward(agent.cell, dest)
            if agent.cell != dest:
                continue
            # arrival counts as the first on-site tick for instant effects
        _apply_on_site(world, agent, task)
    _gas_tick(world)
    world.tick += 1
    return world


def _complete(world: WorldState, agent: AgentState, kind: str, target) -> None:
    world.completions.append(
        {"tick": world.tick, "agent": agent.id, "kind": kind, "target": target}
    )


def _apply_on_site(world: WorldState, agent: AgentState, task: SubTask) -> None:
    if task.kind == GOTO:
        agent.current_subtask = None
        _complete(world, agent, GOTO, task.to_dict()["target"])
        return
    if task.kind == CARRY:
        victim = world.victims[task.target]
        if agent.carrying is None:
            if victim.carried_by is None and not victim.evacuated:
                victim.carried_by = agent.id
                agent.carrying = victim.id
            else:  # someone else got there first
                agent.current_subtask = None
            return
        if agent.cell == world.shelter_cell and agent.carrying == victim.id:
            victim.evacuated = True
            victim.carried_by = None
            agent.carrying = None
            agent.current_subtask = None
            _complete(world, agent, CARRY, victim.id)
        return
    agent.work_ticks += 1
    if agent.work_ticks < TASK_DURATIONS[task.kind]:
        return
    building = world.buildings[task.target]
    if task.kind == SEARCH:
        building.searched = True
    elif task.kind == EXTINGUISH:
        building.fire_blocked = False
    elif task.kind == SHUT_GAS:
        if building.gas_leak:
            world.gas_shut = True
    elif task.kind == TREAT:
        for victim in world.victims:
            if (
                victim.building == building.id
                and victim.injured
                and not victim.treated
                and not victim.evacuated
            ):
                victim.treated = True
                break
    agent.current_subtask = None
    agent.work_ticks = 0
    _complete(world, agent, task.kind, task.target)


def _gas_tick(world: WorldState) -> None:
    if not world.leak_active():
        return
    building = world.buildings[world.config.gas_building]
    building.gas_density += world.config.gas_rate
    if building.gas_density >= world.config.gas_threshold:
        world.exploded = True
    # robots sense the leak once it is dense enough; the human never does
    if not world.gas_known and building.gas_density >= GAS_DETECT_DENSITY:
        world.gas_known = True


def _assigned_targets(world: WorldState, kind: str, except_agent: str) -> set:
    out = set()
    for agent in world.agents.values():
        if agent.id == except_agent or agent.role != ROBOT:
            continue
        task = agent.current_subtask
        if task is not None and task.kind == kind:
            out.add(task.target)
    return out


def _task_still_valid(world: WorldState, task: SubTask) -> bool:
    if task.kind == EXTINGUISH:
        return world.buildings[task.target].fire_blocked
    if task.kind == SEARCH:
        b = world.buildings[task.target]
        return not b.searched and not b.fire_blocked
    if task.kind == SHUT_GAS:
        return world.leak_active()
    if task.kind == CARRY:
        v = world.victims[task.target]
        return not v.evacuated and v.carried_by is None
    return False


def robot_policy(world: WorldState, robot: AgentState) -> SubTask | None:
    """Autonomous task selection, in fixed priority order: shut the sensed
    gas leak, extinguish the nearest fire, carry deliverable victims to the
    shelter, search unexplored buildings.  Ties break on lowest id."""
    if robot.carrying is not None:
        return SubTask(CARRY, robot.carrying)
    if world.gas_known and world.leak_active():
        taken = _assigned_targets(world, SHUT_GAS, robot.id)
        if world.config.gas_building not in taken:
            return SubTask(SHUT_GAS, world.config.gas_building)
    # stay on a still-valid task; re-planning every tick makes paired
    # planners flap between each other's targets
    current = robot.current_subtask
    if current is not None and _task_still_valid(world, current):
        return current
    taken = _assigned_targets(world, EXTINGUISH, robot.id)
    open_fires = [b for b in world.buildings if b.fire_blocked and b.id not in taken]
    if open_fires:
        best = min(open_fires, key=lambda b: (_manhattan(robot.cell, b.cell), b.id))
        return SubTask(EXTINGUISH, best.id)
    taken = _assigned_targets(world, CARRY, robot.id)
    deliverable = [
        v
        for v in world.victims
        if not v.evacuated
        and v.carried_by is None
        and v.id not in taken
        and world.buildings[v.building].searched
        and not world.buildings[v.building].fire_blocked
        and (not v.injured or v.treated)
    ]
    if deliverable:
        best = min(
            deliverable,
            key=lambda v: (_manhattan(robot.cell, world.buildings[v.building].cell), v.id),
        )
        return SubTask(CARRY, best.id)
    taken = _assigned_targets(world, SEARCH, robot.id)
    unsearched = [
        b
        for b in world.buildings
        if not b.searched and not b.fire_blocked and b.id not in taken
    ]
    if unsearched:
        best = min(unsearched, key=lambda b: (_manhattan(robot.cell, b.cell), b.id))
        return SubTask(SEARCH, best.id)
    return None
