"""Closed-loop episode driver: world ticks, command routing, windowed trust
inference, and autonomy coordination, recorded as a replayable log.

Two conditions are supported.  The baseline holds every robot at a fixed
autonomy level (by default the operator's initially reported trust) and
refuses conflicts bare.  The trust-preserved condition infers trust from
the command traffic window by window, tracks it with the autonomy level,
and augments refusals with repair messages during revolutionary periods.
Everything is a deterministic function of (scenario, condition, seed).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from remsa.controller import (
    CAUSE_COUNTER_COMMAND,
    EVOLUTIONARY,
    REVOLUTIONARY,
    AutonomyState,
    ControllerConfig,
    coordinate_autonomy,
    decide_compliance,
    detect_inflection,
    select_repair,
)
from remsa.events import AttributeSet, EventHistory, RateModel, RelationalEvent, StatisticSpec
from remsa.sim.comms import EVENT_TYPE_COUNT, ACTIVITY_TEXT, CommandMessage
from remsa.sim.operator import OperatorParams, SyntheticOperator
from remsa.sim.scenario import ScenarioConfig
from remsa.sim.world import GOTO, SHUT_GAS, SubTask, WorldState, build_world, robot_policy, step
from remsa.trust import (
    ObservationWindow,
    TrustGrid,
    default_grid,
    init_prior,
    summarize,
    update_posterior,
)

ACTORS = ("H", "R1", "R2")
ROBOTS = ("R1", "R2")
BASELINE = "baseline_sa"
TRUST_PRESERVED = "trust_preserved_sa"

# default grounding coefficients for the command-traffic rate model:
# log base rate per candidate per second, and the trust gate slope
DEFAULT_THETA = (-3.35, -2.0)
WINDOW_TICKS = 15


def inference_specs() -> tuple[StatisticSpec, ...]:
    """Command traffic model: a shared base rate plus a trust gate on the
    human's queries and instructions."""
    return (StatisticSpec.intercept(), StatisticSpec.trust_gate({0, 1}))


@dataclass(frozen=True)
class Condition:
    name: str
    L_alpha_fixed: float | None = None  # baseline only; None = reported trust

    def __post_init__(self) -> None:
        if self.name not in (BASELINE, TRUST_PRESERVED):
            raise ValueError(f"unknown condition {self.name!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "L_alpha_fixed": self.L_alpha_fixed}

    @classmethod
    def from_dict(cls, d: dict) -> "Condition":
        return cls(name=d["name"], L_alpha_fixed=d.get("L_alpha_fixed"))


def config_hash(
    scenario: ScenarioConfig,
    condition: Condition,
    seed: int,
    theta: tuple[float, ...],
    operator_params: OperatorParams,
    window_ticks: int,
) -> str:
    blob = json.dumps(
        {
            "scenario": scenario.to_dict(),
            "condition": condition.to_dict(),
            "seed": seed,
            "theta": list(theta),
            "operator": vars(operator_params),
            "window_ticks": window_ticks,
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class EpisodeLog:
    records: list[dict]

    @property
    def header(self) -> dict:
        return self.records[0]["header"]

    @property
    def metrics(self) -> dict:
        return self.records[-1]["result"]

    def messages(self) -> list[dict]:
        return [r["message"] for r in self.records if "message" in r]

    def actions(self) -> list[dict]:
        return [r["action"] for r in self.records if "action" in r]

    def telemetry(self) -> list[dict]:
        return [r["telemetry"] for r in self.records if "telemetry" in r]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        records = []
        for n, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {n}: invalid record: {exc}") from exc
        if not records or "header" not in records[0]:
            raise ValueError("line 1: missing header record")
        if "result" not in records[-1]:
            raise ValueError(f"line {len(records)}: log truncated before the result trailer")
        return cls(records)


def _message_event(msg: CommandMessage, dt: float) -> RelationalEvent:
    return RelationalEvent(
        sender=msg.sender,
        receiver=msg.receiver,
        event_type=msg.event_type,
        weight=1.0,
        time=(msg.tick + 1) * dt,
    )


class _TrustTracker:
    """Windowed posterior + phase controller for one robot dyad."""

    def __init__(self, robot: str, model: RateModel, attrs: AttributeSet,
                 grid: TrustGrid, ctl: ControllerConfig):
        self.robot = robot
        self.dyad = ("H", robot)
        self.model = model
        self.attrs = attrs
        self.grid = grid
        self.ctl = ctl
        self.series: list[float] = []
        self.state = AutonomyState(
            L_alpha=coordinate_autonomy(
                summarize(grid, self.dyad).level, REVOLUTIONARY, ctl
            ),
            phase=REVOLUTIONARY,
        )

    def update(self, window: ObservationWindow, refused_this_window: bool) -> dict:
        self.grid = update_posterior(
            self.grid, window, self.model, self.attrs, self.dyad,
            EventHistory((), ACTORS, EVENT_TYPE_COUNT), mode="temporal",
        )
        summary = summarize(self.grid, self.dyad)
        self.series.append(summary.level)
        hint = CAUSE_COUNTER_COMMAND if refused_this_window else None
        self.state = detect_inflection(
            self.series, self.state, self.ctl,
            cause_hint=hint, window_index=window.index,
        )
        self.state.L_alpha = coordinate_autonomy(
            summary.level, self.state.phase, self.ctl
        )
        return {
            "window": window.index,
            "robot": self.robot,
            "l_beta": summary.level,
            "l_alpha": self.state.L_alpha,
            "phase": self.state.phase,
            "posterior_mean": summary.mean,
            "posterior_var": summary.var,
        }


def run_episode(
    scenario: ScenarioConfig,
    condition: Condition,
    seed: int,
    theta: tuple[float, ...] = DEFAULT_THETA,
    operator_params: OperatorParams | None = None,
    window_ticks: int = WINDOW_TICKS,
    ctl_config: ControllerConfig | None = None,
) -> EpisodeLog:
    params = operator_params or OperatorParams()
    ctl = ctl_config or ControllerConfig()
    rng = np.random.default_rng(seed)
    world = build_world(scenario)
    op = SyntheticOperator(params, ROBOTS, rng)
    dt = scenario.dt

    model = RateModel(inference_specs(), np.asarray(theta, dtype=float))
    attrs = AttributeSet(
        dyad_attrs={("H", r): {"trust": params.initial_trust} for r in ROBOTS}
    )
    trackers: dict[str, _TrustTracker] = {}
    if condition.name == TRUST_PRESERVED:
        grid = init_prior(
            default_grid(), [("H", r) for r in ROBOTS],
            reported_trust=params.initial_trust,
        )
        for r in ROBOTS:
            trackers[r] = _TrustTracker(r, model, attrs, grid, ctl)
            world.agents[r].L_alpha = trackers[r].state.L_alpha
    else:
        fixed = condition.L_alpha_fixed
        if fixed is None:
            fixed = params.initial_trust
        for r in ROBOTS:
            world.agents[r].L_alpha = fixed

    records: list[dict] = [
        {
            "header": {
                "config_hash": config_hash(
                    scenario, condition, seed, tuple(theta), params, window_ticks
                ),
                "scenario": scenario.to_dict(),
                "condition": condition.to_dict(),
                "seed": seed,
                "theta": list(theta),
                "operator": vars(params),
                "window_ticks": window_ticks,
                "actors": list(ACTORS),
                "event_type_count": EVENT_TYPE_COUNT,
            }
        }
    ]
    window_events: list[RelationalEvent] = []
    refused_in_window = {r: False for r in ROBOTS}
    overrides: dict[str, SubTask] = {}
    announced: set[int] = set()
    n_commands = 0
    success = False

    def emit(msg: CommandMessage) -> None:
        records.append({"message": msg.to_dict()})
        window_events.append(_message_event(msg, dt))

    for tick in range(scenario.tick_limit):
        for cmd in op.commands(world, tick):
            n_commands += 1
            emit(cmd)
            for reply in _handle_command(
                world, cmd, condition, trackers, op, overrides,
                refused_in_window, rng,
            ):
                emit(reply)
        actions: dict[str, SubTask | None] = {
            "H": op.human_subtask(world, world.agents["H"])
        }
        for r in ROBOTS:
            if r in overrides:
                actions[r] = overrides[r]
            else:
                actions[r] = robot_policy(world, world.agents[r])
            # publish the choice so the next robot plans around it
            world.agents[r].current_subtask = actions[r]
        if condition.name == TRUST_PRESERVED:
            # transparent deviation: announce a hazard response as soon as
            # it preempts normal work, so the operator can re-plan around it
            for r in ROBOTS:
                task = actions[r]
                if (
                    task is not None
                    and task.kind == SHUT_GAS
                    and task.target not in announced
                ):
                    announced.add(task.target)
                    emit(
                        CommandMessage(
                            "info_share", r, "H", tick,
                            slots={"building": task.target},
                        )
                    )
                    op.note_info_share(task.target)
        step(world, actions)
        for done in world.completions:
            records.append({"action": done})
            if done["kind"] == GOTO and done["agent"] in overrides:
                del overrides[done["agent"]]
            if done["kind"] == "carry_to_shelter" and done["agent"] in ROBOTS:
                op.note_success(done["agent"])
        if world.exploded:
            break
        if world.task_complete():
            success = True
            break
        if trackers and (tick + 1) % window_ticks == 0:
            k = (tick + 1) // window_ticks - 1
            t0, t1 = k * window_ticks * dt, (tick + 1) * dt
            window = ObservationWindow(k, t0, t1, tuple(window_events))
            for r in ROBOTS:
                telemetry = trackers[r].update(window, refused_in_window[r])
                records.append({"telemetry": telemetry})
                world.agents[r].L_alpha = trackers[r].state.L_alpha
            window_events = []
            refused_in_window = {r: False for r in ROBOTS}

    records.append(
        {
            "result": {
                "success": success,
                "exploded": world.exploded,
                "ticks": world.tick,
                "task_duration": world.tick * dt,
                "n_commands": n_commands,
                "final_trust": {r: op.trust[r] for r in ROBOTS},
            }
        }
    )
    return EpisodeLog(records)


def _current_target_building(world: WorldState, robot: str,
                             overrides: dict[str, SubTask]) -> int | None:
    if robot in overrides:
        target = overrides[robot].target
        return target if isinstance(target, int) else None
    task = world.agents[robot].current_subtask
    if task is None:
        return None
    if task.kind == "carry_to_shelter":
        return world.victims[task.target].building
    return task.target if isinstance(task.target, int) else None


def _handle_command(
    world: WorldState,
    cmd: CommandMessage,
    condition: Condition,
    trackers: dict[str, _TrustTracker],
    op: SyntheticOperator,
    overrides: dict[str, SubTask],
    refused_in_window: dict[str, bool],
    rng: np.random.Generator,
) -> list[CommandMessage]:
    robot = cmd.receiver
    agent = world.agents[robot]
    if cmd.template_id == "status_query":
        current = _current_target_building(world, robot, overrides)
        if current is None:
            return [CommandMessage("status_reply", robot, "H", cmd.tick)]
        task = overrides.get(robot) or agent.current_subtask
        activity = ACTIVITY_TEXT.get(task.kind, "check the area") if task else "check the area"
        return [
            CommandMessage(
                "status_reply", robot, "H", cmd.tick,
                slots={"building": current, "activity": activity},
            )
        ]
    # instruct_goto
    target = cmd.slots["building"]
    current = _current_target_building(world, robot, overrides)
    if current is None or current == target:
        overrides[robot] = SubTask(GOTO, target)
        op.note_obeyed(robot)
        return [CommandMessage("obey_reply", robot, "H", cmd.tick)]
    phase = trackers[robot].state.phase if robot in trackers else EVOLUTIONARY
    decision = decide_compliance(
        agent.L_alpha, rng_seed=int(rng.integers(2**31)), phase=phase
    )
    if decision.obey:
        overrides[robot] = SubTask(GOTO, target)
        op.note_obeyed(robot)
        return [CommandMessage("obey_reply", robot, "H", cmd.tick)]
    refused_in_window[robot] = True
    replies = [
        CommandMessage(
            "refuse_reply", robot, "H", cmd.tick, slots={"building": current}
        )
    ]
    if condition.name == TRUST_PRESERVED and phase == REVOLUTIONARY:
        critical = world.gas_known and world.leak_active()
        cause = trackers[robot].state.last_violation_cause or CAUSE_COUNTER_COMMAND
        gas_b = world.config.gas_building
        danger = 0.0
        if critical and gas_b is not None:
            danger = min(
                1.0,
                world.buildings[gas_b].gas_density / world.config.gas_threshold,
            )
        for strategy in select_repair(
            cause,
            has_uncertainty_estimate=True,
            robot_at_fault=False,
            critical_state_present=critical,
        ):
            text = strategy.message_template.format(
                danger_prob=danger,
                building=current,
                confidence=1.0 - danger,
                critical_state=f"rising gas density in Building {current}",
            )
            replies.append(
                CommandMessage(
                    "explain_decision", robot, "H", cmd.tick,
                    slots={"text": text, "repair": strategy.kind},
                )
            )
        if critical and current == gas_b:
            replies.append(
                CommandMessage(
                    "info_share", robot, "H", cmd.tick,
                    slots={"building": current},
                )
            )
        op.note_repaired_refusal(robot, explained_building=current)
    else:
        op.note_bare_refusal(robot)
    return replies


def replay_telemetry(log: EpisodeLog) -> list[dict]:
    """Recompute the windowed trust telemetry offline from a log's header
    and message records.  For a matching configuration the result is
    bitwise identical to the telemetry recorded online."""
    header = log.header
    condition = Condition.from_dict(header["condition"])
    if condition.name != TRUST_PRESERVED:
        return []
    params = OperatorParams(**header["operator"])
    scenario = ScenarioConfig.from_dict(header["scenario"])
    expected = config_hash(
        scenario, condition, header["seed"], tuple(header["theta"]),
        params, header["window_ticks"],
    )
    if expected != header["config_hash"]:
        raise ValueError("config hash mismatch: log is incompatible with its header")
    dt = scenario.dt
    window_ticks = header["window_ticks"]
    model = RateModel(inference_specs(), np.asarray(header["theta"], dtype=float))
    attrs = AttributeSet(
        dyad_attrs={("H", r): {"trust": params.initial_trust} for r in ROBOTS}
    )
    grid = init_prior(
        default_grid(), [("H", r) for r in ROBOTS],
        reported_trust=params.initial_trust,
    )
    ctl = ControllerConfig()
    trackers = {r: _TrustTracker(r, model, attrs, grid, ctl) for r in ROBOTS}
    n_windows = 1 + max((t["window"] for t in log.telemetry()), default=-1)
    events_by_window: dict[int, list[RelationalEvent]] = {}
    refused: dict[tuple[int, str], bool] = {}
    for msg_dict in log.messages():
        msg = CommandMessage.from_dict(msg_dict)
        k = msg.tick // window_ticks
        events_by_window.setdefault(k, []).append(_message_event(msg, dt))
        if msg.template_id == "refuse_reply":
            refused[(k, msg.sender)] = True
    out = []
    for k in range(n_windows):
        t0, t1 = k * window_ticks * dt, (k + 1) * window_ticks * dt
        window = ObservationWindow(
            k, t0, t1, tuple(events_by_window.get(k, ()))
        )
        for r in ROBOTS:
            out.append(trackers[r].update(window, refused.get((k, r), False)))
    return out
