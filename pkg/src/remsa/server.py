"""Live single-operator session over a JSON WebSocket protocol.

Client to server: ``start_episode``, ``pause``, ``submit_command``,
``move_human``, ``do_subtask``.  Server to client: ``world_snapshot``,
``robot_reply``, ``trust_telemetry``, ``episode_result``, and ``error``.
Every outbound message carries a monotonically increasing ``seq`` number,
and snapshots always contain the full world state, so a client can discard
stale messages and resynchronize from any single snapshot.

Exactly one operator may be connected; a second concurrent connection is
rejected with a "single-operator session" error.  Disconnecting pauses the
episode in place; reconnecting resumes the same session.  The session log
uses the same record schema as offline episodes, so the replay tooling
works on it unchanged.
"""

from __future__ import annotations

import asyncio
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from remsa.controller import ControllerConfig
from remsa.events import AttributeSet, RateModel, RelationalEvent
from remsa.sim.comms import (
    EVENT_TYPE_COUNT,
    CommandMessage,
    ProtocolError,
)
from remsa.sim.episode import (
    ACTORS,
    DEFAULT_THETA,
    ROBOTS,
    TRUST_PRESERVED,
    WINDOW_TICKS,
    Condition,
    EpisodeLog,
    _handle_command,
    _message_event,
    _TrustTracker,
    config_hash,
    inference_specs,
)
from remsa.sim.operator import OperatorParams, SyntheticOperator
from remsa.sim.scenario import ScenarioConfig
from remsa.sim.world import (
    GOTO,
    SubTask,
    build_world,
    robot_policy,
    step,
    validate_action,
)
from remsa.trust import ObservationWindow, default_grid, init_prior

SHUT_GAS = "shut_gas"

CLIENT_COMMANDS = {"status_query", "instruct_goto"}


class Session:
    """One interactive episode, stepped by the transport layer.

    Mirrors the offline episode driver, with the live client in the
    synthetic operator's place for command generation; the operator object
    is retained for its trust accounting."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        condition: Condition,
        seed: int,
        theta: tuple[float, ...] = DEFAULT_THETA,
        operator_params: OperatorParams | None = None,
        window_ticks: int = WINDOW_TICKS,
        log_path: str | None = None,
    ):
        self.scenario = scenario
        self.condition = condition
        self.seed = seed
        self.theta = tuple(theta)
        self.params = operator_params or OperatorParams()
        self.window_ticks = window_ticks
        self.log_path = log_path

        self.rng = np.random.default_rng(seed)
        self.world = build_world(scenario)
        self.op = SyntheticOperator(self.params, ROBOTS, self.rng)
        ctl = ControllerConfig()
        self.trackers: dict[str, _TrustTracker] = {}
        if condition.name == TRUST_PRESERVED:
            model = RateModel(inference_specs(), np.asarray(theta, dtype=float))
            attrs = AttributeSet(
                dyad_attrs={
                    ("H", r): {"trust": self.params.initial_trust} for r in ROBOTS
                }
            )
            grid = init_prior(
                default_grid(), [("H", r) for r in ROBOTS],
                reported_trust=self.params.initial_trust,
            )
            for r in ROBOTS:
                self.trackers[r] = _TrustTracker(r, model, attrs, grid, ctl)
                self.world.agents[r].L_alpha = self.trackers[r].state.L_alpha
        else:
            fixed = condition.L_alpha_fixed
            if fixed is None:
                fixed = self.params.initial_trust
            for r in ROBOTS:
                self.world.agents[r].L_alpha = fixed

        self.records: list[dict] = [
            {
                "header": {
                    "config_hash": config_hash(
                        scenario, condition, seed, self.theta,
                        self.params, window_ticks,
                    ),
                    "scenario": scenario.to_dict(),
                    "condition": condition.to_dict(),
                    "seed": seed,
                    "theta": list(self.theta),
                    "operator": vars(self.params),
                    "window_ticks": window_ticks,
                    "actors": list(ACTORS),
                    "event_type_count": EVENT_TYPE_COUNT,
                }
            }
        ]
        self.tick = 0
        self.seq = 0
        self.running = False
        self.finished = False
        self.success = False
        self.n_commands = 0
        self.window_events: list[RelationalEvent] = []
        self.refused_in_window = {r: False for r in ROBOTS}
        self.overrides: dict[str, SubTask] = {}
        self.announced: set[int] = set()
        self.human_task: SubTask | None = None
        self.outbox: list[dict] = []
        self._push_snapshot()

    # -- outbound -----------------------------------------------------------

    def _send(self, msg_type: str, payload: dict) -> None:
        self.outbox.append({"type": msg_type, "seq": self.seq, **payload})
        self.seq += 1

    def drain(self) -> list[dict]:
        out, self.outbox = self.outbox, []
        return out

    def _error(self, reason: str) -> None:
        self._send("error", {"reason": reason})

    def snapshot(self) -> dict:
        world = self.world.to_dict()
        if not self.world.gas_known:
            # gas readings are robot-side sensing; the operator learns of
            # the leak only through robot messages
            for b in world["buildings"]:
                b["gas_leak"] = None
                b["gas_density"] = None
        return {
            "world": world,
            "tick": self.tick,
            "running": self.running,
            "finished": self.finished,
            "condition": self.condition.name,
            "n_commands": self.n_commands,
            "l_alpha": {
                r: self.world.agents[r].L_alpha for r in ROBOTS
            },
        }

    def _push_snapshot(self) -> None:
        self._send("world_snapshot", self.snapshot())

    # -- inbound ------------------------------------------------------------

    def handle(self, msg: dict) -> None:
        if not isinstance(msg, dict) or "type" not in msg:
            self._error("message must be an object with a 'type' field")
            return
        kind = msg["type"]
        if kind == "start_episode":
            if self.finished:
                self._error("episode already finished")
            else:
                self.running = True
                self._push_snapshot()
        elif kind == "pause":
            self.running = False
            self._push_snapshot()
        elif kind == "submit_command":
            self._handle_submit(msg)
        elif kind == "move_human":
            self._handle_human_task(SubTask(GOTO, msg.get("building")))
        elif kind == "do_subtask":
            self._handle_human_task(
                SubTask(msg.get("kind", ""), msg.get("target"))
            )
        else:
            self._error(f"unknown message type {kind!r}")

    def _handle_submit(self, msg: dict) -> None:
        if self.finished:
            self._error("episode already finished")
            return
        template = msg.get("template_id")
        if template not in CLIENT_COMMANDS:
            self._error(f"operator commands must be one of {sorted(CLIENT_COMMANDS)}")
            return
        receiver = msg.get("receiver")
        if receiver not in ROBOTS:
            self._error(f"receiver must be one of {list(ROBOTS)}")
            return
        slots = dict(msg.get("slots", {}))
        if template == "instruct_goto":
            building = slots.get("building")
            if not isinstance(building, int) or not (
                0 <= building < len(self.world.buildings)
            ):
                self._error("instruct_goto requires a valid 'building' slot")
                return
        try:
            cmd = CommandMessage(template, "H", receiver, self.tick, slots=slots)
        except ProtocolError as exc:
            self._error(str(exc))
            return
        self.n_commands += 1
        self._log_message(cmd)
        for reply in _handle_command(
            self.world, cmd, self.condition, self.trackers, self.op,
            self.overrides, self.refused_in_window, self.rng,
        ):
            self._log_message(reply)
            self._send("robot_reply", {"message": reply.to_dict()})
        self._push_snapshot()

    def _handle_human_task(self, task: SubTask) -> None:
        if self.finished:
            self._error("episode already finished")
            return
        try:
            validate_action(self.world, self.world.agents["H"], task)
        except ValueError as exc:
            self._error(str(exc))
            return
        self.human_task = task
        self._push_snapshot()

    # -- stepping -----------------------------------------------------------

    def _log_message(self, msg: CommandMessage) -> None:
        self.records.append({"message": msg.to_dict()})
        self.window_events.append(_message_event(msg, self.scenario.dt))

    def advance(self) -> None:
        """One world tick; mirrors the offline episode loop."""
        if not self.running or self.finished:
            return
        actions: dict[str, SubTask | None] = {"H": self.human_task}
        for r in ROBOTS:
            if r in self.overrides:
                actions[r] = self.overrides[r]
            else:
                actions[r] = robot_policy(self.world, self.world.agents[r])
            self.world.agents[r].current_subtask = actions[r]
        if self.condition.name == TRUST_PRESERVED:
            for r in ROBOTS:
                task = actions[r]
                if (
                    task is not None
                    and task.kind == SHUT_GAS
                    and task.target not in self.announced
                ):
                    self.announced.add(task.target)
                    note = CommandMessage(
                        "info_share", r, "H", self.tick,
                        slots={"building": task.target},
                    )
                    self._log_message(note)
                    self._send("robot_reply", {"message": note.to_dict()})
                    self.op.note_info_share(task.target)
        step(self.world, actions)
        for done in self.world.completions:
            self.records.append({"action": done})
            if done["kind"] == GOTO and done["agent"] in self.overrides:
                del self.overrides[done["agent"]]
            if done["agent"] == "H" and self.human_task is not None:
                if done["kind"] == self.human_task.kind:
                    self.human_task = None
            if done["kind"] == "carry_to_shelter" and done["agent"] in ROBOTS:
                self.op.note_success(done["agent"])
        self.tick += 1
        if self.world.exploded:
            self._finish(success=False)
        elif self.world.task_complete():
            self._finish(success=True)
        elif self.tick >= self.scenario.tick_limit:
            self._finish(success=False)
        elif self.trackers and self.tick % self.window_ticks == 0:
            k = self.tick // self.window_ticks - 1
            dt = self.scenario.dt
            t0, t1 = k * self.window_ticks * dt, self.tick * dt
            window = ObservationWindow(k, t0, t1, tuple(self.window_events))
            for r in ROBOTS:
                telemetry = self.trackers[r].update(
                    window, self.refused_in_window[r]
                )
                self.records.append({"telemetry": telemetry})
                self._send("trust_telemetry", {"telemetry": telemetry})
                self.world.agents[r].L_alpha = self.trackers[r].state.L_alpha
            self.window_events = []
            self.refused_in_window = {r: False for r in ROBOTS}
        self._push_snapshot()

    def _result(self) -> dict:
        return {
            "success": self.success,
            "exploded": self.world.exploded,
            "ticks": self.world.tick,
            "task_duration": self.world.tick * self.scenario.dt,
            "n_commands": self.n_commands,
            "final_trust": {r: self.op.trust[r] for r in ROBOTS},
        }

    def _finish(self, success: bool) -> None:
        self.success = success
        self.finished = True
        self.running = False
        self.records.append({"result": self._result()})
        self._send("episode_result", {"result": self._result()})
        if self.log_path:
            self.write_log(self.log_path)

    def log(self) -> EpisodeLog:
        records = list(self.records)
        if not self.finished:
            # keep the schema replayable even for a session cut short
            records.append({"result": self._result()})
        return EpisodeLog(records)

    def write_log(self, path: str) -> None:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.log().to_jsonl())


def build_app(session: Session, tick_interval: float = 0.05) -> FastAPI:
    app = FastAPI()
    app.state.session = session
    app.state.client_connected = False

    @app.websocket("/session")
    async def ws_session(websocket: WebSocket) -> None:
        await websocket.accept()
        if app.state.client_connected:
            await websocket.send_json(
                {"type": "error", "seq": None,
                 "reason": "single-operator session: a client is already connected"}
            )
            await websocket.close(code=1008)
            return
        app.state.client_connected = True
        sess: Session = app.state.session

        async def pump() -> None:
            while True:
                sess.advance()
                for msg in sess.drain():
                    await websocket.send_json(msg)
                await asyncio.sleep(tick_interval)

        # reconnecting clients resynchronize from a fresh full snapshot;
        # the episode stays paused until they ask to resume
        sess._push_snapshot()
        pump_task = asyncio.create_task(pump())
        try:
            while True:
                try:
                    data = await websocket.receive_json()
                except WebSocketDisconnect:
                    raise
                except ValueError:
                    sess._error("invalid JSON message")
                    continue
                sess.handle(data)
        except WebSocketDisconnect:
            pass
        finally:
            pump_task.cancel()
            # a dropped connection pauses the episode in place
            sess.running = False
            if sess.log_path and not sess.finished:
                sess.write_log(sess.log_path)
            app.state.client_connected = False

    return app


def serve(
    scenario: ScenarioConfig,
    condition: Condition,
    seed: int,
    port: int,
    theta: tuple[float, ...] = DEFAULT_THETA,
    operator_params: OperatorParams | None = None,
    log_path: str | None = None,
    host: str = "127.0.0.1",
    tick_interval: float = 0.05,
) -> None:
    import uvicorn

    session = Session(
        scenario, condition, seed, theta=theta,
        operator_params=operator_params, log_path=log_path,
    )
    app = build_app(session, tick_interval=tick_interval)
    uvicorn.run(app, host=host, port=port, log_level="warning")
