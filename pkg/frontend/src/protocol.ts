/**
 * Wire protocol for the operator session: JSON messages over a WebSocket.
 *
 * Server to client: world_snapshot, robot_reply, trust_telemetry,
 * episode_result, error.  Every server message carries a monotonically
 * increasing `seq`; snapshots are always full state.  Client to server:
 * start_episode, pause, submit_command, move_human, do_subtask.
 */

export interface BuildingView {
  id: number;
  cell: [number, number];
  fire_blocked: boolean;
  searched: boolean;
  /** null until a robot has sensed the leak (operator-side redaction) */
  gas_leak: boolean | null;
  gas_density: number | null;
}

export interface VictimView {
  id: number;
  building: number;
  injured: boolean;
  treated: boolean;
  evacuated: boolean;
  carried_by: string | null;
}

export interface AgentView {
  id: string;
  role: string;
  cell: [number, number];
  carrying: number | null;
  subtask: { kind: string; target: number | [number, number] | null } | null;
}

export interface WorldView {
  tick: number;
  width: number;
  height: number;
  shelter: [number, number];
  exploded: boolean;
  gas_shut: boolean;
  buildings: BuildingView[];
  victims: VictimView[];
  agents: AgentView[];
}

export interface SnapshotMessage {
  type: "world_snapshot";
  seq: number;
  world: WorldView;
  tick: number;
  running: boolean;
  finished: boolean;
  condition: string;
  n_commands: number;
  l_alpha: Record<string, number>;
}

export interface RobotReplyMessage {
  type: "robot_reply";
  seq: number;
  message: {
    template_id: string;
    sender: string;
    receiver: string;
    tick: number;
    slots: Record<string, unknown>;
    text: string;
  };
}

export interface TelemetryRecord {
  window: number;
  robot: string;
  l_beta: number;
  l_alpha: number;
  phase: string;
  posterior_mean: number;
  posterior_var: number;
}

export interface TelemetryMessage {
  type: "trust_telemetry";
  seq: number;
  telemetry: TelemetryRecord;
}

export interface ResultMessage {
  type: "episode_result";
  seq: number;
  result: {
    success: boolean;
    exploded: boolean;
    ticks: number;
    task_duration: number;
    n_commands: number;
    final_trust: Record<string, number>;
  };
}

export interface ErrorMessage {
  type: "error";
  seq: number | null;
  reason: string;
}

export type ServerMessage =
  | SnapshotMessage
  | RobotReplyMessage
  | TelemetryMessage
  | ResultMessage
  | ErrorMessage;

export type ClientMessage =
  | { type: "start_episode" }
  | { type: "pause" }
  | {
      type: "submit_command";
      template_id: "status_query" | "instruct_goto";
      receiver: string;
      slots?: { building?: number };
    }
  | { type: "move_human"; building: number }
  | { type: "do_subtask"; kind: string; target: number };

/** Outgoing command text, mirrored locally so the operator's own messages
 * appear in the log verbatim. */
export const COMMAND_TEXT: Record<string, (slots: { building?: number }) => string> = {
  status_query: () => "What are you doing?",
  instruct_goto: (slots) => `Go to Building ${slots.building}.`,
};

export class SchemaError extends Error {}

function isRecord(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null && !Array.isArray(x);
}

/** Narrow an incoming JSON value to a ServerMessage or throw SchemaError.
 * No silent fallbacks: a malformed message must surface visibly. */
export function parseServerMessage(raw: unknown): ServerMessage {
  if (!isRecord(raw) || typeof raw.type !== "string") {
    throw new SchemaError("message is not an object with a 'type'");
  }
  const t = raw.type;
  if (t === "error") {
    if (typeof raw.reason !== "string") {
      throw new SchemaError("error message lacks a reason");
    }
    return raw as unknown as ErrorMessage;
  }
  if (typeof raw.seq !== "number") {
    throw new SchemaError(`${t} message lacks a numeric seq`);
  }
  switch (t) {
    case "world_snapshot": {
      const w = raw.world;
      if (
        !isRecord(w) ||
        !Array.isArray(w.buildings) ||
        !Array.isArray(w.victims) ||
        !Array.isArray(w.agents) ||
        typeof w.width !== "number" ||
        typeof w.height !== "number"
      ) {
        throw new SchemaError("world_snapshot has a malformed world");
      }
      return raw as unknown as SnapshotMessage;
    }
    case "robot_reply": {
      const m = raw.message;
      if (!isRecord(m) || typeof m.text !== "string" || typeof m.sender !== "string") {
        throw new SchemaError("robot_reply has a malformed message");
      }
      return raw as unknown as RobotReplyMessage;
    }
    case "trust_telemetry": {
      const m = raw.telemetry;
      if (!isRecord(m) || typeof m.robot !== "string" || typeof m.l_alpha !== "number") {
        throw new SchemaError("trust_telemetry has a malformed record");
      }
      return raw as unknown as TelemetryMessage;
    }
    case "episode_result": {
      if (!isRecord(raw.result)) {
        throw new SchemaError("episode_result lacks a result");
      }
      return raw as unknown as ResultMessage;
    }
    default:
      throw new SchemaError(`unknown server message type '${t}'`);
  }
}
