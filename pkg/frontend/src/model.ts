/**
 * Console state machine, independent of the DOM and the socket.
 *
 * All visible state derives from server messages: the client never
 * simulates the world.  Stale messages (sequence number at or below the
 * last applied one) are discarded, and the telemetry panel always equals
 * the latest trust_telemetry record per robot, with no smoothing.
 */

import {
  ClientMessage,
  COMMAND_TEXT,
  parseServerMessage,
  SchemaError,
  ServerMessage,
  SnapshotMessage,
  TelemetryRecord,
} from "./protocol.js";

export interface LogEntry {
  from: string;
  to: string;
  text: string;
  tick: number;
}

export type Connection = "connecting" | "open" | "closed";

const HUMAN_SUBTASK_KINDS: Record<string, string> = {
  treat: "treat",
  search: "search_assess",
  shut_gas: "shut_gas",
};

export class ConsoleModel {
  connection: Connection = "connecting";
  lastSeq = -1;
  discarded = 0;
  snapshot: SnapshotMessage | null = null;
  log: LogEntry[] = [];
  /** latest telemetry record per robot, verbatim */
  telemetry: Record<string, TelemetryRecord> = {};
  telemetryHistory: Record<string, TelemetryRecord[]> = {};
  /** robots with a command in flight; their buttons are disabled */
  pending: Record<string, number> = {};
  banner: string | null = null;
  notice: string | null = null;
  result: ResultPayload | null = null;

  constructor(private commandTimeoutTicks = 50) {}

  get running(): boolean {
    return this.snapshot !== null && this.snapshot.running && this.result === null;
  }

  /** Apply one raw server message; returns true if it changed state. */
  receive(raw: unknown): boolean {
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(raw);
    } catch (e) {
      if (e instanceof SchemaError) {
        this.banner = `protocol error: ${e.message}`;
        return true;
      }
      throw e;
    }
    if (msg.type === "error") {
      this.notice = msg.reason;
      return true;
    }
    if (msg.seq <= this.lastSeq) {
      this.discarded += 1; // stale or duplicate: ignore entirely
      return false;
    }
    this.lastSeq = msg.seq;
    switch (msg.type) {
      case "world_snapshot":
        this.snapshot = msg;
        this.expirePending(msg.tick);
        break;
      case "robot_reply": {
        const m = msg.message;
        this.log.push({ from: m.sender, to: m.receiver, text: m.text, tick: m.tick });
        delete this.pending[m.sender];
        break;
      }
      case "trust_telemetry": {
        const t = msg.telemetry;
        this.telemetry[t.robot] = t;
        (this.telemetryHistory[t.robot] ??= []).push(t);
        break;
      }
      case "episode_result":
        this.result = msg.result;
        break;
    }
    return true;
  }

  private expirePending(tick: number): void {
    for (const robot of Object.keys(this.pending)) {
      if (tick - this.pending[robot] > this.commandTimeoutTicks) {
        delete this.pending[robot]; // timeout: re-enable for retry
        this.notice = `no reply from ${robot}; you can retry`;
      }
    }
  }

  /** Build a robot command, or return null with a local notice when the
   * command is not currently allowed (e.g. while paused). */
  submitCommand(
    kind: "status_query" | "instruct_goto",
    robot: string,
    building?: number,
  ): ClientMessage | null {
    if (this.connection !== "open") {
      this.notice = "not connected";
      return null;
    }
    if (!this.running) {
      this.notice = "episode is paused; command not sent";
      return null;
    }
    if (robot in this.pending) {
      this.notice = `waiting for ${robot}'s reply`;
      return null;
    }
    const slots = kind === "instruct_goto" ? { building } : {};
    if (kind === "instruct_goto" && typeof building !== "number") {
      this.notice = "pick a building first";
      return null;
    }
    this.pending[robot] = this.snapshot ? this.snapshot.tick : 0;
    this.log.push({
      from: "H",
      to: robot,
      text: COMMAND_TEXT[kind](slots),
      tick: this.snapshot ? this.snapshot.tick : 0,
    });
    return { type: "submit_command", template_id: kind, receiver: robot, slots };
  }

  /** Build a human action message (move / treat / search / shut_gas). */
  humanAction(kind: string, target: number): ClientMessage | null {
    if (this.connection !== "open" || !this.running) {
      this.notice = "episode is paused; action not sent";
      return null;
    }
    if (kind === "move") {
      return { type: "move_human", building: target };
    }
    const mapped = HUMAN_SUBTASK_KINDS[kind];
    if (mapped === undefined) {
      this.notice = `unknown human action '${kind}'`;
      return null;
    }
    return { type: "do_subtask", kind: mapped, target };
  }

  onOpen(): void {
    this.connection = "open";
    this.banner = null;
  }

  onClose(): void {
    this.connection = "closed";
    this.banner = "disconnected; the episode is paused until you reconnect";
  }
}

interface ResultPayload {
  success: boolean;
  exploded: boolean;
  ticks: number;
  task_duration: number;
  n_commands: number;
  final_trust: Record<string, number>;
}
