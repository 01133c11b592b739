/**
 * Browser wiring: one WebSocket, one ConsoleModel, DOM updated only from
 * the message handler (single event-loop client, no client-side world
 * mutation).  Configuration comes from URL parameters {host, port,
 * session}.
 */

import { ConsoleModel } from "./model.js";
import { ClientMessage } from "./protocol.js";
import { DEFAULT_LEGEND, renderWorld } from "./render.js";

const ROBOTS = ["R1", "R2"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startConsole(): void {
  const params = new URLSearchParams(window.location.search);
  const host = params.get("host") ?? "127.0.0.1";
  const port = params.get("port") ?? "8642";
  const session = params.get("session") ?? "session";
  const model = new ConsoleModel();
  const url = `ws://${host}:${port}/${session}`;

  let ws = new WebSocket(url);
  const send = (msg: ClientMessage | null): void => {
    if (msg !== null && ws.readyState === WebSocket.OPEN) {
      ws.send(JSON.stringify(msg));
    }
    draw();
  };

  const attach = (): void => {
    ws.onopen = () => {
      model.onOpen();
      draw();
    };
    ws.onclose = () => {
      model.onClose();
      draw();
      // reconnect flow: the server keeps the session paused meanwhile
      setTimeout(() => {
        ws = new WebSocket(url);
        attach();
      }, 1000);
    };
    ws.onmessage = (ev) => {
      model.receive(JSON.parse(ev.data as string));
      draw();
    };
  };
  attach();

  el("start").onclick = () => send({ type: "start_episode" });
  el("pause").onclick = () => send({ type: "pause" });
  for (const robot of ROBOTS) {
    el(`status-${robot}`).onclick = () => send(model.submitCommand("status_query", robot));
    el(`go-${robot}`).onclick = () => {
      const building = Number((el(`building-${robot}`) as unknown as HTMLInputElement).value);
      send(model.submitCommand("instruct_goto", robot, building));
    };
  }
  el("human-go").onclick = () => {
    const b = Number((el("human-target") as unknown as HTMLInputElement).value);
    send(model.humanAction("move", b));
  };
  for (const kind of ["treat", "search", "shut_gas"]) {
    el(`human-${kind}`).onclick = () => {
      const b = Number((el("human-target") as unknown as HTMLInputElement).value);
      send(model.humanAction(kind, b));
    };
  }

  const canvas = el<HTMLCanvasElement>("map") as unknown as HTMLCanvasElement;

  function draw(): void {
    el("connection").textContent = model.connection;
    el("banner").textContent = model.banner ?? "";
    el("notice").textContent = model.notice ?? "";
    el("messages").innerHTML = model.log
      .map((m) => `<li>[t${m.tick}] ${m.from} → ${m.to}: ${m.text}</li>`)
      .join("");
    const telemetry = ROBOTS.map((r) => {
      const t = model.telemetry[r];
      if (t === undefined) return `<li>${r}: no telemetry yet</li>`;
      return (
        `<li>${r}: Lβ ${t.l_beta.toFixed(3)} · ` +
        `Lα ${t.l_alpha.toFixed(3)} · ${t.phase}</li>`
      );
    });
    el("telemetry").innerHTML = telemetry.join("");
    for (const robot of ROBOTS) {
      (el(`status-${robot}`) as unknown as HTMLButtonElement).disabled =
        robot in model.pending || !model.running;
      (el(`go-${robot}`) as unknown as HTMLButtonElement).disabled =
        robot in model.pending || !model.running;
    }
    if (model.snapshot === null) return;
    const view = renderWorld(model.snapshot, DEFAULT_LEGEND);
    const ctx = canvas.getContext("2d");
    if (ctx === null) return;
    const s = Math.floor(Math.min(canvas.width / view.width, canvas.height / view.height));
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    for (const c of view.cells) {
      ctx.fillStyle = c.color;
      ctx.fillRect(c.x * s, c.y * s, s - 1, s - 1);
      if (c.label !== null) {
        ctx.fillStyle = "#000";
        ctx.fillText(c.label, c.x * s + 2, c.y * s + 10);
      }
      if (c.agents.length > 0) {
        ctx.fillStyle = "#000";
        ctx.fillText(c.agents.join(","), c.x * s + 2, c.y * s + s - 3);
      }
    }
    if (view.overlay !== null) {
      ctx.fillStyle = view.overlay === "explosion" ? "#e53935" : "#4caf50";
      ctx.font = "24px sans-serif";
      ctx.fillText(view.overlay === "explosion" ? "EXPLOSION" : "MISSION COMPLETE", 20, 30);
    }
  }
}
