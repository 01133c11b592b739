/**
 * Pure view derivation: snapshot in, drawable cell grid out.
 *
 * The legend colors are configurable with documented defaults; the view
 * contains no state of its own, so the rendered map always equals the
 * latest applied snapshot.
 */

import { SnapshotMessage, WorldView } from "./protocol.js";

export interface Legend {
  unsearched: string;
  searched: string;
  fire: string;
  gas: string;
  shelter: string;
  ground: string;
}

/** Default color legend (hex); override via the Legend parameter. */
export const DEFAULT_LEGEND: Legend = {
  unsearched: "#9e9e9e",
  searched: "#4caf50",
  fire: "#e53935",
  gas: "#fdd835",
  shelter: "#1e88e5",
  ground: "#f5f5f5",
};

export interface CellView {
  x: number;
  y: number;
  color: string;
  label: string | null;
  agents: string[];
}

export interface MapView {
  width: number;
  height: number;
  cells: CellView[];
  overlay: "explosion" | "success" | null;
  victimsAtShelter: number;
}

function buildingColor(
  b: WorldView["buildings"][number],
  legend: Legend,
): string {
  if (b.fire_blocked) return legend.fire;
  if (b.gas_leak === true) return legend.gas;
  if (b.searched) return legend.searched;
  return legend.unsearched;
}

export function renderWorld(
  snapshot: SnapshotMessage,
  legend: Legend = DEFAULT_LEGEND,
): MapView {
  const w = snapshot.world;
  const byCell = new Map<string, CellView>();
  const cell = (x: number, y: number): CellView => {
    const key = `${x},${y}`;
    let c = byCell.get(key);
    if (c === undefined) {
      c = { x, y, color: legend.ground, label: null, agents: [] };
      byCell.set(key, c);
    }
    return c;
  };
  for (const b of w.buildings) {
    const c = cell(b.cell[0], b.cell[1]);
    c.color = buildingColor(b, legend);
    c.label = `B${b.id}`;
  }
  {
    const c = cell(w.shelter[0], w.shelter[1]);
    c.color = legend.shelter;
    c.label = "S";
  }
  for (const a of w.agents) {
    cell(a.cell[0], a.cell[1]).agents.push(a.id);
  }
  let overlay: MapView["overlay"] = null;
  if (w.exploded) overlay = "explosion";
  else if (snapshot.finished) overlay = "success";
  return {
    width: w.width,
    height: w.height,
    cells: [...byCell.values()],
    overlay,
    victimsAtShelter: w.victims.filter((v) => v.evacuated).length,
  };
}
