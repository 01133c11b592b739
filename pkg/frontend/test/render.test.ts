import { describe, expect, it } from "vitest";

import { DEFAULT_LEGEND, Legend, renderWorld } from "../src/render";
import { building, snapshot, world } from "./helpers";

function cellAt(view: ReturnType<typeof renderWorld>, x: number, y: number) {
  const c = view.cells.find((c) => c.x === x && c.y === y);
  if (c === undefined) throw new Error(`no cell at ${x},${y}`);
  return c;
}

describe("building colors", () => {
  it("uses the legend color per building state", () => {
    const w = world({
      buildings: [
        building(0, { fire_blocked: true }),
        building(1, { gas_leak: true }),
        building(2, { searched: true }),
        building(3),
      ],
    });
    const view = renderWorld(snapshot(1, 0, { world: w }));
    expect(cellAt(view, 1, 2).color).toBe(DEFAULT_LEGEND.fire);
    expect(cellAt(view, 2, 2).color).toBe(DEFAULT_LEGEND.gas);
    expect(cellAt(view, 3, 2).color).toBe(DEFAULT_LEGEND.searched);
    expect(cellAt(view, 4, 2).color).toBe(DEFAULT_LEGEND.unsearched);
  });

  it("fire wins over a known gas leak", () => {
    const w = world({ buildings: [building(0, { fire_blocked: true, gas_leak: true })] });
    const view = renderWorld(snapshot(1, 0, { world: w }));
    expect(cellAt(view, 1, 2).color).toBe(DEFAULT_LEGEND.fire);
  });

  it("does not mark an unknown (redacted) gas leak", () => {
    const w = world({ buildings: [building(0, { gas_leak: null })] });
    const view = renderWorld(snapshot(1, 0, { world: w }));
    expect(cellAt(view, 1, 2).color).toBe(DEFAULT_LEGEND.unsearched);
  });

  it("labels buildings and the shelter", () => {
    const view = renderWorld(snapshot(1, 0));
    expect(cellAt(view, 1, 2).label).toBe("B0");
    expect(cellAt(view, 0, 0).label).toBe("S");
    expect(cellAt(view, 0, 0).color).toBe(DEFAULT_LEGEND.shelter);
  });

  it("honors a custom legend", () => {
    const legend: Legend = { ...DEFAULT_LEGEND, fire: "#123456" };
    const w = world({ buildings: [building(0, { fire_blocked: true })] });
    const view = renderWorld(snapshot(1, 0, { world: w }), legend);
    expect(cellAt(view, 1, 2).color).toBe("#123456");
  });
});

describe("agents and overlays", () => {
  it("places agents in their cells", () => {
    const view = renderWorld(snapshot(1, 0));
    expect(cellAt(view, 0, 0).agents).toContain("H");
    expect(cellAt(view, 3, 3).agents).toEqual(["R1"]);
  });

  it("shows the explosion overlay", () => {
    const w = world({ exploded: true });
    const view = renderWorld(snapshot(1, 0, { world: w, finished: true }));
    expect(view.overlay).toBe("explosion");
  });

  it("shows the success overlay when finished without an explosion", () => {
    const view = renderWorld(snapshot(1, 0, { finished: true, running: false }));
    expect(view.overlay).toBe("success");
  });

  it("shows no overlay mid-episode", () => {
    expect(renderWorld(snapshot(1, 5)).overlay).toBeNull();
  });

  it("counts evacuated victims", () => {
    const w = world({
      victims: [
        { id: 0, building: 0, injured: false, treated: false, evacuated: true, carried_by: null },
        { id: 1, building: 1, injured: true, treated: false, evacuated: false, carried_by: null },
      ],
    });
    expect(renderWorld(snapshot(1, 0, { world: w })).victimsAtShelter).toBe(1);
  });

  it("is a pure function of the snapshot", () => {
    const s = snapshot(1, 0);
    const a = renderWorld(s);
    const b = renderWorld(s);
    expect(b).toEqual(a);
    expect(a.width).toBe(12);
    expect(a.height).toBe(12);
  });
});
