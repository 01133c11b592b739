import { SnapshotMessage, WorldView, BuildingView } from "../src/protocol";

export function building(id: number, over: Partial<BuildingView> = {}): BuildingView {
  return {
    id,
    cell: [1 + id, 2],
    fire_blocked: false,
    searched: false,
    gas_leak: null,
    gas_density: null,
    ...over,
  };
}

export function world(over: Partial<WorldView> = {}): WorldView {
  return {
    tick: 0,
    width: 12,
    height: 12,
    shelter: [0, 0],
    exploded: false,
    gas_shut: false,
    buildings: [building(0), building(1)],
    victims: [
      { id: 0, building: 0, injured: false, treated: false, evacuated: false, carried_by: null },
    ],
    agents: [
      { id: "H", role: "human", cell: [0, 0], carrying: null, subtask: null },
      { id: "R1", role: "robot", cell: [3, 3], carrying: null, subtask: null },
      { id: "R2", role: "robot", cell: [4, 4], carrying: null, subtask: null },
    ],
    ...over,
  };
}

export function snapshot(
  seq: number,
  tick: number,
  over: Partial<SnapshotMessage> = {},
): SnapshotMessage {
  return {
    type: "world_snapshot",
    seq,
    world: world({ tick }),
    tick,
    running: true,
    finished: false,
    condition: "trust_preserved_sa",
    n_commands: 0,
    l_alpha: { R1: 0.55, R2: 0.55 },
    ...over,
  };
}
