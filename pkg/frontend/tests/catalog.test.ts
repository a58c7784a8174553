import { describe, expect, it } from "vitest";

import { CatalogClient, FetchLike } from "../src/catalog.js";

interface ServerState {
  garments: string[];
  selected: string;
  requests: string[];
  failIds?: Set<string>;
  gate?: Promise<void>;
}

function fakeService(state: ServerState): FetchLike {
  return async (url, init) => {
    if (url.endsWith("/garments") && (!init || !init.method)) {
      return {
        ok: true,
        status: 200,
        json: async () => ({
          garments: state.garments.map((id) => ({
            garment_id: id, mode: "hybrid", preview: null,
          })),
          selected: state.selected,
        }),
      };
    }
    if (url.endsWith("/garments/select")) {
      const id = (JSON.parse(init!.body!) as { garment_id: string }).garment_id;
      state.requests.push(id);
      if (state.gate) {
        await state.gate;
      }
      if (state.failIds?.has(id) || !state.garments.includes(id)) {
        return { ok: false, status: 404, json: async () => ({ error: "unknown" }) };
      }
      state.selected = id;
      return { ok: true, status: 200, json: async () => ({ garment_id: id }) };
    }
    throw new Error(`unexpected url ${url}`);
  };
}

describe("catalog client", () => {
  it("refresh mirrors the server catalog and selection", async () => {
    const state: ServerState = { garments: ["a", "b"], selected: "a", requests: [] };
    const client = new CatalogClient("http://svc", fakeService(state));
    await client.refresh();
    expect(client.garments.map((g) => g.garment_id)).toEqual(["a", "b"]);
    expect(client.selected).toBe("a");
  });

  it("valid selection is acknowledged and reflected", async () => {
    const state: ServerState = { garments: ["a", "b"], selected: "a", requests: [] };
    const client = new CatalogClient("http://svc", fakeService(state));
    await client.refresh();
    await client.select("b");
    expect(client.selected).toBe("b");
    expect(state.selected).toBe("b");
  });

  it("rejected selection surfaces an error and leaves state unchanged", async () => {
    const state: ServerState = { garments: ["a"], selected: "a", requests: [] };
    const client = new CatalogClient("http://svc", fakeService(state));
    await client.refresh();
    const errors: string[] = [];
    client.onError = (message) => errors.push(message);
    await client.select("nope");
    expect(errors.length).toBe(1);
    expect(client.selected).toBe("a");
    expect(state.selected).toBe("a");
  });

  it("rapid double-switch collapses to last-write-wins", async () => {
    const state: ServerState = { garments: ["a", "b", "c"], selected: "a", requests: [] };
    let release!: () => void;
    state.gate = new Promise((resolve) => {
      release = resolve;
    });
    const client = new CatalogClient("http://svc", fakeService(state));
    await client.refresh();
    const first = client.select("b");
    const second = client.select("c"); // queued while b is in flight
    release();
    await Promise.all([first, second]);
    expect(state.requests).toEqual(["b", "c"]);
    expect(client.selected).toBe("c");
    expect(state.selected).toBe("c");
  });
});
