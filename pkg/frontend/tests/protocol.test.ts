import { describe, expect, it } from "vitest";

import { decodeFrameMessage, encodeFrameMessage } from "../src/protocol.js";

describe("frame protocol", () => {
  it("round-trips a frame message", () => {
    const png = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 1, 2, 3]);
    const data = encodeFrameMessage({ frameId: 41, width: 640, height: 480, png });
    const back = decodeFrameMessage(data);
    expect(back.frameId).toBe(41);
    expect(back.width).toBe(640);
    expect(back.height).toBe(480);
    expect(Array.from(back.png)).toEqual(Array.from(png));
  });

  it("lays out the header big-endian u64/u32/u32", () => {
    // frame id chosen to stay within Number's 2^53 integer range
    const data = encodeFrameMessage({
      frameId: 0x0001020304050607,
      width: 6,
      height: 4,
      png: new Uint8Array(0),
    });
    const bytes = new Uint8Array(data);
    expect(Array.from(bytes.slice(0, 8))).toEqual([0, 1, 2, 3, 4, 5, 6, 7]);
    expect(Array.from(bytes.slice(8, 12))).toEqual([0, 0, 0, 6]);
    expect(Array.from(bytes.slice(12, 16))).toEqual([0, 0, 0, 4]);
  });

  it("rejects truncated messages", () => {
    expect(() => decodeFrameMessage(new ArrayBuffer(3))).toThrow(/header/);
  });
});
