/**
 * Binary frame protocol shared with the engine's WebSocket endpoint:
 * [frame_id: u64][width: u32][height: u32][PNG bytes], big-endian, in both
 * directions.
 */

export const FRAME_HEADER_BYTES = 16;

export interface FrameMessage {
  frameId: number;
  width: number;
  height: number;
  png: Uint8Array;
}

export function encodeFrameMessage(msg: FrameMessage): ArrayBuffer {
  const buf = new ArrayBuffer(FRAME_HEADER_BYTES + msg.png.byteLength);
  const view = new DataView(buf);
  view.setBigUint64(0, BigInt(msg.frameId), false);
  view.setUint32(8, msg.width, false);
  view.setUint32(12, msg.height, false);
  new Uint8Array(buf, FRAME_HEADER_BYTES).set(msg.png);
  return buf;
}

export function decodeFrameMessage(data: ArrayBuffer): FrameMessage {
  if (data.byteLength < FRAME_HEADER_BYTES) {
    throw new Error(`frame message shorter than its ${FRAME_HEADER_BYTES}-byte header`);
  }
  const view = new DataView(data);
  const frameId = Number(view.getBigUint64(0, false));
  return {
    frameId,
    width: view.getUint32(8, false),
    height: view.getUint32(12, false),
    png: new Uint8Array(data, FRAME_HEADER_BYTES).slice(),
  };
}
