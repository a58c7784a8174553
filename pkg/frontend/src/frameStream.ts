/**
 * Frame streaming over the engine's persistent socket: rate-capped sends,
 * in-order rendering with stale-frame discard, sliding-window fps, and
 * reconnect with exponential backoff.
 *
 * Socket, clock and timers are injected so the logic runs identically in the
 * browser and under tests.
 */

import { FrameMessage, decodeFrameMessage, encodeFrameMessage } from "./protocol.js";

// handler params are `any` so a browser WebSocket satisfies the interface
// directly; tests substitute fakes
export interface SocketLike {
  send(data: ArrayBuffer): void;
  close(): void;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((event: any) => void) | null;
  onclose: ((event: any) => void) | null;
  onerror: ((event: any) => void) | null;
  onmessage: ((event: any) => void) | null;  // event.data: ArrayBuffer
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionState = "connecting" | "open" | "reconnecting" | "closed";

export interface FrameStreamOptions {
  url: string;
  socketFactory: SocketFactory;
  onFrame: (msg: FrameMessage) => void;
  onState?: (state: ConnectionState) => void;
  maxSendFps?: number;
  now?: () => number;
  schedule?: (fn: () => void, delayMs: number) => void;
  backoffBaseMs?: number;
  backoffMaxMs?: number;
}

export class SlidingFps {
  private times: number[] = [];

  constructor(private windowMs = 1000, private now: () => number = () => performance.now()) {}

  tick(): void {
    const t = this.now();
    this.times.push(t);
    const cutoff = t - this.windowMs;
    while (this.times.length > 0 && this.times[0] < cutoff) {
      this.times.shift();
    }
  }

  get fps(): number {
    if (this.times.length < 2) {
      return this.times.length / (this.windowMs / 1000);
    }
    const span = this.times[this.times.length - 1] - this.times[0];
    return span > 0 ? ((this.times.length - 1) * 1000) / span : 0;
  }
}

export class FrameStream {
  private socket: SocketLike | null = null;
  private state: ConnectionState = "closed";
  private lastRenderedId = -1;
  private lastSentAt = -Infinity;
  private attempts = 0;
  private stopped = false;
  readonly receivedFps: SlidingFps;

  constructor(private readonly opts: FrameStreamOptions) {
    this.receivedFps = new SlidingFps(1000, opts.now ?? (() => performance.now()));
  }

  get connectionState(): ConnectionState {
    return this.state;
  }

  get lastRenderedFrameId(): number {
    return this.lastRenderedId;
  }

  connect(): void {
    this.stopped = false;
    this.open("connecting");
  }

  private setState(state: ConnectionState): void {
    this.state = state;
    this.opts.onState?.(state);
  }

  private open(entering: ConnectionState): void {
    this.setState(entering);
    const socket = this.opts.socketFactory(this.opts.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.setState("open");
    };
    socket.onmessage = (event: { data: ArrayBuffer }) => this.handleMessage(event.data);
    socket.onerror = () => socket.close();
    socket.onclose = () => {
      this.socket = null;
      if (this.stopped) {
        this.setState("closed");
        return;
      }
      // exponential backoff, capped
      const base = this.opts.backoffBaseMs ?? 250;
      const max = this.opts.backoffMaxMs ?? 8000;
      const delay = Math.min(base * 2 ** this.attempts, max);
      this.attempts += 1;
      this.setState("reconnecting");
      const schedule = this.opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
      schedule(() => {
        if (!this.stopped) {
          this.open("reconnecting");
        }
      }, delay);
    };
  }

  private handleMessage(data: ArrayBuffer): void {
    let msg: FrameMessage;
    try {
      msg = decodeFrameMessage(data);
    } catch {
      return;
    }
    // results render in arrival order; anything older than the newest
    // rendered frame is stale and dropped
    if (msg.frameId <= this.lastRenderedId) {
      return;
    }
    this.lastRenderedId = msg.frameId;
    this.receivedFps.tick();
    this.opts.onFrame(msg);
  }

  /** Send one camera frame; returns false when rate-capped or disconnected. */
  sendFrame(msg: FrameMessage): boolean {
    if (this.state !== "open" || this.socket === null) {
      return false;
    }
    const maxFps = this.opts.maxSendFps ?? 15;
    const now = (this.opts.now ?? (() => performance.now()))();
    if (now - this.lastSentAt < 1000 / maxFps) {
      return false;
    }
    this.lastSentAt = now;
    this.socket.send(encodeFrameMessage(msg));
    return true;
  }

  close(): void {
    this.stopped = true;
    this.socket?.close();
    if (this.socket === null) {
      this.setState("closed");
    }
  }
}
