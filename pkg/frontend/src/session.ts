/**
 * Live mirror session state: connection, selection, throughput and latency,
 * assembled from the stream and catalog clients for the view layer.
 */

import { CatalogClient } from "./catalog.js";
import { ConnectionState, FrameStream } from "./frameStream.js";

export interface StageLatency {
  pose_ms: number;
  densepose_ms: number;
  synthesis_ms: number;
  composite_ms: number;
  total_ms: number;
}

export interface SessionView {
  connection: ConnectionState;
  selectedGarment: string | null;
  fps: number;
  lastLatency: StageLatency | null;
  mirrored: boolean;
}

export class SessionState {
  mirrored = true;
  lastLatency: StageLatency | null = null;
  private connection: ConnectionState = "closed";

  constructor(private readonly stream: FrameStream,
              private readonly catalog: CatalogClient) {}

  setConnection(state: ConnectionState): void {
    this.connection = state;
  }

  toggleMirror(): void {
    this.mirrored = !this.mirrored;
  }

  view(): SessionView {
    return {
      connection: this.connection,
      selectedGarment: this.catalog.selected,
      fps: this.stream.receivedFps.fps,
      lastLatency: this.lastLatency,
      mirrored: this.mirrored,
    };
  }
}
