/**
 * Browser wiring: camera capture to the stream socket, composited frames to
 * the canvas, catalog strip, stats readout, and the capture-guide overlay.
 * All protocol and timing logic lives in the imported modules; this layer
 * only touches DOM and media APIs.
 */

import { CatalogClient } from "./catalog.js";
import { CaptureGuideRunner, GuideScript, defaultGuideScript } from "./captureGuide.js";
import { FrameStream } from "./frameStream.js";
import { SessionState } from "./session.js";

const SEND_FPS_CAP = 15;
const CAMERA_WIDTH = 1280;
const CAMERA_HEIGHT = 720;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export async function startApp(serviceBase: string): Promise<void> {
  const wsUrl = serviceBase.replace(/^http/, "ws") + "/stream";
  const video = document.createElement("video");
  const sendCanvas = document.createElement("canvas");
  const outputCanvas = el<HTMLCanvasElement>("output");
  const statusLine = el<HTMLDivElement>("status");
  const catalogStrip = el<HTMLDivElement>("catalog");
  const toast = el<HTMLDivElement>("toast");
  const guideOverlay = el<HTMLDivElement>("guide");

  const catalog = new CatalogClient(serviceBase, fetch.bind(window));
  catalog.onError = (message) => {
    toast.textContent = message;
    toast.classList.add("visible");
    setTimeout(() => toast.classList.remove("visible"), 2500);
  };

  let frameCounter = 0;
  const stream = new FrameStream({
    url: wsUrl,
    socketFactory: (url) => {
      const ws = new WebSocket(url);
      ws.binaryType = "arraybuffer";
      return ws;
    },
    maxSendFps: SEND_FPS_CAP,
    onFrame: async (msg) => {
      const blob = new Blob([msg.png.buffer as ArrayBuffer], { type: "image/png" });
      const bitmap = await createImageBitmap(blob);
      outputCanvas.width = bitmap.width;
      outputCanvas.height = bitmap.height;
      const ctx = outputCanvas.getContext("2d")!;
      ctx.save();
      if (session.mirrored) {
        ctx.translate(bitmap.width, 0);
        ctx.scale(-1, 1);
      }
      ctx.drawImage(bitmap, 0, 0);
      ctx.restore();
      bitmap.close();
    },
    onState: (state) => {
      session.setConnection(state);
      statusLine.textContent = state;
      if (state === "open") {
        catalog.refresh().then(renderCatalog).catch(() => undefined);
      }
    },
  });
  const session = new SessionState(stream, catalog);

  function renderCatalog(): void {
    catalogStrip.replaceChildren();
    for (const garment of catalog.garments) {
      const button = document.createElement("button");
      button.textContent = garment.garment_id;
      button.className = garment.garment_id === catalog.selected ? "selected" : "";
      button.onclick = () => {
        void catalog.select(garment.garment_id).then(renderCatalog);
      };
      catalogStrip.appendChild(button);
    }
  }
  catalog.onChange = renderCatalog;

  el<HTMLButtonElement>("mirror").onclick = () => session.toggleMirror();

  // stats readout once per second
  setInterval(async () => {
    try {
      const response = await fetch(`${serviceBase}/stats`);
      const stats = (await response.json()) as {
        fps: number;
        stage_latency_ms?: { total_ms?: number };
      };
      el<HTMLDivElement>("stats").textContent =
        `server ${stats.fps.toFixed(1)} fps / client ${session.view().fps.toFixed(1)} fps` +
        (stats.stage_latency_ms?.total_ms
          ? ` / ${stats.stage_latency_ms.total_ms.toFixed(0)} ms per frame`
          : "");
    } catch {
      /* stats are cosmetic; keep streaming */
    }
  }, 1000);

  // capture guide overlay
  el<HTMLButtonElement>("start-guide").onclick = async () => {
    let script: GuideScript = defaultGuideScript();
    try {
      const response = await fetch("capture_guide.json");
      if (response.ok) {
        script = (await response.json()) as GuideScript;
      }
    } catch {
      /* fall back to the built-in uniform schedule */
    }
    const runner = new CaptureGuideRunner(script);
    guideOverlay.classList.add("visible");
    let last = performance.now();
    runner.onComplete = () => guideOverlay.classList.remove("visible");
    guideOverlay.onclick = () => (runner.view().paused ? runner.resume() : runner.pause());
    const tick = (): void => {
      const now = performance.now();
      runner.advance((now - last) / 1000);
      last = now;
      const view = runner.view();
      guideOverlay.textContent =
        `pose ${view.poseIndex + 1}/14: ${view.poseName} - ` +
        `${view.remainingS.toFixed(0)}s - ${view.rotationPrompt}` +
        (view.paused ? " (paused)" : "");
      if (!view.done) {
        requestAnimationFrame(tick);
      }
    };
    requestAnimationFrame(tick);
  };

  // camera capture, capped client-side; sending never blocks the paint loop
  const media = await navigator.mediaDevices.getUserMedia({
    video: { width: CAMERA_WIDTH, height: CAMERA_HEIGHT },
  });
  video.srcObject = media;
  await video.play();
  sendCanvas.width = video.videoWidth;
  sendCanvas.height = video.videoHeight;
  const sendCtx = sendCanvas.getContext("2d")!;

  stream.connect();
  const pump = (): void => {
    sendCtx.drawImage(video, 0, 0);
    sendCanvas.toBlob(async (blob) => {
      if (blob && stream.connectionState === "open") {
        const png = new Uint8Array(await blob.arrayBuffer());
        stream.sendFrame({
          frameId: frameCounter++,
          width: sendCanvas.width,
          height: sendCanvas.height,
          png,
        });
      }
    }, "image/png");
    requestAnimationFrame(pump);
  };
  requestAnimationFrame(pump);
}
