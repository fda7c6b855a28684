// Wiring: socket lifecycle, message dispatch, render loop, HUD controls.

import { HeadingDrag, makeSocketSink, switchCheckpoint } from "./controls.js";
import { interpolated } from "./interpolate.js";
import { parseServerMessage } from "./protocol.js";
import { drawScene, drawSparkline } from "./render.js";
import { ViewState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function serverUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const host = params.get("host") ?? window.location.hostname ?? "127.0.0.1";
  const port = params.get("port") ?? "8787";
  return `ws://${host || "127.0.0.1"}:${port}`;
}

export function start(): void {
  const canvas = el<HTMLCanvasElement>("arena");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("no 2d context");
  const status = el<HTMLSpanElement>("status");
  const roleLabel = el<HTMLSpanElement>("role");
  const activeLabel = el<HTMLSpanElement>("active");
  const errorLabel = el<HTMLSpanElement>("lasterror");
  const switcher = el<HTMLDivElement>("checkpoints");
  const view = new ViewState();

  let socket: WebSocket | null = null;
  let sink = makeSocketSink({ send: () => undefined });
  const drag = new HeadingDrag(
    { send: (cmd) => sink.send(cmd) },
    () => view.selectedAgent,
  );

  function connect(): void {
    view.connection = "connecting";
    socket = new WebSocket(serverUrl());
    sink = makeSocketSink(socket);
    socket.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (!msg) return; // invalid frames never render
      if (msg.type === "hello") {
        view.applyHello(msg);
        roleLabel.textContent = msg.role;
        rebuildSwitcher();
      } else if (msg.type === "frame") {
        view.applyFrame(msg, performance.now());
      } else if (msg.type === "ack") {
        view.activeCheckpoint = msg.checkpoint;
        rebuildSwitcher();
      } else if (msg.type === "error") {
        view.lastError = msg.message;
      }
    };
    socket.onclose = () => {
      view.connection = "closed";
      setTimeout(connect, 1000);
    };
    socket.onerror = () => socket?.close();
  }

  function rebuildSwitcher(): void {
    switcher.replaceChildren();
    for (const id of view.checkpoints) {
      const btn = document.createElement("button");
      btn.textContent = id;
      btn.disabled = view.role !== "controller";
      if (id === view.activeCheckpoint) btn.classList.add("active");
      btn.onclick = () => {
        try {
          switchCheckpoint(sink, id);
        } catch (err) {
          view.lastError = String(err);
        }
      };
      switcher.appendChild(btn);
    }
    activeLabel.textContent = view.activeCheckpoint;
  }

  function bindButton(id: string, fn: () => void): void {
    el<HTMLButtonElement>(id).onclick = () => {
      try {
        fn();
      } catch (err) {
        view.lastError = String(err);
      }
    };
  }

  bindButton("pause", () => sink.send({ type: "pause" }));
  bindButton("resume", () => sink.send({ type: "resume" }));
  bindButton("reset", () => sink.send({ type: "reset", seed: (Math.random() * 1e9) | 0 }));
  el<HTMLSelectElement>("agent").onchange = (ev) => {
    const v = (ev.target as HTMLSelectElement).value;
    view.selectedAgent = v === "both" ? "both" : (Number(v) as 0 | 1);
  };
  el<HTMLSelectElement>("speed").onchange = (ev) => {
    sink.send({ type: "set_speed", multiplier: Number((ev.target as HTMLSelectElement).value) });
  };

  canvas.addEventListener("pointerdown", (ev) => {
    if (view.role !== "controller" || !view.headingCapable) return;
    canvas.setPointerCapture(ev.pointerId);
    drag.down(ev.offsetX, ev.offsetY);
  });
  canvas.addEventListener("pointermove", (ev) => {
    drag.move(ev.offsetX, ev.offsetY);
    view.dragVector = drag.preview;
  });
  canvas.addEventListener("pointerup", () => {
    drag.up();
    view.dragVector = null;
  });

  function resize(): void {
    canvas.width = canvas.clientWidth * devicePixelRatio;
    canvas.height = canvas.clientHeight * devicePixelRatio;
  }
  window.addEventListener("resize", resize);
  resize();

  const frameInterval = () => 1000 / view.geometry.control_hz;
  function renderLoop(): void {
    view.markStale(performance.now());
    status.textContent = view.connection;
    status.className = view.connection;
    errorLabel.textContent = view.lastError;
    const scene = interpolated(view.previous, view.latest,
                               performance.now() - view.latestArrivedAt, frameInterval());
    if (scene) {
      ctx!.save();
      ctx!.scale(devicePixelRatio, devicePixelRatio);
      drawScene(ctx!, view, scene, canvas.clientWidth, canvas.clientHeight);
      drawSparkline(ctx!, view, 0, 8, 8, 120, 34);
      drawSparkline(ctx!, view, 1, canvas.clientWidth - 128, 8, 120, 34);
      ctx!.restore();
    } else {
      ctx!.save();
      ctx!.scale(devicePixelRatio, devicePixelRatio);
      ctx!.clearRect(0, 0, canvas.clientWidth, canvas.clientHeight);
      ctx!.fillStyle = "#94a3b8";
      ctx!.font = "16px sans-serif";
      ctx!.fillText("waiting for frames…", 20, 40);
      ctx!.restore();
    }
    requestAnimationFrame(renderLoop);
  }
  connect();
  requestAnimationFrame(renderLoop);
}

start();
