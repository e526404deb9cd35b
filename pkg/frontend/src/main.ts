// Cockpit wiring: connect, sample inputs at 50 Hz, render on animation
// frames, reflect HUD state into the DOM.

import { deriveHud } from "./hud.js";
import { InputManager } from "./input.js";
import { CockpitClient } from "./net.js";
import { SceneRenderer } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const params = new URLSearchParams(location.search);
  const url = params.get("ws") ?? `ws://${location.hostname || "127.0.0.1"}:8700`;
  const wantDriver = params.get("role") !== "viewer";

  const canvas = el<HTMLCanvasElement>("scene");
  const renderer = new SceneRenderer(canvas);
  const client = new CockpitClient(url, wantDriver);
  const input = new InputManager();
  input.attach(window as unknown as Parameters<InputManager["attach"]>[0]);
  window.addEventListener("blur", () => input.deviceLost());
  window.addEventListener("focus", () => input.deviceRestored());

  // input sampling at 50 Hz, independent of the render rate
  let lastSample = performance.now();
  setInterval(() => {
    const now = performance.now();
    const dt = Math.min((now - lastSample) / 1000, 0.1);
    lastSample = now;
    const { frame, events } = input.sample(dt);
    if (client.role === "driver" && client.state === "open") {
      client.sendInput(frame);
      if (events.engage) client.engage(events.engage);
      if (events.disengage) client.disengage();
      if (events.reset_emergency) client.resetEmergency();
      if (events.pause) client.pause(!(client.snapshot?.paused ?? false));
    }
  }, 20);

  const badge = el<HTMLDivElement>("badge");
  const banner = el<HTMLDivElement>("banner");
  const speedBox = el<HTMLDivElement>("speed");
  const torqueBox = el<HTMLDivElement>("torque");
  const noticesBox = el<HTMLDivElement>("notices");
  const overlay = el<HTMLDivElement>("overlay");
  const roleBox = el<HTMLDivElement>("role");

  function renderHud(): void {
    const hud = deriveHud(client.snapshot, client.isStale(), client.notices);
    badge.textContent = hud.badge.text;
    badge.style.background = hud.badge.color;
    roleBox.textContent =
      client.state !== "open" ? "disconnected"
      : client.role === "driver" ? "driver" : "viewer";

    if (hud.banner) {
      banner.style.display = "block";
      banner.textContent = `${hud.banner.text} — ${hud.banner.remaining.toFixed(1)} s`;
      banner.classList.toggle("flash", hud.banner.flash);
    } else {
      banner.style.display = "none";
    }

    const s = hud.speed;
    speedBox.innerHTML =
      `<b>${s.kmh.toFixed(0)}</b> km/h · target ${s.targetKmh.toFixed(0)}` +
      (s.advisedKmh !== null
        ? ` · <span class="${s.overAdvice ? "bad" : ""}">advised ${s.advisedKmh.toFixed(0)}</span>`
        : "");

    const tq = hud.torque;
    const bar = (v: number) =>
      `<span class="bar"><i style="width:${Math.min(Math.abs(v) / 5, 1) * 50}%;` +
      `margin-left:${v < 0 ? 50 - Math.min(Math.abs(v) / 5, 1) * 50 : 50}%"></i></span>`;
    torqueBox.innerHTML =
      `assist ${tq.assist.toFixed(1)} ${bar(tq.assist)}<br>` +
      `driver ${tq.driver.toFixed(1)} ${bar(tq.driver)}` +
      (tq.override ? ' <span class="bad">OVERRIDE</span>' : "") +
      (hud.pedalFeedback > 0
        ? `<br>pedal pushback ${hud.pedalFeedback.toFixed(0)} N` : "");

    noticesBox.innerHTML = "";
    hud.notices.forEach((n, i) => {
      const div = document.createElement("div");
      div.className = `notice ${n.kind}`;
      div.textContent = n.text;
      const x = document.createElement("button");
      x.textContent = "x";
      x.onclick = () => client.dismissNotice(i);
      div.appendChild(x);
      noticesBox.appendChild(div);
    });

    overlay.style.display = hud.signalLost ? "flex" : "none";
    overlay.textContent = hud.paused && !hud.signalLost ? "PAUSED" : "SIGNAL LOST";
  }

  function frame(): void {
    const dpr = window.devicePixelRatio || 1;
    if (canvas.width !== canvas.clientWidth * dpr) {
      canvas.width = canvas.clientWidth * dpr;
      canvas.height = canvas.clientHeight * dpr;
    }
    renderer.draw(client.road, client.snapshot);
    renderHud();
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

window.addEventListener("load", main);
