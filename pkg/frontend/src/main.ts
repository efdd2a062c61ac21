// Browser entry point: setup form, two-interval trial presentation with
// F/J keys or clicks, progress counter, and the end-of-session summary.

import { ApiClient, Choice, TrialPayload } from "./api.js";
import { SessionDriver } from "./driver.js";
import { overallProportion, summaryRows } from "./summary.js";

const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let driver: SessionDriver | null = null;
let imagesReady = false;
let currentIndex: number | null = null;

function show(section: "setup" | "trial" | "summary"): void {
  for (const name of ["setup", "trial", "summary"] as const) {
    el(name).hidden = name !== section;
  }
}

function setStatus(text: string): void {
  el("status").textContent = text;
}

async function loadTrial(): Promise<void> {
  if (!driver) return;
  let trial: TrialPayload;
  try {
    trial = await driver.currentTrial();
  } catch (err) {
    setStatus(`network error: ${String(err)} (retrying in 2s)`);
    window.setTimeout(loadTrial, 2000);
    return;
  }
  if (trial.done) {
    await showSummary();
    return;
  }
  currentIndex = trial.index;
  imagesReady = false;
  show("trial");
  el("progress").textContent = `trial ${Number(trial.index) + 1} of ${trial.total}`;
  setStatus("loading images…");
  const left = el<HTMLImageElement>("left-img");
  const right = el<HTMLImageElement>("right-img");
  left.src = api.stimulusUrl(trial.left as string);
  right.src = api.stimulusUrl(trial.right as string);
  try {
    await Promise.all([left.decode(), right.decode()]);
  } catch {
    // decode can reject on cache races; the load events still fire
  }
  imagesReady = true;
  setStatus("which image is distorted? F = left, J = right (or click one)");
}

async function choose(choice: Choice): Promise<void> {
  if (!driver || !imagesReady || currentIndex === null) return;
  const index = currentIndex;
  const outcome = await driver.submit(index, choice);
  if (outcome.kind === "duplicate") return;
  if (outcome.kind === "resynced") {
    setStatus("out of sync with the server, reloading the current trial…");
    await loadTrial();
    return;
  }
  if (outcome.done) {
    await showSummary();
  } else {
    await loadTrial();
  }
}

async function showSummary(): Promise<void> {
  if (!driver) return;
  const summary = await api.summary(driver.sessionId);
  show("summary");
  el("summary-title").textContent =
    `session ${summary.id.slice(0, 8)}… (${summary.observer}): ` +
    `${summary.completed}/${summary.total} trials`;
  const body = el("summary-body");
  body.innerHTML = "";
  for (const row of summaryRows(summary)) {
    const tr = document.createElement("tr");
    for (const cell of [
      row.level.toFixed(3),
      String(row.trials),
      String(row.correct),
      row.proportion.toFixed(3),
    ]) {
      const td = document.createElement("td");
      td.textContent = cell;
      tr.appendChild(td);
    }
    body.appendChild(tr);
  }
  el("summary-overall").textContent =
    `overall proportion correct: ${overallProportion(summary).toFixed(3)}`;
}

async function startSession(sessionId: string): Promise<void> {
  driver = new SessionDriver(api, sessionId);
  const url = new URL(window.location.href);
  url.searchParams.set("session", sessionId);
  window.history.replaceState(null, "", url.toString());
  await loadTrial();
}

function wireSetup(): void {
  el<HTMLButtonElement>("create-btn").addEventListener("click", async () => {
    const observer = el<HTMLInputElement>("observer").value || "anonymous";
    const experiment = el<HTMLInputElement>("experiment").value;
    if (!experiment) {
      setStatus("enter the experiment name prepared on the server");
      return;
    }
    try {
      const created = await api.createSession({ observer, experiment });
      await startSession(created.id);
    } catch (err) {
      setStatus(String(err));
    }
  });
  el<HTMLButtonElement>("resume-btn").addEventListener("click", async () => {
    const sessionId = el<HTMLInputElement>("session-id").value.trim();
    if (sessionId) await startSession(sessionId);
  });
}

function wireTrialInput(): void {
  el("left-img").addEventListener("click", () => void choose("left"));
  el("right-img").addEventListener("click", () => void choose("right"));
  document.addEventListener("keydown", (ev) => {
    if (el("trial").hidden) return;
    if (ev.repeat) return;
    if (ev.key === "f" || ev.key === "F") void choose("left");
    if (ev.key === "j" || ev.key === "J") void choose("right");
  });
}

function init(): void {
  wireSetup();
  wireTrialInput();
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session");
  if (sessionId) {
    void startSession(sessionId);
  } else {
    show("setup");
    setStatus("create a session or resume one by id");
  }
}

init();
