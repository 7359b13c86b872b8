// Application shell: left session list, center chat, right drawer with the
// evidence inspector and artifact editors. All state beyond this view state
// lives server-side; every repaint re-fetches from the API.

import { ApiClient, ApiError, ConnectivityError } from "./api.js";
import { applyFieldErrors, buildPlanForm, buildSystemForm, clearFieldErrors } from "./forms.js";
import {
  renderConnectivityBanner,
  renderEvidenceDrawer,
  renderSessionList,
  renderTranscript,
} from "./render.js";
import type { EvidenceDetail, Message, SessionSummary } from "./types.js";

interface ViewState {
  sessions: SessionSummary[];
  activeSessionId: string | null;
  messages: Message[];
  composerText: string;
  inFlight: boolean;
  drawer: EvidenceDetail | null;
  bannerMessage: string | null;
  statusNote: string | null;
}

const state: ViewState = {
  sessions: [],
  activeSessionId: null,
  messages: [],
  composerText: "",
  inFlight: false,
  drawer: null,
  bannerMessage: null,
  statusNote: null,
};

const api = new ApiClient();
let root: HTMLElement;

function advancedEnabled(): boolean {
  return (globalThis as Record<string, unknown>)["BITA_ADVANCED"] === true;
}

function providerOverride(): string | undefined {
  if (!advancedEnabled()) return undefined;
  const select = root.querySelector<HTMLSelectElement>("#provider-select");
  return select && select.value !== "default" ? select.value : undefined;
}

async function guard<T>(work: () => Promise<T>): Promise<T | null> {
  try {
    const result = await work();
    state.bannerMessage = null;
    return result;
  } catch (err) {
    if (err instanceof ConnectivityError) {
      state.bannerMessage = "The assistant API is unreachable.";
    } else if (err instanceof ApiError) {
      state.statusNote = `${err.code}: ${err.message}`;
    } else {
      state.statusNote = String(err);
    }
    return null;
  }
}

async function refreshSessions(): Promise<void> {
  const sessions = await guard(() => api.listSessions());
  if (sessions) state.sessions = sessions;
}

async function refreshTranscript(): Promise<void> {
  if (!state.activeSessionId) {
    state.messages = [];
    return;
  }
  const detail = await guard(() => api.getSession(state.activeSessionId as string));
  if (detail) state.messages = detail.messages;
}

async function selectSession(sessionId: string): Promise<void> {
  state.activeSessionId = sessionId;
  state.drawer = null;
  await refreshTranscript();
  paint();
}

async function newSession(): Promise<void> {
  const created = await guard(() => api.createSession("Untitled session"));
  if (created) {
    await refreshSessions();
    await selectSession(created.session_id);
    return;
  }
  paint();
}

async function openEvidence(chunkId: string): Promise<void> {
  const detail = await guard(() => api.getEvidence(chunkId));
  if (detail) state.drawer = detail;
  paint();
}

async function sendMessage(): Promise<void> {
  if (!state.activeSessionId || state.inFlight || !state.composerText.trim()) return;
  state.inFlight = true;
  paint();
  const text = state.composerText;
  const response = await guard(() =>
    api.postMessage(state.activeSessionId as string, text, providerOverride()),
  );
  if (response) {
    state.composerText = "";
    state.statusNote = response.refused ? `Refused: ${response.reason ?? ""}` : null;
  }
  state.inFlight = false;
  await refreshTranscript();
  await refreshSessions();
  paint();
}

async function runTask(kind: "bias-detect" | "plan-check" | "charters"): Promise<void> {
  if (!state.activeSessionId || state.inFlight) return;
  state.inFlight = true;
  paint();
  const sessionId = state.activeSessionId;
  await guard(async () => {
    if (kind === "bias-detect") return api.runBiasDetect(sessionId, providerOverride());
    if (kind === "plan-check") return api.runPlanCheck(sessionId, providerOverride());
    const raw = root.querySelector<HTMLInputElement>("#charter-count")?.value ?? "2";
    return api.runCharters(sessionId, Number(raw) || 2, providerOverride());
  });
  state.inFlight = false;
  await refreshTranscript();
  paint();
}

function composer(): HTMLElement {
  const bar = document.createElement("div");
  bar.className = "composer";
  const input = document.createElement("textarea");
  input.id = "composer-input";
  input.placeholder = "Ask about fairness testing, or describe your system…";
  input.value = state.composerText;
  input.addEventListener("input", () => {
    state.composerText = input.value;
  });
  bar.appendChild(input);
  const send = document.createElement("button");
  send.id = "send-button";
  send.type = "button";
  send.textContent = state.inFlight ? "Working…" : "Send";
  send.disabled = state.inFlight;
  send.addEventListener("click", () => void sendMessage());
  bar.appendChild(send);
  return bar;
}

function taskBar(): HTMLElement {
  const bar = document.createElement("div");
  bar.className = "task-bar";
  for (const [label, kind] of [
    ["Detect bias", "bias-detect"],
    ["Check plan", "plan-check"],
    ["Charters", "charters"],
  ] as const) {
    const button = document.createElement("button");
    button.type = "button";
    button.className = `task-button task-${kind}`;
    button.textContent = label;
    button.disabled = state.inFlight || !state.activeSessionId;
    button.addEventListener("click", () => void runTask(kind));
    bar.appendChild(button);
  }
  const count = document.createElement("input");
  count.id = "charter-count";
  count.type = "number";
  count.min = "1";
  count.max = "10";
  count.value = "2";
  bar.appendChild(count);
  if (advancedEnabled()) {
    const select = document.createElement("select");
    select.id = "provider-select";
    for (const value of ["default", "mock", "remote-a", "remote-b"]) {
      const option = document.createElement("option");
      option.value = value;
      option.textContent = value;
      select.appendChild(option);
    }
    bar.appendChild(select);
  }
  return bar;
}

function artifactPanel(): HTMLElement {
  const panel = document.createElement("section");
  panel.className = "artifact-panel";
  panel.appendChild(
    buildSystemForm(async (form, element) => {
      if (!state.activeSessionId) return;
      clearFieldErrors(element);
      try {
        await api.putSystem(state.activeSessionId, form);
        await refreshTranscript();
        paint();
      } catch (err) {
        if (err instanceof ApiError) applyFieldErrors(element, err.details, err.message);
        else if (err instanceof ConnectivityError) {
          state.bannerMessage = "The assistant API is unreachable.";
          paint();
        }
      }
    }),
  );
  panel.appendChild(
    buildPlanForm(async (form, element) => {
      if (!state.activeSessionId) return;
      clearFieldErrors(element);
      try {
        await api.putPlan(state.activeSessionId, form);
        await refreshTranscript();
        paint();
      } catch (err) {
        if (err instanceof ApiError) applyFieldErrors(element, err.details, err.message);
        else if (err instanceof ConnectivityError) {
          state.bannerMessage = "The assistant API is unreachable.";
          paint();
        }
      }
    }),
  );
  return panel;
}

export function paint(): void {
  root.textContent = "";

  if (state.bannerMessage) {
    root.appendChild(
      renderConnectivityBanner(state.bannerMessage, () => {
        void (async () => {
          await refreshSessions();
          await refreshTranscript();
          paint();
        })();
      }),
    );
  }

  const layout = document.createElement("main");
  layout.className = "layout";

  const left = document.createElement("aside");
  left.className = "pane pane-left";
  const newButton = document.createElement("button");
  newButton.id = "new-session";
  newButton.type = "button";
  newButton.textContent = "New session";
  newButton.addEventListener("click", () => void newSession());
  left.appendChild(newButton);
  left.appendChild(
    renderSessionList(state.sessions, state.activeSessionId, (id) => void selectSession(id)),
  );
  layout.appendChild(left);

  const center = document.createElement("section");
  center.className = "pane pane-center";
  if (state.statusNote) {
    center.appendChild(Object.assign(document.createElement("p"), {
      className: "status-note",
      textContent: state.statusNote,
    }));
  }
  center.appendChild(renderTranscript(state.messages, (id) => void openEvidence(id)));
  center.appendChild(taskBar());
  center.appendChild(composer());
  layout.appendChild(center);

  const right = document.createElement("aside");
  right.className = "pane pane-right";
  right.appendChild(renderEvidenceDrawer(state.drawer));
  right.appendChild(artifactPanel());
  layout.appendChild(right);

  root.appendChild(layout);
}

export async function start(container: HTMLElement): Promise<void> {
  root = container;
  await refreshSessions();
  if (state.sessions.length > 0) {
    state.activeSessionId = state.sessions[0].session_id;
    await refreshTranscript();
  }
  paint();
}

const mount = typeof document !== "undefined" ? document.getElementById("app") : null;
if (mount) {
  void start(mount);
}
