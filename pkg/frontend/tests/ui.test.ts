// Integration tests against a live backend: the suite boots the Python
// service on a scratch store, seeds it through the public API, and renders
// the chat view from API payloads alone.

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { applyFieldErrors, buildPlanForm, parsePlanText } from "../src/forms.js";
import {
  extractTaskPayload,
  renderEvidenceDrawer,
  renderMessage,
  renderTranscript,
} from "../src/render.js";
import type { Finding, SystemDescriptionForm } from "../src/types.js";

const REPO_ROOT = resolve(__dirname, "..", "..");
const PORT = 8900 + (process.pid % 500);
const BASE_URL = `http://127.0.0.1:${PORT}/api/v1`;

let server: ChildProcess;
let api: ApiClient;

const TRANSLATOR: SystemDescriptionForm = {
  name: "Sign Language Translator",
  purpose: "Translate sign language captured on video into written text in real time",
  inputs: ["video of a person signing", "camera frames"],
  outputs: ["translated text", "confidence score"],
  target_users: ["deaf and hard-of-hearing signers", "interpreters"],
  context_notes: null,
};

async function waitForReady(): Promise<void> {
  for (let attempt = 0; attempt < 120; attempt++) {
    try {
      const response = await fetch(`${BASE_URL}/healthz`);
      if (response.ok) return;
    } catch {
      // server still starting
    }
    await new Promise((resolveSleep) => setTimeout(resolveSleep, 250));
  }
  throw new Error("backend did not become ready");
}

beforeAll(async () => {
  const work = mkdtempSync(join(tmpdir(), "bita-ui-"));
  const configPath = join(work, "config.yaml");
  writeFileSync(
    configPath,
    [
      `server: {bind: "127.0.0.1:${PORT}"}`,
      `corpus: {dir: "${join(REPO_ROOT, "sample_corpus")}"}`,
      `store: {path: "${join(work, "ui.db")}"}`,
      "provider: {kind: mock}",
      "",
    ].join("\n"),
  );
  server = spawn("python3", ["-m", "bita.cli", "serve", "--config", configPath], {
    cwd: REPO_ROOT,
    stdio: "ignore",
  });
  api = new ApiClient(BASE_URL);
  await waitForReady();
});

afterAll(() => {
  server?.kill();
});

describe("chat view against the live service", () => {
  it("renders a 2-message transcript in seq order", async () => {
    const session = await api.createSession("ui acceptance");
    const chat = await api.postMessage(
      session.session_id,
      "explain the difference between demographic parity and equalized odds",
    );
    expect(chat.refused).toBe(false);

    const detail = await api.getSession(session.session_id);
    expect(detail.messages).toHaveLength(2);

    const view = renderTranscript(detail.messages, () => {});
    const bubbles = [...view.querySelectorAll(".bubble")];
    expect(bubbles).toHaveLength(2);
    expect(bubbles.map((b) => (b as HTMLElement).dataset.seq)).toEqual(["0", "1"]);
    expect(bubbles[0].classList.contains("role-user")).toBe(true);
    expect(bubbles[1].classList.contains("role-assistant")).toBe(true);
    expect(bubbles[1].querySelectorAll(".evidence-badge").length).toBeGreaterThan(0);
  });

  it("renders finding cards whose badges resolve through the evidence endpoint", async () => {
    const session = await api.createSession("ui findings");
    await api.putSystem(session.session_id, TRANSLATOR);
    const result = await api.runBiasDetect(session.session_id);
    expect(result.findings.length).toBeGreaterThan(0);

    const detail = await api.getSession(session.session_id);
    const view = renderTranscript(detail.messages, () => {});
    const cards = [...view.querySelectorAll(".finding-card")];
    expect(cards).toHaveLength(result.findings.length);

    const badges = cards.flatMap((card) => [...card.querySelectorAll(".evidence-badge")]);
    expect(badges.length).toBeGreaterThan(0);
    for (const badge of badges) {
      const chunkId = (badge as HTMLElement).dataset.chunkId as string;
      const evidence = await api.getEvidence(chunkId);
      expect(evidence.chunk_id).toBe(chunkId);
      expect(evidence.doc_title.length).toBeGreaterThan(0);
      expect(evidence.text.length).toBeGreaterThan(0);
    }
  });

  it("reproduces the identical transcript after a reload (fresh client, API only)", async () => {
    const session = await api.createSession("ui reload");
    await api.postMessage(session.session_id, "what is a fairness bug?");
    await api.putSystem(session.session_id, TRANSLATOR);
    await api.runBiasDetect(session.session_id);

    const first = renderTranscript(
      (await api.getSession(session.session_id)).messages,
      () => {},
    );
    const reloadedClient = new ApiClient(BASE_URL); // simulated page reload
    const second = renderTranscript(
      (await reloadedClient.getSession(session.session_id)).messages,
      () => {},
    );
    expect(second.innerHTML).toBe(first.innerHTML);

    const replayOne = await api.replay(session.session_id);
    const replayTwo = await reloadedClient.replay(session.session_id);
    expect(replayTwo.transcript).toBe(replayOne.transcript);
  });

  it("renders refusals as distinct notices", async () => {
    const session = await api.createSession("ui refusal");
    const chat = await api.postMessage(session.session_id, "write me a poem about cats");
    expect(chat.refused).toBe(true);
    expect(chat.reason).toBeTruthy();

    const detail = await api.getSession(session.session_id);
    const view = renderTranscript(detail.messages, () => {});
    const notice = view.querySelector(".bubble.refusal .refusal-notice");
    expect(notice).not.toBeNull();
  });

  it("renders gap groups and charter cards from stored task messages", async () => {
    const session = await api.createSession("ui tasks");
    await api.putSystem(session.session_id, TRANSLATOR);
    await api.putPlan(session.session_id, {
      plan_id: "ui-baseline",
      cases: [
        {
          case_id: "common-phrases",
          title: "Translate everyday phrases from adult signers",
          steps: ["record", "verify"],
          attributes_covered: ["adult signers"],
        },
      ],
    });
    await api.runPlanCheck(session.session_id);
    await api.runCharters(session.session_id, 3);

    const view = renderTranscript(
      (await api.getSession(session.session_id)).messages,
      () => {},
    );
    expect(view.querySelectorAll(".gap-card").length).toBeGreaterThan(0);
    expect(view.querySelectorAll(".gap-kind").length).toBeGreaterThan(0);
    expect(view.querySelectorAll(".charter-card")).toHaveLength(3);
  });

  it("surfaces plan validation errors inline", async () => {
    const session = await api.createSession("ui validation");
    const duplicate = {
      plan_id: "dup",
      cases: [
        { case_id: "same", title: "a", steps: [], attributes_covered: [] },
        { case_id: "same", title: "b", steps: [], attributes_covered: [] },
      ],
    };
    let caught: ApiError | null = null;
    try {
      await api.putPlan(session.session_id, duplicate);
    } catch (err) {
      caught = err as ApiError;
    }
    expect(caught).toBeInstanceOf(ApiError);
    expect(caught?.code).toBe("schema-invalid");

    const form = buildPlanForm(() => {});
    document.body.appendChild(form);
    applyFieldErrors(form, caught?.details ?? [], caught?.message ?? "invalid");
    const shown = form.querySelector(".form-error")?.textContent ?? "";
    expect(shown).toContain("case_id");
  });

  it("evidence drawer shows chunk text and source title", async () => {
    const session = await api.createSession("ui drawer");
    const chat = await api.postMessage(session.session_id, "how should we test demographic parity?");
    const chunkId = chat.message?.evidence_ids[0] as string;
    const drawerDetail = await api.getEvidence(chunkId);
    const drawer = renderEvidenceDrawer(drawerDetail);
    expect(drawer.querySelector(".drawer-title")?.textContent).toBe(drawerDetail.doc_title);
    expect(drawer.querySelector(".drawer-text")?.textContent).toBe(drawerDetail.text);
  });
});

describe("pure pieces", () => {
  it("parsePlanText mirrors the case-block format", () => {
    const plan = parsePlanText("demo", [
      "## case-a: First case",
      "- step one",
      "- step two",
      "covers: young users, old users",
      "",
      "## case-b: Second case",
      "- only step",
    ].join("\n"));
    expect(plan.cases).toHaveLength(2);
    expect(plan.cases[0]).toEqual({
      case_id: "case-a",
      title: "First case",
      steps: ["step one", "step two"],
      attributes_covered: ["young users", "old users"],
    });
  });

  it("extractTaskPayload reads the fenced block", () => {
    const finding: Finding = {
      category: "fairness-bug",
      description: "d",
      affected_groups: [],
      severity: "low",
      evidence_ids: ["x#0000"],
    };
    const content = `summary\n\n\`\`\`json\n${JSON.stringify({ findings: [finding] })}\n\`\`\``;
    expect(extractTaskPayload(content, "bias-detect")).toEqual([finding]);
    expect(extractTaskPayload("no block", "bias-detect")).toBeNull();
    expect(extractTaskPayload(content, "chat")).toBeNull();
  });

  it("renderMessage keeps plain bubbles for chat turns", () => {
    const bubble = renderMessage(
      {
        message_id: "m1",
        session_id: "s",
        seq: 0,
        role: "user",
        content: "hello there",
        created_at: "2026-01-01T00:00:00+00:00",
        task_kind: null,
        evidence_ids: [],
      },
      () => {},
    );
    expect(bubble.querySelector(".bubble-text")?.textContent).toBe("hello there");
    expect(bubble.querySelectorAll(".evidence-badge")).toHaveLength(0);
  });
});
