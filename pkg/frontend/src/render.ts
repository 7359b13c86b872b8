// Pure DOM builders for the chat view. Everything renders from API
// payloads alone, so a page reload reproduces the identical transcript.

import type { Charter, Finding, Gap, Message, SessionSummary, EvidenceDetail, TaskKind } from "./types.js";

const FENCED_JSON = /```json\s*\n([\s\S]*?)\n```/;

export type EvidenceOpener = (chunkId: string) => void;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function extractTaskPayload(content: string, taskKind: TaskKind | null): unknown[] | null {
  const keys: Record<string, string> = {
    "bias-detect": "findings",
    "plan-check": "gaps",
    "charter-gen": "charters",
  };
  const key = taskKind ? keys[taskKind] : undefined;
  if (!key) return null;
  const match = FENCED_JSON.exec(content);
  if (!match) return null;
  try {
    const payload = JSON.parse(match[1]) as Record<string, unknown>;
    const items = payload[key];
    return Array.isArray(items) ? items : null;
  } catch {
    return null;
  }
}

export function evidenceBadge(chunkId: string, onOpen: EvidenceOpener): HTMLButtonElement {
  const badge = el("button", "evidence-badge", chunkId);
  badge.type = "button";
  badge.dataset.chunkId = chunkId;
  badge.addEventListener("click", () => onOpen(chunkId));
  return badge;
}

function badgeRow(ids: string[], onOpen: EvidenceOpener): HTMLElement {
  const row = el("div", "badge-row");
  for (const id of ids) row.appendChild(evidenceBadge(id, onOpen));
  return row;
}

function listBlock(label: string, items: string[]): HTMLElement | null {
  if (!items.length) return null;
  const block = el("div", "list-block");
  block.appendChild(el("span", "list-label", label));
  const ul = el("ul");
  for (const item of items) ul.appendChild(el("li", undefined, item));
  block.appendChild(ul);
  return block;
}

export function renderFindingCard(finding: Finding, onOpen: EvidenceOpener): HTMLElement {
  const card = el("article", "card finding-card");
  const head = el("header", "card-head");
  head.appendChild(el("span", `category-badge category-${finding.category}`, finding.category));
  head.appendChild(el("span", `severity severity-${finding.severity}`, finding.severity));
  card.appendChild(head);
  card.appendChild(el("p", "card-body", finding.description));
  const groups = listBlock("Affected groups", finding.affected_groups);
  if (groups) card.appendChild(groups);
  card.appendChild(badgeRow(finding.evidence_ids, onOpen));
  return card;
}

export function renderGapGroups(gaps: Gap[], onOpen: EvidenceOpener): HTMLElement {
  const wrap = el("div", "gap-groups");
  const kinds = [...new Set(gaps.map((g) => g.gap_kind))];
  for (const kind of kinds) {
    const group = el("section", "gap-group");
    group.appendChild(el("h4", "gap-kind", kind));
    for (const gap of gaps.filter((g) => g.gap_kind === kind)) {
      const card = el("article", "card gap-card");
      card.appendChild(el("p", "card-body", gap.description));
      const related = listBlock("Related cases", gap.related_case_ids);
      if (related) card.appendChild(related);
      const suggested = listBlock("Suggested cases", gap.suggested_cases);
      if (suggested) card.appendChild(suggested);
      card.appendChild(badgeRow(gap.evidence_ids, onOpen));
      group.appendChild(card);
    }
    wrap.appendChild(group);
  }
  return wrap;
}

export function renderCharterCard(charter: Charter, onOpen: EvidenceOpener): HTMLElement {
  const card = el("article", "card charter-card");
  card.appendChild(el("h4", "charter-mission", charter.mission));
  for (const [label, items] of [
    ["Target areas", charter.target_areas],
    ["Fairness risks", charter.fairness_risks],
    ["Resources", charter.resources_setup],
    ["Guiding questions", charter.guiding_questions],
  ] as [string, string[]][]) {
    const block = listBlock(label, items);
    if (block) card.appendChild(block);
  }
  card.appendChild(el("p", "timebox", `Timebox: ${charter.timebox_minutes} min`));
  card.appendChild(badgeRow(charter.evidence_ids, onOpen));
  return card;
}

function renderTaskCards(message: Message, onOpen: EvidenceOpener): HTMLElement | null {
  const items = extractTaskPayload(message.content, message.task_kind);
  if (items === null) return null;
  if (message.task_kind === "bias-detect") {
    const wrap = el("div", "task-cards");
    for (const item of items) wrap.appendChild(renderFindingCard(item as Finding, onOpen));
    return wrap;
  }
  if (message.task_kind === "plan-check") {
    return renderGapGroups(items as Gap[], onOpen);
  }
  if (message.task_kind === "charter-gen") {
    const wrap = el("div", "task-cards");
    for (const item of items) wrap.appendChild(renderCharterCard(item as Charter, onOpen));
    return wrap;
  }
  return null;
}

export function renderRefusalNotice(reason: string): HTMLElement {
  const notice = el("aside", "refusal-notice");
  notice.appendChild(el("strong", undefined, "Out of scope."));
  notice.appendChild(el("span", undefined, ` ${reason}`));
  return notice;
}

export function renderMessage(message: Message, onOpen: EvidenceOpener): HTMLElement {
  const bubble = el("article", `bubble role-${message.role}`);
  bubble.dataset.seq = String(message.seq);
  bubble.dataset.messageId = message.message_id;

  if (message.role === "system-note" && message.content.startsWith("Request refused")) {
    bubble.classList.add("refusal");
    bubble.appendChild(renderRefusalNotice(message.content));
    return bubble;
  }

  const cards = message.role === "assistant" ? renderTaskCards(message, onOpen) : null;
  if (cards) {
    const summary = message.content.split("\n\n")[0] ?? "";
    bubble.appendChild(el("p", "task-summary", summary));
    bubble.appendChild(cards);
  } else {
    bubble.appendChild(el("p", "bubble-text", message.content));
  }
  if (message.evidence_ids.length) {
    bubble.appendChild(badgeRow(message.evidence_ids, onOpen));
  }
  return bubble;
}

export function renderTranscript(messages: Message[], onOpen: EvidenceOpener): HTMLElement {
  const section = el("section", "transcript");
  const ordered = [...messages].sort((a, b) => a.seq - b.seq);
  for (const message of ordered) section.appendChild(renderMessage(message, onOpen));
  return section;
}

export function renderSessionList(
  sessions: SessionSummary[],
  activeId: string | null,
  onSelect: (id: string) => void,
): HTMLElement {
  const list = el("nav", "session-list");
  for (const session of sessions) {
    const entry = el("button", "session-entry");
    entry.type = "button";
    if (session.session_id === activeId) entry.classList.add("active");
    entry.dataset.sessionId = session.session_id;
    entry.appendChild(el("span", "session-title", session.title));
    entry.appendChild(el("span", "session-count", `${session.message_count}`));
    entry.addEventListener("click", () => onSelect(session.session_id));
    list.appendChild(entry);
  }
  return list;
}

export function renderEvidenceDrawer(detail: EvidenceDetail | null): HTMLElement {
  const drawer = el("section", "evidence-drawer");
  if (!detail) {
    drawer.appendChild(el("p", "drawer-empty", "Click an evidence badge to inspect its source."));
    return drawer;
  }
  drawer.appendChild(el("h3", "drawer-title", detail.doc_title));
  drawer.appendChild(el("p", "drawer-meta", `${detail.chunk_id} · ${detail.doc_kind}`));
  drawer.appendChild(el("p", "drawer-text", detail.text));
  return drawer;
}

export function renderConnectivityBanner(message: string, onRetry: () => void): HTMLElement {
  const banner = el("div", "connectivity-banner");
  banner.appendChild(el("span", undefined, message));
  const retry = el("button", "retry", "Retry");
  retry.type = "button";
  retry.addEventListener("click", onRetry);
  banner.appendChild(retry);
  return banner;
}
