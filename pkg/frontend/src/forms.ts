// Artifact editors: a system-description form and a plan editor whose
// textarea uses the same "## case-id: Title" block format as the CLI
// fixtures. API validation errors are surfaced inline per field.

import type { SystemDescriptionForm, TestCaseForm, TestPlanForm, ValidationDetail } from "./types.js";

const CASE_HEADER = /^##\s+([a-z0-9][a-z0-9_-]*)\s*:\s*(.+)$/;

export function parsePlanText(planId: string, text: string): TestPlanForm {
  const cases: TestCaseForm[] = [];
  let current: TestCaseForm | null = null;
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    const header = CASE_HEADER.exec(line);
    if (header) {
      current = { case_id: header[1], title: header[2].trim(), steps: [], attributes_covered: [] };
      cases.push(current);
      continue;
    }
    if (!current) continue;
    if (line.startsWith("- ")) {
      current.steps.push(line.slice(2).trim());
    } else if (line.toLowerCase().startsWith("covers:")) {
      current.attributes_covered = line
        .slice("covers:".length)
        .split(",")
        .map((part) => part.trim())
        .filter(Boolean);
    }
  }
  return { plan_id: planId, cases };
}

function splitList(value: string): string[] {
  return value
    .split(",")
    .map((part) => part.trim())
    .filter(Boolean);
}

function field(name: string, label: string, multiline = false): HTMLElement {
  const wrap = document.createElement("label");
  wrap.className = "form-field";
  wrap.dataset.field = name;
  const caption = document.createElement("span");
  caption.textContent = label;
  wrap.appendChild(caption);
  const input = document.createElement(multiline ? "textarea" : "input");
  input.name = name;
  wrap.appendChild(input);
  const error = document.createElement("span");
  error.className = "field-error";
  wrap.appendChild(error);
  return wrap;
}

function readValue(form: HTMLFormElement, name: string): string {
  const input = form.elements.namedItem(name) as HTMLInputElement | HTMLTextAreaElement | null;
  return input ? input.value : "";
}

export function clearFieldErrors(form: HTMLFormElement): void {
  for (const node of form.querySelectorAll(".field-error")) node.textContent = "";
  const formError = form.querySelector(".form-error");
  if (formError) formError.textContent = "";
}

export function applyFieldErrors(form: HTMLFormElement, details: ValidationDetail[], fallback: string): void {
  clearFieldErrors(form);
  let placed = false;
  for (const detail of details) {
    const fieldName = detail.loc.length > 1 ? detail.loc[1] : null;
    const holder = fieldName
      ? form.querySelector<HTMLElement>(`.form-field[data-field="${fieldName}"] .field-error`)
      : null;
    if (holder) {
      holder.textContent = detail.msg;
      placed = true;
    }
  }
  if (!placed) {
    const formError = form.querySelector(".form-error");
    if (formError) formError.textContent = details[0]?.msg ?? fallback;
  }
}

export function buildSystemForm(onSubmit: (form: SystemDescriptionForm, element: HTMLFormElement) => void): HTMLFormElement {
  const form = document.createElement("form");
  form.className = "artifact-form system-form";
  form.appendChild(field("name", "System name"));
  form.appendChild(field("purpose", "Purpose", true));
  form.appendChild(field("inputs", "Inputs (comma-separated)"));
  form.appendChild(field("outputs", "Outputs (comma-separated)"));
  form.appendChild(field("target_users", "Target users (comma-separated)"));
  form.appendChild(field("context_notes", "Context notes", true));
  const error = document.createElement("p");
  error.className = "form-error";
  form.appendChild(error);
  const submit = document.createElement("button");
  submit.type = "submit";
  submit.textContent = "Save system description";
  form.appendChild(submit);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    onSubmit(
      {
        name: readValue(form, "name"),
        purpose: readValue(form, "purpose"),
        inputs: splitList(readValue(form, "inputs")),
        outputs: splitList(readValue(form, "outputs")),
        target_users: splitList(readValue(form, "target_users")),
        context_notes: readValue(form, "context_notes") || null,
      },
      form,
    );
  });
  return form;
}

export function buildPlanForm(onSubmit: (form: TestPlanForm, element: HTMLFormElement) => void): HTMLFormElement {
  const form = document.createElement("form");
  form.className = "artifact-form plan-form";
  form.appendChild(field("plan_id", "Plan id"));
  const cases = field("cases", "Cases (\"## case-id: Title\" blocks with \"- step\" lines)", true);
  form.appendChild(cases);
  const error = document.createElement("p");
  error.className = "form-error";
  form.appendChild(error);
  const submit = document.createElement("button");
  submit.type = "submit";
  submit.textContent = "Save test plan";
  form.appendChild(submit);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    onSubmit(parsePlanText(readValue(form, "plan_id"), readValue(form, "cases")), form);
  });
  return form;
}
