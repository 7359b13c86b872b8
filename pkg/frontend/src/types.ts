// Payload types for the /api/v1 surface.

export type Role = "user" | "assistant" | "system-note";
export type TaskKind = "chat" | "bias-detect" | "plan-check" | "charter-gen";

export interface SessionSummary {
  session_id: string;
  created_at: string;
  title: string;
  message_count: number;
}

export interface Message {
  message_id: string;
  session_id: string;
  seq: number;
  role: Role;
  content: string;
  created_at: string;
  task_kind: TaskKind | null;
  evidence_ids: string[];
}

export interface SessionDetail {
  session: SessionSummary;
  messages: Message[];
}

export interface Evidence {
  chunk_id: string;
  doc_id: string;
  rank: number;
  lexical_score: number;
  vector_score: number;
  fused_score: number;
  text: string;
}

export interface ChatResponse {
  refused: boolean;
  reason: string | null;
  message: Message | null;
  evidence: Evidence[];
}

export interface Finding {
  category: string;
  description: string;
  affected_groups: string[];
  severity: string;
  evidence_ids: string[];
}

export interface Gap {
  gap_kind: string;
  description: string;
  related_case_ids: string[];
  suggested_cases: string[];
  evidence_ids: string[];
}

export interface Charter {
  mission: string;
  target_areas: string[];
  fairness_risks: string[];
  resources_setup: string[];
  guiding_questions: string[];
  timebox_minutes: number;
  evidence_ids: string[];
}

export interface EvidenceDetail {
  chunk_id: string;
  doc_id: string;
  doc_title: string;
  doc_kind: string;
  ordinal: number;
  text: string;
}

export interface SystemDescriptionForm {
  name: string;
  purpose: string;
  inputs: string[];
  outputs: string[];
  target_users: string[];
  context_notes: string | null;
}

export interface TestCaseForm {
  case_id: string;
  title: string;
  steps: string[];
  attributes_covered: string[];
}

export interface TestPlanForm {
  plan_id: string;
  cases: TestCaseForm[];
}

export interface ValidationDetail {
  loc: string[];
  msg: string;
}
