/** Wire types for the devloop HTTP API. */

export type Phase =
  | "TaskIntake"
  | "UseCaseDraft"
  | "UseCaseReview"
  | "Designing"
  | "DesignReview"
  | "Coding"
  | "Refining"
  | "UnitTesting"
  | "SystemTesting"
  | "ManualValidation"
  | "BugFixing"
  | "Completed"
  | "Aborted";

export const AUTO_PHASES: readonly Phase[] = [
  "Coding",
  "Refining",
  "UnitTesting",
  "SystemTesting",
  "BugFixing",
];

export type Provenance = "generated" | "human_edited" | "human_added";

export interface UseCaseEntry {
  text: string;
  provenance: Provenance;
}

export interface UseCaseSetDto {
  entries: Record<string, UseCaseEntry>;
  revision: number;
}

export interface DesignFileDto {
  name: string;
  responsibility: string;
}

export interface SnapshotDto {
  session_id: string;
  phase: Phase;
  task: string;
  h1: number;
  h2: number;
  manual_rounds: number;
  unit_iters: number;
  system_iters: number;
  max_auto_iterations: number | null;
  max_manual_rounds: number | null;
  design_review_enabled: boolean | null;
  use_cases: UseCaseSetDto | null;
  design: { files: DesignFileDto[]; findings: string[] } | null;
  bundle: { round: number; files: { name: string; language_tag: string }[] } | null;
  candidates: {
    round: number | null;
    clean_start: boolean | null;
    findings_count: number | null;
    manual_passes: number | null;
  }[];
  last_problem: string | null;
  usage: { prompt_tokens: number; completion_tokens: number; total: number };
  last_seq: number;
}

export interface EventDto {
  seq: number;
  ts: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface UseCaseEditDto {
  action: "modify" | "add" | "delete";
  id?: string;
  text?: string;
}

export interface ManualFeedbackDto {
  per_use_case?: Record<string, "pass" | "fail">;
  error_message?: string;
  revised_use_cases?: UseCaseEditDto[];
  new_use_cases?: string[];
}

export interface ApiEnvelope<T> {
  ok: boolean;
  data?: T;
  error?: { code: string; message: string };
}
