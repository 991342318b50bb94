/** Client-side feedback checks.
 *
 * These mirror the server's rules so the form can block obviously bad
 * submissions early, but they are advisory only: the API re-validates and
 * remains the authority on what transitions are legal.
 */

import type { ManualFeedbackDto, SnapshotDto, UseCaseEditDto } from "./types.js";

export function feedbackProblems(feedback: ManualFeedbackDto): string[] {
  const problems: string[] = [];
  const hasError = Boolean(feedback.error_message && feedback.error_message.trim());
  const hasRevisions = Boolean(
    (feedback.revised_use_cases && feedback.revised_use_cases.length) ||
      (feedback.new_use_cases && feedback.new_use_cases.length),
  );
  const hasVerdicts = Boolean(
    feedback.per_use_case && Object.keys(feedback.per_use_case).length,
  );

  if (!hasError && !hasRevisions && !hasVerdicts) {
    problems.push("feedback is empty: mark verdicts, paste an error, or revise use cases");
  }
  if (feedback.error_message !== undefined && !hasError) {
    problems.push("error message is blank");
  }
  if (hasError && hasRevisions) {
    problems.push("an error message and use-case revisions cannot be combined in one round");
  }
  for (const [id, verdict] of Object.entries(feedback.per_use_case ?? {})) {
    if (verdict !== "pass" && verdict !== "fail") {
      problems.push(`use case ${id}: verdict must be pass or fail`);
    }
  }
  return problems;
}

/** Rounds the user may still spend, or null when the session has no cap. */
export function remainingRounds(snapshot: SnapshotDto): number | null {
  if (snapshot.max_manual_rounds === null) return null;
  return Math.max(snapshot.max_manual_rounds - snapshot.manual_rounds, 0);
}

export interface FeedbackForm {
  verdicts: Record<string, "pass" | "fail">;
  errorMessage?: string;
  revisedTexts?: Record<string, string>;
  newTexts?: string[];
}

/** Assemble the wire payload, leaving out parts the user did not touch. */
export function buildFeedback(form: FeedbackForm): ManualFeedbackDto {
  const feedback: ManualFeedbackDto = { per_use_case: { ...form.verdicts } };
  const error = form.errorMessage?.trim();
  if (error) {
    feedback.error_message = error;
  }
  const revisions: UseCaseEditDto[] = Object.entries(form.revisedTexts ?? {}).map(
    ([id, text]) => ({ action: "modify", id, text }),
  );
  if (revisions.length) {
    feedback.revised_use_cases = revisions;
  }
  const added = (form.newTexts ?? []).map((t) => t.trim()).filter(Boolean);
  if (added.length) {
    feedback.new_use_cases = added;
  }
  return feedback;
}
