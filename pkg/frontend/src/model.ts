/** View model behind the console.
 *
 * Holds the latest session snapshot, the pending use-case edit buffer, and
 * the event cursor.  The render layer draws whatever phase the snapshot
 * reports; the model never tracks a phase of its own, so the two cannot
 * disagree.  The edit buffer belongs to the phase it was typed in and is
 * discarded whenever the phase moves underneath it.
 */

import { ApiClient, ApiError } from "./api.js";
import { EventCursor } from "./events.js";
import { buildFeedback, feedbackProblems, type FeedbackForm } from "./validation.js";
import type { EventDto, SnapshotDto, UseCaseEditDto } from "./types.js";

export class ConsoleViewModel {
  snapshot: SnapshotDto | null = null;
  editBuffer: UseCaseEditDto[] = [];
  events: EventDto[] = [];
  notice: string | null = null;
  readonly cursor = new EventCursor();

  constructor(
    private readonly client: ApiClient,
    readonly sessionId: string,
  ) {}

  get phase(): string {
    return this.snapshot?.phase ?? "unknown";
  }

  private applySnapshot(next: SnapshotDto) {
    if (this.snapshot && this.snapshot.phase !== next.phase) {
      this.editBuffer = [];
    }
    this.snapshot = next;
  }

  async refresh(): Promise<SnapshotDto> {
    const next = await this.client.getSession(this.sessionId);
    this.applySnapshot(next);
    return next;
  }

  /** Pull events past the cursor and append them to the local log. */
  async syncEvents(wait = 0): Promise<EventDto[]> {
    const batch = await this.client.events(this.sessionId, this.cursor.lastSeq, wait);
    const fresh = this.cursor.accept(batch.events);
    this.events.push(...fresh);
    return fresh;
  }

  stageEdit(edit: UseCaseEditDto) {
    this.editBuffer.push(edit);
  }

  discardEdits() {
    this.editBuffer = [];
  }

  /** Send the buffered edits; the buffer empties only once the API accepts. */
  async submitEdits(): Promise<void> {
    if (this.editBuffer.length === 0) return;
    const next = await this.client.submitUseCaseEdits(this.sessionId, this.editBuffer);
    this.editBuffer = [];
    this.applySnapshot(next);
  }

  /** Approve whichever review gate is open.
   *
   * A stale tab approving a gate that already closed gets IllegalTransition
   * back; that becomes a blocking notice plus a refresh so the view lands on
   * the real phase instead of retrying.
   */
  async approve(): Promise<boolean> {
    const call =
      this.phase === "DesignReview"
        ? this.client.approveDesign(this.sessionId)
        : this.client.approveUseCases(this.sessionId);
    try {
      this.applySnapshot(await call);
      this.notice = null;
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.code === "IllegalTransition") {
        this.notice = `action rejected: ${err.message}`;
        await this.refresh();
        return false;
      }
      throw err;
    }
  }

  /** Validate locally, then submit; returns client-side problems if blocked. */
  async submitChecklist(form: FeedbackForm): Promise<string[]> {
    const feedback = buildFeedback(form);
    const problems = feedbackProblems(feedback);
    if (problems.length > 0) {
      return problems;
    }
    try {
      this.applySnapshot(await this.client.submitFeedback(this.sessionId, feedback));
      this.notice = null;
      return [];
    } catch (err) {
      if (err instanceof ApiError) {
        // Defense in depth: anything the client check missed still lands
        // here instead of mutating the session.
        this.notice = `feedback rejected: ${err.message}`;
        await this.refresh();
        return [err.message];
      }
      throw err;
    }
  }

  dismissNotice() {
    this.notice = null;
  }
}
