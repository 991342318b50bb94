/** Thin fetch wrapper around the devloop service.
 *
 * Every response is an envelope: `{ok: true, data}` or `{ok: false, error}`.
 * Failures become ApiError so callers can branch on the server's error code
 * (IllegalTransition, InvalidFeedback, ...) instead of parsing messages.
 */

import type {
  ApiEnvelope,
  EventDto,
  ManualFeedbackDto,
  SnapshotDto,
  UseCaseEditDto,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly code: string,
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface EventBatch {
  events: EventDto[];
  last_seq: number;
}

export interface WorkspaceListing {
  round: number | null;
  files: string[];
}

export interface RunEntry {
  seq: number;
  kind: string;
  payload: Record<string, unknown>;
}

async function unwrap<T>(response: Response): Promise<T> {
  let body: ApiEnvelope<T>;
  try {
    body = (await response.json()) as ApiEnvelope<T>;
  } catch {
    throw new ApiError("BadResponse", response.status, "response body was not JSON");
  }
  if (!body.ok || body.data === undefined) {
    const err = body.error ?? { code: "UnknownError", message: "no error detail" };
    throw new ApiError(err.code, response.status, err.message);
  }
  return body.data;
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    // The base URL is the only piece of configuration the console takes.
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async get<T>(path: string): Promise<T> {
    return unwrap<T>(await fetch(this.baseUrl + path));
  }

  private async post<T>(path: string, body?: unknown): Promise<T> {
    return unwrap<T>(
      await fetch(this.baseUrl + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body ?? {}),
      }),
    );
  }

  createSession(task: string, sessionId?: string, config?: Record<string, unknown>) {
    const body: Record<string, unknown> = { task };
    if (sessionId) body.session_id = sessionId;
    if (config) body.config = config;
    return this.post<SnapshotDto>("/api/sessions", body);
  }

  listSessions() {
    return this.get<{ sessions: string[] }>("/api/sessions");
  }

  getSession(id: string) {
    return this.get<SnapshotDto>(`/api/sessions/${id}`);
  }

  draftUseCases(id: string) {
    return this.post<SnapshotDto>(`/api/sessions/${id}/use-cases/draft`);
  }

  submitUseCaseEdits(id: string, edits: UseCaseEditDto[]) {
    return this.post<SnapshotDto>(`/api/sessions/${id}/use-cases/edits`, { edits });
  }

  approveUseCases(id: string) {
    return this.post<SnapshotDto>(`/api/sessions/${id}/use-cases/approve`);
  }

  produceDesign(id: string) {
    return this.post<SnapshotDto>(`/api/sessions/${id}/design/produce`);
  }

  approveDesign(id: string) {
    return this.post<SnapshotDto>(`/api/sessions/${id}/design/approve`);
  }

  runAuto(id: string) {
    return this.post<SnapshotDto>(`/api/sessions/${id}/run-auto`);
  }

  submitFeedback(id: string, feedback: ManualFeedbackDto) {
    return this.post<SnapshotDto>(`/api/sessions/${id}/feedback`, feedback);
  }

  abort(id: string, reason?: string) {
    return this.post<SnapshotDto>(`/api/sessions/${id}/abort`, reason ? { reason } : {});
  }

  events(id: string, after = 0, wait = 0) {
    return this.get<EventBatch>(`/api/sessions/${id}/events?after=${after}&wait=${wait}`);
  }

  runs(id: string) {
    return this.get<{ runs: RunEntry[] }>(`/api/sessions/${id}/runs`);
  }

  workspace(id: string, round?: number) {
    const suffix = round === undefined ? "" : `?round=${round}`;
    return this.get<WorkspaceListing>(`/api/sessions/${id}/workspace${suffix}`);
  }

  workspaceFile(id: string, name: string, round?: number) {
    const params = new URLSearchParams({ name });
    if (round !== undefined) params.set("round", String(round));
    return this.get<{ name: string; content: string }>(
      `/api/sessions/${id}/workspace/file?${params}`,
    );
  }
}
