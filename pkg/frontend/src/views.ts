/** HTML renderers.
 *
 * Every renderer is a pure string function over the view model so the output
 * can be asserted without a browser.  Interactive elements carry data-action
 * and data-id attributes; main.ts wires those to the model.
 */

import type { EventDto, SnapshotDto, UseCaseEditDto } from "./types.js";
import { remainingRounds } from "./validation.js";

/** The slice of the view model the renderers read; plain data, no methods. */
export interface RenderState {
  snapshot: SnapshotDto | null;
  editBuffer: UseCaseEditDto[];
  events: EventDto[];
  notice: string | null;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderNotice(notice: string | null): string {
  if (!notice) return "";
  return `<div class="notice" role="alert">${escapeHtml(notice)}<button data-action="dismiss-notice">dismiss</button></div>`;
}

export function renderUseCaseEditor(view: RenderState): string {
  const snapshot = view.snapshot;
  if (!snapshot?.use_cases) return "<p>No use cases drafted yet.</p>";
  const rows = Object.entries(snapshot.use_cases.entries)
    .map(([id, entry]) => {
      // Anything no longer machine-generated gets highlighted as a diff.
      const edited = entry.provenance !== "generated";
      return [
        `<li class="use-case${edited ? " edited" : ""}" data-id="${id}">`,
        `<span class="uc-id">${id}</span>`,
        `<input data-role="uc-text" data-id="${id}" value="${escapeHtml(entry.text)}">`,
        `<button data-action="delete-uc" data-id="${id}">delete</button>`,
        `</li>`,
      ].join("");
    })
    .join("\n");
  const pending = view.editBuffer.length
    ? `<p class="pending">${view.editBuffer.length} staged edit(s) not yet submitted</p>`
    : "";
  return [
    `<section data-view="use-case-editor">`,
    `<h2>Review use cases (revision ${snapshot.use_cases.revision})</h2>`,
    `<ol>${rows}</ol>`,
    `<input data-role="new-uc-text" placeholder="New use case">`,
    `<button data-action="add-uc">add</button>`,
    pending,
    `<button data-action="submit-edits">Submit edits</button>`,
    `<button data-action="approve">Approve</button>`,
    `</section>`,
  ].join("\n");
}

export function renderChecklist(view: RenderState): string {
  const snapshot = view.snapshot;
  if (!snapshot?.use_cases) return "<p>Nothing to validate.</p>";
  const rows = Object.entries(snapshot.use_cases.entries)
    .map(([id, entry]) =>
      [
        `<li data-id="${id}">`,
        `<span>${escapeHtml(entry.text)}</span>`,
        `<label><input type="radio" name="verdict-${id}" value="pass"> pass</label>`,
        `<label><input type="radio" name="verdict-${id}" value="fail"> fail</label>`,
        `</li>`,
      ].join(""),
    )
    .join("\n");
  const left = remainingRounds(snapshot);
  const budget =
    left === null
      ? "no round cap"
      : `${left} of ${snapshot.max_manual_rounds} manual rounds remaining`;
  return [
    `<section data-view="validation-checklist">`,
    `<h2>Manual validation</h2>`,
    `<p data-role="round-budget">${budget}</p>`,
    `<p>Run the app from the workspace listing below, then mark each use case.</p>`,
    `<ol>${rows}</ol>`,
    `<textarea data-role="error-message" placeholder="Paste the observed error message"></textarea>`,
    `<textarea data-role="revised-use-cases" placeholder="Revised use case texts, one per line as id: text"></textarea>`,
    `<textarea data-role="new-use-cases" placeholder="New use cases, one per line"></textarea>`,
    `<p class="hint">An error message and use-case revisions cannot be combined in one round.</p>`,
    `<button data-action="submit-feedback">Submit feedback</button>`,
    `</section>`,
  ].join("\n");
}

function describeRun(event: EventDto): string {
  const payload = event.payload;
  if (event.kind === "UnitTestRound") {
    const report = (payload.report ?? {}) as { total?: number; passed?: number };
    return `unit round ${payload.round}: ${report.passed ?? 0}/${report.total ?? 0} passed`;
  }
  if (event.kind === "SystemTestRound") {
    const excerpt = payload.excerpt ? `: ${String(payload.excerpt).split("\n")[0]}` : "";
    return `system round ${payload.round}: ${payload.status}${escapeHtml(excerpt)}`;
  }
  return `${event.kind}`;
}

export function renderRunMonitor(view: RenderState): string {
  const snapshot = view.snapshot;
  if (!snapshot) return "";
  const cap = snapshot.max_auto_iterations ?? "?";
  const rounds = view.events
    .filter((e) => e.kind === "UnitTestRound" || e.kind === "SystemTestRound")
    .map((e) => `<li data-seq="${e.seq}">${describeRun(e)}</li>`)
    .join("\n");
  const exhausted = view.events.filter((e) => e.kind === "AutoLoopExhausted").at(-1);
  const banner = exhausted
    ? `<div class="banner" data-role="exhausted">Test budget spent (${exhausted.payload.loop} loop, ${exhausted.payload.rounds} rounds); handing off to manual validation.</div>`
    : "";
  const problem = snapshot.last_problem
    ? `<pre data-role="problem">${escapeHtml(snapshot.last_problem.split("\n").slice(0, 3).join("\n"))}</pre>`
    : "";
  const tail = view.events
    .slice(-8)
    .map((e) => `<li>${e.seq} ${e.kind}</li>`)
    .join("\n");
  return [
    `<section data-view="run-monitor">`,
    `<h2>Automatic test progress</h2>`,
    `<p data-role="round-usage">unit ${snapshot.unit_iters}/${cap}, system ${snapshot.system_iters}/${cap}</p>`,
    banner,
    problem,
    `<ol data-role="rounds">${rounds}</ol>`,
    `<ul data-role="log-tail">${tail}</ul>`,
    `</section>`,
  ].join("\n");
}

export function renderFileList(listing: { round: number | null; files: string[] }): string {
  if (listing.round === null) return `<p data-role="workspace">No workspace yet.</p>`;
  const items = listing.files
    .map((name) => `<li><a href="#" data-action="open-file" data-name="${escapeHtml(name)}">${escapeHtml(name)}</a></li>`)
    .join("\n");
  return [
    `<section data-view="workspace">`,
    `<h3>Workspace round ${listing.round}</h3>`,
    `<p class="hint">Run the generated app from this directory to validate it by hand.</p>`,
    `<ul>${items}</ul>`,
    `</section>`,
  ].join("\n");
}

export function renderFileViewer(name: string, content: string): string {
  return [
    `<section data-view="file-viewer">`,
    `<h3>${escapeHtml(name)}</h3>`,
    `<pre data-role="file-content">${escapeHtml(content)}</pre>`,
    `</section>`,
  ].join("\n");
}

function renderCompleted(snapshot: SnapshotDto): string {
  const bundle = snapshot.bundle;
  const files = bundle
    ? bundle.files.map((f) => `<li>${escapeHtml(f.name)}</li>`).join("")
    : "";
  return [
    `<section data-view="completed">`,
    `<h2>Completed</h2>`,
    `<p>Winning bundle from round ${bundle?.round ?? "?"}.</p>`,
    `<ul data-role="bundle-files">${files}</ul>`,
    `<p>edits h1=${snapshot.h1}, interventions h2=${snapshot.h2}, tokens ${snapshot.usage.total}</p>`,
    `</section>`,
  ].join("\n");
}

/** Top-level dispatch: render whatever phase the latest snapshot reports. */
export function renderSession(view: RenderState): string {
  const snapshot = view.snapshot;
  if (!snapshot) return "<p>Loading session...</p>";
  const header = `<header><h1>${escapeHtml(snapshot.session_id)}</h1><p data-role="phase">${snapshot.phase}</p></header>`;
  let body: string;
  switch (snapshot.phase) {
    case "UseCaseReview":
      body = renderUseCaseEditor(view);
      break;
    case "ManualValidation":
      body = renderChecklist(view);
      break;
    case "Completed":
      body = renderCompleted(snapshot);
      break;
    case "Aborted":
      body = `<section data-view="aborted"><h2>Aborted</h2></section>`;
      break;
    default:
      body = renderRunMonitor(view);
  }
  return `${header}\n${renderNotice(view.notice)}\n${body}`;
}
