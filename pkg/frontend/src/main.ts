/** Browser bootstrap: wires rendered data-action hooks to the view model.
 *
 * Configuration is the API base URL, nothing else; it comes from
 * `?api=<url>` or defaults to the page's own origin.
 */

import { ApiClient } from "./api.js";
import { ConsoleViewModel } from "./model.js";
import { watchEvents } from "./events.js";
import { buildFeedback, type FeedbackForm } from "./validation.js";
import { renderFileList, renderFileViewer, renderSession } from "./views.js";

function collectChecklist(root: HTMLElement): FeedbackForm {
  const verdicts: Record<string, "pass" | "fail"> = {};
  root.querySelectorAll<HTMLInputElement>("input[type=radio]:checked").forEach((input) => {
    const id = input.name.replace(/^verdict-/, "");
    verdicts[id] = input.value as "pass" | "fail";
  });
  const errorBox = root.querySelector<HTMLTextAreaElement>("[data-role='error-message']");
  const revisedBox = root.querySelector<HTMLTextAreaElement>("[data-role='revised-use-cases']");
  const newBox = root.querySelector<HTMLTextAreaElement>("[data-role='new-use-cases']");
  const revisedTexts: Record<string, string> = {};
  for (const line of (revisedBox?.value ?? "").split("\n")) {
    const match = line.match(/^\s*(\d+)\s*:\s*(.+)$/);
    if (match) revisedTexts[match[1]!] = match[2]!;
  }
  return {
    verdicts,
    errorMessage: errorBox?.value || undefined,
    revisedTexts,
    newTexts: (newBox?.value ?? "").split("\n").filter((t) => t.trim()),
  };
}

async function start() {
  const params = new URLSearchParams(window.location.search);
  const client = new ApiClient(params.get("api") ?? window.location.origin);
  const root = document.querySelector<HTMLElement>("[data-role='console']");
  if (!root) throw new Error("console root element missing");

  const sessionId = params.get("session");
  if (!sessionId) {
    const listing = await client.listSessions();
    root.innerHTML =
      "<h1>Sessions</h1><ul>" +
      listing.sessions
        .map((id) => `<li><a href="?session=${id}&api=${client.baseUrl}">${id}</a></li>`)
        .join("") +
      "</ul>";
    return;
  }

  const view = new ConsoleViewModel(client, sessionId);
  const aside = document.querySelector<HTMLElement>("[data-role='workspace-pane']");

  async function redraw() {
    root!.innerHTML = renderSession(view);
    if (aside) {
      const listing = await client.workspace(sessionId!).catch(() => null);
      if (listing) aside.innerHTML = renderFileList(listing);
    }
  }

  await view.refresh();
  await view.syncEvents();
  await redraw();

  watchEvents(client, sessionId, view.cursor, (fresh) => {
    view.events.push(...fresh);
    void view.refresh().then(redraw);
  });

  document.addEventListener("click", async (raw) => {
    const target = (raw.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) return;
    raw.preventDefault();
    const action = target.dataset.action;
    const id = target.dataset.id;
    if (action === "dismiss-notice") {
      view.dismissNotice();
    } else if (action === "delete-uc" && id) {
      view.stageEdit({ action: "delete", id });
    } else if (action === "add-uc") {
      const box = root!.querySelector<HTMLInputElement>("[data-role='new-uc-text']");
      if (box?.value.trim()) view.stageEdit({ action: "add", text: box.value.trim() });
    } else if (action === "submit-edits") {
      // Pick up in-place text changes before sending the batch.
      root!.querySelectorAll<HTMLInputElement>("[data-role='uc-text']").forEach((input) => {
        const ucId = input.dataset.id!;
        const original = view.snapshot?.use_cases?.entries[ucId]?.text;
        if (original !== undefined && input.value !== original) {
          view.stageEdit({ action: "modify", id: ucId, text: input.value });
        }
      });
      await view.submitEdits();
    } else if (action === "approve") {
      await view.approve();
    } else if (action === "submit-feedback") {
      const problems = await view.submitChecklist(collectChecklist(root!));
      if (problems.length) view.notice = problems.join("; ");
    } else if (action === "open-file" && target.dataset.name) {
      const file = await client.workspaceFile(sessionId, target.dataset.name);
      if (aside) aside.innerHTML += renderFileViewer(file.name, file.content);
      return;
    }
    await redraw();
  });
}

void start();
export { collectChecklist, buildFeedback };
