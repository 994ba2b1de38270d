/** Browser entry point: wires the session to the DOM. */

import { ApiClient } from "./api.js";
import { renderApp } from "./render.js";
import { ReviewSession, ValidationError } from "./session.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "";
const api = new ApiClient(baseUrl);
const session = new ReviewSession(api);

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app element");
}

function repaint(): void {
  root!.innerHTML = renderApp(session.state);
}

async function safely(action: () => Promise<unknown>): Promise<void> {
  try {
    await action();
  } catch (err) {
    if (err instanceof ValidationError) {
      window.alert(err.message);
    }
    // API errors already landed in session.state.error
  }
  repaint();
}

root.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const row = target.closest<HTMLElement>(".audit-row");
  if (row?.dataset.entry) {
    void safely(() => session.select(Number(row.dataset.entry)));
    return;
  }
  const action = target.dataset.action;
  if (!action) {
    return;
  }
  const recordId = Number(target.dataset.record);
  switch (action) {
    case "queue-delete":
      session.queueDelete(recordId);
      repaint();
      break;
    case "queue-relabel": {
      const labels = window.prompt("new labels (comma-separated)", "");
      if (labels !== null) {
        void safely(async () =>
          session.queueRelabel(
            recordId,
            labels.split(",").map((l) => l.trim()),
          ),
        );
      }
      break;
    }
    case "commit":
      void safely(() => session.commit());
      break;
    case "clear":
      session.clearQueue();
      repaint();
      break;
    case "rerun":
      void safely(() => session.rerun());
      break;
    default:
      break;
  }
});

document.getElementById("rerun-btn")?.addEventListener("click", () => {
  void safely(() => session.rerun());
});

document.getElementById("prev-page")?.addEventListener("click", () => {
  const first = session.state.entries[0]?.entry_id ?? 0;
  void safely(() => session.loadEntries(Math.max(0, first - 20)));
});

document.getElementById("next-page")?.addEventListener("click", () => {
  void safely(() => session.loadEntries(session.state.nextFrom));
});

void safely(() => session.init());
