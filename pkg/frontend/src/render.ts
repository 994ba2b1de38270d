/** Pure HTML-string renderers over session state.
 *
 * Keeping these DOM-free makes every visual invariant unit-testable: the
 * neighbor strip preserves server rank order, suspects and tombstones are
 * badged, abstentions and service errors get explicit states.
 */

import type { AuditEntryJson } from "./types.js";
import type { DeltaPanel, EntryView, NeighborView, RerunPanel, SessionState } from "./session.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderErrorBanner(error: string | null): string {
  if (!error) {
    return "";
  }
  return `<div class="error-banner" role="alert">service error: ${escapeHtml(error)}</div>`;
}

export function renderStats(state: SessionState): string {
  const stats = state.stats;
  if (!stats) {
    return `<div class="stats">no store stats yet</div>`;
  }
  const ro = state.readOnly ? ` <span class="badge badge-readonly">read-only</span>` : "";
  return (
    `<div class="stats">` +
    `${stats.live_count} live / ${stats.total_count} records · ` +
    `${stats.vocab_size} labels · ${stats.audit_entries} audit entries · ` +
    `${(stats.snapshot_bytes / 1024).toFixed(1)} KiB${ro}</div>`
  );
}

export function renderAuditList(entries: AuditEntryJson[], selectedId: number | null): string {
  if (entries.length === 0) {
    return `<p class="empty">no audit entries yet</p>`;
  }
  const rows = entries
    .map((entry) => {
      const classes = ["audit-row"];
      if (entry.entry_id === selectedId) {
        classes.push("selected");
      }
      const verdict = entry.abstained
        ? `<em>abstained</em>`
        : escapeHtml(entry.predicted_label ?? "?");
      return (
        `<li class="${classes.join(" ")}" data-entry="${entry.entry_id}">` +
        `<span class="entry-id">#${entry.entry_id}</span> ` +
        `<span class="query-source">${escapeHtml(entry.query_source)}</span> ` +
        `<span class="verdict">&rarr; ${verdict}</span></li>`
      );
    })
    .join("");
  return `<ul class="audit-list">${rows}</ul>`;
}

function pendingBadge(nb: NeighborView): string {
  if (!nb.pending) {
    return "";
  }
  if (nb.pending.kind === "delete") {
    return `<span class="badge badge-pending">pending delete</span>`;
  }
  return `<span class="badge badge-pending">pending relabel &rarr; ${escapeHtml(
    nb.pending.labels.join(", "),
  )}</span>`;
}

export function renderNeighborCard(nb: NeighborView): string {
  const classes = ["neighbor-card"];
  if (nb.suspect) {
    classes.push("suspect");
  }
  if (nb.deleted) {
    classes.push("deleted");
  }
  const image = nb.imageUrl
    ? `<img src="${escapeHtml(nb.imageUrl)}" alt="${escapeHtml(nb.source)}">`
    : `<div class="no-image">${escapeHtml(nb.source)}</div>`;
  const relabelNote =
    JSON.stringify(nb.currentLabels) !== JSON.stringify(nb.labelsAtClassification)
      ? `<div class="now">now: ${escapeHtml(nb.currentLabels.join(", "))}</div>`
      : "";
  return (
    `<div class="${classes.join(" ")}" data-record="${nb.recordId}" data-rank="${nb.rank}">` +
    image +
    `<div class="rank">#${nb.rank}</div>` +
    `<div class="distance">d = ${nb.distance.toFixed(4)}</div>` +
    `<div class="labels">${escapeHtml(nb.labelsAtClassification.join(", "))}</div>` +
    relabelNote +
    `<div class="source">${escapeHtml(nb.source)} (record ${nb.recordId})</div>` +
    (nb.suspect ? `<span class="badge badge-suspect">label &ne; prediction</span>` : "") +
    (nb.deleted ? `<span class="badge badge-deleted">deleted</span>` : "") +
    pendingBadge(nb) +
    `<div class="actions">` +
    `<button data-action="queue-delete" data-record="${nb.recordId}">delete</button>` +
    `<button data-action="queue-relabel" data-record="${nb.recordId}">relabel</button>` +
    `</div></div>`
  );
}

export function renderEntryDetail(entry: EntryView | null): string {
  if (!entry) {
    return `<p class="empty">select an audit entry</p>`;
  }
  if (entry.abstained) {
    return (
      `<div class="entry-detail" data-entry="${entry.entryId}">` +
      `<h2>#${entry.entryId} ${escapeHtml(entry.querySource)}</h2>` +
      `<p class="abstained">no matching records (abstained)</p></div>`
    );
  }
  const tally = Object.entries(entry.tally)
    .sort((a, b) => b[1] - a[1])
    .map(([label, votes]) => `<li>${escapeHtml(label)}: ${votes}</li>`)
    .join("");
  // keep server rank order untouched
  const strip = entry.neighbors.map(renderNeighborCard).join("");
  return (
    `<div class="entry-detail" data-entry="${entry.entryId}">` +
    `<h2>#${entry.entryId} ${escapeHtml(entry.querySource)}</h2>` +
    `<p class="prediction">prediction: <strong>${escapeHtml(
      entry.predictedLabel ?? "?",
    )}</strong> (k=${entry.k})</p>` +
    `<ul class="tally">${tally}</ul>` +
    `<div class="neighbor-strip">${strip}</div></div>`
  );
}

export function renderRerunPanel(panel: RerunPanel | null): string {
  if (!panel) {
    return "";
  }
  const flipped = panel.flipped
    ? `<span class="badge badge-flip">prediction changed</span>`
    : `<span class="badge">unchanged</span>`;
  const afterStrip = panel.after.neighbors
    .map(
      (nb) =>
        `<div class="neighbor-mini" data-rank="${nb.rank}">#${nb.rank} d=${nb.distance.toFixed(
          4,
        )} ${escapeHtml((nb.labels ?? []).join(", "))}</div>`,
    )
    .join("");
  return (
    `<div class="rerun-panel">` +
    `<div class="before"><h3>before</h3><p>${escapeHtml(panel.beforeLabel ?? "abstained")}</p></div>` +
    `<div class="after"><h3>after</h3><p>${escapeHtml(panel.afterLabel ?? "abstained")}</p>` +
    `<div class="mini-strip">${afterStrip}</div></div>` +
    flipped +
    `</div>`
  );
}

export function renderDeltaPanel(panel: DeltaPanel | null): string {
  if (!panel) {
    return "";
  }
  const sign = panel.delta >= 0 ? "+" : "";
  return (
    `<div class="delta-panel">accuracy ${panel.before.toFixed(4)} &rarr; ` +
    `${panel.after.toFixed(4)} (<strong>${sign}${panel.delta.toFixed(4)}</strong>)</div>`
  );
}

export function renderPendingQueue(state: SessionState): string {
  if (state.pending.length === 0) {
    return `<div class="pending-queue empty">no pending actions</div>`;
  }
  const rows = state.pending
    .map((p) =>
      p.kind === "delete"
        ? `<li>delete record ${p.recordId}</li>`
        : `<li>relabel record ${p.recordId} &rarr; ${escapeHtml(p.labels.join(", "))}</li>`,
    )
    .join("");
  return (
    `<div class="pending-queue"><ul>${rows}</ul>` +
    `<button data-action="commit">commit ${state.pending.length} action(s)</button>` +
    `<button data-action="clear">clear</button></div>`
  );
}

export function renderApp(state: SessionState): string {
  return (
    renderErrorBanner(state.error) +
    renderStats(state) +
    `<div class="columns"><div class="left">` +
    renderAuditList(state.entries, state.selected?.entryId ?? null) +
    `</div><div class="right">` +
    renderEntryDetail(state.selected) +
    renderPendingQueue(state) +
    renderRerunPanel(state.rerun) +
    renderDeltaPanel(state.lastDelta) +
    `</div></div>`
  );
}
