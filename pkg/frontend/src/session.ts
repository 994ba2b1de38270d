/** Review-session state machine.
 *
 * The session never owns the truth: pending actions are applied only on an
 * explicit commit, and every committed action is followed by a fresh fetch of
 * server state, so whatever the UI displays equals what the service reports.
 */

import { ApiClient, ApiError, ServiceUnreachableError } from "./api.js";
import type {
  AuditEntryJson,
  ClassifyResult,
  EliminateResult,
  EvalQuery,
  ExplainedEntryJson,
  StoreStats,
} from "./types.js";

export type PendingAction =
  | { kind: "delete"; recordId: number }
  | { kind: "relabel"; recordId: number; labels: string[] };

export interface NeighborView {
  recordId: number;
  distance: number;
  rank: number;
  labelsAtClassification: string[];
  currentLabels: string[];
  source: string;
  imageUrl: string | null;
  deleted: boolean;
  /** Marked when the neighbor's labels at classification time do not include
   * the predicted label: the first thing a reviewer should look at. */
  suspect: boolean;
  pending: PendingAction | null;
}

export interface EntryView {
  entryId: number;
  querySource: string;
  k: number;
  predictedLabel: string | null;
  abstained: boolean;
  tally: Record<string, number>;
  groundTruthKnown: boolean;
  neighbors: NeighborView[];
}

export interface RerunPanel {
  beforeLabel: string | null;
  afterLabel: string | null;
  flipped: boolean;
  after: ClassifyResult;
}

export interface DeltaPanel {
  before: number;
  after: number;
  delta: number;
}

export interface SessionState {
  entries: AuditEntryJson[];
  nextFrom: number;
  total: number;
  selected: EntryView | null;
  pending: PendingAction[];
  rerun: RerunPanel | null;
  lastDelta: DeltaPanel | null;
  stats: StoreStats | null;
  readOnly: boolean;
  error: string | null;
}

export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ValidationError";
  }
}

export class ReviewSession {
  readonly state: SessionState = {
    entries: [],
    nextFrom: 0,
    total: 0,
    selected: null,
    pending: [],
    rerun: null,
    lastDelta: null,
    stats: null,
    readOnly: false,
    error: null,
  };

  private imageBaseUrl: string | null = null;

  constructor(private readonly api: ApiClient) {}

  /** Wrap a server interaction: clears the error banner on success, records
   * a visible error state on failure. Never retries. */
  private async guarded<T>(operation: () => Promise<T>): Promise<T> {
    try {
      const result = await operation();
      this.state.error = null;
      return result;
    } catch (err) {
      if (err instanceof ServiceUnreachableError) {
        this.state.error = err.message;
      } else if (err instanceof ApiError) {
        this.state.error = `${err.code}: ${err.message}`;
      } else {
        this.state.error = String(err);
      }
      throw err;
    }
  }

  async init(): Promise<void> {
    await this.guarded(async () => {
      const config = await this.api.getConfig();
      this.imageBaseUrl = config.image_base_url;
      this.state.readOnly = config.read_only;
      this.state.stats = await this.api.getStats();
      await this.loadEntriesInner(0);
    });
  }

  async loadEntries(from = 0, limit = 20): Promise<void> {
    await this.guarded(() => this.loadEntriesInner(from, limit));
  }

  private async loadEntriesInner(from: number, limit = 20): Promise<void> {
    const page = await this.api.listAudit(from, limit);
    this.state.entries = page.entries;
    this.state.nextFrom = page.next_from;
    this.state.total = page.total;
  }

  resolveImageUrl(source: string): string | null {
    if (!this.imageBaseUrl || !source) {
      return null; // deployments without stored images degrade to text cards
    }
    const base = this.imageBaseUrl.endsWith("/") ? this.imageBaseUrl : this.imageBaseUrl + "/";
    return base + encodeURI(source);
  }

  private toView(entry: ExplainedEntryJson): EntryView {
    const predicted = entry.predicted_label;
    return {
      entryId: entry.entry_id,
      querySource: entry.query_source,
      k: entry.k,
      predictedLabel: predicted,
      abstained: entry.abstained,
      tally: entry.tally_labels ?? entry.tally,
      groundTruthKnown: entry.ground_truth_label_id !== null,
      neighbors: entry.neighbors.map((nb) => ({
        recordId: nb.record_id,
        distance: nb.distance,
        rank: nb.rank,
        labelsAtClassification: nb.labels_at_classification,
        currentLabels: nb.current_labels,
        source: nb.source,
        imageUrl: this.resolveImageUrl(nb.source),
        deleted: nb.deleted,
        suspect: predicted !== null && !nb.labels_at_classification.includes(predicted),
        pending: this.state.pending.find((p) => p.recordId === nb.record_id) ?? null,
      })),
    };
  }

  async select(entryId: number): Promise<EntryView> {
    return this.guarded(async () => {
      const entry = await this.api.explainEntry(entryId);
      this.state.selected = this.toView(entry);
      this.state.rerun = null;
      return this.state.selected;
    });
  }

  /** Re-fetch the selected entry so displayed values equal server state. */
  private async refreshSelected(): Promise<void> {
    if (this.state.selected) {
      const entry = await this.api.explainEntry(this.state.selected.entryId);
      this.state.selected = this.toView(entry);
    }
    this.state.stats = await this.api.getStats();
  }

  // -- pending action queue (nothing is sent until commit) ------------------

  queueDelete(recordId: number): void {
    this.unqueue(recordId);
    this.state.pending.push({ kind: "delete", recordId });
    this.repaintPending();
  }

  queueRelabel(recordId: number, labels: string[]): void {
    const cleaned = labels.map((l) => l.trim()).filter((l) => l.length > 0);
    if (cleaned.length === 0) {
      throw new ValidationError("relabel needs at least one label");
    }
    this.unqueue(recordId);
    this.state.pending.push({ kind: "relabel", recordId, labels: cleaned });
    this.repaintPending();
  }

  /** Batch curation: queue deletion of every neighbor in the selected entry
   * that carried the given label at classification time. */
  queueDeleteByLabel(label: string): number {
    const entry = this.state.selected;
    if (!entry) {
      return 0;
    }
    let queued = 0;
    for (const nb of entry.neighbors) {
      if (!nb.deleted && nb.labelsAtClassification.includes(label)) {
        this.queueDelete(nb.recordId);
        queued += 1;
      }
    }
    return queued;
  }

  unqueue(recordId: number): void {
    this.state.pending = this.state.pending.filter((p) => p.recordId !== recordId);
    this.repaintPending();
  }

  clearQueue(): void {
    this.state.pending = [];
    this.repaintPending();
  }

  private repaintPending(): void {
    if (this.state.selected) {
      for (const nb of this.state.selected.neighbors) {
        nb.pending = this.state.pending.find((p) => p.recordId === nb.recordId) ?? null;
      }
    }
  }

  /** Apply the queue: one DELETE for all queued deletions, one PATCH per
   * relabel. An empty queue performs no network calls at all. */
  async commit(): Promise<{ deleted: number; relabeled: number }> {
    if (this.state.pending.length === 0) {
      return { deleted: 0, relabeled: 0 };
    }
    return this.guarded(async () => {
      const deletes = this.state.pending.filter((p) => p.kind === "delete");
      const relabels = this.state.pending.filter((p) => p.kind === "relabel") as Extract<
        PendingAction,
        { kind: "relabel" }
      >[];
      let deleted = 0;
      if (deletes.length > 0) {
        deleted = (await this.api.deleteRecords(deletes.map((p) => p.recordId))).deleted;
      }
      for (const action of relabels) {
        await this.api.patchLabels(action.recordId, action.labels);
      }
      this.state.pending = [];
      await this.refreshSelected();
      return { deleted, relabeled: relabels.length };
    });
  }

  /** Re-classify the selected entry's query against the current store and
   * show the outcome next to the original prediction. */
  async rerun(): Promise<RerunPanel> {
    const entry = this.state.selected;
    if (!entry) {
      throw new ValidationError("select an audit entry first");
    }
    return this.guarded(async () => {
      const after = await this.api.rerunEntry(entry.entryId);
      const panel: RerunPanel = {
        beforeLabel: entry.predictedLabel,
        afterLabel: after.predicted_label,
        flipped: after.predicted_label !== entry.predictedLabel,
        after,
      };
      this.state.rerun = panel;
      await this.refreshSelected();
      return panel;
    });
  }

  /** Apply the queued deletions through the evaluation endpoint, which
   * measures accuracy before and after the elimination in one job. */
  async evaluateImpact(queries: EvalQuery[], k?: number): Promise<DeltaPanel> {
    if (queries.length === 0) {
      throw new ValidationError("load an evaluation query set first");
    }
    const noisyIds = this.state.pending
      .filter((p) => p.kind === "delete")
      .map((p) => p.recordId);
    return this.guarded(async () => {
      const { job_id } = await this.api.evalEliminate(queries, noisyIds, k);
      const job = await this.api.waitForJob(job_id);
      if (job.status === "error") {
        throw new Error(`evaluation failed: ${job.error}`);
      }
      const result = job.result as EliminateResult;
      const panel: DeltaPanel = {
        before: result.before.accuracy ?? 0,
        after: result.after.accuracy ?? 0,
        delta: result.delta,
      };
      this.state.lastDelta = panel;
      // the eliminate job already deleted the queued rows server-side
      this.state.pending = this.state.pending.filter((p) => p.kind !== "delete");
      await this.refreshSelected();
      return panel;
    });
  }

  /** Ad-hoc classification; creates a fresh audit entry and reloads the list. */
  async classifyQuery(
    vector: number[],
    k?: number,
    source = "ui-query",
    groundTruthLabel?: string,
  ): Promise<ClassifyResult> {
    return this.guarded(async () => {
      const result = await this.api.classify(vector, k, source, groundTruthLabel);
      this.state.stats = await this.api.getStats();
      await this.loadEntriesInner(Math.max(0, this.state.stats.audit_entries - 20));
      return result;
    });
  }
}
