/** In-memory double of the classification service for unit tests.
 *
 * Implements just enough of the documented JSON contract to exercise the
 * session state machine, and counts every request so tests can assert that
 * no network traffic happens before commit and nothing silently retries.
 */

import type { AuditEntryJson, ClassifyResult, ExplainedEntryJson } from "../src/types.js";
import type { FetchLike } from "../src/api.js";

export interface FakeRecord {
  id: number;
  labels: string[];
  source: string;
  deleted: boolean;
  ref_count: number;
}

export interface FakeEntry {
  entry: AuditEntryJson;
  rerunResult?: ClassifyResult;
}

export class FakeService {
  records = new Map<number, FakeRecord>();
  entries = new Map<number, FakeEntry>();
  calls: string[] = [];
  readOnly = false;
  imageBaseUrl: string | null = null;
  unreachable = false;
  jobs = new Map<string, { polls: number; result: unknown }>();
  private jobCounter = 0;

  addRecord(record: FakeRecord): void {
    this.records.set(record.id, record);
  }

  addEntry(entry: AuditEntryJson, rerunResult?: ClassifyResult): void {
    this.entries.set(entry.entry_id, { entry, rerunResult });
  }

  countCalls(prefix: string): number {
    return this.calls.filter((c) => c.startsWith(prefix)).length;
  }

  private explain(entry: AuditEntryJson): ExplainedEntryJson {
    return {
      ...entry,
      neighbors: entry.neighbors.map((nb) => {
        const record = this.records.get(nb.record_id);
        return {
          record_id: nb.record_id,
          source: nb.source,
          distance: nb.distance,
          rank: nb.rank,
          labels_at_classification: nb.labels ?? [],
          current_labels: record ? record.labels : nb.labels ?? [],
          deleted: record ? record.deleted : false,
        };
      }),
    };
  }

  private json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  }

  private error(status: number, code: string, message: string): Response {
    return this.json({ error: code, message }, status);
  }

  fetch: FetchLike = async (rawUrl, init) => {
    if (this.unreachable) {
      throw new TypeError("fetch failed");
    }
    const method = init?.method ?? "GET";
    const url = new URL(rawUrl, "http://fake");
    const path = url.pathname;
    this.calls.push(`${method} ${path}`);
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;

    if (method === "GET" && path === "/v1/config") {
      return this.json({
        default_k: 10,
        max_batch: 1000,
        read_only: this.readOnly,
        image_base_url: this.imageBaseUrl,
        encoder_configured: false,
      });
    }
    if (method === "GET" && path === "/v1/stats") {
      const live = [...this.records.values()].filter((r) => !r.deleted).length;
      return this.json({
        dimension: 2,
        live_count: live,
        total_count: this.records.size,
        tombstones: this.records.size - live,
        vocab_size: 2,
        snapshot_bytes: 1234,
        audit_entries: this.entries.size,
        next_id: this.records.size,
      });
    }
    if (method === "GET" && path === "/v1/audit") {
      const from = Number(url.searchParams.get("from") ?? "0");
      const limit = Number(url.searchParams.get("limit") ?? "20");
      const all = [...this.entries.values()]
        .map((e) => e.entry)
        .filter((e) => e.entry_id >= from)
        .slice(0, limit);
      return this.json({
        entries: all,
        next_from: all.length ? all[all.length - 1]!.entry_id + 1 : from,
        total: this.entries.size,
      });
    }
    const explainMatch = path.match(/^\/v1\/audit\/(\d+)$/);
    if (method === "GET" && explainMatch) {
      const found = this.entries.get(Number(explainMatch[1]));
      if (!found) {
        return this.error(404, "not-found", `unknown audit entry: ${explainMatch[1]}`);
      }
      return this.json(this.explain(found.entry));
    }
    const rerunMatch = path.match(/^\/v1\/audit\/(\d+)\/rerun$/);
    if (method === "POST" && rerunMatch) {
      const found = this.entries.get(Number(rerunMatch[1]));
      if (!found) {
        return this.error(404, "not-found", "unknown entry");
      }
      if (!found.rerunResult) {
        return this.error(400, "invalid-argument", "no stored query");
      }
      return this.json(found.rerunResult);
    }
    if (method === "DELETE" && path === "/v1/records") {
      if (this.readOnly) {
        return this.error(409, "read-only", "service is read-only");
      }
      let deleted = 0;
      for (const id of body.ids ?? []) {
        const record = this.records.get(id);
        if (record && !record.deleted) {
          record.deleted = true;
          deleted += 1;
        }
      }
      return this.json({ deleted });
    }
    const patchMatch = path.match(/^\/v1\/records\/(\d+)\/labels$/);
    if (method === "PATCH" && patchMatch) {
      if (this.readOnly) {
        return this.error(409, "read-only", "service is read-only");
      }
      const record = this.records.get(Number(patchMatch[1]));
      if (!record || record.deleted) {
        return this.error(404, "not-found", "unknown or deleted record");
      }
      if (!body.labels || body.labels.length === 0) {
        return this.error(400, "invalid-argument", "label set must be nonempty");
      }
      record.labels = body.labels;
      return this.json({ previous_labels: [], id: record.id, labels: record.labels });
    }
    if (method === "POST" && path === "/v1/eval/eliminate") {
      for (const id of body.noisy_ids ?? []) {
        const record = this.records.get(id);
        if (record) {
          record.deleted = true;
        }
      }
      const jobId = `job-${this.jobCounter++}`;
      this.jobs.set(jobId, {
        polls: 0,
        result: {
          before: { kind: "accuracy", accuracy: 0.25, per_class_accuracy: {}, aggregates: {}, store_stats: {}, csv_rows: [] },
          after: { kind: "accuracy", accuracy: 0.75, per_class_accuracy: {}, aggregates: {}, store_stats: {}, csv_rows: [] },
          delta: 0.5,
        },
      });
      return this.json({ job_id: jobId });
    }
    const jobMatch = path.match(/^\/v1\/jobs\/(.+)$/);
    if (method === "GET" && jobMatch) {
      const job = this.jobs.get(jobMatch[1]!);
      if (!job) {
        return this.error(404, "not-found", "unknown job");
      }
      job.polls += 1;
      const status = job.polls < 2 ? "running" : "done";
      return this.json({
        job_id: jobMatch[1],
        status,
        result: status === "done" ? job.result : null,
        error: null,
      });
    }
    return this.error(404, "not-found", `unhandled ${method} ${path}`);
  };
}

/** The canonical 4-record fixture entry: prediction A over neighbors at
 * distances 0.04 / 0.20 / 0.40 where the middle one carries label B. */
export function fixtureEntry(): AuditEntryJson {
  return {
    entry_id: 0,
    timestamp: 1700000000.0,
    query_source: "query-0.jpg",
    k: 3,
    filter: null,
    neighbors: [
      { record_id: 1, source: "img-s2", label_ids: [0], labels: ["A"], distance: 0.04, rank: 1 },
      { record_id: 2, source: "img-s3", label_ids: [1], labels: ["B"], distance: 0.2, rank: 2 },
      { record_id: 0, source: "img-s1", label_ids: [0], labels: ["A"], distance: 0.4, rank: 3 },
    ],
    tally: { "0": 2, "1": 1 },
    tally_labels: { A: 2, B: 1 },
    predicted_label_id: 0,
    predicted_label: "A",
    abstained: false,
    ground_truth_label_id: 0,
  };
}

export function fixtureService(): FakeService {
  const service = new FakeService();
  service.addRecord({ id: 0, labels: ["A"], source: "img-s1", deleted: false, ref_count: 1 });
  service.addRecord({ id: 1, labels: ["A"], source: "img-s2", deleted: false, ref_count: 1 });
  service.addRecord({ id: 2, labels: ["B"], source: "img-s3", deleted: false, ref_count: 1 });
  service.addRecord({ id: 3, labels: ["B"], source: "img-s4", deleted: false, ref_count: 0 });
  service.addEntry(fixtureEntry());
  return service;
}
