/** JSON shapes of the classification service API (docs/http-api.md). */

export interface ServiceInfo {
  default_k: number;
  max_batch: number;
  read_only: boolean;
  image_base_url: string | null;
  encoder_configured: boolean;
}

export interface StoreStats {
  dimension: number;
  live_count: number;
  total_count: number;
  tombstones: number;
  vocab_size: number;
  snapshot_bytes: number;
  audit_entries: number;
  next_id: number;
}

export interface NeighborJson {
  record_id: number;
  distance: number;
  rank: number;
  labels?: string[];
  label_ids: number[];
  source: string;
  deleted?: boolean;
}

export interface ClassifyResult {
  predicted_label_id: number | null;
  predicted_label: string | null;
  abstained: boolean;
  tie_broken: boolean;
  tally: Record<string, number>;
  entry_id: number | null;
  neighbors: NeighborJson[];
}

export interface AuditNeighborJson {
  record_id: number;
  source: string;
  label_ids: number[];
  labels: string[] | null;
  distance: number;
  rank: number;
}

export interface AuditEntryJson {
  entry_id: number;
  timestamp: number;
  query_source: string;
  k: number;
  filter: unknown;
  neighbors: AuditNeighborJson[];
  tally: Record<string, number>;
  tally_labels: Record<string, number> | null;
  predicted_label_id: number | null;
  predicted_label: string | null;
  abstained: boolean;
  ground_truth_label_id: number | null;
}

/** GET /v1/audit/{id}: neighbors resolved against current store state. */
export interface ExplainedNeighborJson {
  record_id: number;
  source: string;
  distance: number;
  rank: number;
  labels_at_classification: string[];
  current_labels: string[];
  deleted: boolean;
}

export interface ExplainedEntryJson extends Omit<AuditEntryJson, "neighbors"> {
  neighbors: ExplainedNeighborJson[];
}

export interface AuditPage {
  entries: AuditEntryJson[];
  next_from: number;
  total: number;
}

export interface RecordJson {
  id: number;
  label_ids: number[];
  labels: string[];
  source: string;
  task_id: number | null;
  ref_count: number;
  deleted: boolean;
  original_norm: number;
}

export interface EvalQuery {
  vector: number[];
  label: string;
  source?: string;
}

export interface EvalReportJson {
  kind: string;
  accuracy: number | null;
  per_class_accuracy: Record<string, number>;
  aggregates: Record<string, number>;
  store_stats: Record<string, number>;
  csv_rows: [number, string, number][];
}

export interface EliminateResult {
  before: EvalReportJson;
  after: EvalReportJson;
  delta: number;
}

export interface JobStatus {
  job_id: string;
  status: "pending" | "running" | "done" | "error";
  result: unknown;
  error: string | null;
}
