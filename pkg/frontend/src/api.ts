/** Typed client for the classification service. No retries: a failed call
 * surfaces immediately so the UI can show a visible error state. */

import type {
  AuditPage,
  ClassifyResult,
  EliminateResult,
  EvalQuery,
  ExplainedEntryJson,
  JobStatus,
  RecordJson,
  ServiceInfo,
  StoreStats,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ServiceUnreachableError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
    this.name = "ServiceUnreachableError";
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new ServiceUnreachableError(cause);
    }
    if (!response.ok) {
      let code = "http-error";
      let message = `${method} ${path} -> ${response.status}`;
      try {
        const payload = (await response.json()) as { error?: string; message?: string };
        code = payload.error ?? code;
        message = payload.message ?? message;
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  getConfig(): Promise<ServiceInfo> {
    return this.request("GET", "/v1/config");
  }

  getStats(): Promise<StoreStats> {
    return this.request("GET", "/v1/stats");
  }

  listAudit(from = 0, limit = 20): Promise<AuditPage> {
    return this.request("GET", `/v1/audit?from=${from}&limit=${limit}`);
  }

  explainEntry(entryId: number): Promise<ExplainedEntryJson> {
    return this.request("GET", `/v1/audit/${entryId}`);
  }

  rerunEntry(entryId: number): Promise<ClassifyResult> {
    return this.request("POST", `/v1/audit/${entryId}/rerun`);
  }

  classify(
    vector: number[],
    k?: number,
    querySource = "",
    groundTruthLabel?: string,
  ): Promise<ClassifyResult> {
    return this.request("POST", "/v1/classify", {
      vector,
      k,
      query_source: querySource,
      ground_truth_label: groundTruthLabel,
    });
  }

  getRecord(recordId: number): Promise<RecordJson> {
    return this.request("GET", `/v1/records/${recordId}`);
  }

  patchLabels(recordId: number, labels: string[]): Promise<RecordJson> {
    return this.request("PATCH", `/v1/records/${recordId}/labels`, { labels });
  }

  deleteRecords(ids: number[]): Promise<{ deleted: number }> {
    return this.request("DELETE", "/v1/records", { ids });
  }

  deleteByLabel(label: string): Promise<{ deleted: number }> {
    return this.request("DELETE", "/v1/records", { label });
  }

  evalEliminate(queries: EvalQuery[], noisyIds: number[], k?: number): Promise<{ job_id: string }> {
    return this.request("POST", "/v1/eval/eliminate", { queries, noisy_ids: noisyIds, k });
  }

  evalAccuracy(queries: EvalQuery[], k?: number): Promise<{ job_id: string }> {
    return this.request("POST", "/v1/eval/accuracy", { queries, k });
  }

  getJob(jobId: string): Promise<JobStatus> {
    return this.request("GET", `/v1/jobs/${jobId}`);
  }

  /** Poll a job to completion. Single loop with a hard deadline, no retry
   * of failed HTTP calls. */
  async waitForJob(jobId: string, timeoutMs = 30000, intervalMs = 100): Promise<JobStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.getJob(jobId);
      if (status.status === "done" || status.status === "error") {
        return status;
      }
      if (Date.now() > deadline) {
        throw new Error(`job ${jobId} timed out after ${timeoutMs}ms`);
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}

export type { EliminateResult };
