/** Typed client for the review service.
 *
 * Verdict submissions that fail from a network error (service briefly
 * unreachable) are parked in a retry queue and replayed by `flushRetries`;
 * they are never silently dropped. Version conflicts (HTTP 409) are NOT
 * retried: they surface to the caller, which must refresh and re-decide.
 */

import type {
  AnnotatedItem,
  ConflictDetail,
  ExportResult,
  IaaResult,
  Resolution,
  SessionSummary,
  StoredAdjudication,
  Verdict,
} from "./types.js";

export class VersionConflictError extends Error {
  readonly detail: ConflictDetail;
  constructor(detail: ConflictDetail) {
    super(detail.message);
    this.detail = detail;
  }
}

export class ApiError extends Error {
  readonly status: number;
  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

export interface PendingSubmission {
  sessionId: string;
  incidentId: string;
  annotatorId: string;
  verdict: Verdict;
  note: string;
  version: number;
}

async function parseDetail(response: Response): Promise<unknown> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    return body.detail ?? body;
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  readonly baseUrl: string;
  private retryQueue: PendingSubmission[] = [];

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (response.status === 409) {
      const detail = await parseDetail(response);
      if (typeof detail === "object" && detail !== null && "latest_version" in detail) {
        throw new VersionConflictError(detail as ConflictDetail);
      }
      throw new ApiError(409, String(detail));
    }
    if (!response.ok) {
      throw new ApiError(response.status, JSON.stringify(await parseDetail(response)));
    }
    return (await response.json()) as T;
  }

  async listSessions(): Promise<string[]> {
    const body = await this.request<{ sessions: string[] }>("/api/sessions");
    return body.sessions;
  }

  async createSession(request: {
    ledger_path: string;
    corpus_path: string;
    annotator_ids: string[];
    variable_definition?: string;
  }): Promise<SessionSummary> {
    return this.request<SessionSummary>("/api/sessions", {
      method: "POST",
      body: JSON.stringify(request),
    });
  }

  async getSession(sessionId: string): Promise<SessionSummary> {
    return this.request<SessionSummary>(`/api/sessions/${sessionId}`);
  }

  async getItems(
    sessionId: string,
    annotatorId: string,
    status?: "pending" | "done",
  ): Promise<AnnotatedItem[]> {
    const params = new URLSearchParams({ annotator: annotatorId });
    if (status) params.set("status", status);
    const body = await this.request<{ items: AnnotatedItem[] }>(
      `/api/sessions/${sessionId}/items?${params}`,
    );
    return body.items;
  }

  async submitAdjudication(submission: PendingSubmission): Promise<StoredAdjudication> {
    try {
      return await this.request<StoredAdjudication>(
        `/api/sessions/${submission.sessionId}/adjudications`,
        {
          method: "POST",
          body: JSON.stringify({
            incident_id: submission.incidentId,
            annotator_id: submission.annotatorId,
            verdict: submission.verdict,
            note: submission.note,
            version: submission.version,
          }),
        },
      );
    } catch (error) {
      if (error instanceof VersionConflictError || error instanceof ApiError) {
        throw error;
      }
      // network failure: keep the verdict for replay
      this.retryQueue.push(submission);
      throw error;
    }
  }

  queuedSubmissions(): readonly PendingSubmission[] {
    return this.retryQueue;
  }

  /** Replay parked verdicts in order; stops at the first network failure. */
  async flushRetries(): Promise<StoredAdjudication[]> {
    const stored: StoredAdjudication[] = [];
    while (this.retryQueue.length > 0) {
      const next = this.retryQueue[0];
      this.retryQueue.shift();
      stored.push(await this.submitAdjudication(next));
    }
    return stored;
  }

  async getIaa(sessionId: string): Promise<IaaResult> {
    return this.request<IaaResult>(`/api/sessions/${sessionId}/iaa`);
  }

  async exportSession(sessionId: string, resolution: Resolution): Promise<ExportResult> {
    return this.request<ExportResult>(`/api/sessions/${sessionId}/export`, {
      method: "POST",
      body: JSON.stringify({ resolution }),
    });
  }
}
