/** Typed client for the review service.
 *
 * Verdict submissions that fail from a network error (service briefly
 * unreachable) are parked in a retry queue and replayed by `flushRetries`;
 * they are never silently dropped. Version conflicts (HTTP 409) are NOT
 * retried: they surface to the caller, which must refresh and re-decide.
 */
export class VersionConflictError extends Error {
    constructor(detail) {
        super(detail.message);
        this.detail = detail;
    }
}
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
async function parseDetail(response) {
    try {
        const body = (await response.json());
        return body.detail ?? body;
    }
    catch {
        return response.statusText;
    }
}
export class ApiClient {
    constructor(baseUrl) {
        this.retryQueue = [];
        this.baseUrl = baseUrl.replace(/\/$/, "");
    }
    async request(path, init) {
        const response = await fetch(`${this.baseUrl}${path}`, {
            headers: { "content-type": "application/json" },
            ...init,
        });
        if (response.status === 409) {
            const detail = await parseDetail(response);
            if (typeof detail === "object" && detail !== null && "latest_version" in detail) {
                throw new VersionConflictError(detail);
            }
            throw new ApiError(409, String(detail));
        }
        if (!response.ok) {
            throw new ApiError(response.status, JSON.stringify(await parseDetail(response)));
        }
        return (await response.json());
    }
    async listSessions() {
        const body = await this.request("/api/sessions");
        return body.sessions;
    }
    async createSession(request) {
        return this.request("/api/sessions", {
            method: "POST",
            body: JSON.stringify(request),
        });
    }
    async getSession(sessionId) {
        return this.request(`/api/sessions/${sessionId}`);
    }
    async getItems(sessionId, annotatorId, status) {
        const params = new URLSearchParams({ annotator: annotatorId });
        if (status)
            params.set("status", status);
        const body = await this.request(`/api/sessions/${sessionId}/items?${params}`);
        return body.items;
    }
    async submitAdjudication(submission) {
        try {
            return await this.request(`/api/sessions/${submission.sessionId}/adjudications`, {
                method: "POST",
                body: JSON.stringify({
                    incident_id: submission.incidentId,
                    annotator_id: submission.annotatorId,
                    verdict: submission.verdict,
                    note: submission.note,
                    version: submission.version,
                }),
            });
        }
        catch (error) {
            if (error instanceof VersionConflictError || error instanceof ApiError) {
                throw error;
            }
            // network failure: keep the verdict for replay
            this.retryQueue.push(submission);
            throw error;
        }
    }
    queuedSubmissions() {
        return this.retryQueue;
    }
    /** Replay parked verdicts in order; stops at the first network failure. */
    async flushRetries() {
        const stored = [];
        while (this.retryQueue.length > 0) {
            const next = this.retryQueue[0];
            this.retryQueue.shift();
            stored.push(await this.submitAdjudication(next));
        }
        return stored;
    }
    async getIaa(sessionId) {
        return this.request(`/api/sessions/${sessionId}/iaa`);
    }
    async exportSession(sessionId, resolution) {
        return this.request(`/api/sessions/${sessionId}/export`, {
            method: "POST",
            body: JSON.stringify({ resolution }),
        });
    }
}
