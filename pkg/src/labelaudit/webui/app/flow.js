/** Review flow controller: the UI's state machine, independent of the DOM.
 *
 * State is always a projection of service responses — nothing is computed
 * client-side, so a reload reconstructs the same view. Submissions carry
 * the optimistic version; a conflict refreshes the item and asks the
 * annotator to decide again against the newest state.
 */
import { VersionConflictError } from "./api.js";
export class ReviewFlow {
    constructor(client, sessionId, annotatorId) {
        this.session = null;
        this.items = [];
        this.cursor = 0;
        this.kappa = null;
        this.lastMessage = "";
        this.client = client;
        this.sessionId = sessionId;
        this.annotatorId = annotatorId;
    }
    /** Fetch session and items; the cursor lands on the first pending item. */
    async load() {
        this.session = await this.client.getSession(this.sessionId);
        this.items = await this.client.getItems(this.sessionId, this.annotatorId);
        const firstPending = this.items.findIndex((item) => item.my_verdict === null);
        this.cursor = firstPending === -1 ? this.items.length : firstPending;
    }
    current() {
        return this.items[this.cursor] ?? null;
    }
    pendingCount() {
        return this.items.filter((item) => item.my_verdict === null).length;
    }
    doneCount() {
        return this.items.length - this.pendingCount();
    }
    sessionComplete() {
        return this.items.length > 0 && this.items.every((item) => item.my_verdict !== null && item.peer_status === "done");
    }
    advance() {
        for (let step = 1; step <= this.items.length; step += 1) {
            const index = (this.cursor + step) % this.items.length;
            if (this.items[index].my_verdict === null) {
                this.cursor = index;
                return;
            }
        }
        this.cursor = this.items.length; // nothing pending
    }
    /** Submit a verdict for the current item and advance to the next pending one. */
    async submit(verdict, note = "") {
        const item = this.current();
        if (!item) {
            this.lastMessage = "no item under review";
            return { status: "queued" };
        }
        try {
            const stored = await this.client.submitAdjudication({
                sessionId: this.sessionId,
                incidentId: item.incident_id,
                annotatorId: this.annotatorId,
                verdict,
                note,
                version: item.my_version + 1,
            });
            await this.refreshItem(item.incident_id);
            this.lastMessage = `${item.incident_id}: ${verdict} (v${stored.version})`;
            this.advance();
            return { status: "stored", version: stored.version };
        }
        catch (error) {
            if (error instanceof VersionConflictError) {
                await this.refreshItem(item.incident_id);
                this.lastMessage =
                    `${item.incident_id}: your view was stale (latest v${error.detail.latest_version}); ` +
                        "review the refreshed state and submit again";
                return {
                    status: "conflict",
                    latestVersion: error.detail.latest_version,
                    message: this.lastMessage,
                };
            }
            this.lastMessage = `${item.incident_id}: verdict parked for retry (network failure)`;
            return { status: "queued" };
        }
    }
    /** Replay any verdicts parked by network failures, then re-sync items. */
    async retryQueued() {
        const stored = await this.client.flushRetries();
        if (stored.length > 0) {
            await this.load();
        }
        return stored.length;
    }
    async refreshItem(incidentId) {
        const fresh = await this.client.getItems(this.sessionId, this.annotatorId);
        const index = this.items.findIndex((item) => item.incident_id === incidentId);
        const freshItem = fresh.find((item) => item.incident_id === incidentId);
        if (index !== -1 && freshItem) {
            this.items[index] = freshItem;
        }
        else {
            this.items = fresh;
        }
    }
    /** Kappa is fetched, never computed here; null while the session is open. */
    async refreshKappa() {
        try {
            this.kappa = await this.client.getIaa(this.sessionId);
        }
        catch {
            this.kappa = null;
        }
        return this.kappa;
    }
    async exportCorrections(resolution = "consensus_only") {
        return this.client.exportSession(this.sessionId, resolution);
    }
}
