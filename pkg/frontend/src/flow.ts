/** Review flow controller: the UI's state machine, independent of the DOM.
 *
 * State is always a projection of service responses — nothing is computed
 * client-side, so a reload reconstructs the same view. Submissions carry
 * the optimistic version; a conflict refreshes the item and asks the
 * annotator to decide again against the newest state.
 */

import { ApiClient, VersionConflictError } from "./api.js";
import type { AnnotatedItem, IaaResult, Resolution, SessionSummary, Verdict } from "./types.js";

export type SubmitOutcome =
  | { status: "stored"; version: number }
  | { status: "conflict"; latestVersion: number; message: string }
  | { status: "queued" };

export class ReviewFlow {
  readonly client: ApiClient;
  readonly sessionId: string;
  readonly annotatorId: string;

  session: SessionSummary | null = null;
  items: AnnotatedItem[] = [];
  cursor = 0;
  kappa: IaaResult | null = null;
  lastMessage = "";

  constructor(client: ApiClient, sessionId: string, annotatorId: string) {
    this.client = client;
    this.sessionId = sessionId;
    this.annotatorId = annotatorId;
  }

  /** Fetch session and items; the cursor lands on the first pending item. */
  async load(): Promise<void> {
    this.session = await this.client.getSession(this.sessionId);
    this.items = await this.client.getItems(this.sessionId, this.annotatorId);
    const firstPending = this.items.findIndex((item) => item.my_verdict === null);
    this.cursor = firstPending === -1 ? this.items.length : firstPending;
  }

  current(): AnnotatedItem | null {
    return this.items[this.cursor] ?? null;
  }

  pendingCount(): number {
    return this.items.filter((item) => item.my_verdict === null).length;
  }

  doneCount(): number {
    return this.items.length - this.pendingCount();
  }

  sessionComplete(): boolean {
    return this.items.length > 0 && this.items.every((item) => item.my_verdict !== null && item.peer_status === "done");
  }

  private advance(): void {
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
  async submit(verdict: Verdict, note = ""): Promise<SubmitOutcome> {
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
    } catch (error) {
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
  async retryQueued(): Promise<number> {
    const stored = await this.client.flushRetries();
    if (stored.length > 0) {
      await this.load();
    }
    return stored.length;
  }

  async refreshItem(incidentId: string): Promise<void> {
    const fresh = await this.client.getItems(this.sessionId, this.annotatorId);
    const index = this.items.findIndex((item) => item.incident_id === incidentId);
    const freshItem = fresh.find((item) => item.incident_id === incidentId);
    if (index !== -1 && freshItem) {
      this.items[index] = freshItem;
    } else {
      this.items = fresh;
    }
  }

  /** Kappa is fetched, never computed here; null while the session is open. */
  async refreshKappa(): Promise<IaaResult | null> {
    try {
      this.kappa = await this.client.getIaa(this.sessionId);
    } catch {
      this.kappa = null;
    }
    return this.kappa;
  }

  async exportCorrections(resolution: Resolution = "consensus_only") {
    return this.client.exportSession(this.sessionId, resolution);
  }
}
