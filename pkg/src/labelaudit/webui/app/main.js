/** DOM shell: joins a session, renders the flow state, wires the keyboard.
 *
 * All decisions live in ReviewFlow/ApiClient; this file only draws and
 * forwards events (K = keep, F = flip, U = uncertain, arrows to browse).
 */
import { ApiClient } from "./api.js";
import { ReviewFlow } from "./flow.js";
const client = new ApiClient(window.location.origin);
let flow = null;
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing #${id}`);
    return node;
}
function setText(id, text) {
    el(id).textContent = text;
}
function renderItem(item) {
    const panel = el("item-panel");
    if (!item) {
        panel.classList.add("hidden");
        el("done-panel").classList.remove("hidden");
        return;
    }
    panel.classList.remove("hidden");
    el("done-panel").classList.add("hidden");
    setText("item-id", item.incident_id);
    setText("note-a", item.note_a);
    setText("note-b", item.note_b);
    setText("current-label", String(item.current_label));
    setText("error-count", `${item.error_count}`);
    const probability = item.model_probability;
    setText("model-prob", probability === null ? "n/a" : probability.toFixed(3));
    const gauge = el("prob-gauge-fill");
    gauge.style.width = probability === null ? "0%" : `${Math.round(probability * 100)}%`;
    setText("my-verdict", item.my_verdict ?? "pending");
    setText("peer-status", item.peer_status);
    const peers = item.peer_verdicts
        ? Object.entries(item.peer_verdicts)
            .map(([who, verdict]) => `${who}: ${verdict}`)
            .join(", ")
        : "hidden until both annotators finish this item";
    setText("peer-verdicts", peers);
}
async function renderStats() {
    if (!flow)
        return;
    setText("progress", `${flow.doneCount()} / ${flow.items.length} done`);
    setText("message", flow.lastMessage);
    const queued = flow.client.queuedSubmissions().length;
    setText("retry-queue", queued ? `${queued} verdict(s) waiting for retry` : "");
    const kappa = await flow.refreshKappa();
    const kappaPanel = el("kappa-panel");
    if (kappa) {
        kappaPanel.classList.remove("hidden");
        setText("kappa", `${kappa.kappa.toFixed(3)} over ${kappa.items_used} items`);
    }
    else {
        kappaPanel.classList.add("hidden");
    }
}
async function refresh() {
    if (!flow)
        return;
    renderItem(flow.current());
    await renderStats();
}
async function join() {
    const sessionId = el("session-id").value.trim();
    const annotatorId = el("annotator-id").value.trim();
    if (!sessionId || !annotatorId) {
        setText("join-error", "session id and annotator id are both required");
        return;
    }
    const candidate = new ReviewFlow(client, sessionId, annotatorId);
    try {
        await candidate.load();
    }
    catch (error) {
        setText("join-error", `could not join: ${String(error)}`);
        return;
    }
    flow = candidate;
    const session = flow.session;
    setText("session-title", `${session?.target_source ?? ""} / ${session?.variable ?? ""}`);
    setText("annotator-label", annotatorId);
    setText("definition", session?.variable_definition ?? "");
    el("join-panel").classList.add("hidden");
    el("review-panel").classList.remove("hidden");
    await refresh();
}
async function verdict(v) {
    if (!flow)
        return;
    const outcome = await flow.submit(v);
    if (outcome.status === "queued") {
        // keep trying in the background; the verdict is never dropped
        window.setTimeout(async () => {
            await flow?.retryQueued();
            await refresh();
        }, 2000);
    }
    await refresh();
}
async function doExport() {
    if (!flow)
        return;
    try {
        const result = await flow.exportCorrections("consensus_only");
        setText("export-result", `export v${result.export_version}: ${result.adjudications.length} flips, ` +
            `${result.disagreements.length} disagreements, ${result.uncertain.length} uncertain`);
    }
    catch (error) {
        setText("export-result", `export failed: ${String(error)}`);
    }
}
function browse(step) {
    if (!flow || flow.items.length === 0)
        return;
    flow.cursor = (flow.cursor + step + flow.items.length) % flow.items.length;
    void refresh();
}
document.addEventListener("DOMContentLoaded", () => {
    el("join-button").addEventListener("click", () => void join());
    el("export-button").addEventListener("click", () => void doExport());
    document.addEventListener("keydown", (event) => {
        if (!flow || event.target.tagName === "INPUT")
            return;
        if (event.key === "k" || event.key === "K")
            void verdict("keep");
        if (event.key === "f" || event.key === "F")
            void verdict("flip");
        if (event.key === "u" || event.key === "U")
            void verdict("uncertain");
        if (event.key === "ArrowRight")
            browse(1);
        if (event.key === "ArrowLeft")
            browse(-1);
    });
});
