/** Shared types mirroring the review service's JSON API. */

export type Verdict = "keep" | "flip" | "uncertain";
export type Resolution = "consensus_only" | "annotator_a_priority";

export interface SessionSummary {
  session_id: string;
  variable: string;
  target_source: string;
  annotator_ids: string[];
  variable_definition: string;
  created_at: string;
  complete: boolean;
  progress: Record<string, { done: number; pending: number }>;
  items: ItemRecord[];
  /** full verdict history keyed "incident_id::annotator_id" */
  verdicts: Record<string, StoredAdjudication[]>;
}

export interface ItemRecord {
  incident_id: string;
  note_a: string;
  note_b: string;
  current_label: number;
  error_count: number;
  model_probability: number | null;
}

/** Item as seen by one annotator; peer verdicts appear only once both are done. */
export interface AnnotatedItem extends ItemRecord {
  my_verdict: Verdict | null;
  my_version: number;
  peer_status: "done" | "pending";
  peer_verdicts?: Record<string, Verdict>;
}

export interface StoredAdjudication {
  incident_id: string;
  annotator_id: string;
  verdict: Verdict;
  note: string;
  version: number;
  timestamp: string;
}

export interface ConflictDetail {
  message: string;
  incident_id: string;
  annotator_id: string;
  latest_version: number;
}

export interface IaaResult {
  kappa: number;
  items_used: number;
}

export interface ExportedAdjudication {
  adjudication_id: string;
  incident_id: string;
  annotator_id: string;
  verdict: Verdict;
  note: string;
  version: number;
  timestamp: string;
}

export interface ExportResult {
  export_version: number;
  session_id: string;
  variable: string;
  target_source: string;
  resolution: Resolution;
  adjudications: ExportedAdjudication[];
  disagreements: { incident_id: string; verdicts: Record<string, Verdict> }[];
  uncertain: { incident_id: string; verdicts: Record<string, Verdict> }[];
}
