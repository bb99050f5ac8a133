// Wire types mirroring src/eralign/schemas/http_api.json exactly.
// The UI never derives any of these values locally; every displayed
// number originates from a service response.

export type SessionView = {
  sid: string;
  counters: { n_s: number; n_t: number };
  thresholds: {
    d_hat_s: number | null;
    d_hat_t: number | null;
    estimated: boolean;
  };
  adapted: boolean;
  round: number;
  seq: number;
  adapt_error: string | null;
  history: Array<{ query_id: string; feedback_rounds: number }>;
};

export type RankedResult = { id: string; score: number; rank: number };

export type QueryResponse = {
  query_id: string;
  mode: "raw" | "adapted";
  results: RankedResult[];
  session: SessionView;
};

export type FeedbackResponse = {
  session: SessionView;
  adapted_triggered: boolean;
};

export type AdaptResponse = {
  adapted: boolean;
  reason: string | null;
  session: SessionView;
};

export type MetricsResponse = {
  before_map: number;
  after_map: number | null;
  adapted: boolean;
};

export type ApiError = { code: string; message: string };

export type SessionStage = "not-ready" | "estimated" | "adapted";

/** Stage shown in the status panel, derived only from server flags. */
export function stageOf(view: SessionView): SessionStage {
  if (view.adapted) return "adapted";
  if (view.thresholds.estimated) return "estimated";
  return "not-ready";
}
