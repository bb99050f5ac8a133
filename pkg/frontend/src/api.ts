import type {
  AdaptResponse,
  ApiError,
  FeedbackResponse,
  MetricsResponse,
  QueryResponse,
  SessionView,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(base + path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  const body = await resp.json();
  if (!resp.ok) {
    const err: ApiError = body?.error ?? { code: "UNKNOWN", message: "request failed" };
    throw new ServiceError(err.code, err.message, resp.status);
  }
  return body as T;
}

/** Thin typed client for the retrieval service; one instance per session. */
export class SessionClient {
  private constructor(
    readonly base: string,
    readonly sid: string,
  ) {}

  static async create(base: string, sid?: string): Promise<SessionClient> {
    const body = await request<{ session: SessionView }>(base, "/session", {
      method: "POST",
      body: JSON.stringify(sid ? { sid } : {}),
    });
    return new SessionClient(base, body.session.sid);
  }

  status(): Promise<SessionView> {
    return request(this.base, `/session/${this.sid}/status`);
  }

  query(imageId: string, k = 12, mode: "auto" | "raw" | "adapted" = "auto"): Promise<QueryResponse> {
    return request(this.base, `/session/${this.sid}/query`, {
      method: "POST",
      body: JSON.stringify({ image_id: imageId, k, mode }),
    });
  }

  feedback(queryId: string, selectedIds: string[]): Promise<FeedbackResponse> {
    return request(this.base, `/session/${this.sid}/feedback`, {
      method: "POST",
      body: JSON.stringify({ query_id: queryId, selected_ids: selectedIds }),
    });
  }

  adapt(): Promise<AdaptResponse> {
    return request(this.base, `/session/${this.sid}/adapt`, { method: "POST" });
  }

  metrics(): Promise<MetricsResponse> {
    return request(this.base, `/session/${this.sid}/metrics`);
  }

  thumbUrl(imageId: string): string {
    return `${this.base}/archive/${encodeURIComponent(imageId)}/thumb`;
  }
}
