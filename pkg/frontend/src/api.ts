// Typed client for the gateway HTTP API. The console performs no scoring
// math of its own: every number it shows comes straight off one of these
// response shapes.

export interface Breakdown {
  sim: number;
  rel_end: number;
  rel_cloud: number;
  alpha: number;
  theta: number;
  theta_fallback_applied: boolean;
  final: number;
}

export interface ChatReply {
  record_id: string;
  reply: string;
  served_by: "end" | "cloud";
  breakdown: Breakdown | null;
  latency_ms: number;
}

export interface RecordView {
  record_id: string;
  query: string;
  end_output: string;
  state: string;
  human_verdict: string | null;
  breakdown: Breakdown | null;
  timestamps: Record<string, number>;
}

export interface ReviewQueuePage {
  items: RecordView[];
  total: number;
  page: number;
  page_size: number;
}

export interface FeedbackResult {
  record_id: string;
  state: string;
}

export interface MetricsSnapshot {
  queries: number;
  escalations: number;
  escalation_rate: number;
  mean_final: number;
  served_by: Record<string, number>;
  queue_depth: number;
}

export type Verdict = "satisfied" | "dissatisfied";

// Structural fetch type so the client works against window.fetch and
// against the stubbed gateway in tests without pulling in platform libs.
export interface FetchResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string }
) => Promise<FetchResponseLike>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly kind: string
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface GatewayConfig {
  baseUrl: string;
  token?: string;
  fetchImpl?: FetchLike;
}

export class GatewayClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchImpl: FetchLike;

  constructor(config: GatewayConfig) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, "");
    this.token = config.token;
    this.fetchImpl =
      config.fetchImpl ?? ((globalThis as { fetch?: FetchLike }).fetch as FetchLike);
    if (!this.fetchImpl) {
      throw new Error("no fetch implementation available");
    }
  }

  async chat(sessionId: string, message: string): Promise<ChatReply> {
    return this.request<ChatReply>("POST", "/v1/chat", {
      session_id: sessionId,
      message,
    });
  }

  async feedback(recordId: string, verdict: Verdict): Promise<FeedbackResult> {
    return this.request<FeedbackResult>("POST", "/v1/feedback", {
      record_id: recordId,
      verdict,
    });
  }

  async reviewQueue(page = 1, pageSize = 20): Promise<ReviewQueuePage> {
    return this.request<ReviewQueuePage>(
      "GET",
      `/v1/review/queue?page=${page}&page_size=${pageSize}`
    );
  }

  async record(recordId: string): Promise<RecordView> {
    return this.request<RecordView>("GET", `/v1/records/${encodeURIComponent(recordId)}`);
  }

  async metrics(): Promise<MetricsSnapshot> {
    return this.request<MetricsSnapshot>("GET", "/v1/metrics");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) {
      headers["content-type"] = "application/json";
    }
    if (this.token) {
      headers["authorization"] = `Bearer ${this.token}`;
    }
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let message = `request failed with status ${response.status}`;
      let kind = "HttpError";
      try {
        const payload = (await response.json()) as { error?: string; kind?: string };
        if (payload.error) message = payload.error;
        if (payload.kind) kind = payload.kind;
      } catch {
        // body was not the gateway's error shape; keep the generic message
      }
      throw new ApiError(message, response.status, kind);
    }
    return (await response.json()) as T;
  }
}
