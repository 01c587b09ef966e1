import { GatewayClient, MetricsSnapshot } from "./api.js";
import { formatCount, formatRate, formatScore } from "./format.js";

export const POLL_INTERVAL_MS = 2000;

// Metrics panel: polls /v1/metrics on a fixed interval and exposes
// ready-to-render labels. Every label is a formatted API field.
export class MetricsController {
  snapshot: MetricsSnapshot | null = null;
  error = "";
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly client: GatewayClient,
    private readonly onChange: () => void = () => {},
    private readonly intervalMs: number = POLL_INTERVAL_MS
  ) {}

  async refresh(): Promise<void> {
    try {
      this.snapshot = await this.client.metrics();
      this.error = "";
    } catch (error) {
      this.error = error instanceof Error ? error.message : String(error);
    }
    this.onChange();
  }

  start(): void {
    if (this.timer !== null) return;
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  get escalationRateLabel(): string {
    return this.snapshot ? formatRate(this.snapshot.escalation_rate) : "–";
  }

  get meanFinalLabel(): string {
    return this.snapshot ? formatScore(this.snapshot.mean_final) : "–";
  }

  get queueDepthLabel(): string {
    return this.snapshot ? formatCount(this.snapshot.queue_depth) : "–";
  }

  get queriesLabel(): string {
    return this.snapshot ? formatCount(this.snapshot.queries) : "–";
  }

  get escalationsLabel(): string {
    return this.snapshot ? formatCount(this.snapshot.escalations) : "–";
  }
}
