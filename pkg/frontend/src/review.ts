import { ApiError, GatewayClient, RecordView, Verdict } from "./api.js";

// Reviewer dashboard state. Verdicts are never applied optimistically:
// an item leaves the list only after the server confirms the feedback,
// and a dissatisfied confirmation whose record reached the training
// queue gets a pseudo-label indicator.
export class ReviewController {
  items: RecordView[] = [];
  total = 0;
  page = 1;
  pageSize = 20;
  loading = false;
  toast = "";
  readonly submitting = new Set<string>();
  readonly pseudoLabeled = new Set<string>();

  constructor(
    private readonly client: GatewayClient,
    private readonly onChange: () => void = () => {}
  ) {}

  get empty(): boolean {
    return !this.loading && this.items.length === 0;
  }

  async load(page = this.page): Promise<void> {
    this.loading = true;
    this.onChange();
    try {
      const result = await this.client.reviewQueue(page, this.pageSize);
      this.items = result.items;
      this.total = result.total;
      this.page = result.page;
      this.toast = "";
    } catch (error) {
      this.toast = error instanceof ApiError ? error.message : "gateway unreachable";
    }
    this.loading = false;
    this.onChange();
  }

  async submitVerdict(recordId: string, verdict: Verdict): Promise<void> {
    if (this.submitting.has(recordId)) return;
    this.submitting.add(recordId);
    this.onChange();
    try {
      const result = await this.client.feedback(recordId, verdict);
      // server confirmed: only now does the entry leave the queue
      this.items = this.items.filter((item) => item.record_id !== recordId);
      this.total = Math.max(0, this.total - 1);
      if (verdict === "dissatisfied" && this.reachedTraining(result.state)) {
        this.pseudoLabeled.add(recordId);
      }
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.toast = `record ${recordId} is not reviewable any more: ${error.message}`;
      } else if (error instanceof ApiError) {
        this.toast = error.message;
      } else {
        this.toast = "gateway unreachable";
      }
    }
    this.submitting.delete(recordId);
    this.onChange();
  }

  private reachedTraining(state: string): boolean {
    return state === "pseudo_labeled" || state === "queued" || state === "dispatched";
  }
}
