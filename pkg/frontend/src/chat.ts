import { ApiError, GatewayClient } from "./api.js";
import { formatScore } from "./format.js";

export type Role = "customer" | "assistant";

export interface TranscriptEntry {
  role: Role;
  text: string;
  recordId?: string;
  servedBy?: "end" | "cloud";
  // absent when the answer was not evaluated (sampling off): no badge
  scoreLabel?: string;
}

export type ConnectionState = "idle" | "sending" | "error";

// Chat view state machine. Holds the transcript in server order and the
// connection banner; rendering is delegated to an injected callback so
// the logic stays testable without a DOM.
export class ChatController {
  transcript: TranscriptEntry[] = [];
  connection: ConnectionState = "idle";
  errorMessage = "";
  private pendingMessage = "";

  constructor(
    private readonly client: GatewayClient,
    readonly sessionId: string,
    private readonly onChange: () => void = () => {}
  ) {}

  async send(message: string): Promise<void> {
    const text = message.trim();
    if (!text || this.connection === "sending") return;
    this.transcript.push({ role: "customer", text });
    await this.attempt(text);
  }

  // Re-sends the message that hit the network failure banner, without
  // adding a second customer bubble.
  async retry(): Promise<void> {
    if (this.connection !== "error" || !this.pendingMessage) return;
    await this.attempt(this.pendingMessage);
  }

  private async attempt(text: string): Promise<void> {
    this.pendingMessage = text;
    this.connection = "sending";
    this.errorMessage = "";
    this.onChange();
    try {
      const reply = await this.client.chat(this.sessionId, text);
      this.transcript.push({
        role: "assistant",
        text: reply.reply,
        recordId: reply.record_id,
        servedBy: reply.served_by,
        scoreLabel: reply.breakdown ? formatScore(reply.breakdown.final) : undefined,
      });
      this.connection = "idle";
      this.pendingMessage = "";
    } catch (error) {
      this.connection = "error";
      this.errorMessage =
        error instanceof ApiError ? error.message : "gateway unreachable";
    }
    this.onChange();
  }
}
