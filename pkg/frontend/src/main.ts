import { GatewayClient } from "./api.js";
import { ChatController } from "./chat.js";
import { MetricsController } from "./metrics.js";
import { ReviewController } from "./review.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function renderChat(chat: ChatController): void {
  const box = el<HTMLDivElement>("transcript");
  box.innerHTML = chat.transcript
    .map((entry) => {
      const badges: string[] = [];
      if (entry.servedBy) {
        badges.push(`<span class="badge badge-${entry.servedBy}">${entry.servedBy}</span>`);
      }
      if (entry.scoreLabel !== undefined) {
        badges.push(`<span class="badge badge-score">${entry.scoreLabel}</span>`);
      }
      return `<div class="bubble bubble-${entry.role}">${escapeHtml(entry.text)}${badges.join("")}</div>`;
    })
    .join("");
  box.scrollTop = box.scrollHeight;
  const banner = el<HTMLDivElement>("chat-banner");
  banner.hidden = chat.connection !== "error";
  banner.querySelector(".banner-text")!.textContent = chat.errorMessage;
  el<HTMLButtonElement>("chat-send").disabled = chat.connection === "sending";
}

function renderReview(review: ReviewController): void {
  const list = el<HTMLDivElement>("review-list");
  if (review.empty) {
    list.innerHTML = `<p class="empty">Nothing waiting for review.</p>`;
  } else {
    list.innerHTML = review.items
      .map((item) => {
        const score =
          item.breakdown === null ? "" : `<span class="badge badge-score">${item.breakdown.final.toFixed(3)}</span>`;
        const busy = review.submitting.has(item.record_id) ? "disabled" : "";
        return `
          <div class="review-item" data-record="${item.record_id}">
            <div class="review-query">${escapeHtml(item.query)}</div>
            <div class="review-answer">${escapeHtml(item.end_output)}${score}</div>
            <button data-verdict="satisfied" ${busy}>Satisfied</button>
            <button data-verdict="dissatisfied" ${busy}>Dissatisfied</button>
          </div>`;
      })
      .join("");
  }
  const labeled = [...review.pseudoLabeled];
  el<HTMLDivElement>("review-labeled").innerHTML = labeled.length
    ? `Pseudo-labeled this session: ${labeled.map(escapeHtml).join(", ")}`
    : "";
  const toast = el<HTMLDivElement>("review-toast");
  toast.hidden = !review.toast;
  toast.textContent = review.toast;
  el<HTMLSpanElement>("review-total").textContent = String(review.total);
}

function renderMetrics(metrics: MetricsController): void {
  el<HTMLSpanElement>("m-queries").textContent = metrics.queriesLabel;
  el<HTMLSpanElement>("m-escalations").textContent = metrics.escalationsLabel;
  el<HTMLSpanElement>("m-rate").textContent = metrics.escalationRateLabel;
  el<HTMLSpanElement>("m-mean").textContent = metrics.meanFinalLabel;
  el<HTMLSpanElement>("m-depth").textContent = metrics.queueDepthLabel;
  const banner = el<HTMLDivElement>("metrics-banner");
  banner.hidden = !metrics.error;
  banner.textContent = metrics.error;
}

function start(): void {
  const baseUrl = el<HTMLInputElement>("gateway-url").value || "http://127.0.0.1:8080";
  const token = el<HTMLInputElement>("gateway-token").value || undefined;
  const client = new GatewayClient({ baseUrl, token });

  const chat = new ChatController(client, `console-${Date.now()}`, () => renderChat(chat));
  const review = new ReviewController(client, () => renderReview(review));
  const metrics = new MetricsController(client, () => renderMetrics(metrics));

  el<HTMLFormElement>("chat-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const input = el<HTMLInputElement>("chat-input");
    void chat.send(input.value);
    input.value = "";
  });
  el<HTMLButtonElement>("chat-retry").addEventListener("click", () => void chat.retry());

  el<HTMLDivElement>("review-list").addEventListener("click", (event) => {
    const button = (event.target as HTMLElement).closest("button[data-verdict]");
    if (!button) return;
    const item = button.closest<HTMLElement>(".review-item");
    if (!item) return;
    const verdict = button.getAttribute("data-verdict") as "satisfied" | "dissatisfied";
    void review.submitVerdict(item.dataset.record!, verdict);
  });
  el<HTMLButtonElement>("review-reload").addEventListener("click", () => void review.load());

  document.querySelectorAll<HTMLButtonElement>("nav button").forEach((button) => {
    button.addEventListener("click", () => {
      document.querySelectorAll("main > section").forEach((section) => {
        (section as HTMLElement).hidden = section.id !== button.dataset.panel;
      });
      document
        .querySelectorAll("nav button")
        .forEach((b) => b.classList.toggle("active", b === button));
      if (button.dataset.panel === "panel-review") void review.load();
    });
  });

  void review.load();
  metrics.start();
  renderChat(chat);
  renderReview(review);
  renderMetrics(metrics);
}

el<HTMLButtonElement>("connect").addEventListener("click", start);
