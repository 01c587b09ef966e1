import { describe, expect, it } from "vitest";

import { GatewayClient } from "../src/api.js";
import { ChatController } from "../src/chat.js";
import { BASE_URL, StubGateway, StubReply, deferred, makeBreakdown } from "./stub.js";

function setup() {
  const stub = new StubGateway();
  const client = new GatewayClient({ baseUrl: BASE_URL, fetchImpl: stub.fetch });
  const chat = new ChatController(client, "console-1");
  return { stub, chat };
}

const helloReply = {
  record_id: "r-000001",
  reply: "Hi there, how can I help you today?",
  served_by: "end",
  breakdown: makeBreakdown(0.8444874297),
  latency_ms: 12.5,
};

describe("ChatController", () => {
  it("shows the API final score rounded to three decimals", async () => {
    const { stub, chat } = setup();
    stub.on("POST", "/v1/chat", { body: helloReply });
    await chat.send("Hello");
    expect(chat.transcript).toHaveLength(2);
    expect(chat.transcript[0]).toMatchObject({ role: "customer", text: "Hello" });
    const answer = chat.transcript[1];
    expect(answer.role).toBe("assistant");
    expect(answer.text).toBe("Hi there, how can I help you today?");
    expect(answer.servedBy).toBe("end");
    // displayed label must equal the API's breakdown.final at 3 decimals
    expect(answer.scoreLabel).toBe("0.844");
    expect(answer.scoreLabel).toBe(helloReply.breakdown.final.toFixed(3));
  });

  it("shows no score badge when evaluation was sampled out", async () => {
    const { stub, chat } = setup();
    stub.on("POST", "/v1/chat", {
      body: { ...helloReply, breakdown: null },
    });
    await chat.send("Hello");
    expect(chat.transcript[1].scoreLabel).toBeUndefined();
  });

  it("labels escalated answers with the cloud badge", async () => {
    const { stub, chat } = setup();
    stub.on("POST", "/v1/chat", {
      body: {
        ...helloReply,
        served_by: "cloud",
        breakdown: makeBreakdown(0.162, { theta_fallback_applied: true }),
      },
    });
    await chat.send("this is useless");
    expect(chat.transcript[1].servedBy).toBe("cloud");
    expect(chat.transcript[1].scoreLabel).toBe("0.162");
  });

  it("ignores blank input", async () => {
    const { stub, chat } = setup();
    await chat.send("   ");
    expect(chat.transcript).toHaveLength(0);
    expect(stub.requests).toHaveLength(0);
  });

  it("raises the network banner and retries without a duplicate bubble", async () => {
    const { stub, chat } = setup();
    stub.onOnce("POST", "/v1/chat", () => {
      throw new TypeError("connect ECONNREFUSED");
    });
    stub.on("POST", "/v1/chat", { body: helloReply });

    await chat.send("Hello");
    expect(chat.connection).toBe("error");
    expect(chat.errorMessage).toBe("gateway unreachable");
    expect(chat.transcript).toHaveLength(1);

    await chat.retry();
    expect(chat.connection).toBe("idle");
    expect(chat.errorMessage).toBe("");
    expect(chat.transcript).toHaveLength(2);
    expect(chat.transcript.filter((entry) => entry.role === "customer")).toHaveLength(1);
    expect(stub.calls("POST", "/v1/chat")).toHaveLength(2);
  });

  it("surfaces gateway error messages in the banner", async () => {
    const { stub, chat } = setup();
    stub.on("POST", "/v1/chat", {
      status: 401,
      body: { error: "missing bearer token", kind: "AuthError" },
    });
    await chat.send("Hello");
    expect(chat.connection).toBe("error");
    expect(chat.errorMessage).toBe("missing bearer token");
  });

  it("retry does nothing when there is no failed message", async () => {
    const { stub, chat } = setup();
    await chat.retry();
    expect(stub.requests).toHaveLength(0);
    expect(chat.connection).toBe("idle");
  });

  it("drops sends while a message is in flight", async () => {
    const { stub, chat } = setup();
    const gate = deferred<StubReply>();
    stub.on("POST", "/v1/chat", () => gate.promise);

    const first = chat.send("one");
    expect(chat.connection).toBe("sending");
    await chat.send("two");
    expect(chat.transcript).toHaveLength(1);

    gate.resolve({ body: helloReply });
    await first;
    expect(chat.transcript).toHaveLength(2);
    expect(stub.calls("POST", "/v1/chat")).toHaveLength(1);
  });
});
