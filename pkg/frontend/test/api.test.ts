import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { jsonResponse, scriptedFetch, thirtyRecordReport, turnResponse } from "./fixtures.js";

describe("request plumbing", () => {
  it("creates sessions with a JSON POST", async () => {
    const { fetchImpl, calls } = scriptedFetch([
      ["POST", /^\/api\/sessions$/, () => jsonResponse(201, { session_id: "s1" })],
    ]);
    const client = new ApiClient({ fetchImpl });
    const created = await client.createSession();
    expect(created.session_id).toBe("s1");
    expect(calls[0].method).toBe("POST");
    expect(calls[0].headers["Content-Type"]).toBe("application/json");
    expect(calls[0].body).toEqual({});
  });

  it("sends the bearer token when configured", async () => {
    const { fetchImpl, calls } = scriptedFetch([
      ["POST", /^\/api\/sessions$/, () => jsonResponse(201, { session_id: "s1" })],
    ]);
    const client = new ApiClient({ fetchImpl, token: "sekrit" });
    await client.createSession();
    expect(calls[0].headers["Authorization"]).toBe("Bearer sekrit");
  });

  it("prefixes paths with the configured base", async () => {
    const { fetchImpl, calls } = scriptedFetch([
      ["GET", /history$/, () => jsonResponse(200, { session_id: "s1", created_at: "", turns: [] })],
    ]);
    const client = new ApiClient({ fetchImpl, base: "http://svc:8000" });
    await client.getHistory("s1");
    expect(calls[0].path).toBe("http://svc:8000/api/sessions/s1/history");
  });

  it("posts turn bodies as given", async () => {
    const { fetchImpl, calls } = scriptedFetch([
      ["POST", /turns$/, () => jsonResponse(200, turnResponse())],
    ]);
    const client = new ApiClient({ fetchImpl });
    await client.postTurn("abc12345", { query: "who did this?" });
    expect(calls[0].body).toEqual({ query: "who did this?" });
  });

  it("posts ingest documents with options", async () => {
    const { fetchImpl, calls } = scriptedFetch([
      ["POST", /^\/api\/ingest$/, () =>
        jsonResponse(200, { report_ids: ["d1"], skipped: [], chunks_indexed: 2 })],
    ]);
    const client = new ApiClient({ fetchImpl });
    await client.ingest([{ id: "d1", title: "T", text: "body" }], { chunk_size: 64 });
    expect(calls[0].body).toEqual({
      documents: [{ id: "d1", title: "T", text: "body" }],
      chunk_size: 64,
    });
  });
});

describe("error mapping", () => {
  it("surfaces the service error body as an ApiError", async () => {
    const { fetchImpl } = scriptedFetch([
      ["POST", /turns$/, () =>
        jsonResponse(502, {
          error: { code: "unmatched_request", message: "no scripted response", stage: "attribute" },
        })],
    ]);
    const client = new ApiClient({ fetchImpl });
    const err = await client.postTurn("s1", { query: "q" }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(502);
    expect(err.code).toBe("unmatched_request");
    expect(err.stage).toBe("attribute");
    expect(err.message).toBe("no scripted response");
  });

  it("falls back to the HTTP status for non-JSON error bodies", async () => {
    const fetchImpl = async () => new Response("boom", { status: 500, statusText: "Server Error" });
    const client = new ApiClient({ fetchImpl });
    const err = await client.createSession().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("http_500");
  });
});

describe("eval polling", () => {
  it("polls until the job is done and returns the report", async () => {
    let polls = 0;
    const { fetchImpl, calls } = scriptedFetch([
      ["GET", /^\/api\/eval\/j1$/, () => {
        polls += 1;
        if (polls < 3) return jsonResponse(200, { job_id: "j1", status: "pending" });
        return jsonResponse(200, { job_id: "j1", status: "done", report: thirtyRecordReport() });
      }],
    ]);
    const client = new ApiClient({ fetchImpl });
    const report = await client.pollEval("j1", { intervalMs: 0 });
    expect(report.n_records).toBe(30);
    expect(calls).toHaveLength(3);
  });

  it("rejects with the job's error body", async () => {
    const { fetchImpl } = scriptedFetch([
      ["GET", /^\/api\/eval\/j2$/, () =>
        jsonResponse(200, {
          job_id: "j2",
          status: "error",
          error: { code: "invalid_config", message: "records must be objects" },
        })],
    ]);
    const client = new ApiClient({ fetchImpl });
    const err = await client.pollEval("j2", { intervalMs: 0 }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("invalid_config");
  });

  it("gives up after maxAttempts", async () => {
    const { fetchImpl, calls } = scriptedFetch([
      ["GET", /^\/api\/eval\/j3$/, () => jsonResponse(200, { job_id: "j3", status: "pending" })],
    ]);
    const client = new ApiClient({ fetchImpl });
    const err = await client.pollEval("j3", { intervalMs: 0, maxAttempts: 4 }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("poll_timeout");
    expect(calls).toHaveLength(4);
  });
});
