import { describe, expect, it } from "vitest";

import { SearchApiError } from "../src/api.js";
import { HISTORY_LIMIT, SearchConsole, type SearchFn } from "../src/state.js";
import type { SearchResponse } from "../src/types.js";
import { cannedResponse, deferred, type Deferred } from "./helpers.js";

const BASE = "http://service.test";

function immediateFn(calls?: string[]): SearchFn {
  return (_base, query) => {
    calls?.push(query);
    return Promise.resolve(cannedResponse(query));
  };
}

describe("client-side validation", () => {
  it("blocks empty and whitespace queries without issuing a request", async () => {
    const calls: string[] = [];
    const console_ = new SearchConsole(immediateFn(calls), BASE);
    await console_.submit("", 5);
    await console_.submit("   ", 5);
    expect(calls).toEqual([]);
    expect(console_.state.notice).toMatch(/type a description/);
    expect(console_.state.history).toEqual([]);
  });

  it("blocks out-of-range k without issuing a request", async () => {
    const calls: string[] = [];
    const console_ = new SearchConsole(immediateFn(calls), BASE);
    await console_.submit("query", 0);
    await console_.submit("query", 101);
    await console_.submit("query", 2.5);
    expect(calls).toEqual([]);
    expect(console_.state.notice).toMatch(/between 1 and 100/);
  });
});

describe("successful search", () => {
  it("renders both columns in server order with latency", async () => {
    const console_ = new SearchConsole(immediateFn(), BASE);
    await console_.submit("marsh birds", 5);
    const state = console_.state;
    expect(state.error).toBeNull();
    expect(state.notice).toBeNull();
    expect(state.pending).toBe(false);
    expect(state.shownQuery).toBe("marsh birds");
    expect(state.latencyMs).toBeCloseTo(3.21);
    expect(state.columns?.dense.map((r) => r.rank)).toEqual([1, 2, 3, 4, 5]);
    expect(state.columns?.bm25.map((r) => r.rank)).toEqual([1, 2, 3, 4, 5]);
    expect(state.columns?.dense.every((r) => r.system === "dense")).toBe(true);
  });

  it("trims the query before sending", async () => {
    const calls: string[] = [];
    const console_ = new SearchConsole(immediateFn(calls), BASE);
    await console_.submit("  padded  ", 3);
    expect(calls).toEqual(["padded"]);
  });
});

describe("latest-wins under rapid successive queries", () => {
  function controlledFn(pending: Map<string, Deferred<SearchResponse>>): SearchFn {
    return (_base, query) => {
      const d = deferred<SearchResponse>();
      pending.set(query, d);
      return d.promise;
    };
  }

  it("discards a stale response that arrives after a newer one", async () => {
    const pending = new Map<string, Deferred<SearchResponse>>();
    const console_ = new SearchConsole(controlledFn(pending), BASE);
    const first = console_.submit("slow", 5);
    const second = console_.submit("fast", 5);

    pending.get("fast")!.resolve(cannedResponse("fast"));
    await second;
    expect(console_.state.shownQuery).toBe("fast");

    pending.get("slow")!.resolve(cannedResponse("slow"));
    await first;
    expect(console_.state.shownQuery).toBe("fast");
    expect(console_.state.columns?.dense[0]?.text).toContain("fast");
    expect(console_.state.pending).toBe(false);
  });

  it("keeps a stale failure silent", async () => {
    const pending = new Map<string, Deferred<SearchResponse>>();
    const console_ = new SearchConsole(controlledFn(pending), BASE);
    const first = console_.submit("doomed", 5);
    const second = console_.submit("fine", 5);

    pending.get("fine")!.resolve(cannedResponse("fine"));
    await second;
    pending.get("doomed")!.reject(new SearchApiError(500, "internal error"));
    await first;

    expect(console_.state.error).toBeNull();
    expect(console_.state.shownQuery).toBe("fine");
  });
});

describe("failures", () => {
  it("shows a banner for a 4xx and retains prior results", async () => {
    let fail = false;
    const fn: SearchFn = (_base, query) =>
      fail
        ? Promise.reject(new SearchApiError(400, "k must be at least 1"))
        : Promise.resolve(cannedResponse(query));
    const console_ = new SearchConsole(fn, BASE);

    await console_.submit("good one", 5);
    fail = true;
    await console_.submit("bad one", 5);

    expect(console_.state.error).toBe("search failed (400): k must be at least 1");
    expect(console_.state.shownQuery).toBe("good one");
    expect(console_.state.columns?.dense.length).toBe(5);
  });

  it("shows the unreachable-service message without a status code", async () => {
    const fn: SearchFn = () =>
      Promise.reject(new SearchApiError(null, "service unreachable: refused"));
    const console_ = new SearchConsole(fn, BASE);
    await console_.submit("anything", 5);
    expect(console_.state.error).toBe("service unreachable: refused");
  });

  it("retry re-issues the failed query", async () => {
    let fail = true;
    const calls: string[] = [];
    const fn: SearchFn = (_base, query) => {
      calls.push(query);
      return fail
        ? Promise.reject(new SearchApiError(500, "internal error"))
        : Promise.resolve(cannedResponse(query));
    };
    const console_ = new SearchConsole(fn, BASE);
    await console_.submit("flaky", 7);
    expect(console_.state.error).toMatch(/500/);

    fail = false;
    await console_.retry();
    expect(calls).toEqual(["flaky", "flaky"]);
    expect(console_.state.error).toBeNull();
    expect(console_.state.shownQuery).toBe("flaky");
  });
});

describe("history", () => {
  it("keeps the last 20 issued queries, newest first", async () => {
    const console_ = new SearchConsole(immediateFn(), BASE);
    for (let i = 0; i < 25; i++) {
      await console_.submit(`query ${i}`, 5);
    }
    const history = console_.state.history;
    expect(history.length).toBe(HISTORY_LIMIT);
    expect(history[0]).toEqual({ query: "query 24", k: 5 });
    expect(history[HISTORY_LIMIT - 1]).toEqual({ query: "query 5", k: 5 });
  });

  it("moves a repeated query to the front instead of duplicating it", async () => {
    const console_ = new SearchConsole(immediateFn(), BASE);
    await console_.submit("alpha", 5);
    await console_.submit("beta", 5);
    await console_.submit("alpha", 5);
    expect(console_.state.history).toEqual([
      { query: "alpha", k: 5 },
      { query: "beta", k: 5 },
    ]);
  });

  it("records entries even when the request fails", async () => {
    const fn: SearchFn = () =>
      Promise.reject(new SearchApiError(500, "internal error"));
    const console_ = new SearchConsole(fn, BASE);
    await console_.submit("unlucky", 4);
    expect(console_.state.history).toEqual([{ query: "unlucky", k: 4 }]);
  });
});
