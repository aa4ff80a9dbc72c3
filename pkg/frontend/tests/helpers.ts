import type { SearchResponse, SystemName } from "../src/types.js";

export interface Deferred<T> {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (reason: unknown) => void;
}

export function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (reason: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

/** Canned 200 body: n dense rows then n bm25 rows, ranks 1..n. */
export function cannedResponse(query: string, n = 5): SearchResponse {
  const rows = (system: SystemName) =>
    Array.from({ length: n }, (_, i) => ({
      system,
      rank: i + 1,
      id: 100 + i,
      text: `${query} ${system} hit ${i + 1}`,
      score: 0.9123 - i * 0.1,
    }));
  return { results: [...rows("dense"), ...rows("bm25")], latency_ms: 3.21 };
}
