import type { SearchColumns, SearchResponse, SearchResultRow } from "./types.js";

/**
 * Search failure with the HTTP status attached; `status` is null when the
 * request never reached the service (connection refused, DNS, abort).
 */
export class SearchApiError extends Error {
  constructor(
    readonly status: number | null,
    message: string,
  ) {
    super(message);
    this.name = "SearchApiError";
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string" && body.detail.length > 0) {
      return body.detail;
    }
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return response.statusText || `HTTP ${response.status}`;
}

/**
 * Issue one both-systems search. Every failure path throws SearchApiError
 * so callers have a single error shape to render.
 */
export async function searchBoth(
  baseUrl: string,
  query: string,
  k: number,
  fetchImpl: typeof fetch = fetch,
): Promise<SearchResponse> {
  let response: Response;
  try {
    response = await fetchImpl(`${baseUrl.replace(/\/$/, "")}/search`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ query, k, system: "both" }),
    });
  } catch (cause) {
    const reason = cause instanceof Error ? cause.message : String(cause);
    throw new SearchApiError(null, `service unreachable: ${reason}`);
  }
  if (!response.ok) {
    throw new SearchApiError(response.status, await errorDetail(response));
  }
  const body = (await response.json()) as SearchResponse;
  if (!Array.isArray(body.results) || typeof body.latency_ms !== "number") {
    throw new SearchApiError(response.status, "malformed service response");
  }
  return body;
}

/**
 * Split the flat result list into per-system columns without reordering:
 * the server's ranking is displayed exactly as returned.
 */
export function splitColumns(results: SearchResultRow[]): SearchColumns {
  return {
    dense: results.filter((row) => row.system === "dense"),
    bm25: results.filter((row) => row.system === "bm25"),
  };
}
