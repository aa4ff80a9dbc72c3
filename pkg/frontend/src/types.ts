/** Wire types of `POST /search`, mirrored field for field. */

export type SystemName = "dense" | "bm25";

export interface SearchResultRow {
  system: SystemName;
  rank: number;
  id: number;
  text: string;
  score: number;
}

export interface SearchResponse {
  results: SearchResultRow[];
  latency_ms: number;
}

/** Server rows split per system, in the order the server ranked them. */
export interface SearchColumns {
  dense: SearchResultRow[];
  bm25: SearchResultRow[];
}

export interface HistoryEntry {
  query: string;
  k: number;
}
