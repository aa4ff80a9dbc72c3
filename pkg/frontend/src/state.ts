import { SearchApiError, splitColumns } from "./api.js";
import type { HistoryEntry, SearchColumns, SearchResponse } from "./types.js";

export const HISTORY_LIMIT = 20;
export const MAX_K = 100;

export interface ConsoleState {
  baseUrl: string;
  pending: boolean;
  /** Last successfully rendered columns; kept across failed requests. */
  columns: SearchColumns | null;
  /** Query the visible columns belong to. */
  shownQuery: string | null;
  /** Server-side scoring latency reported in the response. */
  latencyMs: number | null;
  /** Full round trip measured at the client. */
  elapsedMs: number | null;
  error: string | null;
  /** Client-side validation message; no request was issued. */
  notice: string | null;
  history: HistoryEntry[];
}

export type SearchFn = (
  baseUrl: string,
  query: string,
  k: number,
) => Promise<SearchResponse>;

/**
 * Console state machine, free of DOM concerns so the race and error
 * behavior is testable directly.
 *
 * Every issued request gets a sequence number; a response (or failure)
 * is applied only while its request is still the newest one, so rapid
 * successive queries always leave the latest result on screen no matter
 * the order in which the responses arrive.
 */
export class SearchConsole {
  state: ConsoleState;
  private seq = 0;
  private lastIssued: HistoryEntry | null = null;

  constructor(
    private searchFn: SearchFn,
    baseUrl: string,
    private onChange: (state: ConsoleState) => void = () => {},
    private now: () => number = () => Date.now(),
  ) {
    this.state = {
      baseUrl,
      pending: false,
      columns: null,
      shownQuery: null,
      latencyMs: null,
      elapsedMs: null,
      error: null,
      notice: null,
      history: [],
    };
  }

  setBaseUrl(url: string): void {
    this.state.baseUrl = url.trim();
    this.emit();
  }

  /** Validate and issue one search; resolves once applied or discarded. */
  async submit(query: string, k: number): Promise<void> {
    const trimmed = query.trim();
    if (trimmed === "") {
      this.state.notice = "type a description to search";
      this.emit();
      return;
    }
    if (!Number.isInteger(k) || k < 1 || k > MAX_K) {
      this.state.notice = `k must be a whole number between 1 and ${MAX_K}`;
      this.emit();
      return;
    }

    const mine = ++this.seq;
    this.lastIssued = { query: trimmed, k };
    this.pushHistory(trimmed, k);
    this.state.notice = null;
    this.state.pending = true;
    this.emit();

    const started = this.now();
    try {
      const response = await this.searchFn(this.state.baseUrl, trimmed, k);
      if (mine !== this.seq) {
        return; // superseded while in flight
      }
      this.state.columns = splitColumns(response.results);
      this.state.shownQuery = trimmed;
      this.state.latencyMs = response.latency_ms;
      this.state.elapsedMs = this.now() - started;
      this.state.error = null;
    } catch (failure) {
      if (mine !== this.seq) {
        return; // a newer query owns the console; stale failures stay silent
      }
      this.state.error =
        failure instanceof SearchApiError
          ? failure.status === null
            ? failure.message
            : `search failed (${failure.status}): ${failure.message}`
          : `search failed: ${String(failure)}`;
      // prior results stay on screen alongside the banner
    } finally {
      if (mine === this.seq) {
        this.state.pending = false;
        this.emit();
      }
    }
  }

  /** Re-issue the most recently attempted query (the banner's retry). */
  async retry(): Promise<void> {
    if (this.lastIssued !== null) {
      await this.submit(this.lastIssued.query, this.lastIssued.k);
    }
  }

  private pushHistory(query: string, k: number): void {
    const rest = this.state.history.filter(
      (entry) => entry.query !== query || entry.k !== k,
    );
    this.state.history = [{ query, k }, ...rest].slice(0, HISTORY_LIMIT);
  }

  private emit(): void {
    this.onChange(this.state);
  }
}
