import type { ConsoleState } from "./state.js";
import type { HistoryEntry, SearchResultRow } from "./types.js";

export interface Handlers {
  onSubmit(query: string, k: number): void;
  onRetry(): void;
  onHistory(entry: HistoryEntry): void;
  onBaseUrl(url: string): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function resultColumn(
  doc: Document,
  title: string,
  rows: SearchResultRow[],
): HTMLElement {
  const section = el(doc, "section", "column");
  section.appendChild(el(doc, "h2", undefined, title));
  if (rows.length === 0) {
    section.appendChild(el(doc, "p", "empty", "no results"));
    return section;
  }
  const list = el(doc, "ol", "results");
  for (const row of rows) {
    const item = el(doc, "li", "result-row");
    item.appendChild(el(doc, "span", "score", row.score.toFixed(3)));
    item.appendChild(el(doc, "span", "doc-id", `#${row.id}`));
    item.appendChild(el(doc, "span", "text", row.text));
    list.appendChild(item);
  }
  section.appendChild(list);
  return section;
}

/**
 * Rebuild the console DOM from the state. The tree is small enough that
 * rendering from scratch on every change is simpler and fast enough.
 */
export function renderApp(
  root: HTMLElement,
  state: ConsoleState,
  handlers: Handlers,
): void {
  const doc = root.ownerDocument;
  root.textContent = "";

  const header = el(doc, "header");
  header.appendChild(el(doc, "h1", undefined, "description search"));
  const baseUrl = el(doc, "input", "base-url");
  baseUrl.type = "text";
  baseUrl.value = state.baseUrl;
  baseUrl.title = "service base URL";
  baseUrl.addEventListener("change", () => handlers.onBaseUrl(baseUrl.value));
  header.appendChild(baseUrl);
  root.appendChild(header);

  const form = el(doc, "form", "query-form");
  const queryInput = el(doc, "input", "query");
  queryInput.type = "text";
  queryInput.placeholder = "an abstract description of the sentence you want";
  const kInput = el(doc, "input", "k");
  kInput.type = "number";
  kInput.min = "1";
  kInput.max = "100";
  kInput.value = "10";
  const button = el(doc, "button", "submit", state.pending ? "searching…" : "search");
  button.type = "submit";
  button.disabled = state.pending;
  form.appendChild(queryInput);
  form.appendChild(kInput);
  form.appendChild(button);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    handlers.onSubmit(queryInput.value, Number(kInput.value));
  });
  root.appendChild(form);

  if (state.notice !== null) {
    root.appendChild(el(doc, "p", "notice", state.notice));
  }

  if (state.error !== null) {
    const banner = el(doc, "div", "error-banner");
    banner.appendChild(el(doc, "span", undefined, state.error));
    const retry = el(doc, "button", "retry", "retry");
    retry.type = "button";
    retry.addEventListener("click", () => handlers.onRetry());
    banner.appendChild(retry);
    root.appendChild(banner);
  }

  if (state.columns !== null) {
    const status = el(doc, "p", "status");
    const shown = state.shownQuery === null ? "" : `“${state.shownQuery}” — `;
    const server =
      state.latencyMs === null ? "" : `${state.latencyMs.toFixed(1)} ms server`;
    const round =
      state.elapsedMs === null ? "" : `, ${state.elapsedMs.toFixed(0)} ms round trip`;
    status.textContent = `${shown}${server}${round}`;
    root.appendChild(status);

    const columns = el(doc, "div", "columns");
    columns.appendChild(resultColumn(doc, "dense", state.columns.dense));
    columns.appendChild(resultColumn(doc, "bm25", state.columns.bm25));
    root.appendChild(columns);
  }

  if (state.history.length > 0) {
    const aside = el(doc, "aside", "history");
    aside.appendChild(el(doc, "h2", undefined, "history"));
    const list = el(doc, "ul");
    for (const entry of state.history) {
      const item = el(doc, "li");
      const rerun = el(doc, "button", "rerun", `${entry.query} (k=${entry.k})`);
      rerun.type = "button";
      rerun.addEventListener("click", () => handlers.onHistory(entry));
      item.appendChild(rerun);
      list.appendChild(item);
    }
    aside.appendChild(list);
    root.appendChild(aside);
  }
}
