import { searchBoth } from "./api.js";
import { renderApp } from "./render.js";
import { SearchConsole } from "./state.js";

declare global {
  interface Window {
    DESCSEARCH_API?: string;
  }
}

function resolveBaseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return fromQuery ?? window.DESCSEARCH_API ?? "http://127.0.0.1:8000";
}

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}

const console_ = new SearchConsole(searchBoth, resolveBaseUrl(), (state) =>
  renderApp(root, state, handlers),
);

const handlers = {
  onSubmit: (query: string, k: number) => void console_.submit(query, k),
  onRetry: () => void console_.retry(),
  onHistory: (entry: { query: string; k: number }) =>
    void console_.submit(entry.query, entry.k),
  onBaseUrl: (url: string) => console_.setBaseUrl(url),
};

renderApp(root, console_.state, handlers);
