"""Retrieval evaluation: does a description retrieve its source sentence?

Each held-out pair is (description, gold sentence id). A retriever is any
callable (query text, k) -> RetrievalResult. Gold-rank metrics (recall@k,
MRR) stand in for human relevance judgments; they understate quality
because other corpus sentences may fit a description too.
"""

import csv
import json
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .bm25 import InvertedIndex, bm25_search
from .encoder import EncoderModel
from .index import RetrievalResult, VectorIndex

K_VALUES = (1, 5, 10, 100)
TOP_TEXTS = 5

Retriever = Callable[[str, int], RetrievalResult]


class UnknownGoldIdError(ValueError):
    """A gold id is absent from the retriever's corpus."""


@dataclass(frozen=True)
class QueryRecord:
    description: str
    gold_id: int
    rank: int | None  # 1-based rank of the gold sentence; None = not in top k_max
    top_ids: tuple[int, ...]
    top_texts: tuple[str, ...]


@dataclass(frozen=True)
class EvalReport:
    system: str
    k_max: int
    recall: dict[int, float]  # k -> recall@k, for k in K_VALUES with k <= k_max
    mrr: float
    records: tuple[QueryRecord, ...]


def evaluate(
    retriever: Retriever,
    pairs: Sequence[tuple[str, int]],
    corpus_ids: Iterable[int],
    k_max: int = 100,
    system: str = "dense",
) -> EvalReport:
    """Run every query at depth k_max and score gold ranks.

    MRR counts a gold item beyond k_max as 0; recall@k is reported for
    each standard k that fits inside k_max.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    known = set(corpus_ids)
    for description, gold_id in pairs:
        if gold_id not in known:
            raise UnknownGoldIdError(f"gold id {gold_id} is not in the corpus")

    records = []
    for description, gold_id in pairs:
        result = retriever(description, k_max)
        rank = None
        for position, entry in enumerate(result.entries, start=1):
            if entry.id == gold_id:
                rank = position
                break
        records.append(
            QueryRecord(
                description=description,
                gold_id=gold_id,
                rank=rank,
                top_ids=tuple(e.id for e in result.entries[:TOP_TEXTS]),
                top_texts=tuple(e.text for e in result.entries[:TOP_TEXTS]),
            )
        )

    ks = [k for k in K_VALUES if k <= k_max]
    n = len(records)
    recall = {
        k: (sum(1 for r in records if r.rank is not None and r.rank <= k) / n if n else 0.0)
        for k in ks
    }
    mrr = sum(1.0 / r.rank for r in records if r.rank is not None) / n if n else 0.0
    return EvalReport(system=system, k_max=k_max, recall=recall, mrr=mrr,
                      records=tuple(records))


def make_dense_retriever(description_model: EncoderModel, index: VectorIndex) -> Retriever:
    """Encode the description with the description encoder, then cosine search."""

    def retrieve(query: str, k: int) -> RetrievalResult:
        vector = description_model.encode(query).vector
        return index.search(vector, k)

    return retrieve


def make_bm25_retriever(index: InvertedIndex) -> Retriever:
    def retrieve(query: str, k: int) -> RetrievalResult:
        return bm25_search(index, query, k)

    return retrieve


# ---------------------------------------------------------------- comparison


@dataclass(frozen=True)
class ComparisonRow:
    description: str
    gold_id: int
    rank_a: int | None
    rank_b: int | None
    outcome: str  # "win" (a better), "tie", "loss"


@dataclass(frozen=True)
class Comparison:
    system_a: str
    system_b: str
    rows: tuple[ComparisonRow, ...]
    wins: int
    ties: int
    losses: int
    recall_delta: dict[int, float]  # a minus b
    mrr_delta: float


def compare(report_a: EvalReport, report_b: EvalReport) -> Comparison:
    """Paired per-query rank comparison; a missing gold loses to any rank."""
    keys_a = [(r.description, r.gold_id) for r in report_a.records]
    keys_b = [(r.description, r.gold_id) for r in report_b.records]
    if keys_a != keys_b:
        raise ValueError("mismatched query sets: reports cover different pairs")

    rows = []
    wins = ties = losses = 0
    for ra, rb in zip(report_a.records, report_b.records):
        a = ra.rank if ra.rank is not None else float("inf")
        b = rb.rank if rb.rank is not None else float("inf")
        if a < b:
            outcome = "win"
            wins += 1
        elif a > b:
            outcome = "loss"
            losses += 1
        else:
            outcome = "tie"
            ties += 1
        rows.append(
            ComparisonRow(
                description=ra.description,
                gold_id=ra.gold_id,
                rank_a=ra.rank,
                rank_b=rb.rank,
                outcome=outcome,
            )
        )
    common_ks = sorted(set(report_a.recall) & set(report_b.recall))
    return Comparison(
        system_a=report_a.system,
        system_b=report_b.system,
        rows=tuple(rows),
        wins=wins,
        ties=ties,
        losses=losses,
        recall_delta={k: report_a.recall[k] - report_b.recall[k] for k in common_ks},
        mrr_delta=report_a.mrr - report_b.mrr,
    )


# ------------------------------------------------------------------- writers


def write_metrics_csv(reports: Sequence[EvalReport], path) -> None:
    """One row per system; float cells use repr so values round-trip exactly."""
    ks = sorted({k for r in reports for k in r.recall})
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["system", *(f"recall@{k}" for k in ks), "mrr", "queries"])
        for report in reports:
            writer.writerow(
                [
                    report.system,
                    *(repr(report.recall[k]) if k in report.recall else "" for k in ks),
                    repr(report.mrr),
                    len(report.records),
                ]
            )


def write_comparison_csv(comparison: Comparison, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            [
                "description",
                "gold_id",
                f"rank_{comparison.system_a}",
                f"rank_{comparison.system_b}",
                "outcome",
            ]
        )
        for row in comparison.rows:
            writer.writerow(
                [
                    row.description,
                    row.gold_id,
                    row.rank_a if row.rank_a is not None else "miss",
                    row.rank_b if row.rank_b is not None else "miss",
                    row.outcome,
                ]
            )


def write_records_jsonl(report: EvalReport, path) -> None:
    """Per-query error-analysis records, one JSON object per line."""
    with open(path, "w", encoding="utf-8") as f:
        for r in report.records:
            f.write(
                json.dumps(
                    {
                        "system": report.system,
                        "description": r.description,
                        "gold_id": r.gold_id,
                        "rank": r.rank,
                        "top_ids": list(r.top_ids),
                        "top_texts": list(r.top_texts),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def render_metrics_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table of the aggregate metrics."""
    ks = sorted({k for r in reports for k in r.recall})
    headers = ["system", *(f"recall@{k}" for k in ks), "mrr", "queries"]
    rows = [
        [
            r.system,
            *(f"{r.recall[k]:.4f}" if k in r.recall else "-" for k in ks),
            f"{r.mrr:.4f}",
            str(len(r.records)),
        ]
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"


def render_comparison_table(comparison: Comparison) -> str:
    lines = [
        f"{comparison.system_a} vs {comparison.system_b}: "
        f"{comparison.wins} wins / {comparison.ties} ties / {comparison.losses} losses",
        f"mrr delta: {comparison.mrr_delta:+.4f}",
    ]
    for k, delta in sorted(comparison.recall_delta.items()):
        lines.append(f"recall@{k} delta: {delta:+.4f}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------- figures


def render_report_figures(reports: Sequence[EvalReport], out_dir) -> list:
    """Recall@k curves and a gold-rank histogram, saved as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for report in reports:
        ks = sorted(report.recall)
        ax.plot(ks, [report.recall[k] for k in ks], marker="o", label=report.system)
    ax.set_xscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("recall@k")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Gold-sentence recall by depth")
    ax.legend()
    ax.grid(True, alpha=0.3)
    recall_path = out_dir / "recall_at_k.png"
    fig.savefig(recall_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(recall_path)

    buckets = ["1", "2-5", "6-10", "11+", "miss"]

    def bucket(rank):
        if rank is None:
            return "miss"
        if rank == 1:
            return "1"
        if rank <= 5:
            return "2-5"
        if rank <= 10:
            return "6-10"
        return "11+"

    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(len(reports), 1)
    for i, report in enumerate(reports):
        counts = {b: 0 for b in buckets}
        for r in report.records:
            counts[bucket(r.rank)] += 1
        xs = [j + i * width for j in range(len(buckets))]
        ax.bar(xs, [counts[b] for b in buckets], width=width, label=report.system)
    ax.set_xticks([j + width * (len(reports) - 1) / 2 for j in range(len(buckets))])
    ax.set_xticklabels(buckets)
    ax.set_xlabel("gold rank")
    ax.set_ylabel("queries")
    ax.set_title("Where the gold sentence lands")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    ranks_path = out_dir / "gold_ranks.png"
    fig.savefig(ranks_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(ranks_path)

    return paths
