"""Command-line driver for the full pipeline.

Settings for the keys listed in resolve() can come from three places;
an environment variable (DESCSEARCH_<KEY>) beats the command-line flag,
which beats the --config file, which beats the built-in default.
"""
from __future__ import annotations

import functools
import json
import os
import sys

import click
import numpy as np

from . import service as service_module
from .bm25 import DEFAULT_B, DEFAULT_K1, build_bm25, bm25_search, load_bm25, save_bm25
from .dataset import DatasetSplit, TrainingInstance, load_split, save_split
from .datagen import (
    HttpCompletionClient,
    StubCompletionClient,
    generate_dataset,
    write_failures,
)
from .encoder import EncoderModel
from .evaluation import (
    compare,
    evaluate,
    make_bm25_retriever,
    make_dense_retriever,
    render_comparison_table,
    render_metrics_table,
    render_report_figures,
    write_comparison_csv,
    write_metrics_csv,
    write_records_jsonl,
)
from .index import VectorIndex, encode_corpus
from .seeding import mix_seed
from .service import ServiceConfig, load_backends
from .training import TrainingConfig, train, write_loss_log

ENV_PREFIX = "DESCSEARCH_"


def parse_config_file(path: str) -> dict[str, str]:
    settings = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            settings[key.strip()] = value.strip()
    return settings


def resolve(ctx, key: str, flag_value, convert=str, default=None):
    """Apply the env > flag > config-file > default precedence for one key."""
    env_value = os.environ.get(ENV_PREFIX + key.upper().replace("-", "_"))
    if env_value is not None:
        return convert(env_value)
    if flag_value is not None and flag_value != ():
        return flag_value
    config = (ctx.obj or {}).get("config", {})
    if key in config:
        return convert(config[key])
    return default


def runtime_errors(fn):
    """Map runtime failures to a diagnostic on stderr and exit code 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except click.exceptions.Exit:
            raise
        except Exception as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def read_corpus_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.strip()]


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="key=value settings file",
)
@click.pass_context
def main(ctx, config_path):
    """Description-based sentence retrieval pipeline."""
    ctx.ensure_object(dict)
    if config_path:
        try:
            ctx.obj["config"] = parse_config_file(config_path)
        except (OSError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    else:
        ctx.obj["config"] = {}


@main.command("generate-data")
@click.option("--sentences", "sentences_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--failures", "failures_path", default=None, type=click.Path())
@click.option("--split", "split_name", default="train", type=click.Choice(["train", "dev", "test"]))
@click.option("--stub", is_flag=True, help="use the offline deterministic client")
@click.option("--endpoint", default=None, help="completion API URL")
@click.option("--token", default=None, help="completion API auth token")
@click.option("--model", "model_name", default=None, help="completion model name")
@click.option("--temperature", default=0.7, show_default=True)
@click.option("--max-tokens", default=1024, show_default=True)
@click.option("--retries", default=3, show_default=True)
@click.option("--max-in-flight", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
@runtime_errors
def generate_data(
    ctx,
    sentences_path,
    out_path,
    failures_path,
    split_name,
    stub,
    endpoint,
    token,
    model_name,
    temperature,
    max_tokens,
    retries,
    max_in_flight,
    seed,
):
    """Prompt a completion API (or the stub) for descriptions of each sentence."""
    sentences = read_corpus_lines(sentences_path)
    if stub:
        client = StubCompletionClient(seed=seed)
    else:
        endpoint = resolve(ctx, "endpoint", endpoint)
        token = resolve(ctx, "token", token)
        model_name = resolve(ctx, "model", model_name)
        missing = [
            name
            for name, value in (("endpoint", endpoint), ("token", token), ("model", model_name))
            if not value
        ]
        if missing:
            raise click.UsageError(
                f"missing {', '.join('--' + m for m in missing)} (or pass --stub)"
            )
        client = HttpCompletionClient(
            endpoint, token, model_name, temperature=temperature, max_tokens=max_tokens
        )
    records = generate_dataset(
        sentences,
        client,
        retries=retries,
        max_in_flight=max_in_flight,
        abstraction_seed=seed,
    )
    instances = []
    for record in records:
        if record.status != "ok":
            continue
        parsed = record.parsed
        instances.append(
            TrainingInstance(
                id=len(instances),
                sentence=parsed.sentence,
                valid_descriptions=parsed.valid_descriptions,
                invalid_descriptions=parsed.invalid_descriptions,
            )
        )
    save_split(DatasetSplit(split_name, tuple(instances)), out_path)
    if failures_path is None:
        failures_path = os.path.join(os.path.dirname(os.path.abspath(out_path)), "failures.jsonl")
    write_failures(records, failures_path)
    n_failed = len(records) - len(instances)
    click.echo(f"wrote {len(instances)} instances to {out_path} ({n_failed} failed)")


@main.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_name", default="train", type=click.Choice(["train", "dev", "test"]))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--epochs", default=30, show_default=True)
@click.option("--batch-size", default=128, show_default=True)
@click.option("--learning-rate", default=2e-4, show_default=True)
@click.option("--margin", default=1.0, show_default=True)
@click.option("--temperature", default=0.1, show_default=True)
@click.option("--alpha", default=0.1, show_default=True)
@click.option("--warmup-fraction", default=0.05, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--vocab-size", default=65536, show_default=True)
@click.option("--hidden", default=128, show_default=True)
@click.option("--dim", default=256, show_default=True)
@click.option("--init-scale", default=0.05, show_default=True)
@click.option("--loss-log", "loss_log_path", default=None, type=click.Path())
@runtime_errors
def train_command(
    data_path,
    split_name,
    out_dir,
    epochs,
    batch_size,
    learning_rate,
    margin,
    temperature,
    alpha,
    warmup_fraction,
    seed,
    vocab_size,
    hidden,
    dim,
    init_scale,
    loss_log_path,
):
    """Train the sentence and description encoders on a JSONL split."""
    split = load_split(data_path, split_name)
    config = TrainingConfig(
        margin=margin,
        temperature=temperature,
        alpha=alpha,
        batch_size=batch_size,
        epochs=epochs,
        learning_rate=learning_rate,
        seed=seed,
        warmup_fraction=warmup_fraction,
    )
    sentence_model = EncoderModel.init_random(
        vocab_size, hidden, dim, seed=mix_seed("sentence-encoder", seed), init_scale=init_scale
    )
    description_model = EncoderModel.init_random(
        vocab_size, hidden, dim, seed=mix_seed("description-encoder", seed), init_scale=init_scale
    )
    result = train(split, config, sentence_model, description_model)
    os.makedirs(out_dir, exist_ok=True)
    sentence_path = os.path.join(out_dir, "sentence-encoder.bin")
    description_path = os.path.join(out_dir, "description-encoder.bin")
    result.sentence_model.save(sentence_path)
    result.description_model.save(description_path)
    if loss_log_path:
        write_loss_log(result.steps, loss_log_path)
    click.echo(
        f"trained {config.epochs} epochs on {len(split)} instances, "
        f"final epoch loss {result.epoch_losses[-1]:.6f}"
    )
    click.echo(f"saved {sentence_path} and {description_path}")


@main.command("encode-corpus")
@click.option("--encoder", "encoder_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--block-size", default=1024, show_default=True)
@click.option("--start-id", default=0, show_default=True)
@runtime_errors
def encode_corpus_command(encoder_path, corpus_path, out_path, block_size, start_id):
    """Embed every corpus line with the sentence encoder into an .npz file."""
    model = EncoderModel.load(encoder_path)
    texts = read_corpus_lines(corpus_path)
    ids = []
    vectors = []
    for item_id, _, vector in encode_corpus(model, texts, block_size=block_size, start_id=start_id):
        ids.append(item_id)
        vectors.append(vector)
    stacked = (
        np.array(vectors) if vectors else np.empty((0, model.dim), dtype=np.float64)
    )
    np.savez(out_path, ids=np.array(ids, dtype=np.uint64), vectors=stacked)
    click.echo(f"encoded {len(ids)} texts (dim {model.dim}) to {out_path}")


@main.command("build-index")
@click.option("--vectors", "vectors_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@runtime_errors
def build_index_command(vectors_path, corpus_path, out_path):
    """Assemble the dense index from encoded vectors plus the corpus text."""
    data = np.load(vectors_path)
    ids, vectors = data["ids"], data["vectors"]
    texts = read_corpus_lines(corpus_path)
    if len(texts) != len(ids):
        raise ValueError(
            f"corpus has {len(texts)} lines but vectors file has {len(ids)} entries"
        )
    index = VectorIndex.build(
        [(int(i), t, v) for i, t, v in zip(ids, texts, vectors)],
        dim=vectors.shape[1] if vectors.ndim == 2 else None,
    )
    index.save(out_path)
    click.echo(f"indexed {index.count} vectors (dim {index.dim}) to {out_path}")


@main.command("build-bm25")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--k1", default=DEFAULT_K1, show_default=True)
@click.option("--b", default=DEFAULT_B, show_default=True)
@click.option("--vocab-size", default=65536, show_default=True)
@click.option("--lowercase/--no-lowercase", default=True, show_default=True)
@runtime_errors
def build_bm25_command(corpus_path, out_path, k1, b, vocab_size, lowercase):
    """Build the lexical baseline index over the corpus."""
    from .encoder import Tokenizer

    texts = read_corpus_lines(corpus_path)
    index = build_bm25(
        texts, tokenizer=Tokenizer(vocab_size=vocab_size, lowercase=lowercase), k1=k1, b=b
    )
    save_bm25(index, out_path)
    click.echo(f"built bm25 index over {index.doc_count} documents to {out_path}")


def _print_hits(label: str, entries) -> None:
    click.echo(f"{label}:")
    if not entries:
        click.echo("  (no results)")
        return
    for rank, hit in enumerate(entries, start=1):
        click.echo(f"  {rank}. {hit.score:.4f}  [{hit.id}] {hit.text}")


@main.command("search")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--bm25", "bm25_path", required=True, type=click.Path(exists=True))
@click.option("--encoder", "encoder_path", required=True, type=click.Path(exists=True))
@click.option("--query", required=True)
@click.option("--k", "k_flag", default=None, type=int)
@click.pass_context
@runtime_errors
def search_command(ctx, index_path, bm25_path, encoder_path, query, k_flag):
    """Run one query against both systems and print ranked results."""
    k = resolve(ctx, "k", k_flag, convert=int, default=10)
    if k < 1:
        raise click.UsageError("--k must be at least 1")
    backends = load_backends(
        ServiceConfig(dense_index=index_path, bm25_index=bm25_path, encoder=encoder_path)
    )
    query_vector = backends.description_model.encode(query).vector
    dense_result = backends.dense_index.search(query_vector, k)
    bm25_result = bm25_search(backends.bm25_index, query, k)
    _print_hits("dense", dense_result.entries)
    _print_hits("bm25", bm25_result.entries)


def load_pairs(path: str) -> list[tuple[str, int]]:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}")
            if not isinstance(obj, dict) or "description" not in obj or "gold_id" not in obj:
                raise ValueError(
                    f"{path}:{line_no}: expected an object with description and gold_id"
                )
            pairs.append((str(obj["description"]), int(obj["gold_id"])))
    return pairs


@main.command("eval")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--bm25", "bm25_path", required=True, type=click.Path(exists=True))
@click.option("--encoder", "encoder_path", required=True, type=click.Path(exists=True))
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--k-max", "k_max_flag", default=None, type=int)
@click.pass_context
@runtime_errors
def eval_command(ctx, index_path, bm25_path, encoder_path, pairs_path, out_dir, k_max_flag):
    """Score both systems on query/gold pairs; write tables, CSVs, and figures."""
    k_max = resolve(ctx, "k-max", k_max_flag, convert=int, default=100)
    backends = load_backends(
        ServiceConfig(dense_index=index_path, bm25_index=bm25_path, encoder=encoder_path)
    )
    pairs = load_pairs(pairs_path)
    corpus_ids = [int(i) for i in backends.dense_index.ids]
    dense_report = evaluate(
        make_dense_retriever(backends.description_model, backends.dense_index),
        pairs,
        corpus_ids,
        k_max=k_max,
        system="dense",
    )
    bm25_report = evaluate(
        make_bm25_retriever(backends.bm25_index), pairs, corpus_ids, k_max=k_max, system="bm25"
    )
    comparison = compare(dense_report, bm25_report)
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_csv([dense_report, bm25_report], os.path.join(out_dir, "metrics.csv"))
    write_comparison_csv(comparison, os.path.join(out_dir, "comparison.csv"))
    write_records_jsonl(dense_report, os.path.join(out_dir, "records_dense.jsonl"))
    write_records_jsonl(bm25_report, os.path.join(out_dir, "records_bm25.jsonl"))
    figures = render_report_figures([dense_report, bm25_report], out_dir)
    click.echo(render_metrics_table([dense_report, bm25_report]))
    click.echo("")
    click.echo(render_comparison_table(comparison))
    click.echo("")
    click.echo(f"wrote report files to {out_dir} ({len(figures)} figures)")


@main.command("serve")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--bm25", "bm25_path", required=True, type=click.Path(exists=True))
@click.option("--encoder", "encoder_path", required=True, type=click.Path(exists=True))
@click.option("--host", "host_flag", default=None)
@click.option("--port", "port_flag", default=None, type=int)
@click.option("--default-k", "default_k_flag", default=None, type=int)
@click.option("--cors-origin", "cors_flag", multiple=True)
@click.pass_context
@runtime_errors
def serve_command(
    ctx, index_path, bm25_path, encoder_path, host_flag, port_flag, default_k_flag, cors_flag
):
    """Serve /search and /healthz over HTTP until interrupted."""
    host = resolve(ctx, "host", host_flag, default="127.0.0.1")
    port = resolve(ctx, "port", port_flag, convert=int, default=8000)
    default_k = resolve(ctx, "default-k", default_k_flag, convert=int, default=10)
    cors = resolve(
        ctx,
        "cors-origins",
        tuple(cors_flag),
        convert=lambda s: tuple(o.strip() for o in s.split(",") if o.strip()),
        default=(),
    )
    config = ServiceConfig(
        dense_index=index_path,
        bm25_index=bm25_path,
        encoder=encoder_path,
        host=host,
        port=port,
        default_k=default_k,
        cors_origins=tuple(cors),
    )
    click.echo(f"serving on http://{config.host}:{config.port}")
    service_module.serve(config)


if __name__ == "__main__":
    main()
