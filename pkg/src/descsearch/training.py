"""Contrastive dual-encoder training.

Per sentence s with valid descriptions P_s and invalid descriptions N_s:

  triplet(s)  = sum over (p, n) in P_s x N_s of
                max(0, m + |v_s - v_p|^2 - |v_s - v_n|^2)
  infonce(s)  = -log softmax of cos(v_s, v_p)/tau against the in-batch
                pool N'_s (every description of the other batch sentences)
  loss(s)     = triplet(s) + alpha * infonce(s)

The batch loss is the mean over sentences. Gradients flow to both the
sentence encoder and the description encoder; optimization is Adam.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import DatasetSplit, TrainingInstance, shuffle_epoch
from .encoder import BatchEncoding, EncoderModel
from .seeding import mix_seed


class DegenerateVectorError(ValueError):
    """Cosine similarity is undefined for a zero-norm vector."""


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    margin: float = 1.0
    temperature: float = 0.1
    alpha: float = 0.1
    batch_size: int = 128
    epochs: int = 30
    learning_rate: float = 2e-4
    seed: int = 0
    warmup_fraction: float = 0.05
    normalize_before_triplet: bool = False
    pool_cap: int | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (in-batch negatives)")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.pool_cap is not None and self.pool_cap < 1:
            raise ValueError("pool_cap must be at least 1 when set")


@dataclass
class TrainingBatch:
    """Vector-level batch: one sentence vector plus its description vectors.

    positives[i] / negatives[i] hold the valid / invalid description
    vectors of sentence i; the in-batch pool of sentence i is every row of
    the other sentences' positives and negatives.
    """

    sentence_vectors: np.ndarray  # (B, d)
    positives: list[np.ndarray]  # each (n_p_i, d)
    negatives: list[np.ndarray]  # each (n_n_i, d)

    def __post_init__(self):
        b, d = self.sentence_vectors.shape
        if len(self.positives) != b or len(self.negatives) != b:
            raise ValueError("positives/negatives must align with sentence_vectors")
        for arrs in (self.positives, self.negatives):
            for a in arrs:
                if a.ndim != 2 or a.shape[1] != d:
                    raise ValueError("all description vectors must have dimension d")
        for p in self.positives:
            if p.shape[0] < 1:
                raise ValueError("every sentence needs at least one valid description")


@dataclass
class CombinedLossResult:
    loss: float
    triplet_term: float
    infonce_term: float
    sentence_vector_grads: np.ndarray  # (B, d)
    description_vector_grads: np.ndarray  # (M, d): positives then negatives, per sentence
    positive_indices: list[int]


def _sq_dist(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(diff @ diff)


def triplet_loss(v_s, v_p, v_n, margin: float) -> float:
    """Single hinge term of the triplet objective (squared Euclidean).

    The distance gap is formed before the margin is added so that equal
    positive and negative distances cancel exactly and the hinge returns
    the margin itself.
    """
    gap = _sq_dist(v_s, v_p) - _sq_dist(v_s, v_n)
    return max(0.0, margin + gap)


def _checked_norms(vectors: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-1)
    if np.any(norms == 0.0):
        raise DegenerateVectorError(f"degenerate vector: zero norm in {what}")
    return norms


def info_nce_loss(v_s, v_p, pool, temperature: float) -> float:
    """Softmax-contrastive loss of the positive against a negative pool.

    Cosine similarities scaled by the temperature; stabilized with
    max-subtraction before exponentiation.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    pool = np.atleast_2d(np.asarray(pool, dtype=np.float64))
    if pool.shape[0] == 0:
        raise ValueError("in-batch negative pool must be non-empty")
    v_s = np.asarray(v_s, dtype=np.float64)
    candidates = np.vstack([np.asarray(v_p, dtype=np.float64)[None, :], pool])
    s_norm = _checked_norms(v_s, "query vector")
    c_norms = _checked_norms(candidates, "candidate vectors")
    cos = (candidates @ v_s) / (c_norms * s_norm)
    z = cos / temperature
    zmax = z.max()
    lse = zmax + math.log(np.exp(z - zmax).sum())
    return float(lse - z[0])


def _flatten_batch(batch: TrainingBatch):
    """Stack all description vectors; rows follow positives-then-negatives order."""
    rows, owner, n_pos = [], [], []
    for i, (p, n) in enumerate(zip(batch.positives, batch.negatives)):
        rows.append(p)
        rows.append(n)
        owner.extend([i] * (p.shape[0] + n.shape[0]))
        n_pos.append(p.shape[0])
    descriptions = np.vstack(rows)
    return descriptions, np.asarray(owner), n_pos


def combined_loss(
    batch: TrainingBatch,
    config: TrainingConfig,
    rng: np.random.Generator | None = None,
    positive_indices: list[int] | None = None,
) -> CombinedLossResult:
    """Batch-mean combined loss with gradients for every input vector.

    The InfoNCE positive is one valid description per sentence, sampled
    uniformly (pass `positive_indices` to pin the choice, else `rng`).
    """
    sent = np.asarray(batch.sentence_vectors, dtype=np.float64)
    b, d = sent.shape
    descriptions, owner, n_pos = _flatten_batch(batch)
    m_total = descriptions.shape[0]
    offsets = np.concatenate([[0], np.cumsum([p.shape[0] + n.shape[0]
                                              for p, n in zip(batch.positives, batch.negatives)])])

    if positive_indices is None:
        if rng is None:
            rng = np.random.default_rng(mix_seed("combined-loss", config.seed))
        positive_indices = [int(rng.integers(0, k)) for k in n_pos]
    pos_cols = np.array([offsets[i] + positive_indices[i] for i in range(b)])

    grad_sent = np.zeros_like(sent)
    grad_desc = np.zeros_like(descriptions)

    # --- triplet term (squared Euclidean, optionally on normalized vectors)
    if config.normalize_before_triplet:
        t_sent_norms = _checked_norms(sent, "sentence vectors")[:, None]
        t_desc_norms = _checked_norms(descriptions, "description vectors")[:, None]
        t_sent = sent / t_sent_norms
        t_desc = descriptions / t_desc_norms
    else:
        t_sent, t_desc = sent, descriptions

    triplet_total = 0.0
    t_grad_sent = np.zeros_like(sent)
    t_grad_desc = np.zeros_like(descriptions)
    for i in range(b):
        lo, hi = offsets[i], offsets[i + 1]
        p_rows = t_desc[lo : lo + n_pos[i]]
        n_rows = t_desc[lo + n_pos[i] : hi]
        if n_rows.shape[0] == 0:
            continue
        dp = t_sent[i] - p_rows  # (n_p, d)
        dn = t_sent[i] - n_rows  # (n_n, d)
        # distance gap first, margin second: matches triplet_loss exactly
        gap = (dp * dp).sum(axis=1)[:, None] - (dn * dn).sum(axis=1)[None, :]
        hinge = config.margin + gap
        active = hinge > 0
        triplet_total += float(hinge[active].sum())
        row_counts = active.sum(axis=1).astype(np.float64)  # per positive
        col_counts = active.sum(axis=0).astype(np.float64)  # per negative
        t_grad_sent[i] += 2.0 * (
            (row_counts[:, None] * dp).sum(axis=0) - (col_counts[:, None] * dn).sum(axis=0)
        )
        t_grad_desc[lo : lo + n_pos[i]] += -2.0 * row_counts[:, None] * dp
        t_grad_desc[lo + n_pos[i] : hi] += 2.0 * col_counts[:, None] * dn

    if config.normalize_before_triplet:
        # pull gradients back through the normalization
        t_grad_sent = (t_grad_sent - (t_grad_sent * t_sent).sum(1, keepdims=True) * t_sent) / t_sent_norms
        t_grad_desc = (t_grad_desc - (t_grad_desc * t_desc).sum(1, keepdims=True) * t_desc) / t_desc_norms
    grad_sent += t_grad_sent / b
    grad_desc += t_grad_desc / b

    # --- InfoNCE term on cosine similarities
    s_norms = _checked_norms(sent, "sentence vectors")
    d_norms = _checked_norms(descriptions, "description vectors")
    s_hat = sent / s_norms[:, None]
    d_hat = descriptions / d_norms[:, None]
    cos = s_hat @ d_hat.T  # (B, M)
    z = cos / config.temperature

    allowed = owner[None, :] != np.arange(b)[:, None]
    if config.pool_cap is not None:
        cap_rng = rng if rng is not None else np.random.default_rng(
            mix_seed("pool-cap", config.seed)
        )
        for i in range(b):
            cols = np.flatnonzero(allowed[i])
            if len(cols) > config.pool_cap:
                keep = cap_rng.choice(cols, size=config.pool_cap, replace=False)
                allowed[i, :] = False
                allowed[i, keep] = True
    if not allowed.any(axis=1).all():
        raise ValueError("in-batch negative pool must be non-empty (batch too small)")
    allowed[np.arange(b), pos_cols] = True

    neg_inf = -np.inf
    z_masked = np.where(allowed, z, neg_inf)
    zmax = z_masked.max(axis=1, keepdims=True)
    expz = np.exp(z_masked - zmax)
    expz[~allowed] = 0.0
    denom = expz.sum(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(denom[:, 0])
    z_pos = z[np.arange(b), pos_cols]
    infonce_per_sentence = lse - z_pos
    infonce_total = float(infonce_per_sentence.sum())

    softmax = expz / denom
    coeff = softmax.copy()
    coeff[np.arange(b), pos_cols] -= 1.0
    coeff *= config.alpha / (b * config.temperature)

    grad_s_hat = coeff @ d_hat
    row_dot = (coeff * cos).sum(axis=1)
    grad_sent += (grad_s_hat - row_dot[:, None] * s_hat) / s_norms[:, None]
    grad_d_hat = coeff.T @ s_hat
    col_dot = (coeff * cos).sum(axis=0)
    grad_desc += (grad_d_hat - col_dot[:, None] * d_hat) / d_norms[:, None]

    triplet_term = triplet_total / b
    infonce_term = infonce_total / b
    return CombinedLossResult(
        loss=triplet_term + config.alpha * infonce_term,
        triplet_term=triplet_term,
        infonce_term=infonce_term,
        sentence_vector_grads=grad_sent,
        description_vector_grads=grad_desc,
        positive_indices=list(positive_indices),
    )


# --------------------------------------------------------------------- Adam


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
) -> None:
    """One bias-corrected Adam update, in place."""
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: params {p.shape}, grads {grads[name].shape}"
            )
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# --------------------------------------------------------------- batch glue


@dataclass
class EncodedBatch:
    """Forward caches of one training batch, bound to both encoders."""

    batch: TrainingBatch
    sentence_encoding: BatchEncoding
    description_encoding: BatchEncoding


def encode_training_batch(
    sentence_model: EncoderModel,
    description_model: EncoderModel,
    instances: list[TrainingInstance],
    token_cache: dict | None = None,
) -> EncodedBatch:
    """Encode sentences and all their descriptions for one batch."""

    def tokens(model, text):
        if token_cache is None:
            return np.asarray(model.tokenizer.tokenize(text), dtype=np.int64)
        key = (id(model), text)
        ids = token_cache.get(key)
        if ids is None:
            ids = np.asarray(model.tokenizer.tokenize(text), dtype=np.int64)
            token_cache[key] = ids
        return ids

    sent_enc = sentence_model.encode_token_batch(
        [tokens(sentence_model, inst.sentence) for inst in instances]
    )
    desc_texts = []
    for inst in instances:
        desc_texts.extend(inst.valid_descriptions)
        desc_texts.extend(inst.invalid_descriptions)
    desc_enc = description_model.encode_token_batch(
        [tokens(description_model, t) for t in desc_texts]
    )

    positives, negatives = [], []
    offset = 0
    for inst in instances:
        np_i, nn_i = len(inst.valid_descriptions), len(inst.invalid_descriptions)
        positives.append(desc_enc.vectors[offset : offset + np_i])
        negatives.append(desc_enc.vectors[offset + np_i : offset + np_i + nn_i])
        offset += np_i + nn_i
    batch = TrainingBatch(
        sentence_vectors=sent_enc.vectors, positives=positives, negatives=negatives
    )
    return EncodedBatch(batch=batch, sentence_encoding=sent_enc, description_encoding=desc_enc)


def batch_gradients(
    sentence_model: EncoderModel,
    description_model: EncoderModel,
    instances: list[TrainingInstance],
    config: TrainingConfig,
    rng: np.random.Generator | None = None,
    positive_indices: list[int] | None = None,
    token_cache: dict | None = None,
):
    """Loss of one batch plus parameter gradients for both encoders."""
    encoded = encode_training_batch(sentence_model, description_model, instances, token_cache)
    result = combined_loss(encoded.batch, config, rng=rng, positive_indices=positive_indices)
    sent_grads = sentence_model.backward_token_batch(
        encoded.sentence_encoding, result.sentence_vector_grads
    )
    desc_grads = description_model.backward_token_batch(
        encoded.description_encoding, result.description_vector_grads
    )
    return result, sent_grads, desc_grads


# --------------------------------------------------------------- train loop


@dataclass(frozen=True)
class StepRecord:
    epoch: int
    step: int
    triplet_term: float
    infonce_term: float
    combined: float


@dataclass
class TrainResult:
    sentence_model: EncoderModel
    description_model: EncoderModel
    epoch_losses: list[float]
    steps: list[StepRecord] = field(repr=False, default_factory=list)


def write_loss_log(steps: list[StepRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "step", "triplet_term", "infonce_term", "combined"])
        for rec in steps:
            writer.writerow(
                [rec.epoch, rec.step, repr(rec.triplet_term), repr(rec.infonce_term), repr(rec.combined)]
            )


def _epoch_batches(order: list[int], batch_size: int) -> list[list[int]]:
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if batches and len(batches[-1]) < 2:  # a lone sentence has no in-batch pool
        batches.pop()
    return batches


def train(
    split: DatasetSplit,
    config: TrainingConfig,
    sentence_model: EncoderModel | None = None,
    description_model: EncoderModel | None = None,
    progress=None,
) -> TrainResult:
    """Run the full epoch loop; deterministic in config.seed."""
    if not split.instances:
        raise ValueError("cannot train on an empty split")
    if sentence_model is None:
        sentence_model = EncoderModel.init_random(seed=mix_seed("sentence-encoder", config.seed))
    if description_model is None:
        description_model = EncoderModel.init_random(
            seed=mix_seed("description-encoder", config.seed)
        )

    sent_state = OptimizerState.for_params(sentence_model.parameters())
    desc_state = OptimizerState.for_params(description_model.parameters())
    rng = np.random.default_rng(mix_seed("train-loop", config.seed))
    token_cache: dict = {}

    steps_per_epoch = len(_epoch_batches(list(range(len(split))), config.batch_size))
    if steps_per_epoch == 0:
        raise ValueError("split too small for the configured batch size")
    total_steps = config.epochs * steps_per_epoch
    warmup_steps = math.ceil(config.warmup_fraction * total_steps)

    steps: list[StepRecord] = []
    epoch_losses: list[float] = []
    global_step = 0
    for epoch in range(config.epochs):
        order = shuffle_epoch(split, config.seed, epoch)
        epoch_total = 0.0
        batches = _epoch_batches(order, config.batch_size)
        for step_in_epoch, batch_ids in enumerate(batches):
            instances = [split.instances[i] for i in batch_ids]
            result, sent_grads, desc_grads = batch_gradients(
                sentence_model, description_model, instances, config,
                rng=rng, token_cache=token_cache,
            )
            global_step += 1
            if not math.isfinite(result.loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step_in_epoch} "
                    f"(global step {global_step})"
                )
            lr = config.learning_rate
            if warmup_steps > 0:
                lr *= min(1.0, global_step / warmup_steps)
            adam_step(sentence_model.parameters(), sent_grads, sent_state, lr)
            adam_step(description_model.parameters(), desc_grads, desc_state, lr)
            epoch_total += result.loss
            steps.append(
                StepRecord(
                    epoch=epoch,
                    step=step_in_epoch,
                    triplet_term=result.triplet_term,
                    infonce_term=result.infonce_term,
                    combined=result.loss,
                )
            )
        epoch_losses.append(epoch_total / len(batches))
        if progress is not None:
            progress(epoch, epoch_losses[-1])
    return TrainResult(
        sentence_model=sentence_model,
        description_model=description_model,
        epoch_losses=epoch_losses,
        steps=steps,
    )
