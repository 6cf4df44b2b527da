"""Relation classifier over ADU pairs: BiLSTM + CNN/max-pool + softmax.

A candidate is an ordered ADU pair plus a fixed token window around it.
Three input channels are concatenated per window token: the frozen token
embedding, a trainable embedding of the token's ADU tag, and a trainable
embedding of an argument tag marking head/tail membership.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import ADU_TYPES, AduSpan, Relation, Section
from .evaluation import Prf
from .nn import (
    Adam,
    BiLstm,
    CnnMaxPool,
    Dropout,
    EmbeddingTable,
    Linear,
    NonFiniteGradError,
    SoftmaxCrossEntropy,
    clip_grad_norm,
    load_checkpoint,
    load_state_dict,
    relu,
    save_checkpoint,
    state_dict,
)
from .tagging import TokenizedSection, align_adu_to_tokens, encode_spans, tag_vocabulary

logger = logging.getLogger(__name__)

RELATION_CLASS_LABELS = ("supports", "supports_rev", "contradicts",
                         "parts_of_same", "no_relation")
SYMMETRIC_TRAIN_LABELS = ("contradicts", "parts_of_same")

# BIO over the two argument roles; two rows are reserved so the table size
# stays at the configured vocabulary of 7.
ARG_TAG_VOCAB = ("O", "B-head", "I-head", "B-tail", "I-tail",
                 "<reserved-1>", "<reserved-2>")


class AreError(Exception):
    pass


@dataclass(frozen=True)
class AreConfig:
    lr: float = 0.0005
    dropout_io: float = 0.3061
    dropout_lstm: float = 0.4394
    grad_clip: float = 4.12
    lstm_layers: int = 4
    lstm_hidden: int = 430
    cnn_filters: int = 193
    ngram_sizes: tuple[int, ...] = (3, 5, 7, 10)
    proj_hidden: int = 860
    window_k: int = 479
    max_dist_d: int = 177
    neg_factor: int = 3
    batch_size: int = 128
    adu_tag_dim: int = 13
    arg_tag_dim: int = 3
    patience: int = 20
    seed: int = 0
    max_epochs: int = 200

    def __post_init__(self):
        positive = {
            "lr": self.lr, "grad_clip": self.grad_clip,
            "lstm_layers": self.lstm_layers, "lstm_hidden": self.lstm_hidden,
            "cnn_filters": self.cnn_filters, "proj_hidden": self.proj_hidden,
            "window_k": self.window_k, "max_dist_d": self.max_dist_d,
            "neg_factor": self.neg_factor, "batch_size": self.batch_size,
            "adu_tag_dim": self.adu_tag_dim, "arg_tag_dim": self.arg_tag_dim,
            "patience": self.patience, "max_epochs": self.max_epochs,
        }
        for name, value in positive.items():
            if value <= 0:
                raise AreError(f"{name} must be positive, got {value}")
        if not self.ngram_sizes or any(m < 1 for m in self.ngram_sizes):
            raise AreError("ngram_sizes must be positive")
        if self.window_k <= self.max_dist_d:
            raise AreError(
                f"window_k ({self.window_k}) must exceed max_dist_d "
                f"({self.max_dist_d})")
        for name, value in (("dropout_io", self.dropout_io),
                            ("dropout_lstm", self.dropout_lstm)):
            if not 0.0 <= value < 1.0:
                raise AreError(f"{name} must be in [0, 1), got {value}")


@dataclass
class RelationCandidate:
    """Ordered ADU pair with its token window inside one section."""

    section_key: tuple[str, int]
    head: AduSpan
    tail: AduSpan
    head_tokens: tuple[int, int]
    tail_tokens: tuple[int, int]
    window: tuple[int, int]
    label: str | None = None


@dataclass
class EncodedCandidate:
    """Model-ready channels for one candidate window."""

    head_id: str
    tail_id: str
    features: np.ndarray            # [w, d_tok] frozen embeddings
    adu_tag_ids: np.ndarray         # [w] BIOUL tag indices
    arg_tag_ids: np.ndarray         # [w] ARG_TAG_VOCAB indices
    label_id: int | None = None


def token_gap(a: tuple[int, int], b: tuple[int, int]) -> int:
    """Tokens strictly between the two ranges; 0 when they touch or overlap."""
    return max(0, max(a[0], b[0]) - min(a[1], b[1]))


def generate_candidates(tok: TokenizedSection, adus: list[AduSpan],
                        d: int, k: int) -> list[RelationCandidate]:
    """All ordered pairs with inner token distance < d, each with a window of
    at most k tokens centered on the pair and clipped to the section."""
    key = (tok.section.doc_id, tok.section.index)
    ranges = {}
    for adu in adus:
        r = align_adu_to_tokens(tok, adu)
        if r is None:
            logger.warning("ADU %s covers no tokens; excluded from candidates",
                           adu.id)
            continue
        ranges[adu.id] = r
    n = len(tok.tokens)
    out = []
    aligned = [a for a in adus if a.id in ranges]
    for head in aligned:
        for tail in aligned:
            if head.id == tail.id:
                continue
            hr, tr = ranges[head.id], ranges[tail.id]
            if token_gap(hr, tr) >= d:
                continue
            a = min(hr[0], tr[0])
            b = max(hr[1], tr[1])
            if b - a > k:
                logger.warning(
                    "pair %s/%s spans %d tokens, beyond the %d-token window; "
                    "skipped", head.id, tail.id, b - a, k)
                continue
            w0 = (a + b) // 2 - k // 2
            w0 = max(min(w0, a), b - k, 0)
            w1 = min(w0 + k, n)
            out.append(RelationCandidate(
                section_key=key, head=head, tail=tail,
                head_tokens=hr, tail_tokens=tr, window=(w0, w1)))
    return out


def augment_relations(gold_relations: list[Relation]) -> list[tuple[str, str, str]]:
    """Each relation in both orders: supports gains the supports_rev label on
    the reversed copy, symmetric labels keep theirs.  Output doubles input."""
    out = []
    for r in gold_relations:
        if r.label == "supports":
            out.append((r.head, r.tail, "supports"))
            out.append((r.tail, r.head, "supports_rev"))
        elif r.label in SYMMETRIC_TRAIN_LABELS:
            out.append((r.head, r.tail, r.label))
            out.append((r.tail, r.head, r.label))
        else:
            logger.warning("relation label %r is not trained; dropped", r.label)
    return out


def sample_negatives(pool: list[RelationCandidate], n_positives: int,
                     factor: int, rng: np.random.Generator
                     ) -> list[RelationCandidate]:
    """Uniform sample without replacement, labeled no_relation."""
    quota = min(factor * n_positives, len(pool))
    if quota == 0:
        return []
    idx = sorted(rng.choice(len(pool), size=quota, replace=False).tolist())
    out = []
    for i in idx:
        cand = replace(pool[i], label="no_relation")
        out.append(cand)
    return out


def label_candidates(candidates: list[RelationCandidate],
                     gold_relations: list[Relation],
                     neg_factor: int, rng: np.random.Generator):
    """Split a section's candidates into labeled positives and sampled
    negatives, applying augmentation to the gold pairs first."""
    augmented = augment_relations(gold_relations)
    by_pair: dict[tuple[str, str], str] = {}
    for h, t, label in augmented:
        by_pair[(h, t)] = label
    positives = []
    pool = []
    for cand in candidates:
        pair = (cand.head.id, cand.tail.id)
        if pair in by_pair:
            positives.append(replace(cand, label=by_pair[pair]))
        elif (pair[1], pair[0]) in by_pair:
            continue  # reverse order of a positive: never a negative
        else:
            pool.append(cand)
    negatives = sample_negatives(pool, len(positives), neg_factor, rng)
    return positives, negatives


def adu_tag_id_row(tok: TokenizedSection, adus: list[AduSpan],
                   scheme: str = "BIOUL") -> np.ndarray:
    labels = tag_vocabulary(scheme, ADU_TYPES)
    seq = encode_spans(tok, adus, scheme)
    return np.array([labels.index(t) for t in seq.tags], dtype=np.int64)


def encode_candidate(cand: RelationCandidate, section_embeddings: np.ndarray,
                     section_adu_tags: np.ndarray) -> EncodedCandidate:
    w0, w1 = cand.window
    if w1 <= w0:
        raise AreError(f"empty window for pair {cand.head.id}/{cand.tail.id}")
    width = w1 - w0
    arg = np.zeros(width, dtype=np.int64)

    def paint(t0: int, t1: int, b_id: int, i_id: int) -> None:
        for t in range(max(t0, w0), min(t1, w1)):
            arg[t - w0] = b_id if t == t0 else i_id

    paint(*cand.head_tokens, ARG_TAG_VOCAB.index("B-head"),
          ARG_TAG_VOCAB.index("I-head"))
    paint(*cand.tail_tokens, ARG_TAG_VOCAB.index("B-tail"),
          ARG_TAG_VOCAB.index("I-tail"))
    return EncodedCandidate(
        head_id=cand.head.id,
        tail_id=cand.tail.id,
        features=section_embeddings[w0:w1],
        adu_tag_ids=section_adu_tags[w0:w1].copy(),
        arg_tag_ids=arg,
        label_id=(None if cand.label is None
                  else RELATION_CLASS_LABELS.index(cand.label)),
    )


class AreModel:
    def __init__(self, config: AreConfig, token_dim: int):
        self.config = config
        self.token_dim = token_dim
        self.labels = RELATION_CLASS_LABELS
        rng = np.random.default_rng([config.seed, 0])
        n_adu_tags = len(tag_vocabulary("BIOUL", ADU_TYPES))
        self.adu_tag_table = EmbeddingTable("are.adutag", n_adu_tags,
                                            config.adu_tag_dim, rng)
        self.arg_tag_table = EmbeddingTable("are.argtag", len(ARG_TAG_VOCAB),
                                            config.arg_tag_dim, rng)
        d_in = token_dim + config.adu_tag_dim + config.arg_tag_dim
        self.drop_in = Dropout(config.dropout_io)
        self.bilstm = BiLstm("are.lstm", d_in, config.lstm_hidden,
                             config.lstm_layers, rng,
                             dropout=config.dropout_lstm)
        self.cnn = CnnMaxPool("are.cnn", self.bilstm.d_out, config.ngram_sizes,
                              config.cnn_filters, rng)
        self.drop_mid = Dropout(config.dropout_io)
        self.proj = Linear("are.proj", self.cnn.d_out, config.proj_hidden, rng)
        self.out = Linear("are.out", config.proj_hidden, len(self.labels), rng)
        self.loss_layer = SoftmaxCrossEntropy()

    def params(self):
        return [*self.adu_tag_table.params(), *self.arg_tag_table.params(),
                *self.bilstm.params(), *self.cnn.params(),
                *self.proj.params(), *self.out.params()]

    def logits(self, enc: EncodedCandidate, train: bool = False,
               rng: np.random.Generator | None = None):
        adu_emb, c_adu = self.adu_tag_table.forward(enc.adu_tag_ids)
        arg_emb, c_arg = self.arg_tag_table.forward(enc.arg_tag_ids)
        x = np.concatenate([enc.features, adu_emb, arg_emb], axis=1)
        x1, c_in = self.drop_in.forward(x, train, rng)
        h, c_lstm = self.bilstm.forward(x1, train=train, rng=rng)
        v, c_cnn = self.cnn.forward(h)
        v1, c_mid = self.drop_mid.forward(v, train, rng)
        z, c_proj = self.proj.forward(v1)
        act = relu(z)
        logits, c_out = self.out.forward(act)
        cache = (c_adu, c_arg, c_in, c_lstm, c_cnn, c_mid, c_proj, z, c_out)
        return logits, cache

    def backward_logits(self, cache, d_logits: np.ndarray) -> None:
        c_adu, c_arg, c_in, c_lstm, c_cnn, c_mid, c_proj, z, c_out = cache
        d_act = self.out.backward(c_out, d_logits)
        d_z = d_act * (z > 0.0)
        d_v1 = self.proj.backward(c_proj, d_z)
        d_v = self.drop_mid.backward(c_mid, d_v1)
        d_h = self.cnn.backward(c_cnn, d_v)
        d_x1 = self.bilstm.backward(c_lstm, d_h)
        d_x = self.drop_in.backward(c_in, d_x1)
        d_tok = self.token_dim
        d_adu = d_x[:, d_tok:d_tok + self.config.adu_tag_dim]
        d_arg = d_x[:, d_tok + self.config.adu_tag_dim:]
        self.adu_tag_table.backward(c_adu, d_adu)
        self.arg_tag_table.backward(c_arg, d_arg)

    def predict_proba(self, enc: EncodedCandidate) -> np.ndarray:
        from .nn import softmax

        logits, _ = self.logits(enc, train=False)
        return softmax(logits)

    def state_dict(self):
        return state_dict(self.params())

    def load_state(self, state) -> None:
        load_state_dict(self.params(), state)


def _micro_f1_on(model: AreModel, encoded: list[EncodedCandidate]) -> float:
    """Micro-F1 over the four real relation labels; no_relation excluded."""
    scored = [i for i, lab in enumerate(RELATION_CLASS_LABELS)
              if lab != "no_relation"]
    prf = Prf()
    for enc in encoded:
        pred = int(np.argmax(model.predict_proba(enc)))
        gold = enc.label_id
        if gold == pred:
            if gold in scored:
                prf.tp += 1
            continue
        if pred in scored:
            prf.fp += 1
        if gold in scored:
            prf.fn += 1
    return prf.f1


def train_are(train_encoded: list[EncodedCandidate], config: AreConfig,
              dev_encoded: list[EncodedCandidate]):
    """Adam on batch-mean cross-entropy, early stopping on dev micro-F1."""
    if not train_encoded:
        raise AreError("no training candidates")
    if not dev_encoded:
        raise AreError("dev candidates must be non-empty for early stopping")
    if any(e.label_id is None for e in train_encoded + dev_encoded):
        raise AreError("training/dev candidates must be labeled")
    token_dim = train_encoded[0].features.shape[1]
    model = AreModel(config, token_dim)
    optimizer = Adam(model.params(), lr=config.lr)
    train_rng = np.random.default_rng([config.seed, 1])
    batches = [train_encoded[i:i + config.batch_size]
               for i in range(0, len(train_encoded), config.batch_size)]

    best_f1 = -1.0
    best_state = model.state_dict()
    best_epoch = -1
    log = {"config": asdict(config), "epochs": [], "diverged": False}

    for epoch in range(config.max_epochs):
        epoch_loss = 0.0
        n_seen = 0
        diverged = False
        for batch in batches:
            optimizer.zero_grad()
            logits_rows = []
            caches = []
            targets = []
            for enc in batch:
                logits, cache = model.logits(enc, train=True, rng=train_rng)
                logits_rows.append(logits)
                caches.append(cache)
                targets.append(enc.label_id)
            loss, loss_cache = model.loss_layer.forward(
                np.stack(logits_rows), np.array(targets))
            if not np.isfinite(loss):
                diverged = True
                break
            d_logits = model.loss_layer.backward(loss_cache)
            for cache, d_row in zip(caches, d_logits):
                model.backward_logits(cache, d_row)
            clip_grad_norm(model.params(), config.grad_clip)
            try:
                optimizer.step()
            except NonFiniteGradError:
                diverged = True
                break
            epoch_loss += loss * len(batch)
            n_seen += len(batch)
        if diverged:
            logger.warning("training diverged at epoch %d; restoring the "
                           "best checkpoint", epoch)
            log["diverged"] = True
            break
        f1 = _micro_f1_on(model, dev_encoded)
        log["epochs"].append({"epoch": epoch,
                              "train_loss": float(epoch_loss / max(1, n_seen)),
                              "dev_micro_f1": float(f1)})
        if f1 > best_f1:
            best_f1 = f1
            best_state = model.state_dict()
            best_epoch = epoch
        if epoch - best_epoch >= config.patience:
            break

    model.load_state(best_state)
    log["best_epoch"] = best_epoch
    log["best_dev_micro_f1"] = float(best_f1)
    log["stopped_epoch"] = log["epochs"][-1]["epoch"] if log["epochs"] else -1
    return model, log


def predict_are(model: AreModel,
                encoded: list[EncodedCandidate]) -> list[Relation]:
    """Argmax label per candidate; supports_rev is rewritten to a forward
    supports on the swapped pair; no_relation pairs are dropped."""
    out = []
    seen = set()
    for enc in encoded:
        label = RELATION_CLASS_LABELS[int(np.argmax(model.predict_proba(enc)))]
        if label == "no_relation":
            continue
        head, tail = enc.head_id, enc.tail_id
        if label == "supports_rev":
            head, tail, label = tail, head, "supports"
        key = (head, tail, label)
        if key not in seen:
            seen.add(key)
            out.append(Relation(head, tail, label))
    return out


def build_section_training_data(tok: TokenizedSection, section: Section,
                                embed_source, config: AreConfig,
                                rng: np.random.Generator
                                ) -> list[EncodedCandidate]:
    """Gold-ADU candidates for one section: labeled positives + negatives."""
    candidates = generate_candidates(tok, section.adus, config.max_dist_d,
                                     config.window_k)
    positives, negatives = label_candidates(candidates, section.relations,
                                            config.neg_factor, rng)
    if not positives and not negatives:
        return []
    embeddings = embed_source.embed_section(tok)
    adu_tags = adu_tag_id_row(tok, section.adus)
    return [encode_candidate(c, embeddings, adu_tags)
            for c in positives + negatives]


def save_are(model: AreModel, path: str | Path) -> None:
    save_checkpoint(path, model.state_dict())


def load_are(path: str | Path, config: AreConfig, token_dim: int) -> AreModel:
    model = AreModel(config, token_dim)
    model.load_state(load_checkpoint(path))
    return model
