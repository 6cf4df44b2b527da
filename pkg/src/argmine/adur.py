"""Sequence-labeling ADU recognizer: frozen embeddings, BiLSTM, CRF.

The embedder is frozen: its output for a section is computed once and reused
every epoch; no gradient ever reaches it.  Input/output dropout touches the
embedding matrix and the BiLSTM output, the LSTM-internal dropout sits
between stacked layers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import ADU_TYPES, AduSpan, Document, Section
from .crf import CrfParams, nll, viterbi
from .evaluation import token_macro_f1
from .nn import (
    Adam,
    BiLstm,
    Dropout,
    Linear,
    NonFiniteGradError,
    clip_grad_norm,
    load_checkpoint,
    load_state_dict,
    save_checkpoint,
    state_dict,
)
from .tagging import (
    SCHEMES,
    TagSequence,
    TokenizedSection,
    decode_tags,
    encode_spans,
    tag_vocabulary,
    token_class_labels,
    tokenize,
)

logger = logging.getLogger(__name__)


class AdurError(Exception):
    pass


@dataclass(frozen=True)
class AdurConfig:
    lr: float = 0.005
    dropout_io: float = 0.5
    dropout_lstm: float = 0.4394
    grad_clip: float = 7.0
    patience: int = 20
    lstm_layers: int = 2
    lstm_hidden: int = 300
    batch_size: int = 8
    scheme: str = "BIOUL"
    seed: int = 0
    max_epochs: int = 200

    def __post_init__(self):
        positive = {
            "lr": self.lr, "grad_clip": self.grad_clip,
            "patience": self.patience, "lstm_layers": self.lstm_layers,
            "lstm_hidden": self.lstm_hidden, "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
        }
        for name, value in positive.items():
            if value <= 0:
                raise AdurError(f"{name} must be positive, got {value}")
        for name, value in (("dropout_io", self.dropout_io),
                            ("dropout_lstm", self.dropout_lstm)):
            if not 0.0 <= value < 1.0:
                raise AdurError(f"{name} must be in [0, 1), got {value}")
        if self.scheme not in SCHEMES:
            raise AdurError(f"unknown scheme {self.scheme!r}")


@dataclass
class SectionBatchItem:
    """One tokenized, embedded, gold-tagged section ready for training."""

    tok: TokenizedSection
    embeddings: np.ndarray          # [n, d], frozen
    tag_ids: np.ndarray             # [n] gold label indices


class AdurModel:
    def __init__(self, config: AdurConfig, embed_source,
                 classes: tuple[str, ...] = ADU_TYPES):
        self.config = config
        self.source = embed_source
        self.classes = tuple(classes)
        self.labels = tag_vocabulary(config.scheme, self.classes)
        rng = np.random.default_rng([config.seed, 0])
        self.bilstm = BiLstm("adur.lstm", embed_source.dim, config.lstm_hidden,
                             config.lstm_layers, rng,
                             dropout=config.dropout_lstm)
        self.proj = Linear("adur.proj", self.bilstm.d_out, len(self.labels), rng)
        self.crf = CrfParams.for_scheme(config.scheme, self.classes,
                                        name="adur.crf")
        self.drop_in = Dropout(config.dropout_io)
        self.drop_out = Dropout(config.dropout_io)

    def params(self):
        return [*self.bilstm.params(), *self.proj.params(), *self.crf.params()]

    def emissions(self, embeddings: np.ndarray, train: bool = False,
                  rng: np.random.Generator | None = None):
        x, c_in = self.drop_in.forward(embeddings, train, rng)
        h, c_lstm = self.bilstm.forward(x, train=train, rng=rng)
        h2, c_out = self.drop_out.forward(h, train, rng)
        em, c_proj = self.proj.forward(h2)
        return em, (c_in, c_lstm, c_out, c_proj)

    def backward_emissions(self, cache, d_em: np.ndarray) -> None:
        c_in, c_lstm, c_out, c_proj = cache
        d_h2 = self.proj.backward(c_proj, d_em)
        d_h = self.drop_out.backward(c_out, d_h2)
        d_x = self.bilstm.backward(c_lstm, d_h)
        self.drop_in.backward(c_in, d_x)  # frozen embedder: gradient discarded

    def state_dict(self):
        return state_dict(self.params())

    def load_state(self, state) -> None:
        load_state_dict(self.params(), state)


def gold_tag_ids(model: AdurModel, tok: TokenizedSection,
                 adus: list[AduSpan]) -> np.ndarray:
    seq = encode_spans(tok, adus, model.config.scheme)
    return np.array([model.labels.index(t) for t in seq.tags], dtype=np.int64)


def prepare_sections(model: AdurModel,
                     sections: list[Section]) -> list[SectionBatchItem]:
    """Tokenize, embed (once: frozen), and gold-tag; empty sections dropped."""
    items = []
    for section in sections:
        tok = tokenize(section)
        if not tok.tokens:
            logger.warning("section %s[%d] has no tokens; skipped",
                           section.doc_id, section.index)
            continue
        embeddings = model.source.embed_section(tok)
        items.append(SectionBatchItem(tok, embeddings,
                                      gold_tag_ids(model, tok, section.adus)))
    return items


def _make_batches(items: list[SectionBatchItem], batch_size: int):
    """Fixed, deterministic batches of near-equal length sections."""
    ordered = sorted(items, key=lambda it: (len(it.tok.tokens),
                                            it.tok.section.doc_id,
                                            it.tok.section.index))
    return [ordered[i:i + batch_size]
            for i in range(0, len(ordered), batch_size)]


def _decoded_labels(model: AdurModel, embeddings: np.ndarray) -> list[str]:
    em, _ = model.emissions(embeddings, train=False)
    path = viterbi(em, model.crf, use_mask=True)
    return [model.labels[i] for i in path]


def dev_macro_f1(model: AdurModel, items: list[SectionBatchItem]) -> float:
    gold_rows = []
    pred_rows = []
    for it in items:
        gold = token_class_labels(
            TagSequence(model.config.scheme,
                        tuple(model.labels[i] for i in it.tag_ids)))
        pred = token_class_labels(
            TagSequence(model.config.scheme,
                        tuple(_decoded_labels(model, it.embeddings))))
        gold_rows.append(gold)
        pred_rows.append(pred)
    report = token_macro_f1(gold_rows, pred_rows, classes=list(model.classes))
    return report.macro_f1


def train_adur(train_sections: list[Section], config: AdurConfig,
               dev_sections: list[Section], embed_source):
    """Adam on the batch-mean CRF NLL with dev-F1 early stopping.

    Returns ``(model, log)``; the model carries the best-dev parameters and
    the log records per-epoch loss/F1 plus the stopping bookkeeping.
    """
    if not dev_sections:
        raise AdurError("dev set must be non-empty for early stopping")
    model = AdurModel(config, embed_source)
    train_items = prepare_sections(model, train_sections)
    dev_items = prepare_sections(model, dev_sections)
    if not train_items:
        raise AdurError("no non-empty training sections")
    batches = _make_batches(train_items, config.batch_size)
    optimizer = Adam(model.params(), lr=config.lr)
    train_rng = np.random.default_rng([config.seed, 1])

    best_f1 = -1.0
    best_state = model.state_dict()
    best_epoch = -1
    log = {"config": asdict(config), "epochs": [], "diverged": False}

    for epoch in range(config.max_epochs):
        epoch_loss = 0.0
        epoch_tokens = 0
        diverged = False
        for batch in batches:
            optimizer.zero_grad()
            total_tokens = sum(len(it.tok.tokens) for it in batch)
            batch_loss = 0.0
            for it in batch:
                em, cache = model.emissions(it.embeddings, train=True,
                                            rng=train_rng)
                loss, d_em = nll(em, model.crf, it.tag_ids)
                # Parameter grads accumulated by nll() are for the raw
                # section NLL; rescale everything to the batch token mean.
                batch_loss += loss
                model.backward_emissions(cache, d_em)
            if not np.isfinite(batch_loss):
                diverged = True
                break
            scale = 1.0 / total_tokens
            for p in model.params():
                p.grad *= scale
            clip_grad_norm(model.params(), config.grad_clip)
            try:
                optimizer.step()
            except NonFiniteGradError:
                diverged = True
                break
            epoch_loss += batch_loss
            epoch_tokens += total_tokens
        if diverged:
            logger.warning("training diverged at epoch %d; restoring the "
                           "best checkpoint", epoch)
            log["diverged"] = True
            break
        train_loss = epoch_loss / max(1, epoch_tokens)
        f1 = dev_macro_f1(model, dev_items)
        log["epochs"].append({"epoch": epoch,
                              "train_loss": float(train_loss),
                              "dev_macro_f1": float(f1)})
        if f1 > best_f1:
            best_f1 = f1
            best_state = model.state_dict()
            best_epoch = epoch
        if epoch - best_epoch >= config.patience:
            break

    model.load_state(best_state)
    log["best_epoch"] = best_epoch
    log["best_dev_macro_f1"] = float(best_f1)
    log["stopped_epoch"] = log["epochs"][-1]["epoch"] if log["epochs"] else -1
    return model, log


def predict_adur(model: AdurModel, section: Section) -> list[AduSpan]:
    tok = tokenize(section)
    if not tok.tokens:
        return []
    embeddings = model.source.embed_section(tok)
    labels = _decoded_labels(model, embeddings)
    seq = TagSequence(model.config.scheme, tuple(labels))
    prefix = f"{section.doc_id}.{section.index}.a"
    return decode_tags(seq, tok, prefix)


def predict_token_labels(model: AdurModel, section: Section) -> list[str]:
    """Per-token class labels (prefixes stripped) for token-level scoring."""
    tok = tokenize(section)
    if not tok.tokens:
        return []
    embeddings = model.source.embed_section(tok)
    seq = TagSequence(model.config.scheme,
                      tuple(_decoded_labels(model, embeddings)))
    return token_class_labels(seq)


def fold_partition(docs: list[Document], k: int) -> list[list[Document]]:
    """Contiguous blocks in document order; sizes differ by at most one."""
    if k < 1 or k > len(docs):
        raise AdurError(f"cannot make {k} folds from {len(docs)} documents")
    base, extra = divmod(len(docs), k)
    blocks = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        blocks.append(docs[pos:pos + size])
        pos += size
    return blocks


def cross_validate(train_docs: list[Document], config: AdurConfig,
                   embed_source, k: int = 5):
    """k seeded runs on contiguous-block folds; best fold-dev model wins.

    With k=1 the single run uses the training set as its dev set.
    """
    folds = fold_partition(train_docs, k)
    results = []
    best = None
    for i, dev_block in enumerate(folds):
        if k == 1:
            fold_train = list(dev_block)
        else:
            fold_train = [d for j, blk in enumerate(folds) if j != i
                          for d in blk]
        train_sections = [s for d in fold_train for s in d.sections]
        dev_sections = [s for d in dev_block for s in d.sections]
        fold_config = replace(config, seed=config.seed + i)
        model, log = train_adur(train_sections, fold_config, dev_sections,
                                embed_source)
        score = log["best_dev_macro_f1"]
        results.append({"fold": i, "seed": fold_config.seed,
                        "dev_macro_f1": score,
                        "docs_dev": [d.id for d in dev_block]})
        if best is None or score > best[0]:
            best = (score, model)
    return best[1], results


def save_adur(model: AdurModel, path: str | Path) -> None:
    save_checkpoint(path, model.state_dict())


def load_adur(path: str | Path, config: AdurConfig, embed_source) -> AdurModel:
    model = AdurModel(config, embed_source)
    model.load_state(load_checkpoint(path))
    return model


def write_training_log(log: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(log, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")
