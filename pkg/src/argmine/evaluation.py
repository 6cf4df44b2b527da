"""Scoring: token/span/relation F1, error decomposition, bootstrap comparison.

Span matching is greedy one-to-one: gold spans are visited in start order and
each takes the unmatched same-type candidate with the largest character
overlap (ties: earliest start).  Weak matching accepts overlap of at least
half the denominator span's character length; the denominator is the shorter
span by default, the longer one optionally.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import MergedAdu

NONE_LABEL = "none"
SCORED_RELATION_LABELS = ("supports", "contradicts")
SYMMETRIC_RELATION_LABELS = ("contradicts", "parts_of_same", "semantically_same")

# Connector phrases, ordered by corpus frequency (most frequent first); the
# report names this order when several connectors co-occur.
CONNECTOR_LEXICON = (
    "however",
    "but",
    "while",
    "in contrast",
    "though",
    "despite",
    "even though",
)
BRACKET_TOKENS = frozenset("()[]")
SENTENCE_TERMINATORS = frozenset(".!?")


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class MatchMode:
    kind: str = "exact"
    weak_denominator: str = "shorter"

    def __post_init__(self):
        if self.kind not in ("exact", "weak"):
            raise EvalError(f"unknown match kind {self.kind!r}")
        if self.weak_denominator not in ("shorter", "longer"):
            raise EvalError(f"unknown denominator {self.weak_denominator!r}")

    @classmethod
    def exact(cls) -> "MatchMode":
        return cls("exact")

    @classmethod
    def weak(cls, denominator: str = "shorter") -> "MatchMode":
        return cls("weak", denominator)


@dataclass
class Prf:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall,
                "f1": self.f1}


@dataclass
class ScoreReport:
    """Per-class counts plus a confusion matrix with a none row/column.

    Confusion rows are gold labels, columns predicted; the final row/column
    (``none_label``) holds misses and spurious predictions.
    """

    classes: list[str]
    per_class: dict[str, Prf] = field(default_factory=dict)
    none_label: str = NONE_LABEL
    confusion: np.ndarray | None = None

    def __post_init__(self):
        for c in self.classes:
            self.per_class.setdefault(c, Prf())
        if self.confusion is None:
            n = len(self.classes) + 1
            self.confusion = np.zeros((n, n), dtype=np.int64)

    @property
    def confusion_labels(self) -> list[str]:
        return [*self.classes, self.none_label]

    def _idx(self, label: str) -> int:
        if label == self.none_label:
            return len(self.classes)
        try:
            return self.classes.index(label)
        except ValueError:
            raise EvalError(f"label {label!r} not among {self.classes}") from None

    def record(self, gold_label: str, pred_label: str) -> None:
        """Count one unit; none/none pairs are not representable and rejected."""
        if gold_label == self.none_label and pred_label == self.none_label:
            raise EvalError("cannot record a none/none pair")
        self.confusion[self._idx(gold_label), self._idx(pred_label)] += 1
        if gold_label == pred_label:
            self.per_class[gold_label].tp += 1
            return
        if gold_label != self.none_label:
            self.per_class[gold_label].fn += 1
        if pred_label != self.none_label:
            self.per_class[pred_label].fp += 1

    @property
    def macro_precision(self) -> float:
        vals = [self.per_class[c].precision for c in self.classes]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def macro_recall(self) -> float:
        vals = [self.per_class[c].recall for c in self.classes]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def macro_f1(self) -> float:
        vals = [self.per_class[c].f1 for c in self.classes]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def micro(self) -> Prf:
        out = Prf()
        for c in self.classes:
            prf = self.per_class[c]
            out.tp += prf.tp
            out.fp += prf.fp
            out.fn += prf.fn
        return out

    @property
    def micro_f1(self) -> float:
        return self.micro.f1

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "per_class": {c: self.per_class[c].to_dict() for c in self.classes},
            "macro": {"precision": self.macro_precision,
                      "recall": self.macro_recall, "f1": self.macro_f1},
            "micro": self.micro.to_dict(),
            "confusion_labels": self.confusion_labels,
            "confusion": self.confusion.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def format_table(self, title: str = "") -> str:
        width = max([len(c) for c in self.classes + ["macro", "micro"]] or [5])
        lines = []
        if title:
            lines.append(title)
        lines.append(f"{'class':<{width}}  {'P':>7}  {'R':>7}  {'F1':>7}")
        for c in self.classes:
            prf = self.per_class[c]
            lines.append(f"{c:<{width}}  {prf.precision:>7.3f}  "
                         f"{prf.recall:>7.3f}  {prf.f1:>7.3f}")
        lines.append(f"{'macro':<{width}}  {self.macro_precision:>7.3f}  "
                     f"{self.macro_recall:>7.3f}  {self.macro_f1:>7.3f}")
        m = self.micro
        lines.append(f"{'micro':<{width}}  {m.precision:>7.3f}  "
                     f"{m.recall:>7.3f}  {m.f1:>7.3f}")
        return "\n".join(lines)

    def confusion_csv(self) -> str:
        labels = self.confusion_labels
        lines = ["gold\\pred," + ",".join(labels)]
        for i, lab in enumerate(labels):
            row = ",".join(str(int(v)) for v in self.confusion[i])
            lines.append(f"{lab},{row}")
        return "\n".join(lines) + "\n"


def merge_reports(reports: list[ScoreReport]) -> ScoreReport:
    """Sum per-class counts and confusions of same-kind reports.

    Used to aggregate section-level reports without letting the matcher pair
    spans across section boundaries.  The class set is the sorted union.
    """
    if not reports:
        return ScoreReport(classes=[])
    none = reports[0].none_label
    if any(r.none_label != none for r in reports):
        raise EvalError("cannot merge reports with different none labels")
    classes = sorted({c for r in reports for c in r.classes})
    merged = ScoreReport(classes=classes, none_label=none)
    labels = merged.confusion_labels
    for r in reports:
        for c in r.classes:
            prf, m = r.per_class[c], merged.per_class[c]
            m.tp += prf.tp
            m.fp += prf.fp
            m.fn += prf.fn
        src = r.confusion_labels
        for i, gl in enumerate(src):
            for j, pl in enumerate(src):
                v = int(r.confusion[i, j])
                if v:
                    merged.confusion[labels.index(gl), labels.index(pl)] += v
    return merged


# ---------------------------------------------------------------------------
# Token-level scoring


def _flatten_label_rows(rows) -> list[str]:
    if rows and isinstance(rows[0], (list, tuple)):
        out: list[str] = []
        for row in rows:
            out.extend(row)
        return out
    return list(rows)


def token_macro_f1(gold_tags, pred_tags, classes: list[str] | None = None,
                   include_outside: bool = False) -> ScoreReport:
    """Per-token class scoring; O is the outside label and sits on the
    none row/column, excluded from the macro average unless requested."""
    gold = _flatten_label_rows(gold_tags)
    pred = _flatten_label_rows(pred_tags)
    if len(gold) != len(pred):
        raise EvalError(f"token count mismatch: {len(gold)} gold vs "
                        f"{len(pred)} predicted")
    if classes is None:
        classes = sorted({t for t in gold + pred if t != "O"})
    if include_outside:
        classes = [*classes, "O"]
        report = ScoreReport(classes=classes, none_label="<none>")
    else:
        report = ScoreReport(classes=list(classes), none_label="O")
    for g, p in zip(gold, pred):
        if g == p == report.none_label:
            # True-negative outside tokens carry no score mass.
            continue
        report.record(g, p)
    return report


# ---------------------------------------------------------------------------
# Span matching


def span_fragments(span) -> tuple:
    if isinstance(span, MergedAdu):
        return span.fragments
    return (span,)


def span_char_length(span) -> int:
    return sum(f.end - f.start for f in span_fragments(span))


def span_overlap(a, b) -> int:
    total = 0
    for fa in span_fragments(a):
        for fb in span_fragments(b):
            total += max(0, min(fa.end, fb.end) - max(fa.start, fb.start))
    return total


def span_start(span) -> int:
    return min(f.start for f in span_fragments(span))


def span_end(span) -> int:
    return max(f.end for f in span_fragments(span))


def spans_identical(a, b) -> bool:
    bounds_a = sorted((f.start, f.end) for f in span_fragments(a))
    bounds_b = sorted((f.start, f.end) for f in span_fragments(b))
    return bounds_a == bounds_b


def spans_match(gold, pred, mode: MatchMode, require_type: bool = True) -> bool:
    if require_type and gold.adu_type != pred.adu_type:
        return False
    if mode.kind == "exact":
        return spans_identical(gold, pred)
    denom = (min if mode.weak_denominator == "shorter" else max)(
        span_char_length(gold), span_char_length(pred))
    return span_overlap(gold, pred) * 2 >= denom


def greedy_match(gold_spans, pred_spans, mode: MatchMode,
                 require_type: bool = True):
    """One-to-one gold/pred pairing. Returns (pairs, missed_gold, spurious)."""
    order = sorted(range(len(gold_spans)),
                   key=lambda i: (span_start(gold_spans[i]),
                                  span_end(gold_spans[i]),
                                  gold_spans[i].adu_type, gold_spans[i].id))
    used = [False] * len(pred_spans)
    pairs = []
    missed = []
    for gi in order:
        g = gold_spans[gi]
        best_j = -1
        best_key = None
        for j, p in enumerate(pred_spans):
            if used[j] or not spans_match(g, p, mode, require_type):
                continue
            key = (-span_overlap(g, p), span_start(p), span_end(p), p.id)
            if best_key is None or key < best_key:
                best_key = key
                best_j = j
        if best_j >= 0:
            used[best_j] = True
            pairs.append((g, pred_spans[best_j]))
        else:
            missed.append(g)
    spurious = [p for j, p in enumerate(pred_spans) if not used[j]]
    return pairs, missed, spurious


def span_f1(gold_spans, pred_spans, mode: MatchMode,
            classes: list[str] | None = None) -> ScoreReport:
    """Type-respecting span matching; per-class counts, macro over classes."""
    if classes is None:
        classes = sorted({s.adu_type for s in list(gold_spans) + list(pred_spans)})
    report = ScoreReport(classes=list(classes))
    pairs, missed, spurious = greedy_match(gold_spans, pred_spans, mode,
                                           require_type=True)
    for g, p in pairs:
        report.record(g.adu_type, p.adu_type)
    for g in missed:
        report.record(g.adu_type, NONE_LABEL)
    for p in spurious:
        report.record(NONE_LABEL, p.adu_type)
    return report


def detection_vs_classification(gold_spans, pred_spans, mode: MatchMode,
                                classes: list[str] | None = None):
    """Type-blind boundary scoring plus label scoring on the found units.

    Returns ``(detection, classification)`` reports.  Detection collapses all
    classes to one; classification scores only pairs the detection matched,
    so its confusion matrix is the cross-class part of the usual figure.
    """
    if classes is None:
        classes = sorted({s.adu_type for s in list(gold_spans) + list(pred_spans)})
    pairs, missed, spurious = greedy_match(gold_spans, pred_spans, mode,
                                           require_type=False)
    detection = ScoreReport(classes=["unit"])
    for _ in pairs:
        detection.record("unit", "unit")
    for _ in missed:
        detection.record("unit", NONE_LABEL)
    for _ in spurious:
        detection.record(NONE_LABEL, "unit")

    classification = ScoreReport(classes=list(classes))
    for g, p in pairs:
        classification.record(g.adu_type, p.adu_type)
    return detection, classification


# ---------------------------------------------------------------------------
# Relation scoring


def _graph_parts(graph):
    return list(graph.adus), list(graph.relations)


def align_adus(gold_adus, pred_adus, mode: MatchMode) -> dict[str, str]:
    """Greedy one-to-one map from predicted ADU id to gold ADU id."""
    pairs, _, _ = greedy_match(list(gold_adus), list(pred_adus), mode,
                               require_type=True)
    return {p.id: g.id for g, p in pairs}


def normalize_relations(relations, symmetric=SYMMETRIC_RELATION_LABELS):
    """Canonical endpoint order for symmetric labels; duplicates removed."""
    out = []
    seen = set()
    for r in relations:
        head, tail = r.head, r.tail
        if r.label in symmetric and tail < head:
            head, tail = tail, head
        key = (head, tail, r.label)
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


def relation_f1(gold_graph, pred_graph, mode: MatchMode | None = None,
                adu_alignment: dict[str, str] | None = None,
                labels: tuple[str, ...] = SCORED_RELATION_LABELS) -> ScoreReport:
    """Micro relation scoring after mapping predicted endpoints to gold ADUs.

    A prediction is correct iff both of its endpoints align to gold ADUs that
    the gold graph joins with the same label (order-free for symmetric
    labels).  ``labels`` restricts which relation labels are scored.
    """
    gold_adus, gold_rels = _graph_parts(gold_graph)
    pred_adus, pred_rels = _graph_parts(pred_graph)
    if adu_alignment is None:
        if mode is None:
            raise EvalError("need either a match mode or an explicit alignment")
        adu_alignment = align_adus(gold_adus, pred_adus, mode)

    gold_set = {k for k in normalize_relations(gold_rels) if k[2] in labels}
    gold_by_pair: dict[tuple[str, str], str] = {}
    for h, t, lab in gold_set:
        gold_by_pair[(h, t)] = lab

    report = ScoreReport(classes=list(labels))
    matched_gold: set[tuple[str, str, str]] = set()
    for h, t, lab in normalize_relations(pred_rels):
        if lab not in labels:
            continue
        gh = adu_alignment.get(h)
        gt = adu_alignment.get(t)
        if gh is None or gt is None:
            report.record(NONE_LABEL, lab)
            continue
        if lab in SYMMETRIC_RELATION_LABELS and gt < gh:
            gh, gt = gt, gh
        if (gh, gt, lab) in gold_set:
            matched_gold.add((gh, gt, lab))
            report.record(lab, lab)
        elif (gh, gt) in gold_by_pair:
            report.record(gold_by_pair[(gh, gt)], lab)
            matched_gold.add((gh, gt, gold_by_pair[(gh, gt)]))
        else:
            report.record(NONE_LABEL, lab)
    for h, t, lab in sorted(gold_set - matched_gold):
        report.record(lab, NONE_LABEL)
    return report


def relation_detection_vs_classification(
        gold_graph, pred_graph, mode: MatchMode | None = None,
        adu_alignment: dict[str, str] | None = None,
        labels: tuple[str, ...] = SCORED_RELATION_LABELS):
    """Pair finding (any scored label, order-free) vs labeling the found pairs."""
    gold_adus, gold_rels = _graph_parts(gold_graph)
    pred_adus, pred_rels = _graph_parts(pred_graph)
    if adu_alignment is None:
        if mode is None:
            raise EvalError("need either a match mode or an explicit alignment")
        adu_alignment = align_adus(gold_adus, pred_adus, mode)

    def undirected(h, t):
        return (h, t) if h <= t else (t, h)

    gold_pairs: dict[tuple[str, str], str] = {}
    for h, t, lab in normalize_relations(gold_rels):
        if lab in labels:
            gold_pairs[undirected(h, t)] = lab
    pred_pairs: dict[tuple[str, str], str] = {}
    for h, t, lab in normalize_relations(pred_rels):
        if lab not in labels:
            continue
        gh, gt = adu_alignment.get(h), adu_alignment.get(t)
        if gh is None or gt is None:
            pred_pairs.setdefault(("<unaligned>", f"{h}->{t}"), lab)
        else:
            pred_pairs.setdefault(undirected(gh, gt), lab)

    detection = ScoreReport(classes=["pair"])
    classification = ScoreReport(classes=list(labels))
    for pair, lab in sorted(pred_pairs.items()):
        if pair in gold_pairs:
            detection.record("pair", "pair")
            classification.record(gold_pairs[pair], lab)
        else:
            detection.record(NONE_LABEL, "pair")
    for pair in sorted(set(gold_pairs) - set(pred_pairs)):
        detection.record("pair", NONE_LABEL)
    return detection, classification


# ---------------------------------------------------------------------------
# Bootstrap comparison


def bootstrap_compare(scores_fn, sections, n_samples: int = 100,
                      sample_size: int = 10,
                      rng: np.random.Generator | None = None,
                      n_flips: int = 10000):
    """Paired bootstrap over section samples with a sign-flip p-value.

    ``scores_fn(sample)`` must return a ``(score_a, score_b)`` pair.  Each of
    ``n_samples`` rounds draws ``sample_size`` sections with replacement; the
    p-value is the Monte Carlo probability that randomly sign-flipped paired
    differences beat the observed absolute mean difference.
    """
    sections = list(sections)
    if sample_size > len(sections):
        raise EvalError(f"sample_size {sample_size} exceeds the "
                        f"{len(sections)} available sections")
    if rng is None:
        rng = np.random.default_rng(0)
    a_scores = np.empty(n_samples)
    b_scores = np.empty(n_samples)
    for i in range(n_samples):
        idx = rng.integers(0, len(sections), size=sample_size)
        sample = [sections[j] for j in idx]
        a, b = scores_fn(sample)
        a_scores[i] = a
        b_scores[i] = b
    diffs = a_scores - b_scores
    observed = abs(float(diffs.mean()))
    if np.all(diffs == 0.0):
        p_value = 1.0
    else:
        signs = rng.choice(np.array([-1.0, 1.0]), size=(n_flips, n_samples))
        flipped = np.abs((signs * diffs).mean(axis=1))
        hits = int(np.sum(flipped >= observed - 1e-12))
        p_value = (hits + 1) / (n_flips + 1)
    return float(a_scores.mean()), float(b_scores.mean()), float(p_value)


# ---------------------------------------------------------------------------
# Error feature report


def _token_range(tokens, span) -> tuple[int, int]:
    start, end = span_start(span), span_end(span)
    t0 = next((i for i, t in enumerate(tokens) if t.char_end > start),
              len(tokens))
    t1 = t0
    for i in range(t0, len(tokens)):
        if tokens[i].char_start < end:
            t1 = i + 1
    return t0, t1


def _sentence_ids(tokens) -> list[int]:
    ids = []
    current = 0
    for t in tokens:
        ids.append(current)
        if t.text in SENTENCE_TERMINATORS:
            current += 1
    return ids


def find_connector(token_texts: list[str]) -> str:
    """Highest-priority lexicon connector in the texts; container phrases win
    over their sub-phrases; NONE or BRACKETS when no connector appears."""
    lowered = [t.lower() for t in token_texts]
    occurrences = []  # (lexicon index, position, phrase length)
    for li, phrase in enumerate(CONNECTOR_LEXICON):
        words = phrase.split()
        for pos in range(len(lowered) - len(words) + 1):
            if lowered[pos:pos + len(words)] == words:
                occurrences.append((li, pos, len(words)))
    kept = []
    for occ in occurrences:
        _, pos, length = occ
        contained = any(
            o is not occ and o[1] <= pos and pos + length <= o[1] + o[2]
            and o[2] > length
            for o in occurrences
        )
        if not contained:
            kept.append(occ)
    if kept:
        best = min(kept)
        return CONNECTOR_LEXICON[best[0]]
    if any(t in BRACKET_TOKENS for t in token_texts):
        return "BRACKETS"
    return "NONE"


def _pair_features(head, tail, tokens, sentence_ids,
                   context: int = 3) -> dict:
    h0, _ = _token_range(tokens, head)
    t0, _ = _token_range(tokens, tail)
    first_t0 = min(h0, t0)
    later_t0 = max(h0, t0)
    lo = max(0, first_t0 - context)
    hi = min(len(tokens), later_t0 + context)
    connector = find_connector([t.text for t in tokens[lo:hi]])
    ext_lo = min(span_start(head), span_start(tail))
    ext_hi = max(span_end(head), span_end(tail))
    lo_tok = next((i for i, t in enumerate(tokens) if t.char_end > ext_lo),
                  None)
    hi_tok = None
    for i, t in enumerate(tokens):
        if t.char_start < ext_hi:
            hi_tok = i
    if lo_tok is None or hi_tok is None:
        same_sentence = False
    else:
        same_sentence = sentence_ids[lo_tok] == sentence_ids[hi_tok]
    return {
        "connector": connector,
        "arg_types": f"{head.adu_type}->{tail.adu_type}",
        "same_sentence": same_sentence,
    }


def error_feature_report(pred_graph, gold_graph, tokens,
                         labels: tuple[str, ...] | None = None) -> dict:
    """Connector/argument-type/same-sentence distributions for TP, FP, FN
    relations; endpoints are compared by id (shared-ADU evaluation path)."""
    gold_adus, gold_rels = _graph_parts(gold_graph)
    pred_adus, pred_rels = _graph_parts(pred_graph)
    by_id = {a.id: a for a in gold_adus}
    by_id.update({a.id: a for a in pred_adus})
    gold_set = set(normalize_relations(gold_rels))
    pred_set = set(normalize_relations(pred_rels))
    if labels is not None:
        gold_set = {k for k in gold_set if k[2] in labels}
        pred_set = {k for k in pred_set if k[2] in labels}
    sentence_ids = _sentence_ids(tokens)

    def tally(keys):
        stats = {"connector": Counter(), "arg_types": Counter(),
                 "same_sentence": Counter()}
        for h, t, _label in sorted(keys):
            if h not in by_id or t not in by_id:
                continue
            feats = _pair_features(by_id[h], by_id[t], tokens, sentence_ids)
            stats["connector"][feats["connector"]] += 1
            stats["arg_types"][feats["arg_types"]] += 1
            stats["same_sentence"][str(feats["same_sentence"]).lower()] += 1
        return {k: dict(v) for k, v in stats.items()}

    return {
        "tp": tally(gold_set & pred_set),
        "fp": tally(pred_set - gold_set),
        "fn": tally(gold_set - pred_set),
    }
