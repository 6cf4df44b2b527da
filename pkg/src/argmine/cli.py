"""Command line surface: prepare, train, predict, evaluate, analyze, compare.

Every command is deterministic given its inputs, seed, and config: logs carry
no timestamps, JSON is written with sorted keys, and model checkpoints are
byte-stable.  Exit codes separate failure families so scripts can branch:
0 success, 2 usage, 3 missing input, 4 bad configuration, 5 checkpoint
problems, 6 unparseable input data, 7 inference or scoring failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .adur import (
    AdurConfig,
    AdurError,
    cross_validate,
    load_adur,
    save_adur,
    train_adur,
    write_training_log,
)
from .are import (
    AreConfig,
    AreError,
    build_section_training_data,
    load_are,
    save_are,
    train_are,
)
from .corpus import (
    CorpusError,
    Document,
    Section,
    label_stats,
    make_split,
    parse_corpus,
    read_sections_jsonl,
    write_sections_jsonl,
)
from .embed import EmbeddingFileError, make_source
from .evaluation import (
    EvalError,
    MatchMode,
    bootstrap_compare,
    detection_vs_classification,
    error_feature_report,
    merge_reports,
    relation_detection_vs_classification,
    relation_f1,
    span_f1,
    token_macro_f1,
)
from .nn import CheckpointError
from .pipeline import (
    ArgumentGraph,
    PipelineError,
    gold_graph,
    read_graphs,
    run_corpus,
    write_graphs,
)
from .tagging import TaggingError, encode_spans, token_class_labels, tokenize

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_BAD_CONFIG = 4
EXIT_CHECKPOINT = 5
EXIT_PARSE = 6
EXIT_INFERENCE = 7

CORPUS_ENV_VAR = "ARGMINE_CORPUS"

# Published label counts for the full annotated corpus, total and per split,
# plus the fixed 30/9 document split; checked by ``prepare --verify-table1``.
REFERENCE_COUNTS = {
    "total": {
        "adus": {"background_claim": 3224, "own_claim": 5849, "data": 4204},
        "relations": {"supports": 5686, "contradicts": 684,
                      "semantically_same": 39, "parts_of_same": 1269},
    },
    "train": {
        "adus": {"background_claim": 2563, "own_claim": 4608, "data": 3346},
        "relations": {"supports": 4426, "contradicts": 551,
                      "semantically_same": 36, "parts_of_same": 1000},
    },
    "test": {
        "adus": {"background_claim": 661, "own_claim": 1241, "data": 858},
        "relations": {"supports": 1260, "contradicts": 133,
                      "semantically_same": 3, "parts_of_same": 269},
    },
}
REFERENCE_SPLIT_SIZES = (30, 9)


class CliError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """What a single invocation resolved to before running."""

    subcommand: str
    corpus: str | None
    embeddings: str | None
    overrides: dict
    seed: int | None
    out_dir: Path


# ---------------------------------------------------------------------------
# Config plumbing

_FIELD_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "tuple[int, ...]": lambda s: tuple(int(x) for x in str(s).split(",") if x),
}


def parse_config_file(path: Path) -> dict[str, str]:
    """Plain ``key=value`` lines; ``#`` comments and blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}",
                           EXIT_BAD_CONFIG)
        out[key.strip()] = value.strip()
    return out


def coerce_overrides(cls, raw: dict[str, str]) -> dict:
    """Type-check string overrides against the config dataclass fields."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in fields:
            raise CliError(f"unknown {cls.__name__} option {key!r}",
                           EXIT_BAD_CONFIG)
        parser = _FIELD_PARSERS.get(str(fields[key].type))
        if parser is None:
            raise CliError(f"option {key!r} has unsupported type "
                           f"{fields[key].type}", EXIT_BAD_CONFIG)
        try:
            out[key] = parser(value)
        except ValueError:
            raise CliError(f"option {key!r}: cannot parse {value!r} as "
                           f"{fields[key].type}", EXIT_BAD_CONFIG) from None
    return out


def add_override_flags(parser: argparse.ArgumentParser, cls) -> None:
    group = parser.add_argument_group(f"{cls.__name__} overrides")
    for f in dataclasses.fields(cls):
        if f.name == "seed":
            continue
        group.add_argument(f"--{f.name.replace('_', '-')}",
                           dest=f"hp_{f.name}", default=None, metavar="V")


def collect_override_flags(args, cls) -> dict[str, str]:
    out = {}
    for f in dataclasses.fields(cls):
        if f.name == "seed":
            continue
        value = getattr(args, f"hp_{f.name}", None)
        if value is not None:
            out[f.name] = value
    return out


def build_config(cls, args):
    """Defaults, then config-file entries, then explicit flags; flags win."""
    raw: dict[str, str] = {}
    if getattr(args, "config", None):
        path = _require_file(args.config, "config file")
        raw.update(parse_config_file(path))
    raw.update(collect_override_flags(args, cls))
    kwargs = coerce_overrides(cls, raw)
    if getattr(args, "seed", None) is not None:
        kwargs["seed"] = args.seed
    try:
        return cls(**kwargs)
    except (AdurError, AreError) as exc:
        raise CliError(str(exc), EXIT_BAD_CONFIG) from exc


def run_config_from(args) -> RunConfig:
    overrides = {name[3:]: value for name, value in vars(args).items()
                 if name.startswith("hp_") and value is not None}
    return RunConfig(
        subcommand=args.subcommand,
        corpus=getattr(args, "corpus", None) or os.environ.get(CORPUS_ENV_VAR),
        embeddings=getattr(args, "embeddings", None),
        overrides=overrides, seed=getattr(args, "seed", None),
        out_dir=Path(getattr(args, "out", ".")),
    )


# ---------------------------------------------------------------------------
# Shared loading helpers

def _require_file(path_str: str, what: str) -> Path:
    path = Path(path_str)
    if not path.exists():
        raise CliError(f"{what} not found: {path}", EXIT_MISSING_INPUT)
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_docs(path_str: str, what: str) -> list[Document]:
    path = _require_file(path_str, what)
    try:
        return read_sections_jsonl(path)
    except CorpusError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc


def _load_sections(path_str: str, what: str) -> list[Section]:
    return [s for d in _load_docs(path_str, what) for s in d.sections]


def _load_graphs(path_str: str, what: str) -> dict[tuple[str, int], ArgumentGraph]:
    path = _require_file(path_str, what)
    try:
        graphs = read_graphs(path)
    except PipelineError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    return {(g.doc_id, g.section_index): g for g in graphs}


def _embedding_source(spec: str | None):
    if not spec:
        raise CliError("no embedding source given; use --embeddings "
                       "hash:<dim>[:<seed>] or file:<path>", EXIT_BAD_CONFIG)
    if spec.startswith("file:"):
        _require_file(spec[len("file:"):], "embedding file")
    try:
        return make_source(spec)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_BAD_CONFIG) from exc
    except EmbeddingFileError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc


def _config_path(ckpt: Path) -> Path:
    return ckpt.with_suffix(".config.json")


def _load_model_config(ckpt: Path, cls):
    path = _config_path(ckpt)
    if not path.exists():
        raise CliError(f"model config not found next to checkpoint: {path}",
                       EXIT_MISSING_INPUT)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from exc
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise CliError(f"{path}: unknown options {sorted(unknown)}",
                       EXIT_BAD_CONFIG)
    kwargs = {k: tuple(v) if isinstance(v, list) else v
              for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (AdurError, AreError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_BAD_CONFIG) from exc


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _save_model(out: Path, stem: str, saver, model, config, log) -> Path:
    ckpt = out / f"{stem}.ckpt"
    saver(model, ckpt)
    _write_json(_config_path(ckpt), dataclasses.asdict(config))
    write_training_log(log, out / f"{stem}.log.json")
    return ckpt


# ---------------------------------------------------------------------------
# Commands

def _count_mismatches(stats: dict, expected: dict, where: str = "") -> list[str]:
    out = []
    for group in sorted(expected):
        for key in sorted(expected[group]):
            want = expected[group][key]
            got = stats.get(group, {}).get(key)
            if got != want:
                out.append(f"count mismatch{where}: {group}.{key} "
                           f"expected {want}, found {got}")
    return out


def _verify_reference_counts(docs: list[Document], stats: dict) -> list[str]:
    """Compare a parsed corpus against the published counts and split sizes."""
    mismatches = _count_mismatches(stats, REFERENCE_COUNTS["total"], " (total)")
    try:
        train_docs, test_docs = make_split(docs)
    except CorpusError as exc:
        mismatches.append(f"split failed: {exc}")
        return mismatches
    sizes = (len(train_docs), len(test_docs))
    if sizes != REFERENCE_SPLIT_SIZES:
        mismatches.append(f"split mismatch: expected "
                          f"{REFERENCE_SPLIT_SIZES[0]}/"
                          f"{REFERENCE_SPLIT_SIZES[1]} documents, "
                          f"found {sizes[0]}/{sizes[1]}")
    mismatches += _count_mismatches(label_stats(train_docs),
                                    REFERENCE_COUNTS["train"], " (train)")
    mismatches += _count_mismatches(label_stats(test_docs),
                                    REFERENCE_COUNTS["test"], " (test)")
    return mismatches


def cmd_prepare(args) -> int:
    rc = run_config_from(args)
    if not rc.corpus:
        raise CliError(f"no corpus directory given; pass --corpus or set "
                       f"{CORPUS_ENV_VAR}", EXIT_MISSING_INPUT)
    corpus_dir = Path(rc.corpus)
    if not corpus_dir.is_dir():
        raise CliError(f"corpus directory not found: {corpus_dir}",
                       EXIT_MISSING_INPUT)
    docs = parse_corpus(corpus_dir)
    stats = label_stats(docs)
    out = _out_dir(args)
    _write_json(out / "stats.json", stats)
    print(json.dumps(stats, sort_keys=True))
    if args.split:
        train_docs, test_docs = make_split(docs)
        write_sections_jsonl(train_docs, out / "train.jsonl")
        write_sections_jsonl(test_docs, out / "test.jsonl")
        print(f"train_docs={len(train_docs)} test_docs={len(test_docs)}")
    else:
        write_sections_jsonl(docs, out / "sections.jsonl")
        n_sections = sum(len(d.sections) for d in docs)
        print(f"docs={len(docs)} sections={n_sections}")
    failed = False
    if args.verify_table1:
        mismatches = _verify_reference_counts(docs, stats)
        if mismatches:
            print("\n".join(mismatches), file=sys.stderr)
            failed = True
        else:
            print("table1 verified")
    if args.expected_counts:
        expected_path = _require_file(args.expected_counts, "expected counts")
        try:
            expected = json.loads(expected_path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"{expected_path}: {exc}", EXIT_PARSE) from exc
        mismatches = _count_mismatches(stats, expected)
        if mismatches:
            print("\n".join(mismatches), file=sys.stderr)
            failed = True
        else:
            print("counts verified")
    return 1 if failed else EXIT_OK


def cmd_train_adur(args) -> int:
    rc = run_config_from(args)
    source = _embedding_source(rc.embeddings)
    config = build_config(AdurConfig, args)
    print("config " + json.dumps(dataclasses.asdict(config), sort_keys=True))
    out = _out_dir(args)
    if args.folds:
        docs = _load_docs(args.train, "training sections")
        model, results = cross_validate(docs, config, source, k=args.folds)
        log = {"config": dataclasses.asdict(config), "folds": results}
        best = max(r["dev_macro_f1"] for r in results)
        summary = f"folds={args.folds} best_dev_macro_f1={best:.6f}"
    else:
        if not args.dev:
            raise CliError("train-adur needs --dev unless --folds is given",
                           EXIT_BAD_CONFIG)
        train_sections = _load_sections(args.train, "training sections")
        dev_sections = _load_sections(args.dev, "dev sections")
        model, log = train_adur(train_sections, config, dev_sections, source)
        summary = (f"epochs={len(log['epochs'])} "
                   f"best_dev_macro_f1={log['best_dev_macro_f1']:.6f}")
    ckpt = _save_model(out, "adur", save_adur, model, config, log)
    print(f"saved {ckpt}")
    print(summary)
    return EXIT_OK


def _encode_for_training(sections: list[Section], source, config: AreConfig,
                         rng: np.random.Generator):
    encoded = []
    for sec in sections:
        encoded.extend(build_section_training_data(tokenize(sec), sec, source,
                                                   config, rng))
    return encoded


def cmd_train_are(args) -> int:
    rc = run_config_from(args)
    source = _embedding_source(rc.embeddings)
    config = build_config(AreConfig, args)
    print("config " + json.dumps(dataclasses.asdict(config), sort_keys=True))
    out = _out_dir(args)
    train_sections = _load_sections(args.train, "training sections")
    dev_sections = _load_sections(args.dev, "dev sections")
    train_encoded = _encode_for_training(
        train_sections, source, config, np.random.default_rng([config.seed, 2]))
    dev_encoded = _encode_for_training(
        dev_sections, source, config, np.random.default_rng([config.seed, 3]))
    model, log = train_are(train_encoded, config, dev_encoded)
    ckpt = _save_model(out, "are", save_are, model, config, log)
    print(f"saved {ckpt}")
    print(f"epochs={len(log['epochs'])} "
          f"best_dev_micro_f1={log['best_dev_micro_f1']:.6f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    rc = run_config_from(args)
    source = _embedding_source(rc.embeddings)
    sections = _load_sections(args.sections, "input sections")
    adur_ckpt = _require_file(args.adur, "tagger checkpoint")
    are_ckpt = _require_file(args.are, "relation checkpoint")
    adur_config = _load_model_config(adur_ckpt, AdurConfig)
    are_config = _load_model_config(are_ckpt, AreConfig)
    try:
        adur_model = load_adur(adur_ckpt, adur_config, source)
        are_model = load_are(are_ckpt, are_config, token_dim=source.dim)
    except ValueError as exc:
        raise CliError(f"checkpoint does not fit config: {exc}",
                       EXIT_CHECKPOINT) from exc
    graphs, failures = run_corpus(adur_model, are_model, sections,
                                  embed_source=source,
                                  gold_adus=args.gold_adus)
    out = _out_dir(args)
    write_graphs(out / "graphs.jsonl", graphs.values())
    print(f"sections={len(sections)} graphs={len(graphs)} "
          f"failures={len(failures)}")
    for key, message in failures:
        print(f"failed {key[0]}.{key[1]}: {message}", file=sys.stderr)
    return EXIT_INFERENCE if failures else EXIT_OK


def _pred_graph_for(section: Section,
                    graphs: dict[tuple[str, int], ArgumentGraph]) -> ArgumentGraph:
    return graphs.get((section.doc_id, section.index),
                      ArgumentGraph(section.doc_id, section.index))


def _token_report(section: Section, pred: ArgumentGraph):
    tok = tokenize(section)
    gold_tags = token_class_labels(encode_spans(tok, section.adus, "BIO2"))
    fragments = [f for m in pred.adus for f in m.fragments]
    pred_tags = token_class_labels(encode_spans(tok, fragments, "BIO2"))
    return token_macro_f1(gold_tags, pred_tags)


def _section_reports(section: Section, pred: ArgumentGraph, weak: MatchMode):
    gold = gold_graph(section)
    out = {"token": _token_report(section, pred)}
    for name, mode in (("exact", MatchMode.exact()), ("weak", weak)):
        out[f"span_{name}"] = span_f1(gold.adus, pred.adus, mode)
        det, cls = detection_vs_classification(gold.adus, pred.adus, mode)
        out[f"span_detection_{name}"] = det
        out[f"span_classification_{name}"] = cls
        out[f"relation_{name}"] = relation_f1(gold, pred, mode=mode)
        rdet, rcls = relation_detection_vs_classification(gold, pred, mode=mode)
        out[f"relation_detection_{name}"] = rdet
        out[f"relation_classification_{name}"] = rcls
    return out


EVALUATE_TABLES = (
    ("token", "token tags", "both"),
    ("span_exact", "ADU units, exact match", "exact"),
    ("span_weak", "ADU units, weak match", "weak"),
    ("span_detection_exact", "ADU detection, exact match", "exact"),
    ("span_classification_exact", "ADU classification, exact match", "exact"),
    ("span_detection_weak", "ADU detection, weak match", "weak"),
    ("span_classification_weak", "ADU classification, weak match", "weak"),
    ("relation_exact", "relations, exact endpoints", "exact"),
    ("relation_weak", "relations, weak endpoints", "weak"),
    ("relation_detection_weak", "relation detection, weak endpoints", "weak"),
    ("relation_classification_weak", "relation classification, weak endpoints",
     "weak"),
)


def cmd_evaluate(args) -> int:
    sections = _load_sections(args.gold, "gold sections")
    graphs = _load_graphs(args.pred, "predicted graphs")
    known = {(s.doc_id, s.index) for s in sections}
    for key in sorted(set(graphs) - known):
        logger.warning("prediction for unknown section %s.%d ignored", *key)
    weak = MatchMode.weak(args.denominator)
    try:
        per_section = [_section_reports(s, _pred_graph_for(s, graphs), weak)
                       for s in sections]
    except (TaggingError, EvalError) as exc:
        raise CliError(str(exc), EXIT_INFERENCE) from exc
    merged = {}
    if per_section:
        for kind in per_section[0]:
            merged[kind] = merge_reports([r[kind] for r in per_section])
    wanted = {"exact", "weak", "both"} if args.mode == "both" \
        else {args.mode, "both"}
    out = _out_dir(args)
    for kind, title, mode in EVALUATE_TABLES:
        if mode in wanted and kind in merged:
            print(merged[kind].format_table(title))
            print()
    _write_json(out / "evaluate.json",
                {"denominator": args.denominator, "mode": args.mode,
                 "reports": {k: v.to_dict() for k, v in merged.items()}})
    if "token" in merged:
        (out / "token-confusion.csv").write_text(
            merged["token"].confusion_csv())
    for mode in ("exact", "weak"):
        kind = f"relation_{mode}"
        if mode in wanted and kind in merged:
            (out / f"relation-confusion-{mode}.csv").write_text(
                merged[kind].confusion_csv())
    return EXIT_OK


def cmd_analyze(args) -> int:
    sections = _load_sections(args.gold, "gold sections")
    graphs = _load_graphs(args.pred, "predicted graphs")
    totals = {cat: {"connector": Counter(), "arg_types": Counter(),
                    "same_sentence": Counter()}
              for cat in ("tp", "fp", "fn")}
    for section in sections:
        pred = _pred_graph_for(section, graphs)
        report = error_feature_report(pred, gold_graph(section),
                                      tokenize(section).tokens)
        for cat, features in report.items():
            for kind, counts in features.items():
                totals[cat][kind].update(counts)
    payload = {cat: {kind: dict(sorted(counter.items()))
                     for kind, counter in features.items()}
               for cat, features in totals.items()}
    print(json.dumps(payload, sort_keys=True))
    _write_json(_out_dir(args) / "analyze.json", payload)
    return EXIT_OK


def _metric_value(kind: str, reports) -> float:
    merged = merge_reports(reports)
    return merged.micro.f1 if kind == "relation" else merged.macro_f1


def cmd_bootstrap(args) -> int:
    sections = _load_sections(args.gold, "gold sections")
    graphs_a = _load_graphs(args.pred_a, "first prediction set")
    graphs_b = _load_graphs(args.pred_b, "second prediction set")
    weak = MatchMode.weak(args.denominator)
    mode = MatchMode.exact() if args.match == "exact" else weak

    def reports_for(section: Section, graphs) -> dict:
        pred = _pred_graph_for(section, graphs)
        if args.metric == "token":
            return _token_report(section, pred)
        if args.metric == "span":
            return span_f1(gold_graph(section).adus, pred.adus, mode)
        return relation_f1(gold_graph(section), pred, mode=mode)

    try:
        items = [(reports_for(s, graphs_a), reports_for(s, graphs_b))
                 for s in sections]
    except (TaggingError, EvalError) as exc:
        raise CliError(str(exc), EXIT_INFERENCE) from exc

    def scores_fn(sample):
        return (_metric_value(args.metric, [a for a, _ in sample]),
                _metric_value(args.metric, [b for _, b in sample]))

    try:
        mean_a, mean_b, p_value = bootstrap_compare(
            scores_fn, items, n_samples=args.samples,
            sample_size=args.sample_size,
            rng=np.random.default_rng(args.seed if args.seed is not None
                                      else 0),
            n_flips=args.flips)
    except EvalError as exc:
        raise CliError(str(exc), EXIT_BAD_CONFIG) from exc
    payload = {"metric": args.metric, "match": args.match,
               "mean_a": mean_a, "mean_b": mean_b, "p_value": p_value,
               "samples": args.samples, "sample_size": args.sample_size}
    print(json.dumps(payload, sort_keys=True))
    _write_json(_out_dir(args) / "bootstrap.json", payload)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=".", metavar="DIR",
                        help="output directory (default: current)")
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed override")
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="key=value config file, merged under flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="argmine",
        description="Argumentation mining over scientific full texts")
    parser.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("prepare",
                       help="parse a corpus directory into JSON lines")
    _add_common(p)
    p.add_argument("--corpus", default=None, metavar="DIR",
                   help=f"corpus directory (default: ${CORPUS_ENV_VAR})")
    p.add_argument("--split", action="store_true",
                   help="write the fixed train/test document split")
    p.add_argument("--expected-counts", default=None, metavar="FILE",
                   help="JSON of expected label counts; mismatch exits 1")
    p.add_argument("--verify-table1", action="store_true",
                   help="check the published label counts and the 30/9 "
                        "document split; mismatch exits 1")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-adur", help="train the ADU sequence tagger")
    _add_common(p)
    p.add_argument("--train", required=True, metavar="FILE")
    p.add_argument("--dev", default=None, metavar="FILE")
    p.add_argument("--embeddings", required=True, metavar="SPEC",
                   help="hash:<dim>[:<seed>] or file:<path>")
    p.add_argument("--folds", type=int, default=None,
                   help="cross-validate over documents instead of --dev")
    add_override_flags(p, AdurConfig)
    p.set_defaults(func=cmd_train_adur)

    p = sub.add_parser("train-are", help="train the relation classifier")
    _add_common(p)
    p.add_argument("--train", required=True, metavar="FILE")
    p.add_argument("--dev", required=True, metavar="FILE")
    p.add_argument("--embeddings", required=True, metavar="SPEC")
    add_override_flags(p, AreConfig)
    p.set_defaults(func=cmd_train_are)

    p = sub.add_parser("predict", help="predict argument graphs")
    _add_common(p)
    p.add_argument("--sections", required=True, metavar="FILE")
    p.add_argument("--adur", required=True, metavar="CKPT")
    p.add_argument("--are", required=True, metavar="CKPT")
    p.add_argument("--embeddings", required=True, metavar="SPEC")
    p.add_argument("--gold-adus", action="store_true",
                   help="use annotated spans instead of the tagger")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predicted graphs against gold")
    _add_common(p)
    p.add_argument("--gold", required=True, metavar="FILE",
                   help="gold sections JSON lines")
    p.add_argument("--pred", required=True, metavar="FILE",
                   help="predicted graphs JSON lines")
    p.add_argument("--mode", choices=("exact", "weak", "both"),
                   default="both")
    p.add_argument("--denominator", choices=("shorter", "longer"),
                   default="shorter")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "analyze",
        help="feature distributions over relation errors",
        description="Relations are matched by ADU id, so predictions should "
                    "share unit ids with the gold sections (e.g. graphs from "
                    "predict --gold-adus).")
    _add_common(p)
    p.add_argument("--gold", required=True, metavar="FILE")
    p.add_argument("--pred", required=True, metavar="FILE")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bootstrap",
                       help="paired bootstrap comparison of two systems")
    _add_common(p)
    p.add_argument("--gold", required=True, metavar="FILE")
    p.add_argument("--pred-a", required=True, metavar="FILE")
    p.add_argument("--pred-b", required=True, metavar="FILE")
    p.add_argument("--metric", choices=("token", "span", "relation"),
                   default="relation")
    p.add_argument("--match", choices=("exact", "weak"), default="weak")
    p.add_argument("--denominator", choices=("shorter", "longer"),
                   default="shorter")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--sample-size", type=int, default=10)
    p.add_argument("--flips", type=int, default=10000)
    p.set_defaults(func=cmd_bootstrap)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except CheckpointError as exc:
        print(f"error: checkpoint: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (CorpusError, EmbeddingFileError) as exc:
        print(f"error: cannot parse input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (AdurError, AreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (TaggingError, EvalError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFERENCE


if __name__ == "__main__":
    sys.exit(main())
