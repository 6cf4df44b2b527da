"""End-to-end assembly: ADU spans, relation candidates, argument graphs.

A graph holds the merged (possibly multi-fragment) ADUs of one section plus
the supports/contradicts edges between them; parts_of_same predictions are
consumed by the merging step rather than reported as edges.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .adur import AdurModel, predict_adur
from .are import AreModel, adu_tag_id_row, encode_candidate, generate_candidates, predict_are
from .corpus import AduSpan, MergedAdu, Relation, Section, merge_parts_of_same
from .tagging import tokenize

logger = logging.getLogger(__name__)


class PipelineError(Exception):
    pass


@dataclass
class ArgumentGraph:
    """Merged ADUs and their directed relation edges for one section."""

    doc_id: str
    section_index: int
    adus: list[MergedAdu] = field(default_factory=list)
    relations: list[Relation] = field(default_factory=list)


def gold_graph(section: Section) -> ArgumentGraph:
    """Reference graph from a section's own annotations."""
    merged, relations = merge_parts_of_same(section.adus, section.relations)
    return ArgumentGraph(doc_id=section.doc_id, section_index=section.index,
                         adus=merged, relations=relations)


def run_pipeline(adur_model: AdurModel, are_model: AreModel, section: Section,
                 embed_source=None, gold_adus: bool = False) -> ArgumentGraph:
    """Predict a section's argument graph.

    With ``gold_adus`` the annotated spans replace the tagger's output, which
    isolates relation quality from span quality.
    """
    source = embed_source if embed_source is not None else adur_model.source
    if source.dim != are_model.token_dim:
        raise PipelineError(
            f"embedding dim {source.dim} does not match relation model "
            f"input dim {are_model.token_dim}")
    adus: list[AduSpan] = list(section.adus) if gold_adus \
        else predict_adur(adur_model, section)
    graph = ArgumentGraph(doc_id=section.doc_id, section_index=section.index)
    if not adus:
        return graph
    tok = tokenize(section)
    cfg = are_model.config
    candidates = generate_candidates(tok, adus, cfg.max_dist_d, cfg.window_k)
    relations: list[Relation] = []
    if candidates:
        embeddings = source.embed_section(tok)
        adu_tags = adu_tag_id_row(tok, adus)
        encoded = [encode_candidate(c, embeddings, adu_tags)
                   for c in candidates]
        relations = predict_are(are_model, encoded)
    graph.adus, graph.relations = merge_parts_of_same(adus, relations)
    return graph


def run_corpus(adur_model: AdurModel, are_model: AreModel,
               sections: list[Section], embed_source=None,
               gold_adus: bool = False):
    """Graphs for every section, isolating failures to the section they hit.

    Returns the graphs keyed by (doc_id, section_index) plus a list of
    (key, message) entries for sections that raised.
    """
    graphs: dict[tuple[str, int], ArgumentGraph] = {}
    failures: list[tuple[tuple[str, int], str]] = []
    for section in sections:
        key = (section.doc_id, section.index)
        try:
            graphs[key] = run_pipeline(adur_model, are_model, section,
                                       embed_source=embed_source,
                                       gold_adus=gold_adus)
        except PipelineError:
            raise
        except Exception as exc:
            logger.exception("section %s.%d failed; continuing", *key)
            failures.append((key, f"{type(exc).__name__}: {exc}"))
    return graphs, failures


def graph_to_json(graph: ArgumentGraph) -> dict:
    return {
        "doc_id": graph.doc_id,
        "section_index": graph.section_index,
        "adus": [
            {
                "id": m.id,
                "type": m.adu_type,
                "start": m.fragments[0].start,
                "end": m.fragments[-1].end,
                "fragments": [
                    {"id": f.id, "start": f.start, "end": f.end}
                    for f in m.fragments
                ],
            }
            for m in graph.adus
        ],
        "relations": [
            {"head": r.head, "tail": r.tail, "label": r.label}
            for r in graph.relations
        ],
    }


def graph_from_json(obj: dict) -> ArgumentGraph:
    adus = []
    for a in obj["adus"]:
        fragments = tuple(
            AduSpan(id=f["id"], adu_type=a["type"], start=f["start"],
                    end=f["end"])
            for f in a["fragments"]
        )
        if not fragments:
            raise PipelineError(f"ADU {a.get('id')} has no fragments")
        adus.append(MergedAdu(fragments=fragments, adu_type=a["type"]))
    relations = [Relation(r["head"], r["tail"], r["label"])
                 for r in obj["relations"]]
    return ArgumentGraph(doc_id=obj["doc_id"],
                         section_index=obj["section_index"],
                         adus=adus, relations=relations)


def write_graphs(path: str | Path, graphs: Iterable[ArgumentGraph]) -> None:
    """One graph per line, ordered by (doc_id, section_index)."""
    ordered = sorted(graphs, key=lambda g: (g.doc_id, g.section_index))
    with open(path, "w", encoding="utf-8") as fh:
        for graph in ordered:
            fh.write(json.dumps(graph_to_json(graph), ensure_ascii=False,
                                sort_keys=True))
            fh.write("\n")


def read_graphs(path: str | Path) -> list[ArgumentGraph]:
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                graphs.append(graph_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise PipelineError(
                    f"{path}:{lineno}: bad graph record: {exc}") from exc
    return graphs
