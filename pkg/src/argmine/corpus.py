"""Annotated-corpus data model and the Sci-Arg GATE-XML reader.

The reader expects UTF-8 files of the shape

    <?xml version="1.0" encoding="UTF-8"?>
    <Document xmlns:gate="http://www.gate.ac.uk">
    <H1>Some heading</H1>
    running text with <background_claim id="A1">inline ADU markup</background_claim>
    and relation elements like <supports head="A2" tail="A1"/> ...
    </Document>

ADU annotations are inline wrapper elements named after their type
(``background_claim``, ``own_claim``, ``data``) carrying an ``id`` attribute.
Relations are empty elements named after their label with ``head``/``tail``
attributes.  Section markers (``<H1>...</H1>``) and any other non-annotation
element are kept as literal text in the extracted document, so the document
text seen downstream still contains them.  All character offsets refer to
that extracted text.
"""

from __future__ import annotations

import json
import logging
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

ADU_TYPES = ("background_claim", "own_claim", "data")
RELATION_LABELS = ("supports", "contradicts", "semantically_same", "parts_of_same")

# Annotations in this file are broken upstream; it is excluded by id so parsing
# stays deterministic instead of relying on catch-and-skip.
EXCLUDED_DOC_IDS = frozenset({"A28"})

TRAIN_SPLIT_SIZE = 30

_HEADER_RE = re.compile(
    r'<\?xml[^>]*>[^<]*<Document xmlns:gate="http://www.gate.ac.uk"[^>]*>[^<]*'
)
_SECTION_MARKER_RE = re.compile(r"<H1>", re.IGNORECASE)


class CorpusError(Exception):
    """Raised for corpus-level failures (bad splits, broken interchange files)."""


class CorpusParseError(CorpusError):
    """Raised when a single corpus file cannot be parsed; names the file."""


@dataclass(frozen=True)
class AduSpan:
    """One argumentative discourse unit as a character span (end exclusive)."""

    id: str
    adu_type: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.adu_type not in ADU_TYPES:
            raise ValueError(f"unknown ADU type {self.adu_type!r}")
        if not self.start < self.end:
            raise ValueError(f"empty ADU span {self.id!r}: [{self.start}, {self.end})")

    @property
    def char_length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Relation:
    """Directed relation between two ADU ids."""

    head: str
    tail: str
    label: str

    def __post_init__(self) -> None:
        if self.label not in RELATION_LABELS:
            raise ValueError(f"unknown relation label {self.label!r}")
        if self.head == self.tail:
            raise ValueError(f"self-relation on {self.head!r}")


@dataclass
class Section:
    """A contiguous slice of a document with its same-section annotations."""

    doc_id: str
    index: int
    char_start: int
    char_end: int
    text: str
    adus: list[AduSpan] = field(default_factory=list)
    relations: list[Relation] = field(default_factory=list)

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.index)

    def adu_by_id(self, adu_id: str) -> AduSpan:
        for adu in self.adus:
            if adu.id == adu_id:
                return adu
        raise KeyError(adu_id)


@dataclass
class Document:
    """A parsed corpus document: header-stripped text split into sections.

    ``dropped_relations`` keeps annotations whose endpoints ended up in
    different sections (or could not be resolved); they are excluded from
    modelling but still counted by :func:`label_stats`.
    """

    id: str
    raw_text: str
    sections: list[Section] = field(default_factory=list)
    dropped_relations: list[Relation] = field(default_factory=list)


@dataclass(frozen=True)
class MergedAdu:
    """Fragments of one (possibly non-contiguous) ADU, sorted by start."""

    fragments: tuple[AduSpan, ...]
    adu_type: str

    @property
    def id(self) -> str:
        return self.fragments[0].id

    @property
    def char_length(self) -> int:
        return sum(f.char_length for f in self.fragments)


def strip_header(raw: str) -> str:
    """Remove the leading XML declaration and GATE Document open tag.

    Returns the input unchanged (with a warning) when no header matches, so
    the operation is idempotent on already-stripped text.
    """
    m = _HEADER_RE.match(raw)
    if m is None:
        logger.warning("no GATE header found at start of text; left unchanged")
        return raw
    return raw[m.end():]


def split_sections(doc_text: str) -> list[tuple[int, int]]:
    """Character ranges of the document's sections.

    A new section starts at every ``<H1>`` occurrence (case-insensitive); the
    marker itself stays in the section text.  Text before the first marker
    becomes section 0 when non-empty.  With no markers the whole text is one
    section.
    """
    starts = [m.start() for m in _SECTION_MARKER_RE.finditer(doc_text)]
    if not starts:
        return [(0, len(doc_text))]
    bounds: list[tuple[int, int]] = []
    if starts[0] > 0:
        bounds.append((0, starts[0]))
    for i, s in enumerate(starts):
        e = starts[i + 1] if i + 1 < len(starts) else len(doc_text)
        bounds.append((s, e))
    return bounds


def _serialize_open_tag(elem: ET.Element) -> str:
    attrs = "".join(f' {k}="{v}"' for k, v in elem.attrib.items())
    return f"<{elem.tag}{attrs}>"


def _parse_document_element(
    root: ET.Element, doc_id: str
) -> tuple[str, list[AduSpan], list[Relation]]:
    """Flatten the Document element into text plus standoff annotations.

    ADU wrapper tags are removed (their content stays), relation elements are
    removed entirely, and every other element is re-serialized literally so it
    survives as plain text.  The text node before the first child is dropped,
    mirroring what the header-strip pattern consumes.
    """
    parts: list[str] = []
    pos = 0
    adus: list[AduSpan] = []
    relations: list[Relation] = []
    seen_ids: set[str] = set()

    def emit(s: str) -> None:
        nonlocal pos
        parts.append(s)
        pos += len(s)

    def walk_children(elem: ET.Element) -> None:
        if elem.text:
            emit(elem.text)
        for child in elem:
            walk(child)
            if child.tail:
                emit(child.tail)

    def walk(elem: ET.Element) -> None:
        tag = elem.tag.lower()
        if tag in RELATION_LABELS:
            head = elem.attrib.get("head")
            tail = elem.attrib.get("tail")
            if not head or not tail:
                raise CorpusParseError(
                    f"{doc_id}: relation element <{elem.tag}> needs head and tail"
                )
            if len(elem) or (elem.text and elem.text.strip()):
                raise CorpusParseError(
                    f"{doc_id}: relation element <{elem.tag}> must be empty"
                )
            relations.append(Relation(head, tail, tag))
        elif tag in ADU_TYPES:
            adu_id = elem.attrib.get("id")
            if not adu_id:
                raise CorpusParseError(f"{doc_id}: <{elem.tag}> without id attribute")
            if adu_id in seen_ids:
                raise CorpusParseError(f"{doc_id}: duplicate annotation id {adu_id!r}")
            seen_ids.add(adu_id)
            start = pos
            walk_children(elem)
            if pos == start:
                raise CorpusParseError(f"{doc_id}: ADU {adu_id!r} covers no text")
            adus.append(AduSpan(adu_id, tag, start, pos))
        else:
            # Non-annotation markup (<H1> etc.) is kept as literal text.
            emit(_serialize_open_tag(elem))
            walk_children(elem)
            emit(f"</{elem.tag}>")

    # Skip root.text: the A.1 header pattern eats the text right after the
    # Document open tag.
    for child in root:
        walk(child)
        if child.tail:
            emit(child.tail)
    return "".join(parts), adus, relations


def parse_file(path: str | Path) -> Document:
    """Parse one GATE-XML corpus file into a :class:`Document`."""
    path = Path(path)
    doc_id = path.stem
    raw = path.read_text(encoding="utf-8")
    if _HEADER_RE.match(raw) is None:
        logger.warning("%s: file does not start with the expected GATE header", doc_id)
    try:
        root = ET.fromstring(raw)
    except ET.ParseError as exc:
        raise CorpusParseError(f"{doc_id}: malformed XML: {exc}") from exc
    if root.tag != "Document":
        raise CorpusParseError(f"{doc_id}: root element is <{root.tag}>, not <Document>")

    text, adus, relations = _parse_document_element(root, doc_id)
    bounds = split_sections(text)
    sections = [
        Section(doc_id=doc_id, index=i, char_start=s, char_end=e, text=text[s:e])
        for i, (s, e) in enumerate(bounds)
    ]

    section_of: dict[str, int] = {}
    for adu in adus:
        placed = False
        for sec in sections:
            if sec.char_start <= adu.start and adu.end <= sec.char_end:
                sec.adus.append(adu)
                section_of[adu.id] = sec.index
                placed = True
                break
        if not placed:
            logger.warning(
                "%s: ADU %s crosses a section boundary; dropped", doc_id, adu.id
            )
    for sec in sections:
        sec.adus.sort(key=lambda a: (a.start, a.end))

    doc = Document(id=doc_id, raw_text=text, sections=sections)
    for rel in relations:
        head_sec = section_of.get(rel.head)
        tail_sec = section_of.get(rel.tail)
        if head_sec is None or tail_sec is None:
            logger.warning(
                "%s: relation %s(%s, %s) has unresolved endpoint; dropped",
                doc_id, rel.label, rel.head, rel.tail,
            )
            doc.dropped_relations.append(rel)
        elif head_sec != tail_sec:
            doc.dropped_relations.append(rel)
        else:
            sections[head_sec].relations.append(rel)
    if doc.dropped_relations:
        logger.info(
            "%s: dropped %d cross-section/unresolved relations",
            doc_id, len(doc.dropped_relations),
        )
    return doc


def parse_corpus(dir_path: str | Path) -> list[Document]:
    """Parse every ``*.xml`` file in a directory, minus the excluded ids."""
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise CorpusError(f"not a corpus directory: {dir_path}")
    docs = []
    for path in sorted(dir_path.glob("*.xml")):
        if path.stem in EXCLUDED_DOC_IDS:
            logger.info("skipping excluded document %s", path.stem)
            continue
        docs.append(parse_file(path))
    docs.sort(key=lambda d: d.id)
    n_dropped = sum(len(d.dropped_relations) for d in docs)
    if n_dropped:
        logger.info("corpus: %d relations dropped in total", n_dropped)
    return docs


def make_split(docs: list[Document]) -> tuple[list[Document], list[Document]]:
    """First 30 documents (by corpus id) for training, the rest for testing."""
    if len(docs) <= TRAIN_SPLIT_SIZE:
        raise CorpusError(
            f"need more than {TRAIN_SPLIT_SIZE} documents to split, got {len(docs)}"
        )
    ordered = sorted(docs, key=lambda d: d.id)
    return ordered[:TRAIN_SPLIT_SIZE], ordered[TRAIN_SPLIT_SIZE:]


def merge_parts_of_same(
    adus: list[AduSpan], relations: list[Relation]
) -> tuple[list[MergedAdu], list[Relation]]:
    """Merge ADUs connected by parts_of_same into multi-fragment units.

    Connected components under the (undirected) parts_of_same edges become one
    :class:`MergedAdu`; every other relation is rewritten onto the component
    representatives (the smallest-start fragment's id) and deduplicated.
    """
    parent: dict[str, str] = {a.id: a.id for a in adus}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            # Deterministic under any edge ordering: smaller id becomes root.
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb

    for rel in relations:
        if rel.label != "parts_of_same":
            continue
        if rel.head not in parent or rel.tail not in parent:
            logger.warning(
                "parts_of_same(%s, %s) references unknown ADU; ignored",
                rel.head, rel.tail,
            )
            continue
        union(rel.head, rel.tail)

    groups: dict[str, list[AduSpan]] = {}
    for adu in adus:
        groups.setdefault(find(adu.id), []).append(adu)

    merged: list[MergedAdu] = []
    rep_of: dict[str, str] = {}
    for members in groups.values():
        fragments = tuple(sorted(members, key=lambda a: (a.start, a.end)))
        types = {f.adu_type for f in fragments}
        if len(types) > 1:
            logger.warning(
                "parts_of_same merges mixed ADU types %s; using %s",
                sorted(types), fragments[0].adu_type,
            )
        merged.append(MergedAdu(fragments=fragments, adu_type=fragments[0].adu_type))
    merged.sort(key=lambda m: (m.fragments[0].start, m.fragments[0].end))
    for m in merged:
        for frag in m.fragments:
            rep_of[frag.id] = m.id

    rewritten: list[Relation] = []
    seen: set[tuple[str, str, str]] = set()
    for rel in relations:
        if rel.label == "parts_of_same":
            continue
        head = rep_of.get(rel.head, rel.head)
        tail = rep_of.get(rel.tail, rel.tail)
        if head == tail:
            logger.warning(
                "%s(%s, %s) collapses to a self-relation after merging; dropped",
                rel.label, rel.head, rel.tail,
            )
            continue
        key = (head, tail, rel.label)
        if key in seen:
            continue
        seen.add(key)
        rewritten.append(Relation(head, tail, rel.label))
    return merged, rewritten


def label_stats(docs: list[Document]) -> dict[str, dict[str, int]]:
    """Exact per-class annotation counts, dropped relations included."""
    adu_counts = Counter({t: 0 for t in ADU_TYPES})
    rel_counts = Counter({l: 0 for l in RELATION_LABELS})
    for doc in docs:
        for sec in doc.sections:
            adu_counts.update(a.adu_type for a in sec.adus)
            rel_counts.update(r.label for r in sec.relations)
        rel_counts.update(r.label for r in doc.dropped_relations)
    return {"adus": dict(adu_counts), "relations": dict(rel_counts)}


def section_to_json(section: Section) -> dict:
    return {
        "doc_id": section.doc_id,
        "section_index": section.index,
        "char_start": section.char_start,
        "char_end": section.char_end,
        "text": section.text,
        "adus": [
            {"id": a.id, "type": a.adu_type, "start": a.start, "end": a.end}
            for a in section.adus
        ],
        "relations": [
            {"head": r.head, "tail": r.tail, "label": r.label}
            for r in section.relations
        ],
    }


def write_sections_jsonl(docs: list[Document], path: str | Path) -> None:
    """Canonical JSON-lines interchange: one section per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            for sec in doc.sections:
                fh.write(json.dumps(section_to_json(sec), ensure_ascii=False,
                                    sort_keys=True))
                fh.write("\n")


def section_from_json(obj: dict) -> Section:
    sec = Section(
        doc_id=obj["doc_id"],
        index=obj["section_index"],
        char_start=obj["char_start"],
        char_end=obj["char_end"],
        text=obj["text"],
    )
    if sec.char_end - sec.char_start != len(sec.text):
        raise CorpusError(
            f"{sec.doc_id}[{sec.index}]: text length does not match char range"
        )
    for a in obj.get("adus", []):
        adu = AduSpan(a["id"], a["type"], a["start"], a["end"])
        if adu.start < sec.char_start or adu.end > sec.char_end:
            raise CorpusError(
                f"{sec.doc_id}[{sec.index}]: ADU {adu.id} offsets out of bounds"
            )
        sec.adus.append(adu)
    ids = {a.id for a in sec.adus}
    for r in obj.get("relations", []):
        rel = Relation(r["head"], r["tail"], r["label"])
        if rel.head not in ids or rel.tail not in ids:
            raise CorpusError(
                f"{sec.doc_id}[{sec.index}]: relation endpoint does not resolve"
            )
        sec.relations.append(rel)
    return sec


def read_sections_jsonl(path: str | Path) -> list[Document]:
    """Load the JSON-lines interchange back into documents."""
    docs: list[Document] = []
    current: Document | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                sec = section_from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad section record: {exc}") from exc
            if current is None or current.id != sec.doc_id:
                current = Document(id=sec.doc_id, raw_text="")
                docs.append(current)
            expected = current.sections[-1].char_end if current.sections else 0
            if sec.char_start != expected:
                raise CorpusError(
                    f"{path}:{lineno}: sections of {sec.doc_id} are not contiguous"
                )
            current.sections.append(sec)
            current.raw_text += sec.text
    return docs


def iter_sections(docs: list[Document]):
    for doc in docs:
        yield from doc.sections
