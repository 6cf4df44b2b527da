"""Shared fixtures: tiny GATE-XML corpora and section builders."""

from __future__ import annotations

from pathlib import Path

import pytest

from argmine.corpus import AduSpan, Document, Relation, Section

GATE_HEADER = (
    '<?xml version="1.0" encoding="UTF-8"?>'
    '<Document xmlns:gate="http://www.gate.ac.uk">'
)


def write_gate_file(path: Path, body: str) -> Path:
    path.write_text(GATE_HEADER + body + "</Document>", encoding="utf-8")
    return path


TWO_SECTION_BODY = (
    "<H1>Intro</H1>We see that "
    '<background_claim id="A1">models work</background_claim>'
    " because "
    '<data id="A2">tables show gains</data>'
    '.\n<supports head="A2" tail="A1"/>'
    "<H1>Methods</H1>Stuff "
    '<own_claim id="A3">we do better</own_claim>'
    "."
)


@pytest.fixture
def gate_doc(tmp_path: Path) -> Path:
    return write_gate_file(tmp_path / "A01.xml", TWO_SECTION_BODY)


def make_section(text: str, adus=(), relations=(), doc_id="D", index=0,
                 char_start=0) -> Section:
    return Section(
        doc_id=doc_id,
        index=index,
        char_start=char_start,
        char_end=char_start + len(text),
        text=text,
        adus=list(adus),
        relations=list(relations),
    )


def make_doc(doc_id: str, sections) -> Document:
    return Document(
        id=doc_id,
        raw_text="".join(s.text for s in sections),
        sections=list(sections),
    )


def adu(adu_id: str, adu_type: str, start: int, end: int) -> AduSpan:
    return AduSpan(adu_id, adu_type, start, end)


def rel(head: str, tail: str, label: str) -> Relation:
    return Relation(head, tail, label)
