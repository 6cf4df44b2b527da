"""Tokenization and span <-> tag-sequence conversion (BIO2 / BIOUL)."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .corpus import AduSpan, Section

logger = logging.getLogger(__name__)

SCHEMES = ("BIO2", "BIOUL")

# Word characters clump together, every other non-space character stands alone.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class TaggingError(Exception):
    pass


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int
    char_end: int


@dataclass
class TokenizedSection:
    section: Section
    tokens: list[Token]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]


@dataclass(frozen=True)
class TagSequence:
    scheme: str
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown tagging scheme {self.scheme!r}")

    def __len__(self) -> int:
        return len(self.tags)


def tokenize(section: Section) -> TokenizedSection:
    """Deterministic whitespace+punctuation segmentation with char offsets.

    Offsets are absolute (same coordinate system as the ADU annotations).
    """
    base = section.char_start
    tokens = [
        Token(m.group(), base + m.start(), base + m.end())
        for m in _TOKEN_RE.finditer(section.text)
    ]
    return TokenizedSection(section=section, tokens=tokens)


def tag_vocabulary(scheme: str, classes: tuple[str, ...]) -> list[str]:
    """Deterministic tag list: O first, then per class in the given order."""
    if scheme not in SCHEMES:
        raise TaggingError(f"unknown tagging scheme {scheme!r}")
    prefixes = ("B", "I") if scheme == "BIO2" else ("B", "I", "L", "U")
    tags = ["O"]
    for cls in classes:
        tags.extend(f"{p}-{cls}" for p in prefixes)
    return tags


def align_adu_to_tokens(tok: TokenizedSection, adu: AduSpan) -> tuple[int, int] | None:
    """Token index range [t0, t1) covering the ADU's characters.

    Boundaries that fall inside a token expand to the covering token, with a
    warning.  Returns None when the ADU covers no token at all.
    """
    t0 = t1 = None
    for i, t in enumerate(tok.tokens):
        if t.char_end > adu.start and t.char_start < adu.end:
            if t0 is None:
                t0 = i
            t1 = i + 1
    if t0 is None:
        logger.warning("ADU %s covers no token; skipped", adu.id)
        return None
    if tok.tokens[t0].char_start != adu.start or tok.tokens[t1 - 1].char_end != adu.end:
        logger.warning("ADU %s is not token-aligned; expanded to covering tokens", adu.id)
    return t0, t1


def encode_spans(
    tok: TokenizedSection, adus: list[AduSpan], scheme: str = "BIOUL"
) -> TagSequence:
    """Encode non-overlapping ADU spans as per-token tags."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown tagging scheme {scheme!r}")
    tags = ["O"] * len(tok.tokens)
    owner: list[str | None] = [None] * len(tok.tokens)
    for adu in sorted(adus, key=lambda a: (a.start, a.end)):
        span = align_adu_to_tokens(tok, adu)
        if span is None:
            continue
        t0, t1 = span
        for i in range(t0, t1):
            if owner[i] is not None:
                raise TaggingError(
                    f"overlapping ADUs {owner[i]!r} and {adu.id!r} at token {i}"
                )
            owner[i] = adu.id
        n = t1 - t0
        if scheme == "BIO2":
            tags[t0] = f"B-{adu.adu_type}"
            for i in range(t0 + 1, t1):
                tags[i] = f"I-{adu.adu_type}"
        else:
            if n == 1:
                tags[t0] = f"U-{adu.adu_type}"
            else:
                tags[t0] = f"B-{adu.adu_type}"
                for i in range(t0 + 1, t1 - 1):
                    tags[i] = f"I-{adu.adu_type}"
                tags[t1 - 1] = f"L-{adu.adu_type}"
    return TagSequence(scheme=scheme, tags=tuple(tags))


def _split_tag(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[0] in "BILU" and tag[1] == "-":
        return tag[0], tag[2:]
    # Anything unparseable decodes as outside.
    return "O", None


def decode_tags(tags: TagSequence, tok: TokenizedSection,
                id_prefix: str = "p") -> list[AduSpan]:
    """Total decoder: extract spans, repairing invalid transitions.

    Repair policy: an orphan I/L opens a new span (I acts as B, a lone L as U);
    a class change inside a span closes the previous span first.
    """
    if len(tags) != len(tok.tokens):
        raise TaggingError(
            f"tag count {len(tags)} does not match token count {len(tok.tokens)}"
        )
    spans: list[tuple[str, int, int]] = []  # (class, t0, t1)
    open_cls: str | None = None
    open_start = 0

    def close(upto: int) -> None:
        nonlocal open_cls
        if open_cls is not None:
            spans.append((open_cls, open_start, upto))
            open_cls = None

    for i, tag in enumerate(tags.tags):
        prefix, cls = _split_tag(tag)
        if prefix == "O":
            close(i)
        elif prefix == "B":
            close(i)
            open_cls, open_start = cls, i
        elif prefix == "I":
            if open_cls != cls:
                close(i)
                open_cls, open_start = cls, i
        elif prefix == "L":
            if open_cls == cls:
                close(i + 1)
            else:
                close(i)
                spans.append((cls, i, i + 1))
        elif prefix == "U":
            close(i)
            spans.append((cls, i, i + 1))
    close(len(tags))

    out = []
    for n, (cls, t0, t1) in enumerate(spans):
        out.append(
            AduSpan(
                id=f"{id_prefix}{n}",
                adu_type=cls,
                start=tok.tokens[t0].char_start,
                end=tok.tokens[t1 - 1].char_end,
            )
        )
    return out


def convert_tags(tags: TagSequence, tok: TokenizedSection, scheme: str) -> TagSequence:
    """Re-encode a tag sequence under another scheme (via decode/encode)."""
    return encode_spans(tok, decode_tags(tags, tok), scheme)


def token_class_labels(tags: TagSequence) -> list[str]:
    """Per-token class labels with the position prefix stripped ('O' kept)."""
    out = []
    for tag in tags.tags:
        _, cls = _split_tag(tag)
        out.append(cls if cls is not None else "O")
    return out
