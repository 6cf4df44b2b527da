"""Per-token embedding sources and the binary embedding-file format.

Two sources exist: a deterministic hash embedder (desk-scale stand-in for a
frozen contextual encoder) and a file-backed source reading precomputed
vectors.  The file format is fixed so an external dumper can produce it:

    all little-endian
    header:  8-byte magic  b"ADUEMBD1"
             u32 version   (1)
             u32 dim
    record:  u16 doc-id byte length, UTF-8 doc id
             u32 section_index
             u32 token_count
             token_count * dim  float32 values, row-major
    records repeat until EOF
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .tagging import TokenizedSection

MAGIC = b"ADUEMBD1"
VERSION = 1


class EmbeddingFileError(Exception):
    """Base class for embedding-file problems."""


class BadMagicError(EmbeddingFileError):
    pass


class BadVersionError(EmbeddingFileError):
    pass


class TruncatedFileError(EmbeddingFileError):
    def __init__(self, offset: int, what: str):
        super().__init__(f"truncated embedding file at byte {offset}: expected {what}")
        self.offset = offset


class NonFiniteValueError(EmbeddingFileError):
    pass


class TokenCountMismatch(EmbeddingFileError):
    pass


class MissingSectionError(EmbeddingFileError):
    pass


def hash_embed(token_texts: list[str], dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic unit-norm vector per token, derived from a keyed hash.

    Identical (lowercased) token texts map to identical rows; the seed selects
    an independent embedding.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    out = np.empty((len(token_texts), dim), dtype=np.float64)
    key = seed.to_bytes(8, "little", signed=True)
    cache: dict[str, np.ndarray] = {}
    n_blocks = (4 * dim + 63) // 64
    for row, text in enumerate(token_texts):
        text = text.lower()
        vec = cache.get(text)
        if vec is None:
            data = text.encode("utf-8")
            raw = b"".join(
                hashlib.blake2b(
                    data + b"\x00" + i.to_bytes(4, "little"), key=key, digest_size=64
                ).digest()
                for i in range(n_blocks)
            )
            words = np.frombuffer(raw[: 4 * dim], dtype="<u4").astype(np.float64)
            vec = words / 2147483648.0 - 1.0  # uniform in [-1, 1)
            norm = np.linalg.norm(vec)
            if norm < 1e-12:
                vec = vec.copy()
                vec[0] = 1.0
                norm = 1.0
            vec = vec / norm
            cache[text] = vec
        out[row] = vec
    return out


class HashEmbeddingSource:
    """Context-free embedder: each token depends only on its own text."""

    kind = "hash"

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def embed_tokens(self, token_texts: list[str]) -> np.ndarray:
        out = np.empty((len(token_texts), self.dim), dtype=np.float64)
        misses = [t for t in set(t.lower() for t in token_texts)
                  if t not in self._cache]
        if misses:
            rows = hash_embed(misses, self.dim, self.seed)
            for t, r in zip(misses, rows):
                self._cache[t] = r
        for i, t in enumerate(token_texts):
            out[i] = self._cache[t.lower()]
        return out

    def embed_section(self, tok: TokenizedSection) -> np.ndarray:
        return self.embed_tokens(tok.texts)


def embed_piecewise(
    embed_fn: Callable[[list[str]], np.ndarray],
    token_texts: list[str],
    max_len: int = 512,
) -> np.ndarray:
    """Embed in consecutive chunks of at most ``max_len`` tokens and concatenate."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if not token_texts:
        piece = np.asarray(embed_fn([]))
        if piece.ndim != 2:
            raise ValueError("embed_fn must return a 2-D array")
        return piece
    pieces = [
        np.asarray(embed_fn(token_texts[i:i + max_len]))
        for i in range(0, len(token_texts), max_len)
    ]
    out = np.concatenate(pieces, axis=0)
    if out.shape[0] != len(token_texts):
        raise ValueError("piecewise embedding changed the row count")
    return out


def write_embedding_file(
    path: str | Path,
    dim: int,
    records: Iterable[tuple[str, int, np.ndarray]],
) -> None:
    """Write (doc_id, section_index, matrix) records in the fixed byte layout."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, dim))
        for doc_id, section_index, matrix in records:
            matrix = np.asarray(matrix, dtype="<f4")
            if matrix.ndim != 2 or matrix.shape[1] != dim:
                raise ValueError(
                    f"record {doc_id}[{section_index}]: expected shape (n, {dim})"
                )
            id_bytes = doc_id.encode("utf-8")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<II", section_index, matrix.shape[0]))
            fh.write(matrix.tobytes(order="C"))


class FileEmbeddingSource:
    """Reads the whole embedding file into memory and serves exact lookups."""

    kind = "file"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.dim = 0
        self._records: dict[tuple[str, int], np.ndarray] = {}
        self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        pos = 0

        def need(n: int, what: str) -> bytes:
            nonlocal pos
            if pos + n > len(data):
                raise TruncatedFileError(pos, what)
            chunk = data[pos:pos + n]
            pos += n
            return chunk

        magic = need(8, "magic")
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, dim = struct.unpack("<II", need(8, "version+dim"))
        if version != VERSION:
            raise BadVersionError(f"unsupported version {version}, expected {VERSION}")
        if dim < 1:
            raise EmbeddingFileError(f"invalid dim {dim}")
        self.dim = dim
        while pos < len(data):
            (id_len,) = struct.unpack("<H", need(2, "doc-id length"))
            doc_id = need(id_len, "doc id").decode("utf-8")
            section_index, token_count = struct.unpack("<II", need(8, "record header"))
            raw = need(4 * dim * token_count, "vector data")
            matrix = np.frombuffer(raw, dtype="<f4").reshape(token_count, dim)
            if not np.all(np.isfinite(matrix)):
                raise NonFiniteValueError(
                    f"non-finite values in record {doc_id}[{section_index}]"
                )
            key = (doc_id, section_index)
            if key in self._records:
                raise EmbeddingFileError(f"duplicate record {doc_id}[{section_index}]")
            self._records[key] = matrix

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._records

    def keys(self):
        return self._records.keys()

    def matrix(self, doc_id: str, section_index: int) -> np.ndarray:
        try:
            return self._records[(doc_id, section_index)]
        except KeyError:
            raise MissingSectionError(
                f"no embeddings for {doc_id}[{section_index}] in {self.path}"
            ) from None

    def embed_section(self, tok: TokenizedSection) -> np.ndarray:
        sec = tok.section
        matrix = self.matrix(sec.doc_id, sec.index)
        if matrix.shape[0] != len(tok.tokens):
            raise TokenCountMismatch(
                f"{sec.doc_id}[{sec.index}]: file has {matrix.shape[0]} vectors "
                f"but the tokenizer produced {len(tok.tokens)} tokens"
            )
        return matrix.astype(np.float64)


def load_embedding_file(path: str | Path) -> FileEmbeddingSource:
    return FileEmbeddingSource(path)


def make_source(spec: str):
    """Build a source from a spec string: ``hash:<dim>[:<seed>]`` or ``file:<path>``."""
    kind, _, rest = spec.partition(":")
    if kind == "hash":
        dim_s, _, seed_s = rest.partition(":")
        if not dim_s:
            raise ValueError("hash source needs a dimension, e.g. hash:64")
        return HashEmbeddingSource(dim=int(dim_s), seed=int(seed_s) if seed_s else 0)
    if kind == "file":
        if not rest:
            raise ValueError("file source needs a path, e.g. file:emb.bin")
        return FileEmbeddingSource(rest)
    raise ValueError(f"unknown embedding source kind {kind!r}")
