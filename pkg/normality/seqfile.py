"""NSEQ1 sequence files: magic, alphabet size, little-endian length, one byte per symbol."""
from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from .core import Alphabet, SymbolStream, SYMBOL_DTYPE, ValidationError

logger = logging.getLogger(__name__)

MAGIC = b"NSEQ1"
HEADER = struct.Struct("<5sBQ")


def write_nseq(path: str | Path, alphabet_size: int, symbols: np.ndarray) -> None:
    if not 2 <= alphabet_size <= 255:
        raise ValidationError(f"NSEQ1 supports alphabets of 2..255 symbols, got {alphabet_size}")
    data = np.asarray(symbols)
    if data.size and (data.min() < 0 or data.max() >= alphabet_size):
        raise ValidationError("Sequence contains symbol indices outside the alphabet")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, alphabet_size, int(data.size)))
        f.write(data.astype(np.uint8).tobytes())
    logger.debug(f"Wrote {data.size} symbols (k={alphabet_size}) to {path}")


def read_nseq(path: str | Path) -> tuple[int, np.ndarray]:
    """Return (alphabet size, symbols)."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ValidationError(f"{path}: truncated NSEQ1 header")
    magic, k, n = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    body = raw[HEADER.size:]
    if len(body) != n:
        raise ValidationError(f"{path}: header declares {n} symbols but file holds {len(body)}")
    symbols = np.frombuffer(body, dtype=np.uint8).astype(SYMBOL_DTYPE)
    if n and symbols.max() >= k:
        raise ValidationError(f"{path}: symbol index {int(symbols.max())} out of range for k={k}")
    return k, symbols


class ArrayStream(SymbolStream):
    """Replays a finite user-supplied sequence; reading past its end is a validation error."""

    def __init__(self, alphabet: Alphabet, symbols: np.ndarray) -> None:
        super().__init__(alphabet)
        self._symbols = np.asarray(symbols, dtype=SYMBOL_DTYPE)
        self._cursor = 0

    def _produce(self, count: int) -> np.ndarray:
        end = self._cursor + count
        if end > len(self._symbols):
            raise ValidationError(
                f"Input sequence exhausted: requested symbol {end - 1} of a {len(self._symbols)}-symbol file"
            )
        out = self._symbols[self._cursor:end]
        self._cursor = end
        return out

    def _fill_size(self) -> int:
        return max(1, min(1024, len(self._symbols) - self._cursor))

    @property
    def length(self) -> int:
        return len(self._symbols)


def file_stream(path: str | Path, alphabet: Alphabet | None = None) -> ArrayStream:
    k, symbols = read_nseq(path)
    if alphabet is None:
        alphabet = Alphabet.of_size(k)
    elif alphabet.size != k:
        raise ValidationError(f"{path}: file alphabet size {k} does not match configured alphabet size {alphabet.size}")
    logger.info(f"Loaded {len(symbols)} symbols over {k} letters from {path}")
    return ArrayStream(alphabet, symbols)
