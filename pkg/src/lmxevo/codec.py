"""Per-bit underscore codec for bitstring genotypes.

Engine tokenizers may merge runs like "00" or "111" into single tokens,
which breaks per-bit probability extraction. Separating every bit with an
underscore ("0011" -> "_0_0_1_1") keeps each bit its own token.
"""

from __future__ import annotations

from typing import Optional

CODEC_PLAIN = "plain"
CODEC_UNDERSCORE = "underscore"


def is_bitstring(text: str) -> bool:
    return bool(text) and all(c in "01" for c in text)


def encode_underscore(bits: str) -> str:
    if not is_bitstring(bits):
        raise ValueError(f"not a bitstring: {bits!r}")
    return "".join("_" + c for c in bits)


def decode_underscore(text: str) -> Optional[str]:
    """Inverse of encode_underscore; returns None on malformed input."""
    if len(text) % 2 != 0:
        return None
    bits = []
    for i in range(0, len(text), 2):
        if text[i] != "_" or text[i + 1] not in "01":
            return None
        bits.append(text[i + 1])
    return "".join(bits)


def encode(bits: str, codec: str) -> str:
    if codec == CODEC_PLAIN:
        return bits
    if codec == CODEC_UNDERSCORE:
        return encode_underscore(bits)
    raise ValueError(f"unknown codec: {codec!r}")


def decode(text: str, codec: str) -> Optional[str]:
    if codec == CODEC_PLAIN:
        return text if is_bitstring(text) else None
    if codec == CODEC_UNDERSCORE:
        return decode_underscore(text)
    raise ValueError(f"unknown codec: {codec!r}")
