"""Character tokenization with blank interspersal.

The vocabulary is a blank plus the lowercase letters and the space.
Normalization lowercases, drops non-whitelisted characters, collapses
whitespace runs and strips the ends; tokenization then intersperses the
blank between, before and after every character, so n characters become
2n + 1 ids.  The blank sites give the aligner somewhere to park silence.
"""

from __future__ import annotations

BLANK_ID = 0
_CHARS = "abcdefghijklmnopqrstuvwxyz "
CHAR_TO_ID = {c: i + 1 for i, c in enumerate(_CHARS)}
ID_TO_CHAR = {i: c for c, i in CHAR_TO_ID.items()}
VOCAB_SIZE = len(_CHARS) + 1


class TextError(ValueError):
    pass


def normalize_text(text):
    lowered = text.lower()
    kept = "".join(c for c in lowered if c in CHAR_TO_ID)
    collapsed = " ".join(kept.split())
    return collapsed


def tokenize(text):
    """Token ids with blanks interspersed; int list of odd length."""
    normalized = normalize_text(text)
    if not normalized:
        raise TextError(f"text {text!r} is empty after normalization")
    chars = [CHAR_TO_ID[c] for c in normalized]
    ids = [BLANK_ID] * (2 * len(chars) + 1)
    ids[1::2] = chars
    return ids
