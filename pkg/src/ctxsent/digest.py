"""Stable content digests shared by prompt rendering and the response cache."""

from __future__ import annotations

import hashlib

_SEPARATOR = b"\x1f"


def stable_digest(*parts: str) -> str:
    """SHA-256 hex digest over the parts, joined with a unit separator.

    The separator keeps ("ab", "c") and ("a", "bc") distinct.
    """
    h = hashlib.sha256()
    for i, part in enumerate(parts):
        if i:
            h.update(_SEPARATOR)
        h.update(part.encode("utf-8"))
    return h.hexdigest()


def derive_seed(*parts: object) -> int:
    """Collapse arbitrary parts into a 64-bit seed for RNG construction."""
    digest = stable_digest(*(str(p) for p in parts))
    return int(digest[:16], 16)
