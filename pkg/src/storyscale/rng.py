"""Keyed deterministic random streams.

Every random draw in the package comes from a stream keyed by a tuple of
labels (a namespace string plus seeds/indices). Keys are hashed into a
128-bit Philox counter-based generator, so a stream's output depends only
on its key, never on draw order elsewhere in the program. This is what
makes batched generation order-independent and the anchor sample's stream
identical across batches.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEP = "\x1f"


def stream_key(*parts) -> int:
    """128-bit integer key derived from the canonical text of ``parts``."""
    text = _SEP.join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "big")


def stream(*parts) -> np.random.Generator:
    """Independent generator for a key tuple, e.g. stream("bits", seed, n, s)."""
    return np.random.Generator(np.random.Philox(key=stream_key(*parts)))


def stream_id(*parts) -> str:
    """Human-readable stream label recorded in run manifests."""
    return "/".join(str(p) for p in parts)
