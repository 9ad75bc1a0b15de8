"""Counter-based random streams.

A stream is identified by ``(master, replica, tag)``.  The triple is
hashed with SHA-256; the first 16 bytes become the 128-bit Philox key and
the counter starts at zero.  The same triple always yields the same
numbers, regardless of which worker or thread asks for it.
"""
from __future__ import annotations

import hashlib

import numpy as np


def stream_key(master: int, replica: int, tag: str) -> tuple[int, int]:
    digest = hashlib.sha256(f"{int(master)}:{int(replica)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little"), int.from_bytes(digest[8:16], "little")


def stream(master: int, replica: int = 0, tag: str = "") -> np.random.Generator:
    k0, k1 = stream_key(master, replica, tag)
    key = np.array([k0, k1], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finaliser."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * _M1) & _MASK
    x = ((x ^ (x >> 27)) * _M2) & _MASK
    return x ^ (x >> 31)


def label_bits(u: float) -> int:
    return int(np.float64(u).view(np.uint64))


def pair_label(u: float, v: float) -> int:
    """Symmetric 64-bit label for an unordered pair of [0,1] labels."""
    a, b = sorted((label_bits(u), label_bits(v)))
    return mix64(mix64(a) ^ ((b * 0x9E3779B97F4A7C15) & _MASK))
