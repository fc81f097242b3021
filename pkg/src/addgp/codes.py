"""Greedy binary codes with a guaranteed minimum Hamming distance.

Words are read as binary numbers with position 0 most significant, so integer
order is lexicographic order on strings. The greedy lexicographic code
(lexicode) is linear (Conway & Sloane, 1986), which lets us grow it one basis
vector at a time: the next basis vector is the smallest word at distance
``>= min_dist`` from the span found so far.

Two search routes are used:

* ``M <= EXHAUSTIVE_MAX_M``: a distance transform over the whole hypercube,
  updated in O(2**M) per basis vector.
* larger ``M``: an increasing scan over candidates restricted to the last
  63 positions, stopped once ``max_words`` words exist. If the scan budget
  runs out, a seeded randomized greedy takes over.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXHAUSTIVE_MAX_M = 22
SCAN_BUDGET = 1 << 22
SCAN_CHUNK = 1 << 15


class CodeDomainError(ValueError):
    pass


@dataclass
class BinaryCode:
    M: int
    words: np.ndarray  # (N, M) bool
    min_dist: int
    method: str = "lexicode"

    def __len__(self):
        return self.words.shape[0]

    def as_strings(self) -> list:
        return ["".join("1" if b else "0" for b in w) for w in self.words]


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a)


def _ints_to_bits(ints: np.ndarray, M: int) -> np.ndarray:
    ints = np.asarray(ints, dtype=np.uint64)
    nbits = min(M, 64)
    shifts = np.arange(nbits - 1, -1, -1, dtype=np.uint64)
    low = ((ints[:, None] >> shifts[None, :]) & np.uint64(1)).astype(bool)
    out = np.zeros((ints.size, M), dtype=bool)
    out[:, M - nbits:] = low
    return out


def _span(basis: list) -> np.ndarray:
    words = np.zeros(1, dtype=np.uint64)
    for b in basis:
        words = np.concatenate([words, words ^ np.uint64(b)])
    return np.sort(words)


def _lexicode_exhaustive(M: int, d: int, max_words: int | None) -> list:
    universe = np.arange(1 << M, dtype=np.uint32)
    dist = np.bitwise_count(universe).astype(np.uint8)
    basis = []
    while max_words is None or (1 << len(basis)) < max_words:
        hit = np.flatnonzero(dist >= d)
        if hit.size == 0:
            break
        x = int(hit[0])
        basis.append(x)
        dist = np.minimum(dist, dist[universe ^ np.uint32(x)])
    return basis


def _lexicode_scan(M: int, d: int, max_words: int, budget: int) -> list | None:
    limit = 1 << min(M, 63)
    code = np.zeros(1, dtype=np.uint64)
    basis = []
    start = 1
    scanned = 0
    while (1 << len(basis)) < max_words:
        found = None
        while found is None:
            if start >= limit:
                return basis
            if scanned >= budget:
                return None
            stop = min(start + SCAN_CHUNK, limit)
            cand = np.arange(start, stop, dtype=np.uint64)
            scanned += cand.size
            mind = np.full(cand.size, 255, dtype=np.uint8)
            for block in np.array_split(code, max(1, code.size // 256)):
                dd = _popcount(cand[:, None] ^ block[None, :]).min(axis=1).astype(np.uint8)
                np.minimum(mind, dd, out=mind)
            ok = np.flatnonzero(mind >= d)
            if ok.size:
                found = int(cand[ok[0]])
                start = found + 1
            else:
                start = stop
        basis.append(found)
        code = np.concatenate([code, code ^ np.uint64(found)])
    return basis


def _random_greedy(M: int, d: int, max_words: int, seed: int, max_draws: int = 200_000) -> np.ndarray:
    rng = np.random.default_rng(seed)
    words = [np.zeros(M, dtype=bool)]
    packed = [np.packbits(words[0])]
    draws = 0
    while len(words) < max_words and draws < max_draws:
        w = rng.random(M) < 0.5
        draws += 1
        pw = np.packbits(w)
        P = np.array(packed)
        dist = np.unpackbits(P ^ pw[None, :], axis=1).sum(axis=1)
        if dist.min() >= d:
            words.append(w)
            packed.append(pw)
    return np.array(words)


def pairwise_min_distance(words: np.ndarray) -> int:
    """Exact minimum pairwise Hamming distance (O(N^2 M / 8))."""
    N = words.shape[0]
    if N < 2:
        return words.shape[1] + 1 if words.ndim == 2 else 0
    packed = np.packbits(words, axis=1)
    best = words.shape[1]
    for i in range(N - 1):
        x = packed[i + 1:] ^ packed[i]
        best = min(best, int(np.bitwise_count(x).sum(axis=1).min()))
    return best


def vg_code(M: int, min_dist: int, max_words: int | None = None, seed: int = 0) -> BinaryCode:
    """Greedy lexicographic binary code of length ``M`` and minimum distance ``min_dist``.

    With ``max_words=None`` the full lexicode is built; that is only possible
    for ``M <= EXHAUSTIVE_MAX_M``, and for longer codes the construction stops
    at the Varshamov-Gilbert count ``2 ** ceil(M / 8)``. The all-zero word
    always comes first.
    """
    M = int(M)
    min_dist = int(min_dist)
    if M < 8:
        raise CodeDomainError(f"block length M={M} < 8 is outside the Varshamov-Gilbert regime")
    if not 1 <= min_dist <= M:
        raise CodeDomainError(f"min_dist={min_dist} must lie in [1, M={M}]")
    if max_words is not None and max_words < 1:
        raise CodeDomainError("max_words must be >= 1")
    if max_words is None and M > EXHAUSTIVE_MAX_M:
        max_words = 1 << math.ceil(M / 8)

    method = "lexicode"
    if M <= EXHAUSTIVE_MAX_M:
        basis = _lexicode_exhaustive(M, min_dist, max_words)
    else:
        basis = _lexicode_scan(M, min_dist, max_words, SCAN_BUDGET)
    if basis is not None:
        ints = _span(basis)
        if max_words is not None:
            ints = ints[:max_words]
        words = _ints_to_bits(ints, M)
        # a subset of a linear code is at least as far apart as the code's
        # minimum nonzero weight
        full = _span(basis)
        achieved = int(_popcount(full[1:]).min()) if full.size > 1 else M + 1
    else:
        method = "random-greedy"
        words = _random_greedy(M, min_dist, max_words, seed)
        achieved = pairwise_min_distance(words)
    if achieved < min_dist:
        raise AssertionError(f"construction produced distance {achieved} < {min_dist}")
    return BinaryCode(M, words, min_dist, method)
