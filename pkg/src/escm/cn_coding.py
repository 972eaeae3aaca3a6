"""Combination-network coding over GF(2^8).

A combination network C(n, k) has one sender, ``n`` relays and receivers that
each listen to ``k`` relays. Every relay channel carries a Vandermonde coding
vector ``(1, a, a^2, ..., a^(k-1))``; a receiver holding ``k`` packets with
pairwise-distinct generators can always invert its system, because the
Vandermonde determinant is the product of generator differences.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field

import numpy as np

from . import gf256

MAX_GENERATORS = 255


class NotDecodable(ValueError):
    """Raised when received coding vectors are linearly dependent."""

    def __init__(self, dependent):
        self.dependent = tuple(dependent)
        super().__init__(f"coding vectors are dependent; redundant rows {self.dependent}")


@dataclass(frozen=True)
class CodingVector:
    generator: int
    length: int

    def __post_init__(self):
        if not 0 <= self.generator < 256:
            raise ValueError(f"generator {self.generator} is not a GF(2^8) element")
        if self.length < 1:
            raise ValueError("coding vector length must be >= 1")

    @property
    def components(self) -> tuple:
        return tuple(gf256.power(self.generator, j) for j in range(self.length))


@dataclass(frozen=True)
class CnTopology:
    """One sender, ``n`` relays, receivers each wired to exactly ``k`` relays."""

    n: int
    k: int
    receivers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        for relays in self.receivers:
            if len(relays) != self.k or len(set(relays)) != self.k:
                raise ValueError(f"receiver relay set {relays} does not have {self.k} distinct relays")
            if any(not 0 <= r < self.n for r in relays):
                raise ValueError(f"receiver relay set {relays} references unknown relay")

    @property
    def m(self) -> int:
        return len(self.receivers)

    @classmethod
    def combination(cls, n: int, k: int) -> "CnTopology":
        """Full C(n, k): one receiver per k-subset of relays."""
        return cls(n, k, tuple(itertools.combinations(range(n), k)))

    @classmethod
    def random(cls, n: int, k: int, m: int, rng: np.random.Generator) -> "CnTopology":
        receivers = tuple(tuple(sorted(rng.choice(n, size=k, replace=False).tolist())) for _ in range(m))
        return cls(n, k, receivers)


@dataclass(frozen=True)
class EncodedMessage:
    payload: bytes
    vector: CodingVector
    relay: int = -1


def vandermonde_matrix(generators) -> np.ndarray:
    gens = [int(g) for g in generators]
    k = len(gens)
    if k < 1:
        raise ValueError("need at least one generator")
    return np.array([[gf256.power(a, j) for j in range(k)] for a in gens], dtype=np.uint8)


def _row_reduce(matrix):
    """Forward elimination. Returns (reduced copy, pivot row order, redundant original rows)."""
    M = np.array(matrix, dtype=np.uint8, copy=True)
    rows, cols = M.shape
    order = list(range(rows))
    rank = 0
    for c in range(cols):
        pivot = next((r for r in range(rank, rows) if M[r, c]), None)
        if pivot is None:
            continue
        if pivot != rank:
            M[[rank, pivot]] = M[[pivot, rank]]
            order[rank], order[pivot] = order[pivot], order[rank]
        p_inv = gf256.inv(int(M[rank, c]))
        for r in range(rank + 1, rows):
            if M[r, c]:
                f = gf256.mul(int(M[r, c]), p_inv)
                M[r] ^= gf256.mul_vec(f, M[rank])
        rank += 1
        if rank == rows:
            break
    return M, rank, order


def determinant(matrix) -> int:
    """Determinant over GF(2^8) by Gaussian elimination.

    Row swaps flip the sign, but -1 == 1 in characteristic 2, so the
    determinant is simply the product of the pivots.
    """
    M = np.asarray(matrix, dtype=np.uint8)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("determinant needs a square matrix")
    R, rank, _ = _row_reduce(M)
    if rank < M.shape[0]:
        return 0
    det = 1
    for i in range(M.shape[0]):
        det = gf256.mul(det, int(R[i, i]))
    return det


def rank(matrix) -> int:
    return _row_reduce(np.atleast_2d(np.asarray(matrix, dtype=np.uint8)))[1]


def vandermonde_product(generators) -> int:
    """prod_{i<j} (a_i - a_j), with field subtraction."""
    out = 1
    gens = [int(g) for g in generators]
    for i, j in itertools.combinations(range(len(gens)), 2):
        out = gf256.mul(out, gf256.sub(gens[i], gens[j]))
    return out


def is_decodable(vectors) -> bool:
    vectors = list(vectors)
    if not vectors:
        return False
    lengths = {v.length for v in vectors}
    if len(lengths) != 1:
        raise ValueError("coding vectors have unequal lengths")
    if len(vectors) != vectors[0].length:
        return False
    return determinant(vandermonde_matrix([v.generator for v in vectors])) != 0


def assign_vectors(topology: CnTopology, rng: np.random.Generator | None = None) -> dict:
    """Give every relay a distinct nonzero generator; vector length is ``k``.

    Without an rng the generators are 1, 2, 3, ... in relay order.
    """
    if topology.n > MAX_GENERATORS:
        raise ValueError(f"GF(2^8) has only {MAX_GENERATORS} nonzero generators, topology needs {topology.n}")
    if rng is None:
        gens = list(range(1, topology.n + 1))
    else:
        gens = (rng.choice(MAX_GENERATORS, size=topology.n, replace=False) + 1).tolist()
    return {relay: CodingVector(int(g), topology.k) for relay, g in enumerate(gens)}


def _as_matrix(messages) -> np.ndarray:
    rows = [np.frombuffer(bytes(m), dtype=np.uint8) for m in messages]
    if len({len(r) for r in rows}) > 1:
        raise ValueError("messages in a batch must have equal length")
    return np.vstack(rows)


def encode(messages, vector: CodingVector, relay: int = -1) -> EncodedMessage:
    """Symbol-wise sum_j vector_j * message_j."""
    messages = list(messages)
    if len(messages) != vector.length:
        raise ValueError(f"batch of {len(messages)} messages does not match vector length {vector.length}")
    X = _as_matrix(messages)
    coeffs = np.array(vector.components, dtype=np.uint8).reshape(1, -1)
    return EncodedMessage(gf256.matmul(coeffs, X)[0].tobytes(), vector, relay)


def _invert(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    aug = np.concatenate([M.astype(np.uint8), np.eye(n, dtype=np.uint8)], axis=1)
    for c in range(n):
        pivot = next((r for r in range(c, n) if aug[r, c]), None)
        if pivot is None:
            raise ZeroDivisionError
        aug[[c, pivot]] = aug[[pivot, c]]
        aug[c] = gf256.mul_vec(gf256.inv(int(aug[c, c])), aug[c])
        for r in range(n):
            if r != c and aug[r, c]:
                aug[r] ^= gf256.mul_vec(int(aug[r, c]), aug[c])
    return aug[:, n:]


def decode(encoded) -> list:
    """Recover the original batch from ``k`` encoded messages."""
    encoded = list(encoded)
    if not encoded:
        raise ValueError("nothing to decode")
    k = encoded[0].vector.length
    if len(encoded) != k or any(e.vector.length != k for e in encoded):
        raise ValueError(f"need exactly {k} encoded messages with length-{k} vectors")
    V = np.array([e.vector.components for e in encoded], dtype=np.uint8)
    try:
        V_inv = _invert(V)
    except ZeroDivisionError:
        raise NotDecodable(_redundant_rows(V)) from None
    Y = _as_matrix([e.payload for e in encoded])
    X = gf256.matmul(V_inv, Y)
    return [row.tobytes() for row in X]


def _redundant_rows(V: np.ndarray) -> list:
    kept, redundant = [], []
    for i in range(V.shape[0]):
        if rank(V[kept + [i]]) == len(kept) + 1:
            kept.append(i)
        else:
            redundant.append(i)
    return redundant


def pack_header(generators, payload_length: int) -> bytes:
    """Batch header: k (1 byte), k generator bytes, payload length (2 bytes, big-endian)."""
    gens = [int(g) for g in generators]
    if not 1 <= len(gens) <= 255:
        raise ValueError("batch size must fit in one byte")
    if not 0 <= payload_length <= 0xFFFF:
        raise ValueError("payload length must fit in two bytes")
    return struct.pack(f">B{len(gens)}BH", len(gens), *gens, payload_length)


def unpack_header(data: bytes):
    """Inverse of :func:`pack_header`; returns (generators, payload_length, header_size)."""
    if len(data) < 1:
        raise ValueError("truncated header")
    k = data[0]
    size = 1 + k + 2
    if len(data) < size:
        raise ValueError("truncated header")
    fields = struct.unpack(f">B{k}BH", data[:size])
    return list(fields[1:1 + k]), fields[-1], size
