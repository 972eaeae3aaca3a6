"""Arithmetic in GF(2^8) with the AES reduction polynomial x^8 + x^4 + x^3 + x + 1.

Elements are plain ints in [0, 255]. Addition and subtraction are both XOR.
Multiplication goes through log/antilog tables built from the primitive
element 0x03; the ``*_vec`` helpers apply the same tables to uint8 arrays.
"""

import numpy as np

POLY = 0x11B
GENERATOR = 0x03
ORDER = 256


def _slow_mul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        if a & 0x100:
            a ^= POLY
        b >>= 1
    return out


def _build_tables():
    exp = np.zeros(512, dtype=np.int64)
    log = np.zeros(256, dtype=np.int64)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x = _slow_mul(x, GENERATOR)
    # doubled so that exp[log a + log b] never needs a modulo
    exp[255:510] = exp[0:255]
    return exp, log


EXP, LOG = _build_tables()


def add(a: int, b: int) -> int:
    return a ^ b


sub = add


def mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return int(EXP[LOG[a] + LOG[b]])


def inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(2^8)")
    return int(EXP[255 - LOG[a]])


def div(a: int, b: int) -> int:
    return mul(a, inv(b))


def power(a: int, n: int) -> int:
    if n == 0:
        return 1
    if a == 0:
        return 0
    return int(EXP[(LOG[a] * n) % 255])


def mul_vec(a, b):
    """Elementwise product of two broadcastable uint8-compatible arrays."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    out = EXP[LOG[a] + LOG[b]]
    return np.where((a == 0) | (b == 0), 0, out).astype(np.uint8)


def matmul(A, B):
    """Matrix product over the field; A is (r, n), B is (n, c)."""
    A = np.asarray(A, dtype=np.uint8)
    B = np.asarray(B, dtype=np.uint8)
    out = np.zeros((A.shape[0], B.shape[1]), dtype=np.uint8)
    for j in range(A.shape[1]):
        out ^= mul_vec(A[:, j:j + 1], B[j:j + 1, :])
    return out
