"""Universal hashing primitives: Toeplitz hashing over GF(2) and a
polynomial MAC over GF(2^96).

Toeplitz hashing (privacy amplification and confirmation) is evaluated as
one polynomial multiplication over GF(2), computed with a float64 FFT:
coefficient counts are bounded by ||a||_2 ||b||_2 so the rounding error of
the transform stays many orders of magnitude below 1/2, and a runtime
guard verifies this on every call.  Inputs too large for a single
transform fall back to overlap-add accumulation in integers.

Transcript authentication uses a carry-less Horner evaluation in
GF(2^96) with the low-weight reduction x^96 + x^10 + x^9 + x^6 + 1
(irreducibility is asserted by a Rabin test in the test suite).  The tag
is the polynomial hash of the framed transcript whitened with the second
half of the pre-shared secret.
"""

from __future__ import annotations

import hmac
from functools import lru_cache

import numpy as np

GF2_96_DEGREE = 96
GF2_96_REDUCTION = (1 << 10) | (1 << 9) | (1 << 6) | 1
_GF2_96_MASK = (1 << GF2_96_DEGREE) - 1

_ROUND_GUARD = 0.25


def _as_bits(x) -> np.ndarray:
    bits = np.asarray(x)
    if bits.ndim != 1:
        raise ValueError("bit arrays must be one-dimensional")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bit arrays may contain only 0 and 1")
    return bits.astype(np.uint8)


def _fft_convolve_counts(a: np.ndarray, b: np.ndarray, max_fft: int) -> np.ndarray:
    """Integer convolution counts of two 0/1 sequences via rfft."""
    out_len = a.size + b.size - 1
    n = 1 << max(1, int(np.ceil(np.log2(out_len))))
    if n <= max_fft:
        spec = np.fft.rfft(a.astype(np.float64), n) * np.fft.rfft(b.astype(np.float64), n)
        conv = np.fft.irfft(spec, n)[:out_len]
        if np.max(np.abs(conv - np.rint(conv)), initial=0.0) > _ROUND_GUARD:
            raise ArithmeticError("convolution rounding guard tripped")
        return np.rint(conv).astype(np.int64)
    # overlap-add: chunk the longer operand so each piece fits max_fft
    if a.size < b.size:
        a, b = b, a
    chunk = max_fft // 2
    if b.size > chunk:
        raise ValueError("operands too large for the configured transform size")
    counts = np.zeros(out_len, dtype=np.int64)
    for start in range(0, a.size, chunk):
        piece = a[start:start + chunk]
        counts[start:start + piece.size + b.size - 1] += _fft_convolve_counts(
            piece, b, max_fft)
    return counts


def gf2_convolve(a, b, max_fft: int = 1 << 24) -> np.ndarray:
    """Product of two GF(2) polynomials given as bit arrays (lowest
    degree first); result has length len(a) + len(b) - 1."""
    a = _as_bits(a)
    b = _as_bits(b)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty operand")
    return (_fft_convolve_counts(a, b, max_fft) & 1).astype(np.uint8)


def toeplitz_hash(seed_bits, data_bits, out_len: int) -> np.ndarray:
    """Toeplitz hash of data_bits to out_len bits.

    The seed of length len(data) + out_len - 1 fills the matrix
    T[i, j] = s[i - j + len(data) - 1] with s the diagonal sequence
    [reversed(seed[out_len:]), seed[:out_len]]; seed[0] sits on the main
    diagonal, so the seed (1, 0, 0, ...) with out_len == len(data) is the
    identity.  Evaluated as one polynomial product.
    """
    seed = _as_bits(seed_bits)
    data = _as_bits(data_bits)
    m = data.size
    if out_len <= 0:
        raise ValueError("output length must be positive")
    if m == 0:
        raise ValueError("empty input")
    if seed.size != m + out_len - 1:
        raise ValueError(f"seed must have {m + out_len - 1} bits, got {seed.size}")
    diag = np.concatenate([seed[out_len:][::-1], seed[:out_len]])
    return gf2_convolve(diag, data)[m - 1: m - 1 + out_len]


def toeplitz_matrix(seed_bits, out_len: int, in_len: int) -> np.ndarray:
    """Dense Toeplitz matrix for the same seed layout (oracle-sized)."""
    seed = _as_bits(seed_bits)
    if seed.size != in_len + out_len - 1:
        raise ValueError("seed length mismatch")
    diag = np.concatenate([seed[out_len:][::-1], seed[:out_len]])
    i = np.arange(out_len)[:, None]
    j = np.arange(in_len)[None, :]
    return diag[i - j + in_len - 1]


def privacy_amplify(key_bits, out_len: int, seed_bits) -> np.ndarray:
    """Compress the reconciled key to out_len final bits."""
    key = _as_bits(key_bits)
    if not 0 < out_len <= key.size:
        raise ValueError("final length must be in (0, key length]")
    return toeplitz_hash(seed_bits, key, out_len)


def confirmation_hash(block_bits, seed_bits, t: int = 128) -> np.ndarray:
    """t-bit Toeplitz confirmation hash of one corrected block."""
    return toeplitz_hash(seed_bits, block_bits, t)


def confirmation_seed_bits(block_len: int, t: int = 128) -> int:
    return block_len + t - 1


def bits_to_bytes(bits) -> bytes:
    """Pack a bit array MSB-first; pads the tail with zeros."""
    return np.packbits(_as_bits(bits)).tobytes()


def bytes_to_bits(data: bytes, n_bits: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if bits.size < n_bits:
        raise ValueError("byte string too short")
    return bits[:n_bits]


def gf_mul(a: int, b: int) -> int:
    """Carry-less product in GF(2^96)."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        b >>= 1
    # reduce: bits at degree >= 96 fold back via the reduction pentanomial
    while r >> GF2_96_DEGREE:
        high = r >> GF2_96_DEGREE
        r = (r & _GF2_96_MASK) ^ _fold(high)
    return r


def _fold(high: int) -> int:
    out = 0
    shift = 0
    while high:
        if high & 1:
            out ^= GF2_96_REDUCTION << shift
        high >>= 1
        shift += 1
    return out


def gf_pow(a: int, e: int) -> int:
    r = 1
    while e:
        if e & 1:
            r = gf_mul(r, a)
        a = gf_mul(a, a)
        e >>= 1
    return r


@lru_cache(maxsize=128)
def _mul_tables(r: int):
    """tables[i][v] = (v << 8 i) * r, so multiplying a state by r costs
    twelve lookups.  Built by subset xor over bit contributions."""
    tables = []
    for i in range(AuthContext.BLOCK_BYTES):
        row = [0] * 256
        for k in range(8):
            contrib = gf_mul(1 << (8 * i + k), r)
            base = 1 << k
            for v in range(base):
                row[base + v] = row[v] ^ contrib
        tables.append(tuple(row))
    return tuple(tables)


class AuthContext:
    """Rolling polynomial MAC over an ordered message transcript.

    Both peers fold every framed message (in protocol order) into the
    context; identical transcripts give identical 96-bit tags.  The
    pre-shared secret supplies the evaluation point r and the whitening
    mask s (12 bytes each).
    """

    BLOCK_BYTES = GF2_96_DEGREE // 8
    TAG_BYTES = GF2_96_DEGREE // 8

    def __init__(self, secret: bytes):
        if len(secret) < 2 * self.BLOCK_BYTES:
            raise ValueError(f"secret must be at least {2 * self.BLOCK_BYTES} bytes")
        r = int.from_bytes(secret[: self.BLOCK_BYTES], "big")
        if r == 0:
            r = 1  # degenerate evaluation point would hash everything to s
        self._r = r
        self._s = int.from_bytes(secret[self.BLOCK_BYTES: 2 * self.BLOCK_BYTES], "big")
        self._state = 0
        self._buffer = b""
        self._total_bytes = 0
        self._tables = _mul_tables(r)
        self._done = False

    def _mul_r(self, x: int) -> int:
        out = 0
        for i in range(self.BLOCK_BYTES):
            out ^= self._tables[i][(x >> (8 * i)) & 0xFF]
        return out

    def _absorb_block(self, block: bytes):
        self._state = self._mul_r(self._state ^ int.from_bytes(block, "big"))

    def update(self, data: bytes):
        if self._done:
            raise RuntimeError("context already finalized")
        self._total_bytes += len(data)
        buf = self._buffer + data
        n_full = len(buf) // self.BLOCK_BYTES * self.BLOCK_BYTES
        for off in range(0, n_full, self.BLOCK_BYTES):
            self._absorb_block(buf[off: off + self.BLOCK_BYTES])
        self._buffer = buf[n_full:]

    def finalize(self) -> bytes:
        if not self._done:
            if self._buffer:
                self._absorb_block(self._buffer.ljust(self.BLOCK_BYTES, b"\0"))
                self._buffer = b""
            self._absorb_block((self._total_bytes * 8).to_bytes(self.BLOCK_BYTES, "big"))
            self._tag = (self._state ^ self._s).to_bytes(self.TAG_BYTES, "big")
            self._done = True
        return self._tag

    def verify(self, tag: bytes) -> bool:
        return hmac.compare_digest(self.finalize(), tag)
