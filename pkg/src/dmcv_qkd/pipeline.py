"""Two-party post-processing session: key map, reverse reconciliation,
confirmation, leak accounting, privacy amplification, authentication.

Both peers run the same linear protocol script over a reliable ordered
transport; every frame is folded (in protocol order) into a rolling
universal-hash context whose 96-bit tags are exchanged at the end.  The
transcript order is identical at both sites because the script alternates
strictly and the transport preserves order.

Message payloads, byte-exact (all integers big-endian; bit arrays packed
MSB-first, zero-padded to the byte):

    HELLO           u8 role (0 Alice, 1 Bob) | u16 version | 32B config digest
    PARAMS          16B code id (ascii, NUL padded) | f64 ber_x | f64 ber_p |
                    u64 key rounds | u64 kept count | u32 blocks_x |
                    u32 blocks_p | packed kept mask
    SYNDROME        u8 stream (0 X, 1 P) | u32 block | u32 bit length | bits
    CONFIRM_HASH    u8 stream | u32 block | u32 tag bits | u32 seed bits |
                    packed seed | packed tag
    CONFIRM_RESULT  u8 stream | u32 block | u8 ok
    BLOCK_DISCLOSE  u8 stream | u32 block | u32 bit length | bits
    PA_PARAMS       u64 input bits m | u64 output bits l | packed seed
                    (m + l - 1 bits)
    AUTH_TAG        12B tag (not folded into the transcript)
    ABORT           utf-8 reason (voids the session)

Reverse reconciliation: Bob's measured bits are the reference; Alice
corrects her modulation bits toward them using Bob's syndromes.  Failed
blocks are not discarded: Bob disclosed them in full, they stay in the
privacy-amplification input, and the ledger charges their whole length as
leakage.  The final key length is recomputed from the realized ledger, so
the retained-round count must equal the one the key-length analysis was
performed with; any mismatch aborts rather than silently reusing
corrections sized for a different n.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .accounting import (EpsilonLedger, KeyLengthReport, epsilon_ledger,
                         key_length)
from .hashing import (AuthContext, bits_to_bytes, bytes_to_bits,
                      confirmation_hash, confirmation_seed_bits,
                      privacy_amplify)
from .ldpc import LdpcCode, build_code, code_fixture, ldpc_decode, ldpc_syndrome
from .wire import MessageType, ProtocolError

PROTOCOL_VERSION = 1

# symbol j (amplitude at angle pi/4 + j pi/2) -> (X bit, P bit)
SYMBOL_BITS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.uint8)
# (X bit, P bit) -> quadrant region index, Gray-coded around the circle
REGION_OF_BITS = np.array([[0, 3], [1, 2]], dtype=np.uint8)
REGION_PERP = 255

STREAM_X, STREAM_P = 0, 1
STREAM_NAMES = ("x", "p")


class SessionAborted(RuntimeError):
    """Session voided: local condition or a peer ABORT frame."""

    def __init__(self, reason: str, remote: bool = False):
        super().__init__(reason)
        self.reason = reason
        self.remote = remote


class AuthenticationError(RuntimeError):
    """Transcript tags disagreed; all session output must be discarded."""


def key_map(zeta, bound_m: float, radius: float = 0.0):
    """Map heterodyne outcomes to quadrant regions.

    Returns (regions, kept): region 0..3 for retained outcomes, 255 for
    discards.  An outcome is discarded when its magnitude exceeds bound_m
    or falls inside the dead radius.  Bits follow the coordinate signs
    (negative -> 1), with exact zeros kept at bit 0.
    """
    if not 0.0 <= radius <= bound_m:
        raise ValueError("need 0 <= radius <= bound_m")
    zeta = np.asarray(zeta, dtype=np.complex128)
    mag = np.abs(zeta)
    kept = (mag <= bound_m) & (mag >= radius)
    bx = (zeta.real < 0).astype(np.uint8)
    bp = (zeta.imag < 0).astype(np.uint8)
    regions = REGION_OF_BITS[bx, bp]
    regions = np.where(kept, regions, np.uint8(REGION_PERP))
    return regions, kept


def region_bits(regions: np.ndarray):
    """Inverse of the Gray coding: region index -> (X bit, P bit)."""
    regions = np.asarray(regions)
    if np.any(regions > 3):
        raise ValueError("discarded outcomes carry no bits")
    x = ((regions == 1) | (regions == 2)).astype(np.uint8)
    p = (regions >= 2).astype(np.uint8)
    return x, p


@dataclass
class BlockEntry:
    stream: str
    index: int
    corrected: bool
    leak_bits: int
    iterations: int = 0

    def to_json(self) -> dict:
        return {"stream": self.stream, "index": self.index,
                "corrected": self.corrected, "leak_bits": self.leak_bits,
                "iterations": self.iterations}


@dataclass
class BlockLedger:
    """Per-block disclosure bookkeeping.

    Corrected blocks cost the syndrome plus the confirmation tag; failed
    blocks are disclosed whole, so their entire length is charged (the
    syndrome is a function of the block and does not add on top).
    """

    block_len: int
    syndrome_len: int
    t_confirm: int
    entries: list = field(default_factory=list)

    def add(self, stream: str, index: int, corrected: bool, iterations: int = 0):
        leak = self.syndrome_len + self.t_confirm if corrected else self.block_len
        self.entries.append(BlockEntry(stream, index, corrected, leak, iterations))

    @property
    def leak_ec(self) -> int:
        return sum(e.leak_bits for e in self.entries)

    @property
    def n_blocks(self) -> int:
        return len(self.entries)

    @property
    def n_failed(self) -> int:
        return sum(not e.corrected for e in self.entries)

    @property
    def fer(self) -> float:
        return self.n_failed / len(self.entries) if self.entries else 0.0

    def retained_bits(self) -> int:
        # every block, corrected or disclosed, feeds privacy amplification
        return self.n_blocks * self.block_len

    def check_conservation(self):
        for e in self.entries:
            want = self.syndrome_len + self.t_confirm if e.corrected \
                else self.block_len
            if e.leak_bits != want:
                raise AssertionError(
                    f"ledger entry {e.stream}/{e.index} leaks {e.leak_bits}, "
                    f"expected {want}")

    def to_json(self) -> dict:
        return {
            "block_len": self.block_len,
            "syndrome_len": self.syndrome_len,
            "t_confirm": self.t_confirm,
            "n_blocks": self.n_blocks,
            "n_failed": self.n_failed,
            "fer": self.fer,
            "leak_ec": self.leak_ec,
            "entries": [e.to_json() for e in self.entries],
        }


@dataclass
class SessionConfig:
    """Everything both peers must agree on before the session starts."""

    code_id: str
    bound_m: float
    keymap_radius: float
    auth_secret: bytes
    session_seed: int
    config_digest: bytes
    ber_x: float = float("nan")   # decoder priors; Bob's copy is authoritative
    ber_p: float = float("nan")
    t_confirm: int = 128
    pa_bits: int = 100
    max_iter: int = 400

    def __post_init__(self):
        if len(self.config_digest) != 32:
            raise ValueError("config digest must be 32 bytes")


@dataclass
class SessionResult:
    role: str
    final_key: np.ndarray
    key_digest: str
    ledger: BlockLedger
    report: KeyLengthReport
    epsilons: EpsilonLedger
    transcript_bytes: int
    timings: dict

    def to_json(self) -> dict:
        return {
            "role": self.role,
            "key_bits": int(self.final_key.size),
            "key_digest": self.key_digest,
            "ledger": self.ledger.to_json(),
            "report": self.report.to_json(),
            "epsilons": self.epsilons.to_json(),
            "transcript_bytes": self.transcript_bytes,
            "timings": self.timings,
        }


_HELLO = struct.Struct(">BH32s")
_PARAMS_HEAD = struct.Struct(">16sddQQII")
_BLOCK_HEAD = struct.Struct(">BII")
_CONFIRM_HEAD = struct.Struct(">BIII")
_RESULT = struct.Struct(">BIB")
_PA_HEAD = struct.Struct(">QQ")


def _pack_bits(bits) -> bytes:
    return bits_to_bytes(bits)


def _unpack_bits(data: bytes, n_bits: int) -> np.ndarray:
    return bytes_to_bits(data, n_bits)


class _Session:
    """Shared plumbing: framing, transcript folding, abort handling."""

    def __init__(self, channel, config: SessionConfig):
        self.channel = channel
        self.config = config
        self.auth = AuthContext(config.auth_secret)
        self.transcript_bytes = 0

    def send(self, mtype: MessageType, payload: bytes = b"", fold: bool = True):
        frame = self.channel.send(mtype, payload)
        if fold:
            self.auth.update(frame)
            self.transcript_bytes += len(frame)

    def abort(self, reason: str):
        try:
            self.channel.send(MessageType.ABORT, reason.encode())
        except Exception:
            pass
        raise SessionAborted(reason)

    def recv_expect(self, mtype: MessageType, fold: bool = True) -> bytes:
        got, payload, frame = self.channel.recv()
        if got == MessageType.ABORT:
            raise SessionAborted(payload.decode("utf-8", "replace"), remote=True)
        if got != mtype:
            try:
                self.channel.send(MessageType.ABORT,
                                  f"expected {mtype.name}, got {got.name}".encode())
            except Exception:
                pass
            raise ProtocolError(f"expected {mtype.name}, got {got.name}")
        if fold:
            self.auth.update(frame)
            self.transcript_bytes += len(frame)
        return payload


def _split_blocks(bits: np.ndarray, n_blocks: int, block_len: int):
    return [bits[k * block_len:(k + 1) * block_len] for k in range(n_blocks)]


def _final_report(keyrate: KeyLengthReport, ledger: BlockLedger,
                  n_eff: int) -> KeyLengthReport:
    """Re-evaluate the key length with the realized leakage.

    The entropy and finite-size corrections were computed for a specific
    retained-round count; reusing them for any other count would be
    unsound, so the caller must have checked n_eff == keyrate.n.
    """
    return key_length(
        entropy_lb=keyrate.entropy_lb,
        delta_aep_bits=keyrate.delta_aep,
        delta_w_bits=keyrate.delta_w,
        leak_ec=ledger.leak_ec,
        budget=keyrate.budget,
        n=n_eff,
        n_total=keyrate.n_total,
        pa_bits=keyrate.pa_bits,
        solver=keyrate.solver,
    )


def _finish(sess: _Session, role: str, concat: np.ndarray, l: int,
            pa_seed: np.ndarray, ledger: BlockLedger,
            report: KeyLengthReport, t0: float, decode_s: float):
    final = privacy_amplify(concat, l, pa_seed)

    if role == "alice":
        sess.send(MessageType.AUTH_TAG, sess.auth.finalize(), fold=False)
        peer_tag = sess.recv_expect(MessageType.AUTH_TAG, fold=False)
    else:
        peer_tag = sess.recv_expect(MessageType.AUTH_TAG, fold=False)
        sess.send(MessageType.AUTH_TAG, sess.auth.finalize(), fold=False)
    if not sess.auth.verify(bytes(peer_tag)):
        raise AuthenticationError("transcript tag mismatch")

    digest = hashlib.sha256(bits_to_bytes(final)).hexdigest()
    epsilons = epsilon_ledger(
        budget=report.budget,
        raw_bits=concat.size,
        disclosed_bits=ledger.leak_ec,
        transcript_bits=8 * sess.transcript_bytes,
        pa_bits=report.pa_bits,
        t=ledger.t_confirm,
    )
    return SessionResult(
        role=role,
        final_key=final,
        key_digest=digest,
        ledger=ledger,
        report=report,
        epsilons=epsilons,
        transcript_bytes=sess.transcript_bytes,
        timings={"decode_s": round(decode_s, 3),
                 "session_s": round(time.perf_counter() - t0, 3)},
    )


def run_session(role: str, channel, config: SessionConfig,
                keyrate: KeyLengthReport, symbols: np.ndarray | None = None,
                zeta: np.ndarray | None = None, code: LdpcCode | None = None,
                force_fail=()) -> SessionResult:
    """Execute one post-processing session in the given role.

    Alice supplies her modulation symbols for the key rounds (record
    order); Bob supplies his heterodyne outcomes for the same rounds.
    Returns the session result; raises SessionAborted, ProtocolError,
    TransportError, or AuthenticationError.  force_fail (Alice only) is a
    collection of (stream, block) pairs whose decode outcome is treated as
    a failure regardless of convergence, exercising the disclosure path.
    """
    if role not in ("alice", "bob"):
        raise ValueError("role must be 'alice' or 'bob'")
    if code is None:
        code = build_code(code_fixture(config.code_id))
    t0 = time.perf_counter()
    sess = _Session(channel, config)
    if role == "alice":
        if symbols is None:
            raise ValueError("alice needs her symbol stream")
        return _run_alice(sess, config, keyrate, np.asarray(symbols), code,
                          frozenset(force_fail), t0)
    if zeta is None:
        raise ValueError("bob needs his outcome stream")
    if force_fail:
        raise ValueError("forced failures are an alice-side hook")
    return _run_bob(sess, config, keyrate, np.asarray(zeta), code, t0)


def _run_alice(sess: _Session, config: SessionConfig,
               keyrate: KeyLengthReport, symbols: np.ndarray, code: LdpcCode,
               force_fail: frozenset, t0: float) -> SessionResult:
    sess.send(MessageType.HELLO,
              _HELLO.pack(0, PROTOCOL_VERSION, config.config_digest))
    hello = sess.recv_expect(MessageType.HELLO)
    peer_role, version, digest = _HELLO.unpack(hello)
    if peer_role != 1 or version != PROTOCOL_VERSION:
        sess.abort("peer is not a compatible bob")
    if digest != config.config_digest:
        sess.abort("config digest mismatch")

    payload = sess.recv_expect(MessageType.PARAMS)
    head = _PARAMS_HEAD.unpack_from(payload)
    code_id = head[0].rstrip(b"\0").decode()
    ber_x, ber_p, n_key, kept_count, n_blocks_x, n_blocks_p = head[1:]
    if code_id != code.code_id:
        sess.abort(f"peer selected code {code_id!r}, local {code.code_id!r}")
    if n_key != symbols.size:
        sess.abort(f"peer reports {n_key} key rounds, local {symbols.size}")
    kept = _unpack_bits(payload[_PARAMS_HEAD.size:], n_key).astype(bool)
    if int(kept.sum()) != kept_count:
        sess.abort("kept mask does not match kept count")

    kept_symbols = symbols[kept]
    x_bits = SYMBOL_BITS[kept_symbols, 0]
    p_bits = SYMBOL_BITS[kept_symbols, 1]
    n_blocks = kept_count // code.block_len
    if (n_blocks_x, n_blocks_p) != (n_blocks, n_blocks):
        sess.abort("block count disagreement")
    if n_blocks == 0:
        sess.abort("no complete reconciliation block")
    n_eff = n_blocks * code.block_len
    if n_eff != int(keyrate.n):
        sess.abort(f"retained count {n_eff} differs from the "
                   f"key-length analysis n={keyrate.n:.0f}")

    streams = {STREAM_X: (_split_blocks(x_bits, n_blocks, code.block_len), ber_x),
               STREAM_P: (_split_blocks(p_bits, n_blocks, code.block_len), ber_p)}

    syndromes = {}
    for stream in (STREAM_X, STREAM_P):
        for k in range(n_blocks):
            payload = sess.recv_expect(MessageType.SYNDROME)
            s, blk, nbits = _BLOCK_HEAD.unpack_from(payload)
            if (s, blk) != (stream, k) or nbits != code.syndrome_len:
                sess.abort("syndrome sequence out of order")
            syndromes[(s, blk)] = _unpack_bits(payload[_BLOCK_HEAD.size:], nbits)

    decode_t0 = time.perf_counter()
    decoded = {}
    for stream in (STREAM_X, STREAM_P):
        blocks, ber = streams[stream]
        prior = min(max(float(ber), 1e-6), 0.499999)
        for k in range(n_blocks):
            res = ldpc_decode(blocks[k], syndromes[(stream, k)], code, prior,
                              max_iter=config.max_iter)
            forced = (STREAM_NAMES[stream], k) in force_fail
            decoded[(stream, k)] = (res, forced)
    decode_s = time.perf_counter() - decode_t0

    ledger = BlockLedger(code.block_len, code.syndrome_len, config.t_confirm)
    final_blocks = {}
    for stream in (STREAM_X, STREAM_P):
        for k in range(n_blocks):
            payload = sess.recv_expect(MessageType.CONFIRM_HASH)
            s, blk, t_bits, seed_bits = _CONFIRM_HEAD.unpack_from(payload)
            if (s, blk) != (stream, k) or t_bits != config.t_confirm:
                sess.abort("confirmation sequence out of order")
            body = payload[_CONFIRM_HEAD.size:]
            seed_bytes = (seed_bits + 7) // 8
            seed = _unpack_bits(body[:seed_bytes], seed_bits)
            peer_tag = _unpack_bits(body[seed_bytes:], t_bits)
            res, forced = decoded[(stream, k)]
            ok = False
            if res.success and not forced:
                mine = confirmation_hash(res.bits, seed, t_bits)
                ok = bool(np.array_equal(mine, peer_tag))
            sess.send(MessageType.CONFIRM_RESULT,
                      _RESULT.pack(stream, k, int(ok)))
            if ok:
                ledger.add(STREAM_NAMES[stream], k, True, res.iterations)
                final_blocks[(stream, k)] = res.bits
            else:
                payload = sess.recv_expect(MessageType.BLOCK_DISCLOSE)
                s, blk, nbits = _BLOCK_HEAD.unpack_from(payload)
                if (s, blk) != (stream, k) or nbits != code.block_len:
                    sess.abort("disclosure sequence out of order")
                ledger.add(STREAM_NAMES[stream], k, False, res.iterations)
                final_blocks[(stream, k)] = _unpack_bits(
                    payload[_BLOCK_HEAD.size:], nbits)

    ledger.check_conservation()
    report = _final_report(keyrate, ledger, n_eff)

    payload = sess.recv_expect(MessageType.PA_PARAMS)
    m_bits, l_bits = _PA_HEAD.unpack_from(payload)
    concat = np.concatenate([final_blocks[(s, k)]
                             for s in (STREAM_X, STREAM_P)
                             for k in range(n_blocks)])
    if m_bits != concat.size:
        sess.abort("privacy amplification input size disagreement")
    if report.aborted or l_bits != report.l:
        sess.abort(f"key length disagreement: peer {l_bits}, local "
                   f"{report.l}{' (aborted)' if report.aborted else ''}")
    pa_seed = _unpack_bits(payload[_PA_HEAD.size:], m_bits + l_bits - 1)

    return _finish(sess, "alice", concat, report.l, pa_seed, ledger, report,
                   t0, decode_s)


def _run_bob(sess: _Session, config: SessionConfig, keyrate: KeyLengthReport,
             zeta: np.ndarray, code: LdpcCode, t0: float) -> SessionResult:
    hello = sess.recv_expect(MessageType.HELLO)
    peer_role, version, digest = _HELLO.unpack(hello)
    if peer_role != 0 or version != PROTOCOL_VERSION:
        sess.abort("peer is not a compatible alice")
    if digest != config.config_digest:
        sess.abort("config digest mismatch")
    sess.send(MessageType.HELLO,
              _HELLO.pack(1, PROTOCOL_VERSION, config.config_digest))

    regions, kept = key_map(zeta, config.bound_m, config.keymap_radius)
    kept_regions = regions[kept]
    x_bits, p_bits = region_bits(kept_regions)
    kept_count = int(kept.sum())
    n_blocks = kept_count // code.block_len
    if n_blocks == 0:
        sess.abort("no complete reconciliation block")
    n_eff = n_blocks * code.block_len
    if n_eff != int(keyrate.n):
        sess.abort(f"retained count {n_eff} differs from the "
                   f"key-length analysis n={keyrate.n:.0f}")
    if not (np.isfinite(config.ber_x) and np.isfinite(config.ber_p)):
        sess.abort("bob has no crossover priors")

    head = _PARAMS_HEAD.pack(code.code_id.encode().ljust(16, b"\0"),
                             config.ber_x, config.ber_p, zeta.size,
                             kept_count, n_blocks, n_blocks)
    sess.send(MessageType.PARAMS, head + _pack_bits(kept.astype(np.uint8)))

    streams = {STREAM_X: _split_blocks(x_bits, n_blocks, code.block_len),
               STREAM_P: _split_blocks(p_bits, n_blocks, code.block_len)}
    for stream in (STREAM_X, STREAM_P):
        for k in range(n_blocks):
            syn = ldpc_syndrome(streams[stream][k], code)
            sess.send(MessageType.SYNDROME,
                      _BLOCK_HEAD.pack(stream, k, syn.size) + _pack_bits(syn))

    rng = np.random.default_rng([config.session_seed, 0xB0B])
    ledger = BlockLedger(code.block_len, code.syndrome_len, config.t_confirm)
    seed_bits = confirmation_seed_bits(code.block_len, config.t_confirm)
    for stream in (STREAM_X, STREAM_P):
        for k in range(n_blocks):
            block = streams[stream][k]
            seed = rng.integers(0, 2, seed_bits, dtype=np.uint8)
            tag = confirmation_hash(block, seed, config.t_confirm)
            sess.send(MessageType.CONFIRM_HASH,
                      _CONFIRM_HEAD.pack(stream, k, config.t_confirm, seed_bits)
                      + _pack_bits(seed) + _pack_bits(tag))
            payload = sess.recv_expect(MessageType.CONFIRM_RESULT)
            s, blk, ok = _RESULT.unpack(payload)
            if (s, blk) != (stream, k):
                sess.abort("confirmation result out of order")
            ledger.add(STREAM_NAMES[stream], k, bool(ok))
            if not ok:
                sess.send(MessageType.BLOCK_DISCLOSE,
                          _BLOCK_HEAD.pack(stream, k, block.size)
                          + _pack_bits(block))

    ledger.check_conservation()
    report = _final_report(keyrate, ledger, n_eff)
    if report.aborted:
        sess.abort(f"no extractable key: rhs {report.l_raw} bits")

    concat = np.concatenate([streams[s][k]
                             for s in (STREAM_X, STREAM_P)
                             for k in range(n_blocks)])
    pa_seed = rng.integers(0, 2, concat.size + report.l - 1, dtype=np.uint8)
    sess.send(MessageType.PA_PARAMS,
              _PA_HEAD.pack(concat.size, report.l) + _pack_bits(pa_seed))

    return _finish(sess, "bob", concat, report.l, pa_seed, ledger, report,
                   t0, 0.0)
