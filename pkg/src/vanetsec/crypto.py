"""RC5-based primitives: block cipher, counter-mode encryption, CBC-MAC, PRF,
the one-way chain step and pairwise key derivation.

Every function here is pure. Keys and blocks are plain ``bytes``; lengths are
checked on entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

BLOCK_SIZE = 8
KEY_SIZE = 16
CHAIN_KEY_SIZE = 8
MAC_SIZE = 8

P32 = 0xB7E15163
Q32 = 0x9E3779B9
MASK32 = 0xFFFFFFFF

DEFAULT_ROUNDS = 12
MIN_ROUNDS = 8
MAX_ROUNDS = 16

# Counter blocks are ctr * 2**16 + j, so one message gets at most 2**16 blocks.
MAX_BLOCKS_PER_MESSAGE = 1 << 16
MAX_CTR_PLAINTEXT = MAX_BLOCKS_PER_MESSAGE * BLOCK_SIZE

LABEL_PAIR_1 = 0x01
LABEL_PAIR_2 = 0x02
LABEL_ENC_LOW_HIGH = 0x11
LABEL_MAC_LOW_HIGH = 0x12
LABEL_ENC_HIGH_LOW = 0x13
LABEL_MAC_HIGH_LOW = 0x14


def _check_len(name: str, value: bytes, size: int) -> None:
    if not isinstance(value, (bytes, bytearray)):
        raise TypeError(f"{name} must be bytes, got {type(value).__name__}")
    if len(value) != size:
        raise ValueError(f"{name} must be exactly {size} bytes, got {len(value)}")


def _rotl(x: int, n: int) -> int:
    n &= 31
    return ((x << n) | (x >> (32 - n))) & MASK32


def _rotr(x: int, n: int) -> int:
    n &= 31
    return ((x >> n) | (x << (32 - n))) & MASK32


@dataclass(frozen=True)
class RoundKeySchedule:
    """Expanded RC5-32 key table (``2 * rounds + 2`` words)."""

    words: tuple[int, ...]
    rounds: int


def rc5_setup(key: bytes, rounds: int = DEFAULT_ROUNDS) -> RoundKeySchedule:
    """Expand a 16-byte key into an RC5-32/``rounds``/16 subkey table."""
    _check_len("key", key, KEY_SIZE)
    if not isinstance(rounds, int) or not MIN_ROUNDS <= rounds <= MAX_ROUNDS:
        raise ValueError(f"rounds must be in [{MIN_ROUNDS}, {MAX_ROUNDS}], got {rounds!r}")
    return _rc5_setup_cached(bytes(key), rounds)


@lru_cache(maxsize=4096)
def _rc5_setup_cached(key: bytes, rounds: int) -> RoundKeySchedule:
    t = 2 * rounds + 2
    L = [int.from_bytes(key[i:i + 4], "little") for i in range(0, KEY_SIZE, 4)]
    S = [(P32 + i * Q32) & MASK32 for i in range(t)]
    A = B = i = j = 0
    c = len(L)
    for _ in range(3 * max(t, c)):
        A = S[i] = _rotl((S[i] + A + B) & MASK32, 3)
        B = L[j] = _rotl((L[j] + A + B) & MASK32, A + B)
        i = (i + 1) % t
        j = (j + 1) % c
    return RoundKeySchedule(tuple(S), rounds)


def _encrypt_words(S: tuple[int, ...], rounds: int, A: int, B: int) -> tuple[int, int]:
    A = (A + S[0]) & MASK32
    B = (B + S[1]) & MASK32
    for r in range(1, rounds + 1):
        x = A ^ B
        s = B & 31
        A = ((((x << s) | (x >> (32 - s))) & MASK32) + S[2 * r]) & MASK32
        x = B ^ A
        s = A & 31
        B = ((((x << s) | (x >> (32 - s))) & MASK32) + S[2 * r + 1]) & MASK32
    return A, B


def rc5_encrypt_block(sched: RoundKeySchedule, block: bytes) -> bytes:
    _check_len("block", block, BLOCK_SIZE)
    A, B = _encrypt_words(
        sched.words, sched.rounds,
        int.from_bytes(block[:4], "little"), int.from_bytes(block[4:], "little"),
    )
    return A.to_bytes(4, "little") + B.to_bytes(4, "little")


def rc5_decrypt_block(sched: RoundKeySchedule, block: bytes) -> bytes:
    _check_len("block", block, BLOCK_SIZE)
    S = sched.words
    A = int.from_bytes(block[:4], "little")
    B = int.from_bytes(block[4:], "little")
    for r in range(sched.rounds, 0, -1):
        B = _rotr((B - S[2 * r + 1]) & MASK32, A) ^ A
        A = _rotr((A - S[2 * r]) & MASK32, B) ^ B
    B = (B - S[1]) & MASK32
    A = (A - S[0]) & MASK32
    return A.to_bytes(4, "little") + B.to_bytes(4, "little")


def ctr_keystream_blocks(length: int) -> int:
    """Number of block-cipher calls ``ctr_encrypt`` makes for ``length`` bytes."""
    return -(-length // BLOCK_SIZE)


def ctr_encrypt(key: bytes, ctr: int, plaintext: bytes) -> bytes:
    """XOR ``plaintext`` with the RC5 keystream for message counter ``ctr``.

    Keystream block ``j`` is the encryption of the big-endian 64-bit value
    ``ctr * 2**16 + j``. Decryption is the same call.
    """
    if not 0 <= ctr <= MASK32:
        raise ValueError(f"counter out of 32-bit range: {ctr}")
    if len(plaintext) >= MAX_CTR_PLAINTEXT:
        raise ValueError("plaintext too long for the per-message counter-block space")
    _check_len("key", key, KEY_SIZE)
    n = len(plaintext)
    if n == 0:
        return b""
    stream = _keystream(bytes(key), ctr, ctr_keystream_blocks(n))
    x = int.from_bytes(plaintext, "big") ^ int.from_bytes(stream[:n], "big")
    return x.to_bytes(n, "big")


# Both ends of a hop compute the same keystream and tag; memoizing these pure
# functions roughly halves the cipher work in simulations.
@lru_cache(maxsize=2048)
def _keystream(key: bytes, ctr: int, blocks: int) -> bytes:
    sched = _rc5_setup_cached(key, DEFAULT_ROUNDS)
    S, rounds = sched.words, sched.rounds
    base = ctr << 16
    out = bytearray()
    for j in range(blocks):
        blk = (base + j).to_bytes(8, "big")
        A, B = _encrypt_words(S, rounds,
                              int.from_bytes(blk[:4], "little"), int.from_bytes(blk[4:], "little"))
        out += A.to_bytes(4, "little") + B.to_bytes(4, "little")
    return bytes(out)


ctr_decrypt = ctr_encrypt


def cbc_mac_blocks(length: int) -> int:
    """Number of block-cipher calls ``cbc_mac`` makes for ``length`` bytes of data."""
    return 1 + ctr_keystream_blocks(length)


def cbc_mac(key: bytes, data: bytes) -> bytes:
    """Length-prefixed CBC-MAC with a zero IV; returns the final 8-byte block.

    The message is one big-endian 8-byte length block followed by ``data``
    zero-padded to a multiple of 8 bytes.
    """
    _check_len("MAC key", key, KEY_SIZE)
    return _cbc_mac(bytes(key), bytes(data))


@lru_cache(maxsize=2048)
def _cbc_mac(key: bytes, data: bytes) -> bytes:
    sched = _rc5_setup_cached(key, DEFAULT_ROUNDS)
    S, rounds = sched.words, sched.rounds
    n = len(data)
    padded = n.to_bytes(8, "big") + data + bytes(-n % BLOCK_SIZE)
    A = B = 0
    for off in range(0, len(padded), BLOCK_SIZE):
        A ^= int.from_bytes(padded[off:off + 4], "little")
        B ^= int.from_bytes(padded[off + 4:off + 8], "little")
        A, B = _encrypt_words(S, rounds, A, B)
    return A.to_bytes(4, "little") + B.to_bytes(4, "little")


def prf(key: bytes, data: bytes) -> bytes:
    """8-byte pseudorandom function; the CBC-MAC under ``key``."""
    return cbc_mac(key, data)


def expand_key(key: bytes, label: int, data: bytes = b"") -> bytes:
    """16-byte key from two PRF calls: ``prf(key, label || 1 || data) || prf(key, label || 2 || data)``."""
    return prf(key, bytes((label, 1)) + data) + prf(key, bytes((label, 2)) + data)


def chain_step(k_next: bytes) -> bytes:
    """One-way chain function: ``K_i = F(K_{i+1})``."""
    _check_len("chain key", k_next, CHAIN_KEY_SIZE)
    return prf(bytes(k_next) + bytes(8), b"\x00")[:CHAIN_KEY_SIZE]


@dataclass(frozen=True)
class PairKeys:
    """Key set of one association, seen from ``local_id``.

    ``shared`` is K_AB; the four directional keys are derived from it.
    """

    local_id: int
    peer_id: int
    shared: bytes
    k_enc_send: bytes
    k_mac_send: bytes
    k_enc_recv: bytes
    k_mac_recv: bytes

    def swapped(self) -> "PairKeys":
        return PairKeys(self.peer_id, self.local_id, self.shared,
                        self.k_enc_recv, self.k_mac_recv, self.k_enc_send, self.k_mac_send)


def _check_id(name: str, value: int) -> None:
    if not isinstance(value, int) or not 0 <= value <= MASK32:
        raise ValueError(f"{name} must be a 32-bit unsigned integer, got {value!r}")


def derive_shared_key(km: bytes, id_a: int, id_b: int) -> bytes:
    """K_AB for an unordered node pair, derived from a 16-byte root key."""
    _check_len("master key", km, KEY_SIZE)
    _check_id("id_a", id_a)
    _check_id("id_b", id_b)
    if id_a == id_b:
        raise ValueError("cannot derive pair keys for a node with itself")
    lo, hi = sorted((id_a, id_b))
    ids = lo.to_bytes(4, "big") + hi.to_bytes(4, "big")
    return prf(km, bytes((LABEL_PAIR_1,)) + ids) + prf(km, bytes((LABEL_PAIR_2,)) + ids)


def pair_keys_from_shared(shared: bytes, id_a: int, id_b: int) -> PairKeys:
    """Directional keys for ``id_a`` talking to ``id_b`` given the pair's K_AB."""
    _check_len("shared key", shared, KEY_SIZE)
    _check_id("id_a", id_a)
    _check_id("id_b", id_b)
    if id_a == id_b:
        raise ValueError("cannot derive pair keys for a node with itself")
    enc_lh = expand_key(shared, LABEL_ENC_LOW_HIGH)
    mac_lh = expand_key(shared, LABEL_MAC_LOW_HIGH)
    enc_hl = expand_key(shared, LABEL_ENC_HIGH_LOW)
    mac_hl = expand_key(shared, LABEL_MAC_HIGH_LOW)
    if id_a < id_b:
        return PairKeys(id_a, id_b, bytes(shared), enc_lh, mac_lh, enc_hl, mac_hl)
    return PairKeys(id_a, id_b, bytes(shared), enc_hl, mac_hl, enc_lh, mac_lh)


def derive_pair_keys(km: bytes, id_a: int, id_b: int) -> PairKeys:
    return pair_keys_from_shared(derive_shared_key(km, id_a, id_b), id_a, id_b)
