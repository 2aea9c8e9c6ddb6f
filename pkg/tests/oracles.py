"""Independent reference implementations used only as test oracles.

Deliberately shares no code path with chainmeet.crypto: Ed25519 and X25519
are the textbook constructions over plain integers, AES-256-GCM is built from
the field arithmetic up, and HKDF runs on the standard library's hmac. Slow
and simple on purpose; agreement between these and the package under test is
what the crypto tests actually check.
"""

from __future__ import annotations

import hashlib
import hmac

# ---------------------------------------------------------------------------
# Ed25519

_P = 2**255 - 19
_Q = 2**252 + 27742317777372353535851937790883648493
_D = (-121665 * pow(121666, _P - 2, _P)) % _P
_SQRT_M1 = pow(2, (_P - 1) // 4, _P)


def _sha512(data: bytes) -> bytes:
    return hashlib.sha512(data).digest()


def _pt_add(a, b):
    x1, y1, z1, t1 = a
    x2, y2, z2, t2 = b
    e1 = (y1 - x1) * (y2 - x2) % _P
    e2 = (y1 + x1) * (y2 + x2) % _P
    e3 = 2 * t1 * t2 * _D % _P
    e4 = 2 * z1 * z2 % _P
    e, f, g, h = e2 - e1, e4 - e3, e4 + e3, e2 + e1
    return (e * f % _P, g * h % _P, f * g % _P, e * h % _P)


def _pt_mul(s, pt):
    acc = (0, 1, 1, 0)
    while s > 0:
        if s & 1:
            acc = _pt_add(acc, pt)
        pt = _pt_add(pt, pt)
        s >>= 1
    return acc


def _pt_compress(pt) -> bytes:
    zinv = pow(pt[2], _P - 2, _P)
    x = pt[0] * zinv % _P
    y = pt[1] * zinv % _P
    return int.to_bytes(y | ((x & 1) << 255), 32, "little")


def _recover_x(y, sign):
    if y >= _P:
        return None
    x2 = (y * y - 1) * pow(_D * y * y + 1, _P - 2, _P) % _P
    if x2 == 0:
        return None if sign else 0
    x = pow(x2, (_P + 3) // 8, _P)
    if (x * x - x2) % _P != 0:
        x = x * _SQRT_M1 % _P
    if (x * x - x2) % _P != 0:
        return None
    if (x & 1) != sign:
        x = _P - x
    return x


_GY = 4 * pow(5, _P - 2, _P) % _P
_GX = _recover_x(_GY, 0)
_G = (_GX, _GY, 1, _GX * _GY % _P)


def _secret_expand(secret: bytes):
    h = _sha512(secret)
    a = int.from_bytes(h[:32], "little")
    a &= (1 << 254) - 8
    a |= 1 << 254
    return a, h[32:]


def ed25519_public(secret: bytes) -> bytes:
    a, _ = _secret_expand(secret)
    return _pt_compress(_pt_mul(a, _G))


def ed25519_sign(secret: bytes, message: bytes) -> bytes:
    a, prefix = _secret_expand(secret)
    pub = _pt_compress(_pt_mul(a, _G))
    r = int.from_bytes(_sha512(prefix + message), "little") % _Q
    r_enc = _pt_compress(_pt_mul(r, _G))
    h = int.from_bytes(_sha512(r_enc + pub + message), "little") % _Q
    s = (r + h * a) % _Q
    return r_enc + int.to_bytes(s, 32, "little")


# ---------------------------------------------------------------------------
# X25519

def _decode_u(u: bytes) -> int:
    masked = bytearray(u)
    masked[31] &= 127
    return int.from_bytes(masked, "little")


def _decode_scalar(k: bytes) -> int:
    clamped = bytearray(k)
    clamped[0] &= 248
    clamped[31] &= 127
    clamped[31] |= 64
    return int.from_bytes(clamped, "little")


def x25519(scalar: bytes, u_coord: bytes) -> bytes:
    k = _decode_scalar(scalar)
    x1 = _decode_u(u_coord)
    x2, z2, x3, z3 = 1, 0, x1, 1
    swap = 0
    for t in reversed(range(255)):
        k_t = (k >> t) & 1
        if swap ^ k_t:
            x2, x3 = x3, x2
            z2, z3 = z3, z2
        swap = k_t
        a = (x2 + z2) % _P
        aa = a * a % _P
        b = (x2 - z2) % _P
        bb = b * b % _P
        e = (aa - bb) % _P
        c = (x3 + z3) % _P
        d = (x3 - z3) % _P
        da = d * a % _P
        cb = c * b % _P
        x3 = (da + cb) % _P
        x3 = x3 * x3 % _P
        z3 = (da - cb) % _P
        z3 = z3 * z3 % _P
        z3 = z3 * x1 % _P
        x2 = aa * bb % _P
        z2 = e * (aa + 121665 * e) % _P
    if swap:
        x2, x3 = x3, x2
        z2, z3 = z3, z2
    return (x2 * pow(z2, _P - 2, _P) % _P).to_bytes(32, "little")


def x25519_public(scalar: bytes) -> bytes:
    return x25519(scalar, (9).to_bytes(32, "little"))


# ---------------------------------------------------------------------------
# AES-256-GCM

def _gf8_mul(a: int, b: int) -> int:
    r = 0
    for _ in range(8):
        if b & 1:
            r ^= a
        high = a & 0x80
        a = (a << 1) & 0xFF
        if high:
            a ^= 0x1B
        b >>= 1
    return r


def _build_sbox():
    sbox = [0] * 256
    for x in range(256):
        # multiplicative inverse, then the affine transform with c = 0x63
        inv = 0
        if x:
            inv = 1
            acc = x
            for _ in range(7):  # x^254 = x^(2+4+...+128) via repeated squaring
                acc = _gf8_mul(acc, acc)
                inv = _gf8_mul(inv, acc)
        out = 0
        for i in range(8):
            bit = (
                (inv >> i)
                ^ (inv >> ((i + 4) % 8))
                ^ (inv >> ((i + 5) % 8))
                ^ (inv >> ((i + 6) % 8))
                ^ (inv >> ((i + 7) % 8))
                ^ (0x63 >> i)
            ) & 1
            out |= bit << i
        sbox[x] = out
    return sbox


_SBOX = _build_sbox()


def _sub_word(w: int) -> int:
    return int.from_bytes(bytes(_SBOX[b] for b in w.to_bytes(4, "big")), "big")


def _expand_key_256(key: bytes):
    nk, nr = 8, 14
    words = [int.from_bytes(key[4 * i : 4 * i + 4], "big") for i in range(nk)]
    rcon = 1
    for i in range(nk, 4 * (nr + 1)):
        temp = words[i - 1]
        if i % nk == 0:
            rotated = ((temp << 8) | (temp >> 24)) & 0xFFFFFFFF
            temp = _sub_word(rotated) ^ (rcon << 24)
            rcon = _gf8_mul(rcon, 2)
        elif i % nk == 4:
            temp = _sub_word(temp)
        words.append(words[i - nk] ^ temp)
    return words


def _aes256_block(key_schedule, block: bytes) -> bytes:
    nr = 14
    state = list(block)

    def add_round_key(rnd):
        for col in range(4):
            word = key_schedule[4 * rnd + col].to_bytes(4, "big")
            for row in range(4):
                state[row + 4 * col] ^= word[row]

    def sub_bytes():
        for i in range(16):
            state[i] = _SBOX[state[i]]

    def shift_rows():
        old = state[:]
        for row in range(4):
            for col in range(4):
                state[row + 4 * col] = old[row + 4 * ((col + row) % 4)]

    def mix_columns():
        for col in range(4):
            s = state[4 * col : 4 * col + 4]
            state[4 * col + 0] = _gf8_mul(s[0], 2) ^ _gf8_mul(s[1], 3) ^ s[2] ^ s[3]
            state[4 * col + 1] = s[0] ^ _gf8_mul(s[1], 2) ^ _gf8_mul(s[2], 3) ^ s[3]
            state[4 * col + 2] = s[0] ^ s[1] ^ _gf8_mul(s[2], 2) ^ _gf8_mul(s[3], 3)
            state[4 * col + 3] = _gf8_mul(s[0], 3) ^ s[1] ^ s[2] ^ _gf8_mul(s[3], 2)

    add_round_key(0)
    for rnd in range(1, nr):
        sub_bytes()
        shift_rows()
        mix_columns()
        add_round_key(rnd)
    sub_bytes()
    shift_rows()
    add_round_key(nr)
    return bytes(state)


def _gf128_mul(x: int, y: int) -> int:
    reduction = 0xE1 << 120
    z = 0
    v = x
    for i in range(128):
        if (y >> (127 - i)) & 1:
            z ^= v
        if v & 1:
            v = (v >> 1) ^ reduction
        else:
            v >>= 1
    return z


def _ghash(h: int, aad: bytes, ciphertext: bytes) -> int:
    def blocks(data):
        padded = data + bytes(-len(data) % 16)
        return [padded[i : i + 16] for i in range(0, len(padded), 16)]

    y = 0
    for block in blocks(aad) + blocks(ciphertext):
        y = _gf128_mul(y ^ int.from_bytes(block, "big"), h)
    lengths = (len(aad) * 8).to_bytes(8, "big") + (len(ciphertext) * 8).to_bytes(8, "big")
    return _gf128_mul(y ^ int.from_bytes(lengths, "big"), h)


def aes256gcm_encrypt(key: bytes, nonce: bytes, plaintext: bytes, aad: bytes):
    """Returns (ciphertext, tag); nonce must be the 12-byte form."""
    assert len(key) == 32 and len(nonce) == 12
    schedule = _expand_key_256(key)
    h = int.from_bytes(_aes256_block(schedule, bytes(16)), "big")
    j0 = nonce + (1).to_bytes(4, "big")

    ciphertext = bytearray()
    counter = 2
    for i in range(0, len(plaintext), 16):
        block = nonce + counter.to_bytes(4, "big")
        keystream = _aes256_block(schedule, block)
        chunk = plaintext[i : i + 16]
        ciphertext.extend(x ^ y for x, y in zip(chunk, keystream))
        counter += 1

    s = _ghash(h, aad, bytes(ciphertext))
    tag_block = _aes256_block(schedule, j0)
    tag = (int.from_bytes(tag_block, "big") ^ s).to_bytes(16, "big")
    return bytes(ciphertext), tag


# ---------------------------------------------------------------------------
# Hash-family oracles on the standard library

def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hmac_sha256(key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, hashlib.sha256).digest()


def hkdf_sha256(ikm: bytes, salt: bytes, info: bytes, length: int) -> bytes:
    prk = hmac.new(salt if salt else bytes(32), ikm, hashlib.sha256).digest()
    okm = b""
    t = b""
    counter = 1
    while len(okm) < length:
        t = hmac.new(prk, t + info + bytes([counter]), hashlib.sha256).digest()
        okm += t
        counter += 1
    return okm[:length]
