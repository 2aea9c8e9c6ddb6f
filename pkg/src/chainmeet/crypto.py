"""Primitive crypto operations used by the rest of the package.

Thin, opinionated wrappers over the `cryptography` package: Ed25519 for
identity signatures, X25519 for the ephemeral key agreement, HKDF-SHA256 to
turn a raw shared secret into an AEAD key, AES-256-GCM for everything
encrypted, HMAC-SHA256 for keyed derivation and commitments. Key material
crosses these functions only as raw 32-byte strings so state stays trivially
serializable.
"""

from __future__ import annotations

import hmac as _stdlib_hmac
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, hmac as _hmac
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import AuthenticationFailure, DegenerateSharedSecret
from .rng import Rng

KEY_LEN = 32
NONCE_LEN = 12
TAG_LEN = 16
SIG_LEN = 64


@dataclass(frozen=True)
class IdentityKeyPair:
    """Long-lived Ed25519 pair; ivk is public, isk stays on the device."""

    ivk: bytes
    isk: bytes


@dataclass(frozen=True)
class EphemeralKeyPair:
    """Per-meeting X25519 pair, discarded when the meeting ends."""

    epk: bytes
    esk: bytes


@dataclass(frozen=True)
class AeadBox:
    """One AES-256-GCM sealing: nonce, ciphertext, 16-byte tag."""

    nonce: bytes
    ciphertext: bytes
    tag: bytes


def identity_keygen(rng: Rng) -> IdentityKeyPair:
    seed = rng.take(KEY_LEN)
    priv = Ed25519PrivateKey.from_private_bytes(seed)
    return IdentityKeyPair(ivk=priv.public_key().public_bytes_raw(), isk=seed)


def ephemeral_keygen(rng: Rng) -> EphemeralKeyPair:
    seed = rng.take(KEY_LEN)
    priv = X25519PrivateKey.from_private_bytes(seed)
    return EphemeralKeyPair(epk=priv.public_key().public_bytes_raw(), esk=seed)


def sign(isk: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(isk).sign(message)


def verify(ivk: bytes, message: bytes, signature: bytes) -> bool:
    """True only for a valid signature; malformed inputs are just False."""
    try:
        Ed25519PublicKey.from_public_bytes(ivk).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def dh(esk: bytes, epk: bytes) -> bytes:
    """X25519 shared secret.

    A low-order peer key drives the output to all zeros; that secret is
    worthless and unsafe to derive from, so it is refused outright.
    """
    try:
        shared = X25519PrivateKey.from_private_bytes(esk).exchange(
            X25519PublicKey.from_public_bytes(epk)
        )
    except ValueError as exc:
        # the backend refuses the all-zero result itself
        raise DegenerateSharedSecret(str(exc)) from None
    if shared == bytes(KEY_LEN):
        raise DegenerateSharedSecret("all-zero shared secret")
    return shared


def derive_enc_key(shared_secret: bytes, context: bytes) -> bytes:
    """HKDF-SHA256 with empty salt; context goes in as the info string."""
    return HKDF(
        algorithm=hashes.SHA256(), length=KEY_LEN, salt=None, info=context
    ).derive(shared_secret)


def aead_encrypt(key: bytes, nonce: bytes, plaintext: bytes, aad: bytes) -> AeadBox:
    if len(nonce) != NONCE_LEN:
        raise ValueError(f"nonce must be {NONCE_LEN} bytes")
    sealed = AESGCM(key).encrypt(nonce, plaintext, aad)
    return AeadBox(nonce=nonce, ciphertext=sealed[:-TAG_LEN], tag=sealed[-TAG_LEN:])


def aead_decrypt(key: bytes, box: AeadBox, aad: bytes) -> bytes:
    try:
        return AESGCM(key).decrypt(box.nonce, box.ciphertext + box.tag, aad)
    except InvalidTag:
        raise AuthenticationFailure("AEAD tag check failed") from None


def hmac_sha256(key: bytes, data: bytes) -> bytes:
    mac = _hmac.HMAC(key, hashes.SHA256())
    mac.update(data)
    return mac.finalize()


def sha256(data: bytes) -> bytes:
    digest = hashes.Hash(hashes.SHA256())
    digest.update(data)
    return digest.finalize()


def constant_time_equal(a: bytes, b: bytes) -> bool:
    return _stdlib_hmac.compare_digest(a, b)
