"""Identity registry on the identity ledger.

A registration binds (user, device) to an identity verification key, exactly
once, forever. The optional user info rides along either in the clear or as
an HMAC commitment whose opening can be shown off-ledger to whoever needs it.

Registration body layout:

    user_len(u32) || user || device_len(u32) || device || ivk(32)
    || info_kind(u8: 0 plain, 1 commitment) || payload_len(u32) || payload
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from . import crypto
from .encoding import Reader, lp, u8
from .errors import EncodingError, InvalidTransaction, NotFound, Reason
from .ledger import Ledger, LedgerKind, Transaction, TxTag, new_ledger

MAX_NAME_BYTES = 64
MAX_INFO_BYTES = 1024

_INFO_PLAIN = 0
_INFO_COMMITMENT = 1


@dataclass(frozen=True)
class PlainInfo:
    data: bytes


@dataclass(frozen=True)
class CommittedInfo:
    """HMAC-SHA256(r, plaintext); opening (plaintext, r) travels off-ledger."""

    mac: bytes


UserInfo = Union[PlainInfo, CommittedInfo]


@dataclass(frozen=True)
class IdentityRecord:
    user: str
    device: str
    ivk: bytes
    info: UserInfo


def _encode_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    if not raw or len(raw) > MAX_NAME_BYTES:
        raise EncodingError(f"name must be 1..{MAX_NAME_BYTES} utf-8 bytes")
    return lp(raw)


def encode_identity_body(user: str, device: str, ivk: bytes, info: UserInfo) -> bytes:
    if len(ivk) != crypto.KEY_LEN:
        raise EncodingError("ivk must be 32 bytes")
    if isinstance(info, PlainInfo):
        kind, payload = _INFO_PLAIN, info.data
        if len(payload) > MAX_INFO_BYTES:
            raise EncodingError(f"user info larger than {MAX_INFO_BYTES} bytes")
    elif isinstance(info, CommittedInfo):
        kind, payload = _INFO_COMMITMENT, info.mac
        if len(payload) != crypto.KEY_LEN:
            raise EncodingError("commitment must be 32 bytes")
    else:
        raise EncodingError(f"unknown user info {info!r}")
    return _encode_name(user) + _encode_name(device) + ivk + u8(kind) + lp(payload)


def parse_identity_body(body: bytes) -> IdentityRecord:
    reader = Reader(body)
    user_raw = reader.lp()
    device_raw = reader.lp()
    ivk = reader.take(crypto.KEY_LEN)
    kind = reader.u8()
    payload = reader.lp()
    reader.finish()
    try:
        user = user_raw.decode("utf-8")
        device = device_raw.decode("utf-8")
    except UnicodeDecodeError:
        raise EncodingError("names must be valid utf-8") from None
    if not user_raw or len(user_raw) > MAX_NAME_BYTES:
        raise EncodingError("bad user length")
    if not device_raw or len(device_raw) > MAX_NAME_BYTES:
        raise EncodingError("bad device length")
    if kind == _INFO_PLAIN:
        if len(payload) > MAX_INFO_BYTES:
            raise EncodingError("user info too large")
        info: UserInfo = PlainInfo(payload)
    elif kind == _INFO_COMMITMENT:
        if len(payload) != crypto.KEY_LEN:
            raise EncodingError("bad commitment length")
        info = CommittedInfo(payload)
    else:
        raise EncodingError(f"unknown info kind {kind}")
    return IdentityRecord(user=user, device=device, ivk=ivk, info=info)


def register_identity(
    user: str,
    device: str,
    keypair: crypto.IdentityKeyPair,
    info: Optional[UserInfo] = None,
) -> Transaction:
    """Build the signed registration transaction for this device."""
    body = encode_identity_body(user, device, keypair.ivk, info or PlainInfo(b""))
    draft = Transaction(tag=TxTag.IDENTITY, body=body, signature=b"\x00" * crypto.SIG_LEN)
    return Transaction(
        tag=TxTag.IDENTITY,
        body=body,
        signature=crypto.sign(keypair.isk, draft.signing_bytes),
    )


def commit_userinfo(plaintext: bytes, blinding: bytes) -> CommittedInfo:
    if len(plaintext) > MAX_INFO_BYTES:
        raise EncodingError(f"user info larger than {MAX_INFO_BYTES} bytes")
    if len(blinding) != crypto.KEY_LEN:
        raise EncodingError("blinding value must be 32 bytes")
    return CommittedInfo(crypto.hmac_sha256(blinding, plaintext))


def verify_userinfo(commitment: CommittedInfo, plaintext: bytes, blinding: bytes) -> bool:
    """Constant-time check of a commitment opening."""
    if len(plaintext) > MAX_INFO_BYTES or len(blinding) != crypto.KEY_LEN:
        return False
    expected = crypto.hmac_sha256(blinding, plaintext)
    return crypto.constant_time_equal(expected, commitment.mac)


def find_identity(ledger: Ledger, user: str, device: str) -> Optional[IdentityRecord]:
    for _, _, tx in ledger.iter_txs():
        if tx.tag != TxTag.IDENTITY:
            continue
        record = parse_identity_body(tx.body)
        if record.user == user and record.device == device:
            return record  # bindings are unique, first hit is the only hit
    return None


def resolve_identity(ledger: Ledger, user: str, device: str) -> bytes:
    record = find_identity(ledger, user, device)
    if record is None:
        raise NotFound(f"no identity for ({user}, {device})")
    return record.ivk


def ivk_registered(ledger: Ledger, ivk: bytes) -> bool:
    return any(
        tx.tag == TxTag.IDENTITY and parse_identity_body(tx.body).ivk == ivk
        for _, _, tx in ledger.iter_txs()
    )


def validate_identity_tx(tx: Transaction, ledger: Ledger) -> None:
    """Admission rule for the identity ledger; raises InvalidTransaction."""
    try:
        record = parse_identity_body(tx.body)
    except EncodingError as exc:
        raise InvalidTransaction(Reason.MALFORMED_BODY, str(exc)) from None
    if not crypto.verify(record.ivk, tx.signing_bytes, tx.signature):
        raise InvalidTransaction(
            Reason.BAD_SIGNATURE, f"({record.user}, {record.device})"
        )
    if find_identity(ledger, record.user, record.device) is not None:
        raise InvalidTransaction(
            Reason.DUPLICATE_BINDING, f"({record.user}, {record.device})"
        )


def new_identity_ledger() -> Ledger:
    return new_ledger(LedgerKind.IDENTITY, validator=validate_identity_tx)
