"""Meeting lifecycle: publish, join, key distribution, media, departure.

The leader mints a fresh 32-byte meeting key per epoch and wraps it to each
verified member under an ephemeral Diffie-Hellman agreement; the wrap's
derivation context and associated data both pin (meeting, epoch, recipient),
so a distribution spliced between meetings can only fail authentication,
never hand over the wrong key silently. Media is AES-256-GCM per stream with
the stream key derived from the epoch's meeting key by HMAC.

Transaction body layouts (all on the meeting ledger):

    publish   meeting_id(16) || info_len(u32) || info || leader_ivk(32) || leader_epk(32)
    request   meeting_id(16) || user_len(u32) || user || device_len(u32) || device
              || ivk(32) || epk(32)
    key dist  meeting_id(16) || epoch(u32) || leader_epk(32) || entry_count(u32)
              || entries: recipient_ivk(32) || nonce(12) || ct_len(u32) || ct || tag(16)
    leave     meeting_id(16) || user_len(u32) || user || device_len(u32) || device || ivk(32)
    reassign  meeting_id(16) || prev_ivk(32) || new_ivk(32) || new_epk(32)
              || has_prev_sig(u8) || [prev_sig(64)]
    dismiss   meeting_id(16)

MediaPacket wire layout:

    stream_id(u32) || epoch(u32) || counter(u64) || nonce(12)
    || ct_len(u32) || ct || tag(16)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

from . import crypto, identity as identity_mod
from .encoding import Reader, U64_MAX, lp, u8, u32, u64
from .errors import (
    AuthenticationFailure,
    CounterExhausted,
    EncodingError,
    InvalidTransaction,
    MeetingDismissed,
    MeetingNotFound,
    NewLeaderNotMember,
    NoEntryForMe,
    NoMeetingKey,
    NotAMember,
    NotCurrentLeader,
    NotFound,
    Reason,
)
from .ledger import Ledger, LedgerKind, Transaction, TxTag, new_ledger
from .rng import Rng

MEETING_ID_LEN = 16
MAX_EPOCH = 2**32 - 1


class Role(enum.Enum):
    OUTSIDER = "outsider"
    REQUESTER = "requester"
    MEMBER = "member"
    LEADER = "leader"


class ReassignRule(enum.Enum):
    DESIGNATION = "designation"
    TIME_ORDER = "timeorder"


# ---------------------------------------------------------------------------
# transaction shapes


@dataclass(frozen=True)
class PublishMeeting:
    meeting_id: bytes
    info: str
    leader_ivk: bytes
    leader_epk: bytes

    def encode_body(self) -> bytes:
        return (
            self.meeting_id
            + lp(self.info.encode("utf-8"))
            + self.leader_ivk
            + self.leader_epk
        )

    @classmethod
    def parse(cls, body: bytes) -> "PublishMeeting":
        reader = Reader(body)
        meeting_id = reader.take(MEETING_ID_LEN)
        info = reader.lp().decode("utf-8")
        leader_ivk = reader.take(32)
        leader_epk = reader.take(32)
        reader.finish()
        return cls(meeting_id, info, leader_ivk, leader_epk)


@dataclass(frozen=True)
class MeetingRequest:
    meeting_id: bytes
    user: str
    device: str
    ivk: bytes
    epk: bytes

    def encode_body(self) -> bytes:
        return (
            self.meeting_id
            + lp(self.user.encode("utf-8"))
            + lp(self.device.encode("utf-8"))
            + self.ivk
            + self.epk
        )

    @classmethod
    def parse(cls, body: bytes) -> "MeetingRequest":
        reader = Reader(body)
        meeting_id = reader.take(MEETING_ID_LEN)
        user = reader.lp().decode("utf-8")
        device = reader.lp().decode("utf-8")
        ivk = reader.take(32)
        epk = reader.take(32)
        reader.finish()
        return cls(meeting_id, user, device, ivk, epk)


@dataclass(frozen=True)
class KeyEntry:
    recipient_ivk: bytes
    box: crypto.AeadBox

    def encode(self) -> bytes:
        return (
            self.recipient_ivk
            + self.box.nonce
            + lp(self.box.ciphertext)
            + self.box.tag
        )


@dataclass(frozen=True)
class KeyDistribution:
    meeting_id: bytes
    epoch: int
    leader_epk: bytes
    entries: tuple[KeyEntry, ...]

    def encode_body(self) -> bytes:
        out = self.meeting_id + u32(self.epoch) + self.leader_epk
        out += u32(len(self.entries))
        for entry in self.entries:
            out += entry.encode()
        return out

    @classmethod
    def parse(cls, body: bytes) -> "KeyDistribution":
        reader = Reader(body)
        meeting_id = reader.take(MEETING_ID_LEN)
        epoch = reader.u32()
        leader_epk = reader.take(32)
        entries = []
        for _ in range(reader.u32()):
            recipient_ivk = reader.take(32)
            nonce = reader.take(crypto.NONCE_LEN)
            ciphertext = reader.lp()
            tag = reader.take(crypto.TAG_LEN)
            entries.append(
                KeyEntry(recipient_ivk, crypto.AeadBox(nonce, ciphertext, tag))
            )
        reader.finish()
        return cls(meeting_id, epoch, leader_epk, tuple(entries))

    def entry_for(self, ivk: bytes) -> Optional[KeyEntry]:
        for entry in self.entries:
            if entry.recipient_ivk == ivk:
                return entry
        return None


@dataclass(frozen=True)
class MeetingLeave:
    meeting_id: bytes
    user: str
    device: str
    ivk: bytes

    def encode_body(self) -> bytes:
        return (
            self.meeting_id
            + lp(self.user.encode("utf-8"))
            + lp(self.device.encode("utf-8"))
            + self.ivk
        )

    @classmethod
    def parse(cls, body: bytes) -> "MeetingLeave":
        reader = Reader(body)
        meeting_id = reader.take(MEETING_ID_LEN)
        user = reader.lp().decode("utf-8")
        device = reader.lp().decode("utf-8")
        ivk = reader.take(32)
        reader.finish()
        return cls(meeting_id, user, device, ivk)


@dataclass(frozen=True)
class LeaderReassign:
    meeting_id: bytes
    prev_leader_ivk: bytes
    new_leader_ivk: bytes
    new_leader_epk: bytes
    prev_leader_sig: Optional[bytes]  # present under the designation rule

    def encode_body(self) -> bytes:
        out = (
            self.meeting_id
            + self.prev_leader_ivk
            + self.new_leader_ivk
            + self.new_leader_epk
        )
        if self.prev_leader_sig is None:
            return out + u8(0)
        return out + u8(1) + self.prev_leader_sig

    @classmethod
    def parse(cls, body: bytes) -> "LeaderReassign":
        reader = Reader(body)
        meeting_id = reader.take(MEETING_ID_LEN)
        prev_ivk = reader.take(32)
        new_ivk = reader.take(32)
        new_epk = reader.take(32)
        has_sig = reader.u8()
        if has_sig not in (0, 1):
            raise EncodingError("has_prev_sig must be 0 or 1")
        prev_sig = reader.take(crypto.SIG_LEN) if has_sig else None
        reader.finish()
        return cls(meeting_id, prev_ivk, new_ivk, new_epk, prev_sig)

    def handover_bytes(self) -> bytes:
        """What the outgoing leader endorses under the designation rule."""
        return (
            self.meeting_id
            + self.prev_leader_ivk
            + self.new_leader_ivk
            + self.new_leader_epk
        )


@dataclass(frozen=True)
class MeetingDismiss:
    meeting_id: bytes

    def encode_body(self) -> bytes:
        return self.meeting_id

    @classmethod
    def parse(cls, body: bytes) -> "MeetingDismiss":
        reader = Reader(body)
        meeting_id = reader.take(MEETING_ID_LEN)
        reader.finish()
        return cls(meeting_id)


MeetingTx = Union[
    PublishMeeting, MeetingRequest, KeyDistribution, MeetingLeave,
    LeaderReassign, MeetingDismiss,
]

_PARSERS = {
    TxTag.MEETING_PUBLISH: PublishMeeting.parse,
    TxTag.MEETING_REQUEST: MeetingRequest.parse,
    TxTag.KEY_DISTRIBUTION: KeyDistribution.parse,
    TxTag.MEETING_LEAVE: MeetingLeave.parse,
    TxTag.LEADER_REASSIGN: LeaderReassign.parse,
    TxTag.MEETING_DISMISS: MeetingDismiss.parse,
}

_TAGS = {
    PublishMeeting: TxTag.MEETING_PUBLISH,
    MeetingRequest: TxTag.MEETING_REQUEST,
    KeyDistribution: TxTag.KEY_DISTRIBUTION,
    MeetingLeave: TxTag.MEETING_LEAVE,
    LeaderReassign: TxTag.LEADER_REASSIGN,
    MeetingDismiss: TxTag.MEETING_DISMISS,
}


def parse_meeting_tx(tx: Transaction) -> MeetingTx:
    try:
        parser = _PARSERS[TxTag(tx.tag)]
    except ValueError:
        raise EncodingError(f"unknown meeting tag {tx.tag}") from None
    try:
        return parser(tx.body)
    except UnicodeDecodeError:
        raise EncodingError("names must be valid utf-8") from None


def signed_tx(payload: MeetingTx, isk: bytes) -> Transaction:
    """Wrap a meeting payload as a ledger transaction signed by isk."""
    tag = _TAGS[type(payload)]
    body = payload.encode_body()
    signature = crypto.sign(isk, u8(tag) + body)
    return Transaction(tag=tag, body=body, signature=signature)


# ---------------------------------------------------------------------------
# derivations


def kdf_context(meeting_id: bytes, epoch: int, leader_epk: bytes, member_epk: bytes) -> bytes:
    return meeting_id + u32(epoch) + leader_epk + member_epk


def wrap_aad(meeting_id: bytes, epoch: int, recipient_ivk: bytes) -> bytes:
    return meeting_id + u32(epoch) + recipient_ivk


def derive_stream_key(meeting_key: bytes, stream_id: int) -> bytes:
    return crypto.hmac_sha256(meeting_key, u32(stream_id))


def media_nonce(epoch: int, counter: int) -> bytes:
    return u32(epoch) + u64(counter)


def media_aad(meeting_id: bytes, stream_id: int) -> bytes:
    return meeting_id + u32(stream_id)


@dataclass(frozen=True)
class MeetingKey:
    key: bytes
    epoch: int


@dataclass(frozen=True)
class MediaPacket:
    stream_id: int
    epoch: int
    counter: int
    box: crypto.AeadBox

    def wire_bytes(self) -> bytes:
        return (
            u32(self.stream_id)
            + u32(self.epoch)
            + u64(self.counter)
            + self.box.nonce
            + lp(self.box.ciphertext)
            + self.box.tag
        )

    @classmethod
    def parse(cls, data: bytes) -> "MediaPacket":
        reader = Reader(data)
        stream_id = reader.u32()
        epoch = reader.u32()
        counter = reader.u64()
        nonce = reader.take(crypto.NONCE_LEN)
        ciphertext = reader.lp()
        tag = reader.take(crypto.TAG_LEN)
        reader.finish()
        return cls(stream_id, epoch, counter, crypto.AeadBox(nonce, ciphertext, tag))


# ---------------------------------------------------------------------------
# ledger-derived meeting view


@dataclass
class RequestRecord:
    user: str
    device: str
    ivk: bytes
    epk: bytes
    block_index: int
    block_pos: int
    verified: bool  # signature checks out and the identity ledger agrees
    active: bool = True


@dataclass
class MeetingView:
    """Everything a validator can derive about one meeting from the chain."""

    meeting_id: bytes
    exists: bool = False
    info: str = ""
    leader_ivk: bytes = b""
    publish_epk: bytes = b""
    dismissed: bool = False
    last_epoch: Optional[int] = None
    distributions: dict[int, KeyDistribution] = field(default_factory=dict)
    leader_by_epoch: dict[int, bytes] = field(default_factory=dict)
    requests: list[RequestRecord] = field(default_factory=list)
    # leaders (original or reassigned-in) who have not posted a leave
    present_leader_ivks: set[bytes] = field(default_factory=set)
    request_bytes_seen: set[bytes] = field(default_factory=set)

    def record_for(
        self, user: str, device: str, ivk: Optional[bytes] = None
    ) -> Optional[RequestRecord]:
        """Active request under this binding; pass ivk to pin the principal.

        The ivk filter matters when a forged request squats on someone
        else's (user, device): the honest record must still be reachable.
        """
        for record in self.requests:
            if record.user != user or record.device != device or not record.active:
                continue
            if ivk is not None and record.ivk != ivk:
                continue
            return record
        return None

    def members(self) -> list[RequestRecord]:
        """Verified, still-present requesters in arrival order."""
        return [r for r in self.requests if r.verified and r.active]

    def earliest_member(self) -> Optional[RequestRecord]:
        members = self.members()
        return members[0] if members else None

    def member_with_ivk(self, ivk: bytes) -> Optional[RequestRecord]:
        for record in self.members():
            if record.ivk == ivk:
                return record
        return None


def verify_request(
    request: MeetingRequest, signature_ok: bool, identity_ledger: Ledger
) -> Optional[Reason]:
    """Leader-side admission of one join request; None means accepted."""
    if not signature_ok:
        return Reason.BAD_SIGNATURE
    try:
        expected_ivk = identity_mod.resolve_identity(
            identity_ledger, request.user, request.device
        )
    except NotFound:
        return Reason.UNKNOWN_IDENTITY
    if expected_ivk != request.ivk:
        return Reason.KEY_MISMATCH
    return None


def verify_request_tx(tx: Transaction, identity_ledger: Ledger) -> Optional[Reason]:
    try:
        request = MeetingRequest.parse(tx.body)
    except (EncodingError, UnicodeDecodeError):
        return Reason.MALFORMED_BODY
    signature_ok = crypto.verify(request.ivk, tx.signing_bytes, tx.signature)
    return verify_request(request, signature_ok, identity_ledger)


def build_view(
    meeting_ledger: Ledger, identity_ledger: Ledger, meeting_id: bytes
) -> MeetingView:
    view = MeetingView(meeting_id=meeting_id)
    for block_index, pos, tx in meeting_ledger.iter_txs():
        try:
            payload = parse_meeting_tx(tx)
        except EncodingError:
            continue  # an unparseable tx can never have been admitted
        if payload.meeting_id != meeting_id:
            continue
        if isinstance(payload, PublishMeeting):
            if not view.exists:
                view.exists = True
                view.info = payload.info
                view.leader_ivk = payload.leader_ivk
                view.publish_epk = payload.leader_epk
                view.present_leader_ivks.add(payload.leader_ivk)
        elif isinstance(payload, MeetingRequest):
            verdict = verify_request_tx(tx, identity_ledger)
            view.requests.append(
                RequestRecord(
                    user=payload.user,
                    device=payload.device,
                    ivk=payload.ivk,
                    epk=payload.epk,
                    block_index=block_index,
                    block_pos=pos,
                    verified=verdict is None,
                )
            )
            view.request_bytes_seen.add(tx.wire_bytes())
        elif isinstance(payload, KeyDistribution):
            view.last_epoch = payload.epoch
            view.distributions[payload.epoch] = payload
            view.leader_by_epoch[payload.epoch] = view.leader_ivk
        elif isinstance(payload, MeetingLeave):
            record = view.record_for(payload.user, payload.device, payload.ivk)
            if record is not None:
                record.active = False
            view.present_leader_ivks.discard(payload.ivk)
        elif isinstance(payload, LeaderReassign):
            view.leader_ivk = payload.new_leader_ivk
            view.present_leader_ivks.add(payload.new_leader_ivk)
        elif isinstance(payload, MeetingDismiss):
            view.dismissed = True
    return view


def all_meeting_ids(meeting_ledger: Ledger) -> list[bytes]:
    seen = []
    for _, _, tx in meeting_ledger.iter_txs():
        if tx.tag == TxTag.MEETING_PUBLISH:
            meeting_id = PublishMeeting.parse(tx.body).meeting_id
            if meeting_id not in seen:
                seen.append(meeting_id)
    return seen


# ---------------------------------------------------------------------------
# validation (used at ledger admission and by every honest observer)


def reassign_verdict(
    payload: LeaderReassign,
    tx: Transaction,
    view: MeetingView,
    identity_ledger: Ledger,
    rule: ReassignRule,
) -> Optional[Reason]:
    if not view.exists:
        return Reason.MEETING_NOT_FOUND
    if view.dismissed:
        return Reason.MEETING_DISMISSED
    if payload.prev_leader_ivk != view.leader_ivk:
        return Reason.RULE_VIOLATION
    if not identity_mod.ivk_registered(identity_ledger, payload.new_leader_ivk):
        return Reason.UNKNOWN_IDENTITY
    member = view.member_with_ivk(payload.new_leader_ivk)
    if member is None:
        return Reason.RULE_VIOLATION
    if not crypto.verify(payload.new_leader_ivk, tx.signing_bytes, tx.signature):
        return Reason.BAD_SIGNATURE
    if rule is ReassignRule.DESIGNATION:
        if payload.prev_leader_sig is None:
            return Reason.RULE_VIOLATION
        if not crypto.verify(
            payload.prev_leader_ivk, payload.handover_bytes(), payload.prev_leader_sig
        ):
            return Reason.BAD_SIGNATURE
    else:  # time order: the chain itself picks the successor
        if payload.prev_leader_sig is not None:
            return Reason.RULE_VIOLATION
        earliest = view.earliest_member()
        if earliest is None or earliest.ivk != payload.new_leader_ivk:
            return Reason.RULE_VIOLATION
    return None


def meeting_tx_verdict(
    tx: Transaction,
    meeting_ledger: Ledger,
    identity_ledger: Ledger,
    rule: ReassignRule,
) -> Optional[Reason]:
    """Validation verdict for one meeting-ledger transaction; None accepts."""
    try:
        payload = parse_meeting_tx(tx)
    except EncodingError:
        return Reason.MALFORMED_BODY
    view = build_view(meeting_ledger, identity_ledger, payload.meeting_id)

    if isinstance(payload, PublishMeeting):
        if view.exists:
            return Reason.DUPLICATE_MEETING
        if not identity_mod.ivk_registered(identity_ledger, payload.leader_ivk):
            return Reason.UNKNOWN_IDENTITY
        if not crypto.verify(payload.leader_ivk, tx.signing_bytes, tx.signature):
            return Reason.BAD_SIGNATURE
        return None

    if not view.exists:
        return Reason.MEETING_NOT_FOUND
    if view.dismissed:
        return Reason.MEETING_DISMISSED

    if isinstance(payload, MeetingRequest):
        # only self-consistency here; matching the identity ledger is the
        # leader's call, so impersonation is caught there with a precise reason
        if not crypto.verify(payload.ivk, tx.signing_bytes, tx.signature):
            return Reason.BAD_SIGNATURE
        if tx.wire_bytes() in view.request_bytes_seen:
            return Reason.REPLAYED_REQUEST
        if view.record_for(payload.user, payload.device, payload.ivk) is not None:
            return Reason.DUPLICATE_REQUEST
        return None

    if isinstance(payload, KeyDistribution):
        if not crypto.verify(view.leader_ivk, tx.signing_bytes, tx.signature):
            return Reason.NOT_CURRENT_LEADER
        expected = 0 if view.last_epoch is None else view.last_epoch + 1
        if payload.epoch != expected:
            return Reason.BAD_EPOCH
        return None

    if isinstance(payload, MeetingLeave):
        if not crypto.verify(payload.ivk, tx.signing_bytes, tx.signature):
            return Reason.BAD_SIGNATURE
        record = view.record_for(payload.user, payload.device, payload.ivk)
        if record is None and payload.ivk not in view.present_leader_ivks:
            return Reason.NOT_A_MEMBER
        return None

    if isinstance(payload, LeaderReassign):
        return reassign_verdict(payload, tx, view, identity_ledger, rule)

    assert isinstance(payload, MeetingDismiss)
    if not crypto.verify(view.leader_ivk, tx.signing_bytes, tx.signature):
        return Reason.NOT_CURRENT_LEADER
    return None


def make_meeting_validator(identity_ledger: Ledger, rule: ReassignRule):
    def _validate(tx: Transaction, ledger: Ledger) -> None:
        reason = meeting_tx_verdict(tx, ledger, identity_ledger, rule)
        if reason is not None:
            raise InvalidTransaction(reason)

    return _validate


def new_meeting_ledger(
    identity_ledger: Ledger, rule: ReassignRule = ReassignRule.DESIGNATION
) -> Ledger:
    return new_ledger(
        LedgerKind.MEETING, validator=make_meeting_validator(identity_ledger, rule)
    )


# ---------------------------------------------------------------------------
# participant state and operations


Policy = Callable[[str, str, Optional[identity_mod.UserInfo]], bool]


def allow_all(user: str, device: str, info: Optional[identity_mod.UserInfo]) -> bool:
    return True


@dataclass
class MemberSlot:
    user: str
    device: str
    ivk: bytes
    epk: bytes


@dataclass
class ParticipantState:
    """One actor's view of one meeting."""

    user: str
    device: str
    keypair: crypto.IdentityKeyPair
    meeting_id: Optional[bytes] = None
    role: Role = Role.OUTSIDER
    ephemeral: Optional[crypto.EphemeralKeyPair] = None
    known_mk: Optional[MeetingKey] = None
    # leader bookkeeping
    membership_view: dict[tuple[str, str], MemberSlot] = field(default_factory=dict)
    denied: set[tuple[str, str]] = field(default_factory=set)
    reviewed: set[tuple[int, int]] = field(default_factory=set)
    last_epoch: Optional[int] = None
    rekey_pending: bool = False
    # sender side: next counter per (stream, epoch)
    stream_counters: dict[tuple[int, int], int] = field(default_factory=dict)


def publish_meeting(
    state: ParticipantState, info: str, rng: Rng
) -> Transaction:
    """Create a meeting; the caller becomes its leader."""
    meeting_id = rng.take(MEETING_ID_LEN)
    ephemeral = crypto.ephemeral_keygen(rng)
    state.meeting_id = meeting_id
    state.role = Role.LEADER
    state.ephemeral = ephemeral
    state.known_mk = None
    state.membership_view = {}
    state.last_epoch = None
    payload = PublishMeeting(
        meeting_id=meeting_id,
        info=info,
        leader_ivk=state.keypair.ivk,
        leader_epk=ephemeral.epk,
    )
    return signed_tx(payload, state.keypair.isk)


def make_request(
    state: ParticipantState,
    meeting_ledger: Ledger,
    identity_ledger: Ledger,
    meeting_id: bytes,
    rng: Rng,
) -> Transaction:
    view = build_view(meeting_ledger, identity_ledger, meeting_id)
    if not view.exists:
        raise MeetingNotFound(meeting_id.hex())
    if view.dismissed:
        raise MeetingDismissed(meeting_id.hex())
    ephemeral = crypto.ephemeral_keygen(rng)
    state.meeting_id = meeting_id
    state.role = Role.REQUESTER
    state.ephemeral = ephemeral
    payload = MeetingRequest(
        meeting_id=meeting_id,
        user=state.user,
        device=state.device,
        ivk=state.keypair.ivk,
        epk=ephemeral.epk,
    )
    return signed_tx(payload, state.keypair.isk)


@dataclass(frozen=True)
class ReviewOutcome:
    user: str
    device: str
    verdict: Optional[Reason]  # None = verified
    granted: bool


def review_requests(
    state: ParticipantState,
    meeting_ledger: Ledger,
    identity_ledger: Ledger,
    policy: Policy = allow_all,
) -> list[ReviewOutcome]:
    """Leader pass over the chain: verify new requests, apply policy, track
    departures. Returns one outcome per newly reviewed request."""
    if state.role is not Role.LEADER:
        raise NotCurrentLeader(f"{state.user} is not leading")
    view = build_view(meeting_ledger, identity_ledger, state.meeting_id)
    outcomes = []
    for record in view.requests:
        slot_key = (record.user, record.device)
        mark = (record.block_index, record.block_pos)
        if mark in state.reviewed:
            continue
        state.reviewed.add(mark)
        if not record.active:
            continue  # arrived and already left
        if not record.verified:
            # re-derive the precise reason for reporting
            fake = MeetingRequest(
                state.meeting_id, record.user, record.device, record.ivk, record.epk
            )
            reason = verify_request(fake, True, identity_ledger)
            outcomes.append(
                ReviewOutcome(record.user, record.device, reason, granted=False)
            )
            continue
        info = None
        found = identity_mod.find_identity(identity_ledger, record.user, record.device)
        if found is not None:
            info = found.info
        if policy(record.user, record.device, info):
            state.membership_view[slot_key] = MemberSlot(
                record.user, record.device, record.ivk, record.epk
            )
            state.rekey_pending = True
            outcomes.append(ReviewOutcome(record.user, record.device, None, True))
        else:
            state.denied.add(slot_key)
            outcomes.append(ReviewOutcome(record.user, record.device, None, False))
    # departures observed on the chain drop out of the membership view
    for slot_key, slot in list(state.membership_view.items()):
        if view.record_for(slot.user, slot.device, slot.ivk) is None:
            del state.membership_view[slot_key]
            state.rekey_pending = True
    return outcomes


def distribute_key(state: ParticipantState, rng: Rng) -> Transaction:
    """Mint the next epoch's meeting key and wrap it to every member.

    Epoch 0 rides on the ephemeral announced at publish (or handover); every
    later epoch requires a membership change and gets a fresh ephemeral.
    """
    if state.role is not Role.LEADER:
        raise NotCurrentLeader(f"{state.user} is not leading")
    epoch = 0 if state.last_epoch is None else state.last_epoch + 1
    if epoch > 0:
        if not state.rekey_pending:
            raise InvalidTransaction(
                Reason.RULE_VIOLATION, "rekey without a membership change"
            )
        if epoch > MAX_EPOCH:
            raise InvalidTransaction(Reason.BAD_EPOCH, "epoch space exhausted")
        state.ephemeral = crypto.ephemeral_keygen(rng)
    meeting_key = rng.take(crypto.KEY_LEN)
    entries = []
    for slot in state.membership_view.values():
        shared = crypto.dh(state.ephemeral.esk, slot.epk)
        enc_key = crypto.derive_enc_key(
            shared,
            kdf_context(state.meeting_id, epoch, state.ephemeral.epk, slot.epk),
        )
        box = crypto.aead_encrypt(
            enc_key,
            rng.take(crypto.NONCE_LEN),
            meeting_key,
            wrap_aad(state.meeting_id, epoch, slot.ivk),
        )
        entries.append(KeyEntry(slot.ivk, box))
    state.known_mk = MeetingKey(meeting_key, epoch)
    state.last_epoch = epoch
    state.rekey_pending = False
    payload = KeyDistribution(
        meeting_id=state.meeting_id,
        epoch=epoch,
        leader_epk=state.ephemeral.epk,
        entries=tuple(entries),
    )
    return signed_tx(payload, state.keypair.isk)


def accept_key(state: ParticipantState, dist: KeyDistribution) -> MeetingKey:
    """Member side of key distribution.

    The unwrap key is derived from our own ephemeral agreement with the
    leader epk named in the distribution, bound to (meeting, epoch, us); any
    cross-meeting or cross-epoch splice therefore fails the tag check rather
    than yielding some other meeting's key.
    """
    if state.ephemeral is None or state.meeting_id is None:
        raise NotAMember(f"{state.user} has no pending meeting session")
    entry = dist.entry_for(state.keypair.ivk)
    if entry is None:
        raise NoEntryForMe(f"epoch {dist.epoch}")
    shared = crypto.dh(state.ephemeral.esk, dist.leader_epk)
    enc_key = crypto.derive_enc_key(
        shared,
        kdf_context(
            state.meeting_id, dist.epoch, dist.leader_epk, state.ephemeral.epk
        ),
    )
    meeting_key = crypto.aead_decrypt(
        enc_key, entry.box, wrap_aad(state.meeting_id, dist.epoch, state.keypair.ivk)
    )
    if len(meeting_key) != crypto.KEY_LEN:
        raise AuthenticationFailure("meeting key has the wrong size")
    state.known_mk = MeetingKey(meeting_key, dist.epoch)
    state.role = Role.MEMBER
    return state.known_mk


def encrypt_media(state: ParticipantState, stream_id: int, payload: bytes) -> MediaPacket:
    if state.known_mk is None:
        raise NoMeetingKey(f"{state.user} holds no meeting key")
    epoch = state.known_mk.epoch
    counter = state.stream_counters.get((stream_id, epoch), 0)
    if counter >= U64_MAX:
        raise CounterExhausted(f"stream {stream_id} epoch {epoch}")
    stream_key = derive_stream_key(state.known_mk.key, stream_id)
    box = crypto.aead_encrypt(
        stream_key,
        media_nonce(epoch, counter),
        payload,
        media_aad(state.meeting_id, stream_id),
    )
    state.stream_counters[(stream_id, epoch)] = counter + 1
    return MediaPacket(stream_id=stream_id, epoch=epoch, counter=counter, box=box)


def decrypt_media(state: ParticipantState, packet: MediaPacket) -> bytes:
    if state.known_mk is None:
        raise NoMeetingKey(f"{state.user} holds no meeting key")
    if packet.box.nonce != media_nonce(packet.epoch, packet.counter):
        raise AuthenticationFailure("nonce does not match the packet header")
    stream_key = derive_stream_key(state.known_mk.key, packet.stream_id)
    return crypto.aead_decrypt(
        stream_key, packet.box, media_aad(state.meeting_id, packet.stream_id)
    )


def make_leave(state: ParticipantState) -> Transaction:
    if state.role not in (Role.REQUESTER, Role.MEMBER, Role.LEADER):
        raise NotAMember(f"{state.user} is not in a meeting")
    payload = MeetingLeave(
        meeting_id=state.meeting_id,
        user=state.user,
        device=state.device,
        ivk=state.keypair.ivk,
    )
    return signed_tx(payload, state.keypair.isk)


def purge_keys(state: ParticipantState) -> None:
    """Forget all meeting secrets; safe to call any number of times."""
    state.known_mk = None
    state.ephemeral = None
    state.stream_counters = {}
    state.membership_view = {}
    state.denied = set()
    state.reviewed = set()
    state.last_epoch = None
    state.rekey_pending = False
    state.role = Role.OUTSIDER


def build_reassign(
    view: MeetingView,
    prev_keypair: crypto.IdentityKeyPair,
    new_keypair: crypto.IdentityKeyPair,
    rule: ReassignRule,
    rng: Rng,
    enforce: bool = True,
) -> tuple[Transaction, crypto.EphemeralKeyPair]:
    """Construct the leadership handover transaction.

    Under designation the outgoing leader co-signs; under time order the
    successor submits alone and the chain checks they are the earliest
    remaining member. Returns the new leader's fresh ephemeral alongside;
    an epoch-0 distribution rides on it, while any later rekey mints its
    own replacement.
    """
    if enforce:
        if view.leader_ivk != prev_keypair.ivk:
            raise NotCurrentLeader("handover must name the current leader")
        if view.member_with_ivk(new_keypair.ivk) is None:
            raise NewLeaderNotMember("successor must be a verified member")
    ephemeral = crypto.ephemeral_keygen(rng)
    payload = LeaderReassign(
        meeting_id=view.meeting_id,
        prev_leader_ivk=prev_keypair.ivk,
        new_leader_ivk=new_keypair.ivk,
        new_leader_epk=ephemeral.epk,
        prev_leader_sig=None,
    )
    if rule is ReassignRule.DESIGNATION:
        payload = replace(
            payload,
            prev_leader_sig=crypto.sign(prev_keypair.isk, payload.handover_bytes()),
        )
    return signed_tx(payload, new_keypair.isk), ephemeral


def adopt_leadership(
    state: ParticipantState,
    handover: LeaderReassign,
    ephemeral: crypto.EphemeralKeyPair,
    meeting_ledger: Ledger,
    identity_ledger: Ledger,
) -> None:
    """Switch a member's state to leading, seeded from the chain's view."""
    view = build_view(meeting_ledger, identity_ledger, state.meeting_id)
    state.role = Role.LEADER
    state.ephemeral = ephemeral
    state.last_epoch = view.last_epoch
    state.membership_view = {
        (r.user, r.device): MemberSlot(r.user, r.device, r.ivk, r.epk)
        for r in view.members()
        if r.ivk != state.keypair.ivk  # the leader is not their own member
    }
    state.reviewed = {(r.block_index, r.block_pos) for r in view.requests}
    state.rekey_pending = True


def dismiss_meeting(state: ParticipantState) -> Transaction:
    if state.role is not Role.LEADER:
        raise NotCurrentLeader(f"{state.user} is not leading")
    payload = MeetingDismiss(meeting_id=state.meeting_id)
    return signed_tx(payload, state.keypair.isk)
