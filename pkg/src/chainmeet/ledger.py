"""Append-only hash-chained ledgers.

Two instances of the same machinery: the identity ledger (never pruned, one
transaction kind) and the meeting ledger (control traffic, prunable once a
meeting is over). Blocks bind to their predecessor by hash; any byte of
retained history that changes breaks verification.

Canonical block bytes:

    index(u64) || prev_hash(32) || timestamp(u64) || tx_count(u32) || txs

and each transaction serializes as

    kind_tag(u8) || body_len(u32) || body || signature(64)

with signatures always taken over kind_tag || body.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

from . import crypto
from .encoding import Reader, lp, u8, u32, u64
from .errors import (
    EncodingError,
    InvalidTransaction,
    NonMonotonicTimestamp,
    PruneIdentityLedgerForbidden,
    Reason,
)

GENESIS_PREV_HASH = bytes(32)


class TxTag(enum.IntEnum):
    IDENTITY = 1
    MEETING_PUBLISH = 2
    MEETING_REQUEST = 3
    KEY_DISTRIBUTION = 4
    MEETING_LEAVE = 5
    LEADER_REASSIGN = 6
    MEETING_DISMISS = 7


class LedgerKind(enum.Enum):
    IDENTITY = "identity"
    MEETING = "meeting"


ALLOWED_TAGS = {
    LedgerKind.IDENTITY: frozenset({TxTag.IDENTITY}),
    LedgerKind.MEETING: frozenset(
        {
            TxTag.MEETING_PUBLISH,
            TxTag.MEETING_REQUEST,
            TxTag.KEY_DISTRIBUTION,
            TxTag.MEETING_LEAVE,
            TxTag.LEADER_REASSIGN,
            TxTag.MEETING_DISMISS,
        }
    ),
}


@dataclass(frozen=True)
class Transaction:
    tag: int
    body: bytes
    signature: bytes

    @property
    def signing_bytes(self) -> bytes:
        return u8(self.tag) + self.body

    def wire_bytes(self) -> bytes:
        if len(self.signature) != crypto.SIG_LEN:
            raise EncodingError("signature must be 64 bytes")
        return u8(self.tag) + lp(self.body) + self.signature

    @classmethod
    def read_from(cls, reader: Reader) -> "Transaction":
        tag = reader.u8()
        body = reader.lp()
        signature = reader.take(crypto.SIG_LEN)
        return cls(tag=tag, body=body, signature=signature)


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    timestamp: int
    txs: tuple[Transaction, ...]
    block_hash: bytes

    def canonical_bytes(self) -> bytes:
        out = u64(self.index) + self.prev_hash + u64(self.timestamp)
        out += u32(len(self.txs))
        for tx in self.txs:
            out += tx.wire_bytes()
        return out


def make_block(
    index: int, prev_hash: bytes, timestamp: int, txs: tuple[Transaction, ...]
) -> Block:
    draft = Block(index, prev_hash, timestamp, txs, b"")
    return Block(index, prev_hash, timestamp, txs, crypto.sha256(draft.canonical_bytes()))


def parse_block(data: bytes, stored_hash: Optional[bytes] = None) -> Block:
    """Strict parse of canonical block bytes.

    stored_hash, when given, is kept as the block's hash instead of the one
    recomputed from data -- that is how tamper checks model an attacker who
    edits content but cannot touch the hashes the rest of the chain pinned.
    """
    reader = Reader(data)
    index = reader.u64()
    prev_hash = reader.take(32)
    timestamp = reader.u64()
    txs = tuple(Transaction.read_from(reader) for _ in range(reader.u32()))
    reader.finish()
    block_hash = stored_hash if stored_hash is not None else crypto.sha256(data)
    return Block(index, prev_hash, timestamp, txs, block_hash)


# a validator inspects one transaction in ledger context and raises
# InvalidTransaction to refuse it
Validator = Callable[[Transaction, "Ledger"], None]


@dataclass
class Ledger:
    kind: LedgerKind
    blocks: list[Block] = field(default_factory=list)
    # (index, hash) of the newest pruned-away block, if any
    checkpoint: Optional[tuple[int, bytes]] = None
    validator: Optional[Validator] = None

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def pruned_below(self) -> int:
        return self.checkpoint[0] + 1 if self.checkpoint else 0

    def append_block(self, txs: list[Transaction], timestamp: int) -> Block:
        if timestamp < self.head.timestamp:
            raise NonMonotonicTimestamp(
                f"{timestamp} < head timestamp {self.head.timestamp}"
            )
        allowed = ALLOWED_TAGS[self.kind]
        for tx in txs:
            if tx.tag not in allowed:
                raise InvalidTransaction(
                    Reason.WRONG_LEDGER_KIND,
                    f"tag {tx.tag} not allowed on {self.kind.value} ledger",
                )
            if self.validator is not None:
                self.validator(tx, self)
        block = make_block(
            index=self.head.index + 1,
            prev_hash=self.head.block_hash,
            timestamp=timestamp,
            txs=tuple(txs),
        )
        self.blocks.append(block)
        return block

    def verify_chain(self) -> bool:
        if not self.blocks:
            return False
        allowed = ALLOWED_TAGS[self.kind]
        for pos, block in enumerate(self.blocks):
            try:
                recomputed = crypto.sha256(block.canonical_bytes())
            except EncodingError:
                return False
            if recomputed != block.block_hash:
                return False
            if any(tx.tag not in allowed for tx in block.txs):
                return False
            if pos == 0:
                if block.index == 0:
                    if block.prev_hash != GENESIS_PREV_HASH:
                        return False
                else:
                    if self.checkpoint is None:
                        return False
                    cp_index, cp_hash = self.checkpoint
                    if block.index != cp_index + 1 or block.prev_hash != cp_hash:
                        return False
            else:
                prev = self.blocks[pos - 1]
                if block.index != prev.index + 1:
                    return False
                if block.prev_hash != prev.block_hash:
                    return False
                if block.timestamp < prev.timestamp:
                    return False
        return True

    def query(self, predicate: Callable[[Transaction], bool]) -> list[tuple[int, Transaction]]:
        return [
            (block.index, tx)
            for block in self.blocks
            for tx in block.txs
            if predicate(tx)
        ]

    def iter_txs(self) -> Iterator[tuple[int, int, Transaction]]:
        """Yields (block index, position within block, tx) in chain order."""
        for block in self.blocks:
            for pos, tx in enumerate(block.txs):
                yield block.index, pos, tx

    def prune(self, cutoff_index: int) -> "Ledger":
        """Discard blocks below cutoff_index, keeping a link checkpoint.

        Identity history must stay replayable forever, so only meeting
        ledgers prune. The head always survives.
        """
        if self.kind is LedgerKind.IDENTITY:
            raise PruneIdentityLedgerForbidden("identity ledgers keep full history")
        if cutoff_index > self.head.index:
            raise ValueError("cannot prune past the chain head")
        first_kept = next(i for i, b in enumerate(self.blocks) if b.index >= cutoff_index)
        if first_kept > 0:
            last_dropped = self.blocks[first_kept - 1]
            self.checkpoint = (last_dropped.index, last_dropped.block_hash)
            del self.blocks[:first_kept]
        return self


def new_ledger(kind: LedgerKind, validator: Optional[Validator] = None) -> Ledger:
    genesis = make_block(0, GENESIS_PREV_HASH, 0, ())
    return Ledger(kind=kind, blocks=[genesis], validator=validator)


def dump_hex_lines(ledger: Ledger) -> list[str]:
    """Canonical block bytes, hex, one block per line; the persistence format."""
    return [block.canonical_bytes().hex() for block in ledger.blocks]


def load_hex_lines(kind: LedgerKind, lines: list[str]) -> Ledger:
    blocks = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        try:
            blocks.append(parse_block(bytes.fromhex(line)))
        except ValueError as exc:
            raise EncodingError(f"bad hex block line: {exc}") from None
    if not blocks:
        raise EncodingError("no blocks in ledger file")
    checkpoint = None
    if blocks[0].index > 0:
        # pruned chain: the first retained block names its predecessor
        checkpoint = (blocks[0].index - 1, blocks[0].prev_hash)
    return Ledger(kind=kind, blocks=blocks, checkpoint=checkpoint)
