"""Versioned world state and append-only block log.

The world state maps keys to (value bytes, version) where a version is the
(block height, tx index) pair of the committing transaction. The block log
keeps every block, valid and invalid transactions alike, so the state can be
reconstructed by replay. An optional file form stores one length-prefixed
canonical JSON record per block.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Optional


class LedgerError(Exception):
    pass


class OrderingViolationError(LedgerError):
    """Block height does not extend the log contiguously."""


@dataclass(frozen=True, order=True)
class Version:
    block_height: int
    tx_index: int


@dataclass(frozen=True)
class CommitReport:
    height: int
    valid_count: int
    invalid_count: int


class Snapshot:
    """Immutable copy-on-read view of the world state at a commit point."""

    def __init__(self, entries: dict):
        self._entries = dict(entries)

    def get_state(self, key: str) -> Optional[tuple]:
        return self._entries.get(key)

    def keys(self):
        return self._entries.keys()


class WorldState:
    def __init__(self):
        self._entries: dict = {}

    def get_state(self, key: str) -> Optional[tuple]:
        """Return (value bytes, Version) or None when the key is absent."""
        return self._entries.get(key)

    def snapshot(self) -> Snapshot:
        return Snapshot(self._entries)

    def keys(self):
        return self._entries.keys()

    def _put(self, key: str, value: bytes, version: Version) -> None:
        existing = self._entries.get(key)
        if existing is not None and not existing[1] < version:
            raise LedgerError(f"version of {key!r} would not increase")
        self._entries[key] = (value, version)

    def canonical_bytes(self) -> bytes:
        """Canonical serialization of the full state, for convergence checks."""
        doc = {
            key: [base64.b64encode(value).decode("ascii"), version.block_height, version.tx_index]
            for key, (value, version) in self._entries.items()
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


class BlockLog:
    """Append-only list of committed blocks, heights contiguous from 0."""

    def __init__(self):
        self._blocks: list = []

    def __len__(self) -> int:
        return len(self._blocks)

    def __iter__(self):
        return iter(self._blocks)

    def __getitem__(self, height: int):
        return self._blocks[height]

    def append(self, block) -> None:
        if block.height != len(self._blocks):
            raise OrderingViolationError(
                f"block height {block.height} does not extend log of length {len(self._blocks)}"
            )
        self._blocks.append(block)


def commit_block(ws: WorldState, log: BlockLog, block) -> CommitReport:
    """Apply valid transactions' writes in order and append the whole block.

    The block must carry per-transaction validity flags (a ValidatedBlock).
    Writes of invalid transactions are skipped but the transactions stay in
    the appended block.
    """
    if block.height != len(log):
        raise OrderingViolationError(
            f"cannot commit height {block.height} onto log of length {len(log)}"
        )
    valid_count = 0
    invalid_count = 0
    for tx_index, (tx, verdict) in enumerate(zip(block.transactions, block.validity)):
        if not verdict.valid:
            invalid_count += 1
            continue
        valid_count += 1
        for write in tx.rwset.writes:
            ws._put(write.key, write.value, Version(block.height, tx_index))
    log.append(block)
    return CommitReport(height=block.height, valid_count=valid_count, invalid_count=invalid_count)


# ----------------------------------------------------------------------
# Block-log file: 4-byte big-endian length, then the canonical JSON encoding
# of one block, repeated; genesis at offset 0.

def write_record_file(path, records) -> None:
    with open(path, "wb") as fh:
        for record in records:
            fh.write(struct.pack(">I", len(record)))
            fh.write(record)


def read_record_file(path) -> list:
    records = []
    with open(path, "rb") as fh:
        while True:
            header = fh.read(4)
            if not header:
                break
            if len(header) != 4:
                raise LedgerError("truncated record header")
            (length,) = struct.unpack(">I", header)
            record = fh.read(length)
            if len(record) != length:
                raise LedgerError("truncated record body")
            records.append(record)
    return records
