"""Execute-order-validate transaction pipeline with two validation modes.

Proposals are simulated against a state snapshot to produce read-write sets,
endorsed by counting responding organizations, totally ordered and batched
into blocks (count, byte, and timeout cuts), then validated and committed.
In fabric mode every transaction passes multi-version concurrency control:
each read's version must match the committed state overlaid with the writes
of preceding valid transactions of the same block. In crdt mode writes
flagged as CRDT values are merged per key into a fresh JSON CRDT in block
order, MVCC applies only to non-CRDT content, and every CRDT write is
rewritten to the converged canonical bytes before commit, so all writes of
one key in a block carry identical values.

Time is simulated: submit times come from the workload, block timeouts and
latency accounting run on the same clock. The only wall-clock measurement in
the system is the merge-time of validate_merge_block, taken by the caller.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace
from time import perf_counter
from typing import Callable, Iterable, Optional

from .jsoncrdt import (
    DocumentShapeError,
    JsonValue,
    StructuralConflictError,
    canonical_json_bytes,
    check_document_shape,
    init_empty_crdt,
)
from .ledger import BlockLog, Version, WorldState, commit_block, read_record_file, write_record_file

FABRIC = "fabric"
CRDT = "crdt"

VALID = "valid"
INVALID_MVCC = "mvcc"
INVALID_ENDORSEMENT = "endorsement"
INVALID_DECODE = "decode"
INVALID_STRUCTURAL = "structural"
REJECTED_ENDORSEMENT = "endorsement_rejected"
READ_ONLY = "read_only"

# Verdicts of transactions that reached a block but must not commit.
INVALID_REASONS = (INVALID_MVCC, INVALID_ENDORSEMENT, INVALID_DECODE, INVALID_STRUCTURAL)


class PipelineError(Exception):
    pass


class ProposalFailureError(PipelineError):
    """Chaincode raised during simulation; no transaction is formed."""


class DuplicateTransactionError(PipelineError):
    pass


class OrdererShutdownError(PipelineError):
    pass


# ----------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Read:
    key: str
    version: Optional[Version]  # None records a read of an absent key


@dataclass(frozen=True)
class Write:
    key: str
    value: bytes
    is_crdt: bool = False


@dataclass(frozen=True)
class ReadWriteSet:
    reads: tuple = ()
    writes: tuple = ()

    def __post_init__(self):
        read_keys = [r.key for r in self.reads]
        if len(read_keys) != len(set(read_keys)):
            raise ValueError("duplicate keys in read set")
        write_keys = [w.key for w in self.writes]
        if len(write_keys) != len(set(write_keys)):
            raise ValueError("duplicate keys in write set")


@dataclass(frozen=True)
class Transaction:
    tx_id: str
    rwset: ReadWriteSet
    endorsements: frozenset
    submit_time: float


@dataclass(frozen=True)
class EndorsementPolicy:
    required_orgs: int
    known_orgs: frozenset

    def __post_init__(self):
        if not 1 <= self.required_orgs <= len(self.known_orgs):
            raise ValueError("policy requires 1 <= k <= n")


@dataclass(frozen=True)
class Block:
    height: int
    transactions: tuple
    cut_reason: str  # count | bytes | timeout


@dataclass(frozen=True)
class TxVerdict:
    valid: bool
    reason: str


@dataclass(frozen=True)
class ValidatedBlock:
    height: int
    transactions: tuple
    cut_reason: str
    validity: tuple  # one TxVerdict per transaction


@dataclass(frozen=True)
class ChaincodeSpec:
    """A named deterministic function from (args, snapshot) to a ReadWriteSet."""

    name: str
    fn: Callable


@dataclass(frozen=True)
class Proposal:
    client_id: str
    submit_time: float
    args: tuple


@dataclass
class PipelineConfig:
    mode: str = CRDT
    max_tx_count: int = 25
    max_bytes: int = 128 * 1024 * 1024
    block_timeout_ms: float = 2000.0
    endorsement_k: int = 1
    orgs: tuple = ("org1", "org2", "org3")
    snapshot_policy: str = "batch"  # batch | fresh
    dedup_list_leaves: bool = False

    def validate(self) -> None:
        if self.mode not in (FABRIC, CRDT):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.snapshot_policy not in ("batch", "fresh"):
            raise ValueError(f"unknown snapshot policy {self.snapshot_policy!r}")
        if self.max_tx_count < 1 or self.max_bytes < 1 or self.block_timeout_ms <= 0:
            raise ValueError("block cutting limits must be positive")
        EndorsementPolicy(self.endorsement_k, frozenset(self.orgs))

    def policy(self) -> EndorsementPolicy:
        return EndorsementPolicy(self.endorsement_k, frozenset(self.orgs))


# ----------------------------------------------------------------------
# execution phase


def simulate_proposal(cc: ChaincodeSpec, args: tuple, snap) -> ReadWriteSet:
    """Run the chaincode against a frozen snapshot; never mutates state."""
    try:
        return cc.fn(args, snap)
    except Exception as exc:
        raise ProposalFailureError(f"chaincode {cc.name!r} failed: {exc}") from exc


def endorse(rwset: ReadWriteSet, policy: EndorsementPolicy, responding_orgs: frozenset,
            *, tx_id: str, submit_time: float) -> Optional[Transaction]:
    """Form a transaction when enough organizations respond, else None."""
    responding = frozenset(responding_orgs)
    if not responding <= policy.known_orgs:
        raise ValueError("responding orgs must be known to the policy")
    if len(responding) < policy.required_orgs:
        return None
    return Transaction(tx_id=tx_id, rwset=rwset, endorsements=responding, submit_time=submit_time)


# ----------------------------------------------------------------------
# ordering phase


def transaction_encoded_size(tx: Transaction) -> int:
    return len(canonical_json_bytes(transaction_to_jsonable(tx)))


class Orderer:
    """Deterministic FIFO orderer cutting blocks by count, bytes, or timeout."""

    def __init__(self, max_tx_count: int, max_bytes: int, timeout_s: float, first_height: int = 0):
        self.max_tx_count = max_tx_count
        self.max_bytes = max_bytes
        self.timeout_s = timeout_s
        self.next_height = first_height
        self._queue: list = []  # (tx, encoded size, enqueue time)
        self._seen_tx_ids: set = set()
        self._shutdown = False

    def __len__(self) -> int:
        return len(self._queue)

    @property
    def oldest_enqueue_time(self) -> Optional[float]:
        return self._queue[0][2] if self._queue else None

    @property
    def timeout_deadline(self) -> Optional[float]:
        """Instant at which the pending queue must cut by timeout.

        The single definition of the deadline: the cut criterion compares
        against this exact float, so a caller that waits until the deadline
        is never refused by rounding (now - oldest >= timeout can be false
        by one ulp when now was computed as oldest + timeout).
        """
        return self._queue[0][2] + self.timeout_s if self._queue else None

    def submit(self, tx: Transaction, now: Optional[float] = None) -> None:
        if self._shutdown:
            raise OrdererShutdownError("orderer is shut down")
        if tx.tx_id in self._seen_tx_ids:
            raise DuplicateTransactionError(f"duplicate transaction id {tx.tx_id!r}")
        self._seen_tx_ids.add(tx.tx_id)
        enqueue_time = tx.submit_time if now is None else now
        self._queue.append((tx, transaction_encoded_size(tx), enqueue_time))

    def shutdown(self) -> None:
        self._shutdown = True

    def cut_block(self, now: float) -> Optional[Block]:
        """Emit at most one block per call; None while no criterion is met."""
        if not self._queue:
            return None
        queued_bytes = sum(size for _, size, _ in self._queue)
        if len(self._queue) >= self.max_tx_count:
            return self._emit(self.max_tx_count, "count")
        if queued_bytes >= self.max_bytes:
            return self._emit(self._byte_prefix(), "bytes")
        if now >= self.timeout_deadline:
            return self._emit(len(self._queue), "timeout")
        return None

    def _byte_prefix(self) -> int:
        # Longest prefix within the byte budget; a single oversized
        # transaction still forms a (singleton) block.
        total = 0
        count = 0
        for _, size, _ in self._queue:
            if count > 0 and total + size > self.max_bytes:
                break
            total += size
            count += 1
            if count == self.max_tx_count:
                break
        return count

    def _emit(self, count: int, reason: str) -> Block:
        taken = self._queue[:count]
        del self._queue[:count]
        block = Block(
            height=self.next_height,
            transactions=tuple(tx for tx, _, _ in taken),
            cut_reason=reason,
        )
        self.next_height += 1
        return block


# ----------------------------------------------------------------------
# validation phase


def mvcc_validate(tx: Transaction, ws: WorldState, intra_block_writes: dict,
                  *, skip_keys: frozenset = frozenset()) -> bool:
    """Check every read version against state overlaid with same-block writes.

    A read with version None matches only an absent key. Reads of keys in
    skip_keys are exempt (crdt mode exempts keys the transaction itself
    writes as CRDT values).
    """
    for read in tx.rwset.reads:
        if read.key in skip_keys:
            continue
        if read.key in intra_block_writes:
            current = intra_block_writes[read.key]
        else:
            entry = ws.get_state(read.key)
            current = entry[1] if entry is not None else None
        if read.version != current:
            return False
    return True


def validate_endorsements_block(block: Block, policy: EndorsementPolicy) -> list:
    """Per-transaction endorsement flags; failures never reach MVCC or merging."""
    return [len(tx.endorsements) >= policy.required_orgs for tx in block.transactions]


def decode_json_value(value: bytes) -> JsonValue:
    """Decode write bytes into a supported JSON document or raise."""
    try:
        doc = json.loads(value.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DocumentShapeError(f"not a JSON document: {exc}") from exc
    check_document_shape(doc)
    if not isinstance(doc, (dict, str)):
        raise DocumentShapeError("top-level document must be a map or a string")
    return doc


def validate_merge_block(block: Block, ws: WorldState, mode: str, policy: EndorsementPolicy,
                         *, dedup_list_leaves: bool = False) -> ValidatedBlock:
    """Validate one block and, in crdt mode, merge and rewrite CRDT writes."""
    if mode == FABRIC:
        return _validate_fabric(block, ws, policy)
    if mode == CRDT:
        return _validate_crdt(block, ws, policy, dedup_list_leaves)
    raise ValueError(f"unknown mode {mode!r}")


def _validate_fabric(block: Block, ws: WorldState, policy: EndorsementPolicy) -> ValidatedBlock:
    endorse_ok = validate_endorsements_block(block, policy)
    overlay: dict = {}
    verdicts = []
    for i, tx in enumerate(block.transactions):
        if not endorse_ok[i]:
            verdicts.append(TxVerdict(False, INVALID_ENDORSEMENT))
            continue
        if mvcc_validate(tx, ws, overlay):
            verdicts.append(TxVerdict(True, VALID))
            for write in tx.rwset.writes:
                overlay[write.key] = Version(block.height, i)
        else:
            verdicts.append(TxVerdict(False, INVALID_MVCC))
    return ValidatedBlock(block.height, block.transactions, block.cut_reason, tuple(verdicts))


def _validate_crdt(block: Block, ws: WorldState, policy: EndorsementPolicy,
                   dedup_list_leaves: bool) -> ValidatedBlock:
    endorse_ok = validate_endorsements_block(block, policy)
    n = len(block.transactions)
    reasons: list = [None] * n
    crdts: dict = {}

    # Pass 1: merge CRDT-flagged writes of endorsement-valid transactions in
    # block order. A decode or merge failure invalidates the offending
    # transaction and skips its remaining writes; merges already performed
    # stand (they are visible through other transactions' rewritten values).
    for i, tx in enumerate(block.transactions):
        if not endorse_ok[i]:
            reasons[i] = INVALID_ENDORSEMENT
            continue
        for write in tx.rwset.writes:
            if not write.is_crdt:
                continue
            try:
                doc = decode_json_value(write.value)
            except DocumentShapeError:
                reasons[i] = INVALID_DECODE
                break
            crdt = crdts.get(write.key)
            if crdt is None:
                crdt = init_empty_crdt(write.key, doc, dedup_list_leaves=dedup_list_leaves)
                crdts[write.key] = crdt
            try:
                crdt.merge_json(doc)
            except StructuralConflictError:
                reasons[i] = INVALID_STRUCTURAL
                break
            except DocumentShapeError:
                reasons[i] = INVALID_DECODE
                break

    # MVCC on non-CRDT content. Transactions whose writes are all CRDT are
    # exempt; mixed and plain transactions are checked, skipping reads of
    # keys they themselves write as CRDT values. Writes of every valid
    # transaction, CRDT or not, advance the intra-block overlay.
    overlay: dict = {}
    for i, tx in enumerate(block.transactions):
        if reasons[i] is not None:
            continue
        writes = tx.rwset.writes
        crdt_written = frozenset(w.key for w in writes if w.is_crdt)
        if writes and len(crdt_written) == len(writes):
            reasons[i] = VALID
        elif mvcc_validate(tx, ws, overlay, skip_keys=crdt_written):
            reasons[i] = VALID
        else:
            reasons[i] = INVALID_MVCC
        if reasons[i] == VALID:
            for write in writes:
                overlay[write.key] = Version(block.height, i)

    # Pass 2: rewrite every CRDT-flagged write whose key converged to the
    # canonical merged bytes, so same-key writes are byte-identical.
    final_txs = []
    for tx in block.transactions:
        new_writes = []
        changed = False
        for write in tx.rwset.writes:
            if write.is_crdt and write.key in crdts:
                merged = canonical_json_bytes(crdts[write.key].to_json())
                new_writes.append(Write(write.key, merged, True))
                changed = True
            else:
                new_writes.append(write)
        if changed:
            tx = replace(tx, rwset=replace(tx.rwset, writes=tuple(new_writes)))
        final_txs.append(tx)

    verdicts = tuple(TxVerdict(r == VALID, r) for r in reasons)
    return ValidatedBlock(block.height, tuple(final_txs), block.cut_reason, verdicts)


# ----------------------------------------------------------------------
# orchestration


@dataclass
class TxRecord:
    tx_id: str
    client_id: str
    submit_time: float
    commit_time: Optional[float]
    validity: str
    block_height: Optional[int]

    @property
    def latency_s(self) -> Optional[float]:
        if self.commit_time is None:
            return None
        return self.commit_time - self.submit_time


@dataclass
class BlockRecord:
    height: int
    tx_count: int
    cut_reason: str
    merge_wall_s: float


@dataclass
class RunReport:
    txs: list = field(default_factory=list)
    blocks: list = field(default_factory=list)

    @property
    def success_count(self) -> int:
        return sum(1 for t in self.txs if t.validity == VALID)

    @property
    def failure_count(self) -> int:
        return sum(1 for t in self.txs if t.validity in INVALID_REASONS)

    @property
    def endorsement_rejections(self) -> int:
        return sum(1 for t in self.txs if t.validity == REJECTED_ENDORSEMENT)

    @property
    def throughput_tps(self) -> float:
        """Successful transactions per simulated second, start to last commit."""
        commits = [t.commit_time for t in self.txs if t.validity == VALID]
        if not commits:
            return 0.0
        elapsed = max(commits)
        return len(commits) / elapsed if elapsed > 0 else 0.0

    @property
    def avg_latency_ms(self) -> float:
        lats = [t.latency_s for t in self.txs if t.validity == VALID]
        if not lats:
            return 0.0
        return 1000.0 * sum(lats) / len(lats)

    def summary(self) -> dict:
        return {
            "throughput_tps": self.throughput_tps,
            "avg_latency_ms": self.avg_latency_ms,
            "success_count": self.success_count,
            "failure_count": self.failure_count,
        }

    def write_csv(self, fh) -> None:
        fh.write("tx_id,submit_time,commit_time,validity,block_height\n")
        for t in self.txs:
            commit = "" if t.commit_time is None else repr(t.commit_time)
            height = "" if t.block_height is None else str(t.block_height)
            fh.write(f"{t.tx_id},{t.submit_time!r},{commit},{t.validity},{height}\n")
        s = self.summary()
        fh.write(
            f"summary,{s['throughput_tps']!r},{s['avg_latency_ms']!r},"
            f"{s['success_count']},{s['failure_count']}\n"
        )

    def write_json_lines(self, fh) -> None:
        for t in self.txs:
            fh.write(json.dumps({
                "tx_id": t.tx_id,
                "submit_time": t.submit_time,
                "commit_time": t.commit_time,
                "validity": t.validity,
                "block_height": t.block_height,
            }, sort_keys=True) + "\n")
        fh.write(json.dumps({"summary": self.summary()}, sort_keys=True) + "\n")


def run_pipeline(config: PipelineConfig, proposals: Iterable[Proposal], chaincode: ChaincodeSpec,
                 *, ws: Optional[WorldState] = None, log: Optional[BlockLog] = None) -> RunReport:
    """Drive endorse, order, validate, commit until the stream drains.

    Single-threaded and deterministic: proposals are processed in submit-time
    order, timeout cuts fire at their exact simulated instant, and count or
    byte cuts fire at the triggering submit. Commit time of a block is its
    cut time.
    """
    config.validate()
    ws = ws if ws is not None else WorldState()
    log = log if log is not None else BlockLog()
    policy = config.policy()
    timeout_s = config.block_timeout_ms / 1000.0
    orderer = Orderer(config.max_tx_count, config.max_bytes, timeout_s, first_height=len(log))
    report = RunReport()
    by_tx_id: dict = {}

    def settle(block: Block, now: float) -> None:
        start = perf_counter()
        vblock = validate_merge_block(block, ws, config.mode, policy,
                                      dedup_list_leaves=config.dedup_list_leaves)
        merge_wall = perf_counter() - start
        commit_block(ws, log, vblock)
        report.blocks.append(BlockRecord(vblock.height, len(vblock.transactions),
                                         vblock.cut_reason, merge_wall))
        for tx, verdict in zip(vblock.transactions, vblock.validity):
            record = by_tx_id[tx.tx_id]
            record.commit_time = now
            record.validity = verdict.reason
            record.block_height = vblock.height

    def fire_timeouts(up_to: Optional[float]) -> None:
        while len(orderer):
            cut_at = orderer.timeout_deadline
            if up_to is not None and cut_at > up_to:
                return
            block = orderer.cut_block(cut_at)
            if block is None:
                return
            settle(block, cut_at)

    batch_snap = ws.snapshot() if config.snapshot_policy == "batch" else None
    counter = 0
    for prop in sorted(proposals, key=lambda p: p.submit_time):
        now = prop.submit_time
        fire_timeouts(up_to=now)
        snap = batch_snap if batch_snap is not None else ws.snapshot()
        tx_id = f"{prop.client_id}-{counter:06d}"
        counter += 1
        record = TxRecord(tx_id, prop.client_id, now, None, "", None)
        report.txs.append(record)
        by_tx_id[tx_id] = record
        try:
            rwset = simulate_proposal(chaincode, prop.args, snap)
        except ProposalFailureError:
            record.validity = "proposal_failure"
            continue
        if not rwset.writes:
            record.validity = READ_ONLY  # nothing to order
            continue
        tx = endorse(rwset, policy, frozenset(config.orgs), tx_id=tx_id, submit_time=now)
        if tx is None:
            record.validity = REJECTED_ENDORSEMENT
            continue
        orderer.submit(tx, now=now)
        while True:
            block = orderer.cut_block(now)
            if block is None:
                break
            settle(block, now)
    fire_timeouts(up_to=None)
    orderer.shutdown()
    return report


# ----------------------------------------------------------------------
# block serialization for the log file


def transaction_to_jsonable(tx: Transaction) -> dict:
    return {
        "tx_id": tx.tx_id,
        "submit_time": tx.submit_time,
        "endorsements": sorted(tx.endorsements),
        "reads": [
            [r.key, None if r.version is None else [r.version.block_height, r.version.tx_index]]
            for r in tx.rwset.reads
        ],
        "writes": [
            [w.key, base64.b64encode(w.value).decode("ascii"), w.is_crdt]
            for w in tx.rwset.writes
        ],
    }


def transaction_from_jsonable(doc: dict) -> Transaction:
    reads = tuple(
        Read(key, None if version is None else Version(version[0], version[1]))
        for key, version in doc["reads"]
    )
    writes = tuple(
        Write(key, base64.b64decode(value), bool(is_crdt))
        for key, value, is_crdt in doc["writes"]
    )
    return Transaction(
        tx_id=doc["tx_id"],
        rwset=ReadWriteSet(reads=reads, writes=writes),
        endorsements=frozenset(doc["endorsements"]),
        submit_time=doc["submit_time"],
    )


def block_to_jsonable(block: ValidatedBlock) -> dict:
    return {
        "height": block.height,
        "cut_reason": block.cut_reason,
        "transactions": [transaction_to_jsonable(tx) for tx in block.transactions],
        "validity": [[v.valid, v.reason] for v in block.validity],
    }


def block_from_jsonable(doc: dict) -> ValidatedBlock:
    return ValidatedBlock(
        height=doc["height"],
        transactions=tuple(transaction_from_jsonable(t) for t in doc["transactions"]),
        cut_reason=doc["cut_reason"],
        validity=tuple(TxVerdict(bool(v), reason) for v, reason in doc["validity"]),
    )


def save_block_log(log: BlockLog, path) -> None:
    write_record_file(path, (canonical_json_bytes(block_to_jsonable(b)) for b in log))


def load_block_log(path) -> list:
    return [block_from_jsonable(json.loads(record)) for record in read_record_file(path)]


def replay_block_log(blocks: Iterable[ValidatedBlock]) -> tuple:
    """Rebuild world state and log by re-committing stored blocks in order."""
    ws = WorldState()
    log = BlockLog()
    for block in blocks:
        commit_block(ws, log, block)
    return ws, log
