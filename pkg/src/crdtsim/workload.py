"""IoT temperature-reading workload generator.

Produces seeded, reproducible proposal streams for a chaincode that reads
device documents, adds a fresh temperature reading, and writes the documents
back. A configurable share of proposals targets a shared hot key set so that
they all conflict under MVCC; the rest touch per-transaction unique keys.
Four clients submit at a fixed arrival rate on the simulated clock.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from typing import Iterable

from .jsoncrdt import JsonValue, canonical_json_bytes
from .txpipeline import (
    ChaincodeSpec,
    Proposal,
    Read,
    ReadWriteSet,
    Write,
    decode_json_value,
)

CLIENT_COUNT = 4


@dataclass
class WorkloadConfig:
    total_txs: int = 1000
    arrival_rate_tps: float = 300.0
    n_read_keys: int = 1
    n_write_keys: int = 1
    json_keys: int = 1
    json_depth: int = 1
    conflict_pct: float = 100.0
    crdt_writes: bool = True
    seed: int = 42

    def validate(self) -> None:
        if self.total_txs <= 0:
            raise ValueError("total_txs must be positive")
        if self.json_depth < 1 or self.json_keys < 1:
            raise ValueError("json_keys and json_depth must be at least 1")
        if self.arrival_rate_tps <= 0:
            raise ValueError("arrival_rate_tps must be positive")
        if not 0 <= self.conflict_pct <= 100:
            raise ValueError("conflict_pct must be within [0, 100]")
        if self.n_read_keys < 0 or self.n_write_keys < 1:
            raise ValueError("need n_read_keys >= 0 and n_write_keys >= 1")


def gen_iot_json(keys: int, depth: int, rng: random.Random) -> JsonValue:
    """Temperature document with `keys` rooms and nesting chains of `depth` keys.

    Depth counts named keys from the room to the temperature leaf; a depth
    below 2 still needs the room key and the value key, so the chain length
    is max(2, depth).
    """
    if keys < 1 or depth < 1:
        raise ValueError("keys and depth must be at least 1")
    doc = {}
    for i in range(1, keys + 1):
        inner: JsonValue = {"temperatureValue": str(rng.randint(0, 40))}
        for _ in range(max(2, depth) - 2):
            inner = {"temperatureReading": [inner]}
        doc[f"temperatureRoom{i}"] = [inner]
    return doc


def json_union(base: JsonValue, addition: JsonValue) -> JsonValue:
    """Recursive union: maps merge per key, lists concatenate, scalars overwrite."""
    if isinstance(base, dict) and isinstance(addition, dict):
        merged = dict(base)
        for key, value in addition.items():
            merged[key] = json_union(merged[key], value) if key in merged else value
        return merged
    if isinstance(base, list) and isinstance(addition, list):
        return base + addition
    return addition


def device_skeleton(key: str) -> JsonValue:
    return {"deviceID": key}


def iot_chaincode(config: WorkloadConfig) -> ChaincodeSpec:
    """Read device documents, union in the new reading, write them back.

    Proposal args are (keys, reading): the first n_read_keys keys are read,
    the first n_write_keys keys are written. Absent devices start from a
    skeleton document carrying only the device id.
    """

    def fn(args, snap) -> ReadWriteSet:
        keys, reading = args
        reads = []
        for key in keys[: config.n_read_keys]:
            entry = snap.get_state(key)
            reads.append(Read(key, entry[1] if entry is not None else None))
        writes = []
        for key in keys[: config.n_write_keys]:
            entry = snap.get_state(key)
            stored = decode_json_value(entry[0]) if entry is not None else device_skeleton(key)
            merged = json_union(stored, reading)
            writes.append(Write(key, canonical_json_bytes(merged), config.crdt_writes))
        return ReadWriteSet(tuple(reads), tuple(writes))

    return ChaincodeSpec(name="iot_readings", fn=fn)


def hot_keys(config: WorkloadConfig) -> list:
    """Shared key set written by every conflicting proposal."""
    return [f"device-hot-{j}" for j in range(config.n_write_keys)]


def gen_stream(config: WorkloadConfig) -> list:
    """Seeded proposal stream: total_txs proposals over 4 clients at the
    configured rate; conflict_pct percent write the hot key set.

    Key tuples are write-prefixed: the first n_write_keys entries are
    written, the first n_read_keys are read. Conflicting proposals place the
    hot keys first and fill any extra read width with per-proposal unique
    keys, so their writes always collide while surplus reads stay private.
    """
    config.validate()
    rng = random.Random(config.seed)
    width = max(config.n_read_keys, config.n_write_keys)
    shared = hot_keys(config)
    conflict_count = round(config.total_txs * config.conflict_pct / 100.0)
    conflicting = set(rng.sample(range(config.total_txs), conflict_count))
    proposals = []
    for i in range(config.total_txs):
        if i in conflicting:
            filler = (f"device-{i}-{j}" for j in range(width - len(shared)))
            keys = tuple(shared) + tuple(filler)
        else:
            keys = tuple(f"device-{i}-{j}" for j in range(width))
        reading = gen_iot_json(config.json_keys, config.json_depth, rng)
        proposals.append(Proposal(
            client_id=f"client{i % CLIENT_COUNT + 1}",
            submit_time=i / config.arrival_rate_tps,
            args=(keys, reading),
        ))
    return proposals


def read_key_universe(config: WorkloadConfig, proposals: Iterable[Proposal]) -> list:
    """Every key any proposal will read, for pre-populating the ledger."""
    keys = set()
    for prop in proposals:
        prop_keys, _ = prop.args
        keys.update(prop_keys[: config.n_read_keys])
    return sorted(keys)


# ----------------------------------------------------------------------
# stream persistence, for replaying an identical workload elsewhere


def dump_stream_csv(proposals: Iterable[Proposal], fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["client_id", "submit_time", "keys", "reading"])
    for prop in proposals:
        keys, reading = prop.args
        writer.writerow([
            prop.client_id,
            repr(prop.submit_time),
            ";".join(keys),
            json.dumps(reading, sort_keys=True),
        ])


def load_stream_csv(fh) -> list:
    reader = csv.reader(fh)
    header = next(reader)
    if header != ["client_id", "submit_time", "keys", "reading"]:
        raise ValueError("unrecognized stream header")
    proposals = []
    for client_id, submit_time, keys, reading in reader:
        proposals.append(Proposal(
            client_id=client_id,
            submit_time=float(submit_time),
            args=(tuple(keys.split(";")) if keys else (), json.loads(reading)),
        ))
    return proposals
