"""Three deliberately incompatible file-backed stores behind one contract.

Each department keeps its records in a different on-disk format, standing in
for the mix of database engines a real federation would have. All three
satisfy the same small adapter contract (put / get / scan per record kind),
so everything above this module is format-blind:

* ``tabular``   one CSV file per kind, rewritten atomically on every put
* ``jsonlines`` one append-only JSON-object-per-line journal per kind,
                replayed last-wins on open
* ``binarylog`` length-prefixed CRC-checked binary frames per kind, with a
                periodic index sidecar used to tell a torn crash-tail apart
                from real corruption

Byte-level layout examples live in docs/storage-formats.md. Writes are
serialized per store instance and fsynced before put returns, so an
acknowledged write survives a kill -9. One process owns a data directory
at a time; the contract does not include cross-process write sharing.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import threading
import zlib
from pathlib import Path

from .errors import StoreCorrupt
from .model import STORE_CODECS

FORMATS = ("tabular", "jsonlines", "binarylog")

_INDEX_EVERY = 64  # binarylog: frames between index sidecar refreshes


def _fsync_dir(path: Path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


class Store:
    """Base adapter: a per-kind record map with write-through persistence.

    Subclasses implement `_load_kind` and `_persist_put`; the base class owns
    the cache, the lock, and the key/codec bookkeeping.
    """

    format_name = "abstract"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._cache: dict[str, dict[str, object]] = {}

    # -- subclass hooks --

    def _load_kind(self, kind: str) -> dict[str, object]:
        raise NotImplementedError

    def _persist_put(self, kind: str, key: str, record) -> None:
        raise NotImplementedError

    # -- contract --

    def _kind_map(self, kind: str) -> dict[str, object]:
        if kind not in STORE_CODECS:
            raise ValueError(f"unknown record kind {kind!r}")
        if kind not in self._cache:
            self._cache[kind] = self._load_kind(kind)
        return self._cache[kind]

    def put(self, kind: str, record) -> str:
        codec = STORE_CODECS[kind] if kind in STORE_CODECS else None
        if codec is None:
            raise ValueError(f"unknown record kind {kind!r}")
        key = codec.key_of(record)
        with self._lock:
            records = self._kind_map(kind)
            self._persist_put(kind, key, record)
            records[key] = record
        return key

    def get(self, kind: str, key: str):
        with self._lock:
            return self._kind_map(kind).get(key)

    def scan(self, kind: str) -> list:
        with self._lock:
            records = self._kind_map(kind)
            return [records[key] for key in sorted(records)]

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class TabularTextStore(Store):
    """CSV, one file per kind, header row from the codec field list.

    String cells are written raw; everything else is JSON-encoded into its
    cell, and the codec's tolerant `from_plain` undoes that on read. Every
    put rewrites the whole file through a tmp-and-rename so the visible file
    is always a complete table.
    """

    format_name = "tabular"

    def _path(self, kind: str) -> Path:
        return self.root / f"{kind}.csv"

    def _load_kind(self, kind: str) -> dict[str, object]:
        codec = STORE_CODECS[kind]
        path = self._path(kind)
        if not path.exists():
            return {}
        records: dict[str, object] = {}
        with open(path, newline="", encoding="utf-8") as handle:
            for row in csv.DictReader(handle):
                record = codec.from_plain(row)
                records[codec.key_of(record)] = record
        return records

    def _persist_put(self, kind: str, key: str, record) -> None:
        codec = STORE_CODECS[kind]
        records = dict(self._cache[kind])
        records[key] = record
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(codec.fields))
        writer.writeheader()
        for k in sorted(records):
            plain = codec.to_plain(records[k])
            writer.writerow({
                name: value if isinstance(value, str) else json.dumps(value)
                for name, value in plain.items()
            })
        tmp = self._path(kind).with_suffix(".csv.tmp")
        with open(tmp, "w", newline="", encoding="utf-8") as handle:
            handle.write(buffer.getvalue())
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, self._path(kind))
        _fsync_dir(self.root)


class JsonLinesStore(Store):
    """Append-only journal, one JSON object per line, replayed last-wins.

    A put never touches earlier lines, so the journal doubles as a history;
    reopening folds it newest-wins into the cache. Every committed line ends
    in a newline, so a final segment without one is an interrupted write:
    it is truncated away on open. A newline-terminated line that fails to
    parse was acknowledged once, and raises StoreCorrupt instead.
    """

    format_name = "jsonlines"

    def __init__(self, root: str | Path):
        super().__init__(root)
        self._handles: dict[str, io.TextIOWrapper] = {}

    def _path(self, kind: str) -> Path:
        return self.root / f"{kind}.jsonl"

    def _load_kind(self, kind: str) -> dict[str, object]:
        codec = STORE_CODECS[kind]
        path = self._path(kind)
        if not path.exists():
            return {}
        data = path.read_bytes()
        if data and not data.endswith(b"\n"):
            keep = data.rfind(b"\n") + 1
            with open(path, "r+b") as handle:
                handle.truncate(keep)
                handle.flush()
                os.fsync(handle.fileno())
            data = data[:keep]
        records: dict[str, object] = {}
        for line in data.decode("utf-8").splitlines():
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except ValueError as exc:
                raise StoreCorrupt(f"{path.name}: bad journal line: {exc}") from exc
            records[entry["key"]] = codec.from_plain(entry["record"])
        return records

    def _handle(self, kind: str) -> io.TextIOWrapper:
        if kind not in self._handles:
            self._handles[kind] = open(self._path(kind), "a", encoding="utf-8")
        return self._handles[kind]

    def _persist_put(self, kind: str, key: str, record) -> None:
        codec = STORE_CODECS[kind]
        line = json.dumps({"key": key, "record": codec.to_plain(record)},
                          separators=(",", ":"), sort_keys=True)
        handle = self._handle(kind)
        handle.write(line + "\n")
        handle.flush()
        os.fsync(handle.fileno())

    def close(self) -> None:
        with self._lock:
            for handle in self._handles.values():
                handle.close()
            self._handles.clear()


class BinaryLogStore(Store):
    """Length-prefixed binary frames with a periodic index sidecar.

    Frame layout per put: ``>I`` payload length, ``>I`` CRC-32 of the
    payload, then the payload (UTF-8 JSON of {key, record}). The sidecar
    `<kind>.idx` records how many bytes were known-committed at the last
    checkpoint. On open, frames are replayed last-wins with CRC checks; a
    short or corrupt tail past the indexed byte count is treated as an
    interrupted write and truncated, while damage inside the indexed region
    raises StoreCorrupt instead of silently dropping acknowledged data.
    """

    format_name = "binarylog"
    _HEADER = struct.Struct(">II")

    def __init__(self, root: str | Path):
        super().__init__(root)
        self._handles: dict[str, io.BufferedWriter] = {}
        self._frames: dict[str, int] = {}

    def _path(self, kind: str) -> Path:
        return self.root / f"{kind}.bin"

    def _index_path(self, kind: str) -> Path:
        return self.root / f"{kind}.idx"

    def _read_index(self, kind: str) -> int:
        path = self._index_path(kind)
        if not path.exists():
            return 0
        try:
            return int(json.loads(path.read_text())["bytes"])
        except (ValueError, KeyError):
            return 0  # a torn index only weakens tail detection, never data

    def _write_index(self, kind: str, byte_count: int, frame_count: int) -> None:
        path = self._index_path(kind)
        tmp = path.with_suffix(".idx.tmp")
        tmp.write_text(json.dumps({"bytes": byte_count, "frames": frame_count}))
        os.replace(tmp, path)

    def _load_kind(self, kind: str) -> dict[str, object]:
        codec = STORE_CODECS[kind]
        path = self._path(kind)
        if not path.exists():
            self._frames[kind] = 0
            return {}
        committed = self._read_index(kind)
        data = path.read_bytes()
        records: dict[str, object] = {}
        offset = 0
        frames = 0

        def tail_or_corrupt(reason: str) -> int:
            # Damage past the checkpoint is an interrupted final write:
            # drop it. Damage before the checkpoint means acknowledged
            # frames are gone, which we refuse to paper over.
            if offset >= committed:
                with open(path, "r+b") as handle:
                    handle.truncate(offset)
                    handle.flush()
                    os.fsync(handle.fileno())
                return offset
            raise StoreCorrupt(f"{path.name}: {reason} at byte {offset}")

        while offset < len(data):
            if offset + self._HEADER.size > len(data):
                offset = tail_or_corrupt("torn frame header")
                break
            length, crc = self._HEADER.unpack_from(data, offset)
            start = offset + self._HEADER.size
            payload = data[start:start + length]
            if len(payload) < length:
                offset = tail_or_corrupt("torn frame payload")
                break
            if zlib.crc32(payload) != crc:
                offset = tail_or_corrupt("frame CRC mismatch")
                break
            entry = json.loads(payload.decode("utf-8"))
            records[entry["key"]] = codec.from_plain(entry["record"])
            offset = start + length
            frames += 1
        self._frames[kind] = frames
        return records

    def _handle(self, kind: str) -> io.BufferedWriter:
        if kind not in self._handles:
            self._handles[kind] = open(self._path(kind), "ab")
        return self._handles[kind]

    def _persist_put(self, kind: str, key: str, record) -> None:
        codec = STORE_CODECS[kind]
        payload = json.dumps(
            {"key": key, "record": codec.to_plain(record)},
            separators=(",", ":"), sort_keys=True,
        ).encode("utf-8")
        handle = self._handle(kind)
        handle.write(self._HEADER.pack(len(payload), zlib.crc32(payload)))
        handle.write(payload)
        handle.flush()
        os.fsync(handle.fileno())
        self._frames[kind] = self._frames.get(kind, 0) + 1
        if self._frames[kind] % _INDEX_EVERY == 0:
            self._write_index(kind, handle.tell(), self._frames[kind])

    def close(self) -> None:
        with self._lock:
            for kind, handle in self._handles.items():
                self._write_index(kind, handle.tell(), self._frames.get(kind, 0))
                handle.close()
            self._handles.clear()


_STORE_TYPES = {
    cls.format_name: cls
    for cls in (TabularTextStore, JsonLinesStore, BinaryLogStore)
}


def open_store(fmt: str, root: str | Path) -> Store:
    """Open (creating if needed) a data directory in the named format."""
    try:
        store_type = _STORE_TYPES[fmt]
    except KeyError:
        raise ValueError(f"unknown storage format {fmt!r}; know {sorted(_STORE_TYPES)}")
    return store_type(root)
