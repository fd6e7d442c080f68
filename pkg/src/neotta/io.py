"""File formats: embedding blocks, label blocks, state snapshots, manifests.

Binary layouts are little-endian and fully pinned so files round-trip across
platforms:

* embeddings: magic ``NEOE`` | version u32 (=1) | n u64 | dim u32 |
  elem u8 (0 = float32 LE), a 21-byte header, then exactly n * dim * 4
  payload bytes in row-major order.
* labels: magic ``NEOL`` | version u32 (=1) | n u64, then n little-endian
  u32 values.  A plain text file with one integer per line is accepted as a
  fallback on read.

State snapshots are human-readable JSON with the mean encoded as hex floats,
so a load after save restores every bit.  No reader lets NaN or Inf through.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .adapter import AdapterState, EmbeddingBatch, LinearHead, UpdateMode
from .errors import (
    BadMagic,
    CorruptSnapshot,
    ManifestError,
    NonFiniteValue,
    ParseError,
    RaggedRow,
    SchemaMismatch,
    TruncatedPayload,
    UnsupportedVersion,
)

EMBEDDING_MAGIC = b"NEOE"
LABEL_MAGIC = b"NEOL"
FORMAT_VERSION = 1
ELEM_FLOAT32 = 0

_EMB_HEADER = struct.Struct("<4sIQIB")  # magic, version, n, dim, elem type
_LABEL_HEADER = struct.Struct("<4sIQ")  # magic, version, n
SNAPSHOT_SCHEMA_VERSION = 1


def write_embeddings(path: str | Path, batch: EmbeddingBatch) -> None:
    """Write a batch as a float32 embedding block."""
    with np.errstate(over="ignore"):  # overflow is caught right below
        payload = np.ascontiguousarray(batch.data, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise NonFiniteValue(f"{path}: values overflow the float32 element type")
    header = _EMB_HEADER.pack(
        EMBEDDING_MAGIC, FORMAT_VERSION, batch.rows, batch.dim, ELEM_FLOAT32
    )
    Path(path).write_bytes(header + payload.tobytes())


def read_embeddings(path: str | Path) -> EmbeddingBatch:
    """Read an embedding block; values are widened to float64 in memory."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedPayload(f"{path}: too short for a magic number")
    if raw[:4] != EMBEDDING_MAGIC:
        raise BadMagic(f"{path}: expected {EMBEDDING_MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < _EMB_HEADER.size:
        raise TruncatedPayload(f"{path}: truncated header")
    _, version, n, dim, elem = _EMB_HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: version {version}, reader knows {FORMAT_VERSION}")
    if elem != ELEM_FLOAT32:
        raise UnsupportedVersion(f"{path}: unknown element type {elem}")
    if n < 1 or dim < 1:
        raise TruncatedPayload(f"{path}: header declares an empty block ({n} x {dim})")
    expected = n * dim * 4
    actual = len(raw) - _EMB_HEADER.size
    if actual != expected:
        raise TruncatedPayload(
            f"{path}: payload is {actual} bytes, header declares {expected}"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=_EMB_HEADER.size).reshape(n, dim)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue(f"{path}: payload contains NaN or Inf")
    return EmbeddingBatch(values.astype(np.float64))


def write_labels(path: str | Path, labels: np.ndarray) -> None:
    """Write integer class labels as a binary label block."""
    y = np.asarray(labels)
    if y.ndim != 1 or y.size < 1:
        raise ValueError(f"labels must be a non-empty 1-D array, got shape {y.shape}")
    if np.any(y < 0) or np.any(y > 0xFFFFFFFF):
        raise ValueError("labels must fit in an unsigned 32-bit integer")
    header = _LABEL_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, y.size)
    Path(path).write_bytes(header + np.ascontiguousarray(y, dtype="<u4").tobytes())


def read_labels(path: str | Path) -> np.ndarray:
    """Read labels from a binary label block, or from text (one int per line)."""
    raw = Path(path).read_bytes()
    if raw[:4] == LABEL_MAGIC:
        if len(raw) < _LABEL_HEADER.size:
            raise TruncatedPayload(f"{path}: truncated header")
        _, version, n = _LABEL_HEADER.unpack_from(raw)
        if version != FORMAT_VERSION:
            raise UnsupportedVersion(f"{path}: version {version}, reader knows {FORMAT_VERSION}")
        if n < 1:
            raise TruncatedPayload(f"{path}: header declares zero labels")
        expected = n * 4
        actual = len(raw) - _LABEL_HEADER.size
        if actual != expected:
            raise TruncatedPayload(
                f"{path}: payload is {actual} bytes, header declares {expected}"
            )
        values = np.frombuffer(raw, dtype="<u4", offset=_LABEL_HEADER.size)
        return values.astype(np.int64)
    return _parse_text_labels(path, raw)


def _parse_text_labels(path: str | Path, raw: bytes) -> np.ndarray:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BadMagic(f"{path}: neither a label block nor a text file") from exc
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            value = int(line)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: not an integer: {line!r}") from exc
        if value < 0:
            raise ParseError(f"{path}:{lineno}: labels must be >= 0, got {value}")
        values.append(value)
    if not values:
        raise ParseError(f"{path}: no labels found")
    return np.array(values, dtype=np.int64)


def read_csv_embeddings(path: str | Path) -> EmbeddingBatch:
    """Read comma-separated embeddings, one row per line, optional header line.

    Values are parsed as 64-bit decimals.  A first line that does not parse
    as numbers is treated as a header; any later unparsable line is an error.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = [cell.strip() for cell in line.split(",")]
        try:
            row = [float(cell) for cell in cells]
        except ValueError as exc:
            if lineno == 1 and not rows:
                continue  # header line
            raise ParseError(f"{path}:{lineno}: not a number row: {line!r}") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise RaggedRow(
                f"{path}:{lineno}: row has {len(row)} cells, expected {width}"
            )
        rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    values = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue(f"{path}: contains NaN or Inf")
    return EmbeddingBatch(values)


# --- state snapshots -------------------------------------------------------

@dataclass(frozen=True)
class AdapterSnapshot:
    """A serializable view of an adapter state plus provenance fields."""

    schema_version: int
    dim: int
    count: int
    mode: UpdateMode
    mean: np.ndarray
    created_at: str
    alpha: float | None = None

    @classmethod
    def from_state(cls, state: AdapterState, created_at: str | None = None) -> AdapterSnapshot:
        stamp = created_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
        return cls(
            schema_version=SNAPSHOT_SCHEMA_VERSION,
            dim=state.dim,
            count=state.count,
            mode=state.mode,
            mean=state.mean,
            created_at=stamp,
            alpha=state.alpha,
        )

    def to_state(self) -> AdapterState:
        return AdapterState(
            dim=self.dim,
            mean=self.mean,
            count=self.count,
            mode=self.mode,
            alpha=self.alpha,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AdapterSnapshot):
            return NotImplemented
        return (
            self.schema_version == other.schema_version
            and self.dim == other.dim
            and self.count == other.count
            and self.mode == other.mode
            and self.alpha == other.alpha
            and self.created_at == other.created_at
            and np.array_equal(self.mean, other.mean)
        )


def save_state(path: str | Path, snapshot: AdapterSnapshot) -> None:
    """Write a snapshot as JSON; the mean is hex-float encoded, so it is lossless."""
    doc = {
        "schema_version": snapshot.schema_version,
        "dim": snapshot.dim,
        "count": snapshot.count,
        "mode": snapshot.mode.value,
        "created_at": snapshot.created_at,
        "mean_hex": [float(v).hex() for v in snapshot.mean],
    }
    if snapshot.mode is UpdateMode.EMA:
        doc["alpha"] = snapshot.alpha
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_state(path: str | Path) -> AdapterSnapshot:
    """Read a snapshot written by save_state, restoring the mean bit-for-bit."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptSnapshot(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorruptSnapshot(f"{path}: expected a JSON object")
    version = doc.get("schema_version")
    if version != SNAPSHOT_SCHEMA_VERSION:
        raise SchemaMismatch(
            f"{path}: schema_version {version}, reader knows {SNAPSHOT_SCHEMA_VERSION}"
        )
    try:
        dim = int(doc["dim"])
        count = int(doc["count"])
        mode = UpdateMode(doc["mode"])
        created_at = str(doc["created_at"])
        mean = np.array([float.fromhex(v) for v in doc["mean_hex"]])
        alpha = float(doc["alpha"]) if mode is UpdateMode.EMA else None
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSnapshot(f"{path}: {exc}") from exc
    if not np.all(np.isfinite(mean)):
        raise NonFiniteValue(f"{path}: snapshot mean contains NaN or Inf")
    snapshot = AdapterSnapshot(
        schema_version=version,
        dim=dim,
        count=count,
        mode=mode,
        mean=mean,
        created_at=created_at,
        alpha=alpha,
    )
    try:
        snapshot.to_state()  # reject snapshots violating state invariants
    except Exception as exc:
        raise CorruptSnapshot(f"{path}: {exc}") from exc
    return snapshot


# --- linear heads ----------------------------------------------------------
#
# A head travels as two embedding blocks: the weight matrix as a (C, d)
# block and, optionally, the bias as a (1, C) block next to it.

def save_head(weights_path: str | Path, head: LinearHead, bias_path: str | Path | None = None) -> None:
    write_embeddings(weights_path, EmbeddingBatch(head.weights))
    if bias_path is not None:
        write_embeddings(bias_path, EmbeddingBatch(head.bias[None, :]))


def load_head(weights_path: str | Path, bias_path: str | Path | None = None) -> LinearHead:
    weights = read_embeddings(weights_path).data
    bias = None
    if bias_path is not None:
        bias_block = read_embeddings(bias_path).data
        if bias_block.shape != (1, weights.shape[0]):
            raise TruncatedPayload(
                f"{bias_path}: bias block must be 1 x {weights.shape[0]}, "
                f"got {bias_block.shape[0]} x {bias_block.shape[1]}"
            )
        bias = bias_block[0]
    return LinearHead(weights=weights, bias=bias)


# --- run manifests ----------------------------------------------------------

@dataclass(frozen=True)
class ManifestDomain:
    """One named domain: an embeddings file and its labels file."""

    name: str
    embeddings: Path
    labels: Path


@dataclass(frozen=True)
class Manifest:
    """A multi-domain run description loaded from JSON.

    Relative paths are resolved against the manifest's own directory.
    options carries run defaults (batch_size, mode, alpha, seed) that
    command-line flags override.
    """

    domains: tuple[ManifestDomain, ...]
    head: Path
    head_bias: Path | None
    options: dict


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: expected a JSON object")
    base = path.parent

    def resolve(p: object, field: str) -> Path:
        if not isinstance(p, str) or not p:
            raise ManifestError(f"{path}: {field} must be a non-empty path string")
        resolved = (base / p).resolve() if not Path(p).is_absolute() else Path(p)
        if not resolved.is_file():
            raise ManifestError(f"{path}: {field} does not exist: {resolved}")
        return resolved

    raw_domains = doc.get("domains")
    if not isinstance(raw_domains, list) or not raw_domains:
        raise ManifestError(f"{path}: 'domains' must be a non-empty list")
    domains = []
    for i, entry in enumerate(raw_domains):
        if not isinstance(entry, dict):
            raise ManifestError(f"{path}: domains[{i}] must be an object")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise ManifestError(f"{path}: domains[{i}].name must be a non-empty string")
        domains.append(
            ManifestDomain(
                name=name,
                embeddings=resolve(entry.get("embeddings"), f"domains[{i}].embeddings"),
                labels=resolve(entry.get("labels"), f"domains[{i}].labels"),
            )
        )
    names = [d.name for d in domains]
    if len(set(names)) != len(names):
        raise ManifestError(f"{path}: domain names must be unique")

    head = resolve(doc.get("head"), "head")
    head_bias = None
    if doc.get("head_bias") is not None:
        head_bias = resolve(doc.get("head_bias"), "head_bias")

    options = doc.get("options", {})
    if not isinstance(options, dict):
        raise ManifestError(f"{path}: 'options' must be an object")
    return Manifest(domains=tuple(domains), head=head, head_bias=head_bias, options=options)
