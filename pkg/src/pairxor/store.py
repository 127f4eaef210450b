"""Persistent shard store: file splitting, shard containers, and scrubbing.

Shard container layout (little-endian, no padding):

    offset  size  field
    0       4     magic "NMDS"
    4       1     version (1)
    5       2     k
    7       1     role (0 systematic, 1 parity)
    8       2     partition (0-based)
    10      4     stripe index
    14      4     fragment size in bytes
    18      8     original file length in bytes
    26      4     CRC-32 (IEEE) of the payload
    30      ...   payload, exactly fragment-size bytes

The 26 bytes of header fields after the magic are followed by the payload
checksum; identical inputs always produce identical shard bytes.  Shards are
named ``<basename>.s<stripe>.<node>.shard`` and a key-value text manifest
``<basename>.manifest`` records the geometry and every payload checksum.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .codec import (
    CodeParams,
    NodeId,
    Role,
    Stripe,
    all_nodes,
    decode,
    encode_stripe,
    select_recovery_set,
)

__all__ = [
    "SHARD_MAGIC",
    "SHARD_VERSION",
    "SHARD_HEADER_LEN",
    "ShardError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedShardError",
    "ChecksumError",
    "ManifestError",
    "MissingStripeError",
    "StripeUnrecoverableError",
    "ShardHeader",
    "FileManifest",
    "ScrubReason",
    "ScrubFinding",
    "ScrubReport",
    "split_file",
    "write_shard",
    "read_shard",
    "assemble_file",
    "encode_file",
    "shard_filename",
    "manifest_filename",
    "write_shard_files",
    "read_manifest",
    "load_stripe_packets",
    "scrub",
    "decode_file",
]

SHARD_MAGIC = b"NMDS"
SHARD_VERSION = 1
_HEADER = struct.Struct("<4sBHBHIIQI")
SHARD_HEADER_LEN = _HEADER.size  # 30: 4-byte magic + 26 bytes of fields

_MANIFEST_VERSION = 1


class ShardError(Exception):
    """Base class for shard container problems."""


class BadMagicError(ShardError):
    pass


class UnsupportedVersionError(ShardError):
    pass


class TruncatedShardError(ShardError):
    pass


class ChecksumError(ShardError):
    pass


class ManifestError(Exception):
    """The manifest document is missing, malformed, or inconsistent."""


class MissingStripeError(Exception):
    def __init__(self, stripe_index: int):
        super().__init__(f"stripe {stripe_index} is missing")
        self.stripe_index = stripe_index


class StripeUnrecoverableError(Exception):
    def __init__(self, stripe_index: int, detail: str = ""):
        message = f"stripe {stripe_index} is not decodable from the available shards"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.stripe_index = stripe_index


@dataclass(frozen=True)
class ShardHeader:
    k: int
    role: Role
    partition: int
    stripe_index: int
    fragment_size: int
    original_file_len: int
    payload_crc32: int

    def __post_init__(self) -> None:
        if self.k < 2 or self.k > 0xFFFF:
            raise ValueError(f"k={self.k} out of header range")
        if self.role not in (Role.SYSTEMATIC, Role.PARITY):
            raise ValueError(f"bad role {self.role!r}")
        if not 0 <= self.partition < self.k:
            raise ValueError(f"partition {self.partition} out of range for k={self.k}")
        if not 0 <= self.stripe_index <= 0xFFFFFFFF:
            raise ValueError("stripe_index out of range")
        if not 1 <= self.fragment_size <= 0xFFFFFFFF:
            raise ValueError("fragment_size out of range")
        if not 0 <= self.original_file_len <= 0xFFFFFFFFFFFFFFFF:
            raise ValueError("original_file_len out of range")
        if not 0 <= self.payload_crc32 <= 0xFFFFFFFF:
            raise ValueError("payload_crc32 out of range")

    @property
    def node(self) -> NodeId:
        return NodeId(self.partition, self.role)

    def pack(self) -> bytes:
        return _HEADER.pack(
            SHARD_MAGIC,
            SHARD_VERSION,
            self.k,
            int(self.role),
            self.partition,
            self.stripe_index,
            self.fragment_size,
            self.original_file_len,
            self.payload_crc32,
        )


def write_shard(header: ShardHeader, payload: bytes) -> bytes:
    """Serialize one shard; the header checksum must match the payload."""
    if len(payload) != header.fragment_size:
        raise ValueError(
            f"payload length {len(payload)} does not match fragment_size "
            f"{header.fragment_size}"
        )
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if crc != header.payload_crc32:
        raise ValueError("header payload_crc32 does not match the payload")
    return header.pack() + payload


def read_shard(blob: bytes) -> Tuple[ShardHeader, bytes]:
    """Parse and verify one shard container."""
    if len(blob) < SHARD_HEADER_LEN:
        raise TruncatedShardError(
            f"shard is {len(blob)} bytes, header alone needs {SHARD_HEADER_LEN}"
        )
    magic, version, k, role_value, partition, stripe_index, fragment_size, file_len, crc = _HEADER.unpack_from(blob)
    if magic != SHARD_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != SHARD_VERSION:
        raise UnsupportedVersionError(f"unsupported shard version {version}")
    if role_value not in (0, 1):
        raise ShardError(f"bad role byte {role_value}")
    if k < 2 or not 0 <= partition < k:
        raise ShardError(f"bad geometry in header: k={k} partition={partition}")
    if fragment_size < 1:
        raise ShardError("fragment_size must be >= 1")
    expected = SHARD_HEADER_LEN + fragment_size
    if len(blob) < expected:
        raise TruncatedShardError(
            f"shard is {len(blob)} bytes, expected {expected}"
        )
    if len(blob) > expected:
        raise ShardError(f"{len(blob) - expected} trailing bytes after payload")
    payload = blob[SHARD_HEADER_LEN:]
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumError("payload CRC-32 mismatch")
    header = ShardHeader(
        k=k,
        role=Role(role_value),
        partition=partition,
        stripe_index=stripe_index,
        fragment_size=fragment_size,
        original_file_len=file_len,
        payload_crc32=crc,
    )
    return header, payload


@dataclass(frozen=True)
class FileManifest:
    k: int
    fragment_size: int
    stripe_count: int
    original_file_len: int
    shard_crcs: Dict[Tuple[int, NodeId], int] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"pairxor_manifest_version = {_MANIFEST_VERSION}",
            f"k = {self.k}",
            f"fragment_size = {self.fragment_size}",
            f"stripe_count = {self.stripe_count}",
            f"original_file_len = {self.original_file_len}",
        ]
        for (stripe_index, node), crc in sorted(self.shard_crcs.items()):
            lines.append(f"shard_crc32.{stripe_index}.{node.label} = {crc}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FileManifest":
        scalars: Dict[str, int] = {}
        crcs: Dict[Tuple[int, NodeId], int] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ManifestError(f"line {lineno}: expected 'key = value'")
            key, value = key.strip(), value.strip()
            if not value.isdigit():
                raise ManifestError(f"line {lineno}: value for {key} must be an integer")
            if key.startswith("shard_crc32."):
                parts = key.split(".")
                if len(parts) != 3 or not parts[1].isdigit():
                    raise ManifestError(f"line {lineno}: bad checksum key {key}")
                try:
                    node = NodeId.from_label(parts[2])
                except ValueError as exc:
                    raise ManifestError(f"line {lineno}: {exc}") from exc
                crcs[(int(parts[1]), node)] = int(value)
            elif key in (
                "pairxor_manifest_version",
                "k",
                "fragment_size",
                "stripe_count",
                "original_file_len",
            ):
                if key in scalars:
                    raise ManifestError(f"line {lineno}: duplicate key {key}")
                scalars[key] = int(value)
            else:
                raise ManifestError(f"line {lineno}: unknown key {key}")
        for required in ("pairxor_manifest_version", "k", "fragment_size", "stripe_count", "original_file_len"):
            if required not in scalars:
                raise ManifestError(f"manifest is missing {required}")
        if scalars["pairxor_manifest_version"] != _MANIFEST_VERSION:
            raise ManifestError(
                f"unsupported manifest version {scalars['pairxor_manifest_version']}"
            )
        manifest = cls(
            k=scalars["k"],
            fragment_size=scalars["fragment_size"],
            stripe_count=scalars["stripe_count"],
            original_file_len=scalars["original_file_len"],
            shard_crcs=crcs,
        )
        expected_keys = {
            (stripe, node)
            for stripe in range(manifest.stripe_count)
            for node in all_nodes(CodeParams(manifest.k))
        }
        if set(crcs) != expected_keys:
            raise ManifestError("manifest checksum entries do not cover every shard exactly once")
        return manifest


def split_file(
    data: bytes, k: int, fragment_size: int
) -> Tuple[List[List[bytes]], FileManifest]:
    """Cut a file into stripes of k fragments, zero-padding the tail.

    Empty input still yields one all-zero stripe so the on-disk layout is
    uniform; the manifest records the true length for exact reassembly.
    """
    params = CodeParams(k)
    if fragment_size < 1:
        raise ValueError("fragment_size must be >= 1")
    stripe_bytes = params.k * fragment_size
    stripe_count = max(1, -(-len(data) // stripe_bytes))
    padded = data.ljust(stripe_count * stripe_bytes, b"\x00")
    stripes: List[List[bytes]] = []
    for s in range(stripe_count):
        base = s * stripe_bytes
        stripes.append(
            [
                padded[base + i * fragment_size : base + (i + 1) * fragment_size]
                for i in range(params.k)
            ]
        )
    manifest = FileManifest(
        k=params.k,
        fragment_size=fragment_size,
        stripe_count=stripe_count,
        original_file_len=len(data),
    )
    return stripes, manifest


def assemble_file(
    stripes: Sequence[Optional[Sequence[bytes]]], manifest: FileManifest
) -> bytes:
    """Concatenate decoded fragments and strip the padding."""
    if len(stripes) != manifest.stripe_count:
        raise ValueError(
            f"got {len(stripes)} stripes, manifest says {manifest.stripe_count}"
        )
    chunks: List[bytes] = []
    for stripe_index, fragments in enumerate(stripes):
        if fragments is None:
            raise MissingStripeError(stripe_index)
        if len(fragments) != manifest.k:
            raise ValueError(
                f"stripe {stripe_index} has {len(fragments)} fragments, expected {manifest.k}"
            )
        chunks.extend(fragments)
    return b"".join(chunks)[: manifest.original_file_len]


def encode_file(
    data: bytes, k: int, fragment_size: int
) -> Tuple[List[Stripe], FileManifest]:
    """Split and encode a file; the manifest gains every payload checksum."""
    fragments_per_stripe, manifest = split_file(data, k, fragment_size)
    params = CodeParams(k)
    stripes = [encode_stripe(params, fragments) for fragments in fragments_per_stripe]
    for stripe_index, stripe in enumerate(stripes):
        for node, packet in stripe.packets.items():
            manifest.shard_crcs[(stripe_index, node)] = zlib.crc32(packet) & 0xFFFFFFFF
    return stripes, manifest


def shard_filename(basename: str, stripe_index: int, node: NodeId) -> str:
    return f"{basename}.s{stripe_index}.{node.label}.shard"


def manifest_filename(basename: str) -> str:
    return f"{basename}.manifest"


def write_shard_files(
    stripes: Sequence[Stripe],
    manifest: FileManifest,
    directory: Path,
    basename: str,
) -> List[Path]:
    """Write every shard container plus the manifest; manifest goes last."""
    directory = Path(directory)
    paths: List[Path] = []
    for stripe_index, stripe in enumerate(stripes):
        for node in all_nodes(stripe.params):
            payload = stripe.packet(node)
            header = ShardHeader(
                k=manifest.k,
                role=node.role,
                partition=node.partition,
                stripe_index=stripe_index,
                fragment_size=manifest.fragment_size,
                original_file_len=manifest.original_file_len,
                payload_crc32=zlib.crc32(payload) & 0xFFFFFFFF,
            )
            path = directory / shard_filename(basename, stripe_index, node)
            path.write_bytes(write_shard(header, payload))
            paths.append(path)
    (directory / manifest_filename(basename)).write_text(manifest.to_text())
    return paths


def read_manifest(directory: Path, basename: str) -> FileManifest:
    path = Path(directory) / manifest_filename(basename)
    if not path.is_file():
        raise ManifestError(f"no manifest at {path}")
    return FileManifest.from_text(path.read_text())


class ScrubReason(Enum):
    MISSING = "missing"
    BAD_FORMAT = "bad_format"
    BAD_CRC = "bad_crc"
    MISMATCH = "mismatch"  # header or checksum disagrees with the manifest


@dataclass(frozen=True)
class ScrubFinding:
    stripe_index: int
    node: NodeId
    reason: ScrubReason


@dataclass(frozen=True)
class ScrubReport:
    basename: str
    manifest: FileManifest
    findings: Tuple[ScrubFinding, ...]

    @property
    def is_clean(self) -> bool:
        return not self.findings

    def by_stripe(self) -> Dict[int, List[ScrubFinding]]:
        out: Dict[int, List[ScrubFinding]] = {}
        for finding in self.findings:
            out.setdefault(finding.stripe_index, []).append(finding)
        return out


def load_stripe_packets(
    directory: Path,
    basename: str,
    manifest: FileManifest,
    stripe_index: int,
) -> Tuple[Dict[NodeId, bytes], List[ScrubFinding]]:
    """Read one stripe's shards, returning valid packets and findings.

    A shard counts as valid only when its container parses, its checksum
    holds, and its header agrees with the manifest and its own filename.
    """
    directory = Path(directory)
    params = CodeParams(manifest.k)
    packets: Dict[NodeId, bytes] = {}
    findings: List[ScrubFinding] = []
    for node in all_nodes(params):
        path = directory / shard_filename(basename, stripe_index, node)
        if not path.is_file():
            findings.append(ScrubFinding(stripe_index, node, ScrubReason.MISSING))
            continue
        try:
            header, payload = read_shard(path.read_bytes())
        except ChecksumError:
            findings.append(ScrubFinding(stripe_index, node, ScrubReason.BAD_CRC))
            continue
        except ShardError:
            findings.append(ScrubFinding(stripe_index, node, ScrubReason.BAD_FORMAT))
            continue
        consistent = (
            header.k == manifest.k
            and header.fragment_size == manifest.fragment_size
            and header.original_file_len == manifest.original_file_len
            and header.stripe_index == stripe_index
            and header.node == node
            and manifest.shard_crcs.get((stripe_index, node)) == header.payload_crc32
        )
        if not consistent:
            findings.append(ScrubFinding(stripe_index, node, ScrubReason.MISMATCH))
            continue
        packets[node] = payload
    return packets, findings


def scrub(directory: Path, basename: str) -> ScrubReport:
    """Report every absent or corrupt shard, stripe by stripe."""
    manifest = read_manifest(directory, basename)
    findings: List[ScrubFinding] = []
    for stripe_index in range(manifest.stripe_count):
        _, stripe_findings = load_stripe_packets(
            directory, basename, manifest, stripe_index
        )
        findings.extend(stripe_findings)
    return ScrubReport(basename=basename, manifest=manifest, findings=tuple(findings))


def decode_file(directory: Path, basename: str) -> bytes:
    """Reassemble the original file from whatever valid shards remain."""
    manifest = read_manifest(directory, basename)
    params = CodeParams(manifest.k)
    decoded: List[Optional[List[bytes]]] = []
    for stripe_index in range(manifest.stripe_count):
        packets, _ = load_stripe_packets(directory, basename, manifest, stripe_index)
        subset = select_recovery_set(params, packets.keys())
        if subset is None:
            raise StripeUnrecoverableError(
                stripe_index, f"only {len(packets)} usable shards"
            )
        decoded.append(decode(params, {node: packets[node] for node in subset}))
    return assemble_file(decoded, manifest)
