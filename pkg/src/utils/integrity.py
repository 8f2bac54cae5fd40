"""
Artifact Integrity: Digests and Checksummed Binary Framing

This module provides the deterministic digests and the framed binary container
shared by dataset files and network checkpoints.

Frame layout (all integers little-endian):
    magic            8 bytes
    format version   uint16
    header length    uint32
    header           canonical JSON, utf-8
    payload length   uint64
    payload          raw bytes
    checksum         SHA-256 over everything above (32 bytes)
"""

import hashlib
import hmac
import json
import struct
from pathlib import Path
from typing import Any, Dict, Iterable, Tuple, Union

_PREFIX = struct.Struct("<8sHI")
_PAYLOAD_LEN = struct.Struct("<Q")
CHECKSUM_BYTES = 32


class IntegrityError(ValueError):
    """Raised when a stored checksum or digest does not match the content."""
    pass


class FormatVersionError(ValueError):
    """Raised when a file carries an unknown magic or an unsupported format version."""
    pass


class TruncatedFileError(ValueError):
    """Raised when a file ends before its declared lengths are satisfied."""
    pass


def canonical_json(payload: Any) -> str:
    """Serialize to JSON with sorted keys and compact separators (byte-stable)."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def digest_payload(payload: Any) -> str:
    """
    SHA-256 hex digest of a JSON-serializable payload.

    Args:
        payload: Any JSON-serializable object (dicts are key-sorted first)

    Returns:
        64-character lowercase hex digest
    """
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def digest_file(path: Union[str, Path]) -> str:
    """SHA-256 hex digest of a file's bytes."""
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            sha.update(chunk)
    return sha.hexdigest()


def digests_match(expected: str, actual: str) -> bool:
    """Constant-time comparison of two hex digests."""
    return hmac.compare_digest(expected.encode("ascii"), actual.encode("ascii"))


def write_frame(
    path: Union[str, Path],
    magic: bytes,
    version: int,
    header: Dict[str, Any],
    payload_parts: Iterable[bytes],
) -> None:
    """
    Write a checksummed frame to disk.

    Args:
        path: Destination file
        magic: Exactly 8 bytes identifying the artifact kind
        version: Format version stored as uint16
        header: JSON-serializable header (written in canonical form)
        payload_parts: Byte chunks concatenated into the payload
    """
    if len(magic) != 8:
        raise ValueError(f"Magic must be 8 bytes, got {len(magic)}")

    header_bytes = canonical_json(header).encode("utf-8")
    payload = b"".join(payload_parts)
    body = b"".join([
        _PREFIX.pack(magic, version, len(header_bytes)),
        header_bytes,
        _PAYLOAD_LEN.pack(len(payload)),
        payload,
    ])
    checksum = hashlib.sha256(body).digest()

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(body)
        handle.write(checksum)


def read_frame(
    path: Union[str, Path],
    magic: bytes,
    supported_versions: Tuple[int, ...],
) -> Tuple[int, Dict[str, Any], bytes]:
    """
    Read and verify a checksummed frame.

    Args:
        path: Source file
        magic: Expected 8-byte magic
        supported_versions: Format versions this reader understands

    Returns:
        A tuple of (version, header, payload)

    Raises:
        TruncatedFileError: If the file is shorter than its declared lengths
        FormatVersionError: On magic or version mismatch
        IntegrityError: If the trailing checksum does not match
    """
    blob = Path(path).read_bytes()

    if len(blob) < _PREFIX.size:
        raise TruncatedFileError(f"{path}: file too short for frame prefix ({len(blob)} bytes)")

    found_magic, version, header_len = _PREFIX.unpack_from(blob, 0)
    if found_magic != magic:
        raise FormatVersionError(f"{path}: unexpected magic {found_magic!r}, expected {magic!r}")
    if version not in supported_versions:
        raise FormatVersionError(
            f"{path}: format version {version} not in supported {supported_versions}"
        )

    offset = _PREFIX.size
    if len(blob) < offset + header_len + _PAYLOAD_LEN.size:
        raise TruncatedFileError(f"{path}: header truncated")
    header_bytes = blob[offset:offset + header_len]
    offset += header_len
    (payload_len,) = _PAYLOAD_LEN.unpack_from(blob, offset)
    offset += _PAYLOAD_LEN.size

    end = offset + payload_len
    if len(blob) < end + CHECKSUM_BYTES:
        raise TruncatedFileError(
            f"{path}: payload truncated ({len(blob) - offset} of {payload_len + CHECKSUM_BYTES} bytes)"
        )
    if len(blob) > end + CHECKSUM_BYTES:
        raise IntegrityError(f"{path}: trailing bytes after checksum")

    expected = blob[end:end + CHECKSUM_BYTES]
    actual = hashlib.sha256(blob[:end]).digest()
    if not hmac.compare_digest(expected, actual):
        raise IntegrityError(f"{path}: checksum mismatch")

    header = json.loads(header_bytes.decode("utf-8"))
    return version, header, blob[offset:end]
