import random
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import P, S
from pairxor.codec import NodeId, Role, all_nodes, make_params
from pairxor.store import (
    SHARD_HEADER_LEN,
    BadMagicError,
    ChecksumError,
    FileManifest,
    ManifestError,
    MissingStripeError,
    ScrubReason,
    ShardError,
    ShardHeader,
    StripeUnrecoverableError,
    TruncatedShardError,
    UnsupportedVersionError,
    assemble_file,
    decode_file,
    encode_file,
    manifest_filename,
    read_manifest,
    read_shard,
    scrub,
    shard_filename,
    split_file,
    write_shard,
    write_shard_files,
)

GOLDEN_SHARD_HEX = (
    # k=5, S1, stripe 0, fragment_size 2, file length 10, payload 00 01
    "4e4d445301050000000000000000020000000a000000000000006922de360001"
)


def make_header(payload, **overrides):
    fields = dict(
        k=5,
        role=Role.SYSTEMATIC,
        partition=0,
        stripe_index=0,
        fragment_size=len(payload),
        original_file_len=10,
        payload_crc32=zlib.crc32(payload) & 0xFFFFFFFF,
    )
    fields.update(overrides)
    return ShardHeader(**fields)


# --------------------------------------------------------------------- split


def test_split_exact_fit():
    data = bytes(range(10))
    stripes, manifest = split_file(data, 5, 2)
    assert manifest.stripe_count == 1
    assert stripes == [[bytes([0, 1]), bytes([2, 3]), bytes([4, 5]), bytes([6, 7]), bytes([8, 9])]]
    assert manifest.original_file_len == 10


def test_split_padding():
    data = bytes(range(11))
    stripes, manifest = split_file(data, 5, 2)
    assert manifest.stripe_count == 2
    tail = b"".join(stripes[1])
    assert tail == bytes([10]) + bytes(9)


def test_split_empty_input():
    stripes, manifest = split_file(b"", 5, 2)
    assert manifest.stripe_count == 1
    assert manifest.original_file_len == 0
    assert all(fragment == b"\x00\x00" for fragment in stripes[0])


def test_split_validation():
    with pytest.raises(ValueError):
        split_file(b"x", 1, 2)
    with pytest.raises(ValueError):
        split_file(b"x", 2, 0)


# ------------------------------------------------------------------ shard IO


def test_shard_golden_bytes():
    payload = b"\x00\x01"
    blob = write_shard(make_header(payload), payload)
    assert blob.hex() == GOLDEN_SHARD_HEX
    assert len(blob) == SHARD_HEADER_LEN + 2
    header, back = read_shard(blob)
    assert back == payload
    assert header.node == S(1)
    assert header.original_file_len == 10


def test_shard_roundtrip_random():
    rng = random.Random(5)
    payload = rng.randbytes(33)
    header = make_header(payload, role=Role.PARITY, partition=3, stripe_index=7)
    blob = write_shard(header, payload)
    parsed, back = read_shard(blob)
    assert parsed == header
    assert back == payload


def test_shard_write_is_deterministic():
    payload = b"hello world!"
    one = write_shard(make_header(payload), payload)
    two = write_shard(make_header(payload), payload)
    assert one == two


def test_shard_bit_flip_fails_crc():
    payload = b"\x10\x20\x30"
    blob = bytearray(write_shard(make_header(payload), payload))
    blob[-1] ^= 0x01
    with pytest.raises(ChecksumError):
        read_shard(bytes(blob))


def test_shard_truncation():
    payload = b"\x10\x20\x30"
    blob = write_shard(make_header(payload), payload)
    with pytest.raises(TruncatedShardError):
        read_shard(blob[:20])
    with pytest.raises(TruncatedShardError):
        read_shard(blob[:-1])


def test_shard_trailing_bytes_rejected():
    payload = b"\x10\x20\x30"
    blob = write_shard(make_header(payload), payload)
    with pytest.raises(ShardError):
        read_shard(blob + b"\x00")


def test_shard_bad_magic_and_version():
    payload = b"\x10\x20\x30"
    blob = bytearray(write_shard(make_header(payload), payload))
    wrong_magic = b"XMDS" + bytes(blob[4:])
    with pytest.raises(BadMagicError):
        read_shard(wrong_magic)
    blob[4] = 9
    with pytest.raises(UnsupportedVersionError):
        read_shard(bytes(blob))


def test_shard_header_validation():
    with pytest.raises(ValueError):
        make_header(b"\x00", partition=5)
    with pytest.raises(ValueError):
        make_header(b"\x00", k=1)
    header = make_header(b"\x00\x01")
    with pytest.raises(ValueError):
        write_shard(header, b"\x00\x02")  # crc mismatch
    with pytest.raises(ValueError):
        write_shard(header, b"\x00")  # wrong length


# ------------------------------------------------------------------ assemble


def test_assemble_inverse_of_split():
    rng = random.Random(6)
    for size in (0, 1, 10, 11, 57):
        data = rng.randbytes(size)
        stripes, manifest = split_file(data, 5, 2)
        assert assemble_file(stripes, manifest) == data


def test_assemble_stripe_count_mismatch():
    stripes, manifest = split_file(bytes(10), 5, 2)
    with pytest.raises(ValueError):
        assemble_file(stripes + [stripes[0]], manifest)


def test_assemble_missing_stripe():
    stripes, manifest = split_file(bytes(21), 5, 2)
    with pytest.raises(MissingStripeError) as err:
        assemble_file([stripes[0], None, stripes[2]], manifest)
    assert err.value.stripe_index == 1
    assert "stripe 1" in str(err.value)


# ------------------------------------------------------------------ manifest


def test_manifest_text_roundtrip():
    _, manifest = encode_file(bytes(range(23)), 3, 4)
    again = FileManifest.from_text(manifest.to_text())
    assert again == manifest


def test_manifest_rejects_garbage():
    _, manifest = encode_file(bytes(4), 2, 1)
    text = manifest.to_text()
    with pytest.raises(ManifestError):
        FileManifest.from_text(text + "mystery = 4\n")
    with pytest.raises(ManifestError):
        FileManifest.from_text(text.replace("k = 2", "k = x"))
    with pytest.raises(ManifestError):
        FileManifest.from_text("k = 2\n")
    # Dropping one checksum line breaks coverage.
    lines = [line for line in text.splitlines() if not line.startswith("shard_crc32.0.P2")]
    with pytest.raises(ManifestError):
        FileManifest.from_text("\n".join(lines))


# ---------------------------------------------------------------- end to end


@pytest.mark.parametrize("k", (2, 3, 5, 8))
def test_write_read_decode_roundtrip(tmp_path, k):
    rng = random.Random(300 + k)
    data = rng.randbytes(777)
    stripes, manifest = encode_file(data, k, 16)
    write_shard_files(stripes, manifest, tmp_path, "blob")
    assert scrub(tmp_path, "blob").is_clean
    assert read_manifest(tmp_path, "blob") == manifest
    assert decode_file(tmp_path, "blob") == data


def test_decode_file_with_three_missing_shards(tmp_path):
    rng = random.Random(8)
    data = rng.randbytes(100)
    stripes, manifest = encode_file(data, 5, 4)
    write_shard_files(stripes, manifest, tmp_path, "blob")
    for stripe_index in range(manifest.stripe_count):
        for node in (S(1), P(2), S(3)):
            (tmp_path / shard_filename("blob", stripe_index, node)).unlink()
    assert decode_file(tmp_path, "blob") == data


def test_decode_file_unrecoverable_names_stripe(tmp_path):
    data = bytes(range(40))
    stripes, manifest = encode_file(data, 5, 4)
    write_shard_files(stripes, manifest, tmp_path, "blob")
    for node in (S(1), P(1), S(2), P(2)):
        (tmp_path / shard_filename("blob", 1, node)).unlink()
    with pytest.raises(StripeUnrecoverableError) as err:
        decode_file(tmp_path, "blob")
    assert err.value.stripe_index == 1
    assert "stripe 1" in str(err.value)


def test_scrub_reports_missing_and_corrupt(tmp_path):
    data = bytes(range(20))
    stripes, manifest = encode_file(data, 5, 2)
    write_shard_files(stripes, manifest, tmp_path, "blob")

    (tmp_path / shard_filename("blob", 0, P(1))).unlink()
    s2_path = tmp_path / shard_filename("blob", 0, S(2))
    blob = bytearray(s2_path.read_bytes())
    blob[-1] ^= 0xFF
    s2_path.write_bytes(bytes(blob))

    report = scrub(tmp_path, "blob")
    by_stripe = report.by_stripe()
    found = {(f.node, f.reason) for f in by_stripe[0]}
    assert found == {(P(1), ScrubReason.MISSING), (S(2), ScrubReason.BAD_CRC)}


def test_scrub_detects_swapped_shard(tmp_path):
    data = bytes(range(20))
    stripes, manifest = encode_file(data, 5, 2)
    write_shard_files(stripes, manifest, tmp_path, "blob")
    # A valid container in the wrong slot must be flagged, not trusted.
    source = tmp_path / shard_filename("blob", 0, S(1))
    target = tmp_path / shard_filename("blob", 0, S(2))
    target.write_bytes(source.read_bytes())
    report = scrub(tmp_path, "blob")
    assert any(
        f.node == S(2) and f.reason is ScrubReason.MISMATCH for f in report.findings
    )


def test_missing_manifest(tmp_path):
    with pytest.raises(ManifestError):
        read_manifest(tmp_path, "blob")


def test_shard_filename_convention():
    assert shard_filename("file.bin", 3, P(2)) == "file.bin.s3.P2.shard"
    assert manifest_filename("file.bin") == "file.bin.manifest"


def test_written_files_are_deterministic(tmp_path):
    data = bytes(range(64))
    first_dir = tmp_path / "a"
    second_dir = tmp_path / "b"
    first_dir.mkdir()
    second_dir.mkdir()
    for directory in (first_dir, second_dir):
        stripes, manifest = encode_file(data, 4, 4)
        write_shard_files(stripes, manifest, directory, "blob")
    for path in sorted(first_dir.iterdir()):
        twin = second_dir / path.name
        assert path.read_bytes() == twin.read_bytes()


@settings(max_examples=30, deadline=None)
@given(
    st.binary(min_size=0, max_size=400),
    st.integers(min_value=2, max_value=6),
    st.integers(min_value=1, max_value=9),
)
def test_split_assemble_property(data, k, fragment_size):
    stripes, manifest = split_file(data, k, fragment_size)
    assert manifest.stripe_count == max(
        1, -(-len(data) // (k * fragment_size))
    )
    assert assemble_file(stripes, manifest) == data
