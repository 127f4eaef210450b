import json
import random

import pytest

from helpers import P, S
from pairxor.cli import main


def run_cli(*argv):
    return main(list(argv))


def encode_sample(tmp_path, data=bytes(range(10)), k=5, fragment_size=2):
    source = tmp_path / "data.bin"
    source.write_bytes(data)
    shards = tmp_path / "shards"
    rc = run_cli(
        "encode",
        "--k",
        str(k),
        "--fragment-size",
        str(fragment_size),
        "--in",
        str(source),
        "--out-dir",
        str(shards),
    )
    assert rc == 0
    return source, shards


# -------------------------------------------------------------------- encode


def test_encode_writes_shards_and_manifest(tmp_path, capsys):
    _, shards = encode_sample(tmp_path)
    out = capsys.readouterr().out
    assert "shards_written = 10" in out
    assert "stripes = 1" in out
    assert (shards / "data.bin.manifest").is_file()
    assert len(list(shards.glob("*.shard"))) == 10


def test_encode_empty_file(tmp_path, capsys):
    _, shards = encode_sample(tmp_path, data=b"")
    assert len(list(shards.glob("*.shard"))) == 10
    for path in shards.glob("*.shard"):
        assert path.read_bytes()[-2:] == b"\x00\x00"


def test_encode_rejects_k1(tmp_path):
    source = tmp_path / "data.bin"
    source.write_bytes(b"hi")
    rc = run_cli(
        "encode", "--k", "1", "--fragment-size", "2",
        "--in", str(source), "--out-dir", str(tmp_path / "out"),
    )
    assert rc == 2


def test_encode_missing_input_is_operational_error(tmp_path):
    rc = run_cli(
        "encode", "--k", "5", "--fragment-size", "2",
        "--in", str(tmp_path / "nope.bin"), "--out-dir", str(tmp_path / "out"),
    )
    assert rc == 1


# -------------------------------------------------------------------- decode


def test_decode_roundtrip(tmp_path, capsys):
    source, shards = encode_sample(tmp_path, data=random.Random(1).randbytes(123))
    out_file = tmp_path / "restored.bin"
    rc = run_cli("decode", "--shards", str(shards), "--out", str(out_file))
    assert rc == 0
    assert out_file.read_bytes() == source.read_bytes()


def test_decode_with_any_three_shards_missing(tmp_path):
    source, shards = encode_sample(tmp_path, data=random.Random(2).randbytes(64))
    rng = random.Random(3)
    manifest_stripes = len(list(shards.glob("*.s*.S1.shard")))
    all_nodes = [f"S{i}" for i in range(1, 6)] + [f"P{i}" for i in range(1, 6)]
    for stripe in range(manifest_stripes):
        for label in rng.sample(all_nodes, 3):
            (shards / f"data.bin.s{stripe}.{label}.shard").unlink()
    out_file = tmp_path / "restored.bin"
    assert run_cli("decode", "--shards", str(shards), "--out", str(out_file)) == 0
    assert out_file.read_bytes() == source.read_bytes()


def test_decode_two_dead_partitions_fails_naming_stripe(tmp_path, capsys):
    _, shards = encode_sample(tmp_path)
    for label in ("S1", "P1", "S2", "P2"):
        (shards / f"data.bin.s0.{label}.shard").unlink()
    rc = run_cli("decode", "--shards", str(shards), "--out", str(tmp_path / "x"))
    assert rc == 1
    assert "stripe 0" in capsys.readouterr().err


def test_decode_requires_manifest(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run_cli("decode", "--shards", str(empty), "--out", str(tmp_path / "x")) == 1


# -------------------------------------------------------------------- repair


def test_repair_single_node(tmp_path, capsys):
    source, shards = encode_sample(tmp_path)
    target = shards / "data.bin.s0.S1.shard"
    original = target.read_bytes()
    target.unlink()
    rc = run_cli("repair", "--shards", str(shards), "--node", "S1")
    assert rc == 0
    out = capsys.readouterr().out
    assert "bandwidth.per_stripe = 3/5 M" in out
    assert "plan.0.helpers = P1 S2 P2" in out
    assert target.read_bytes() == original


def test_repair_partition_pair(tmp_path, capsys):
    source, shards = encode_sample(tmp_path)
    s1 = shards / "data.bin.s0.S1.shard"
    p1 = shards / "data.bin.s0.P1.shard"
    originals = (s1.read_bytes(), p1.read_bytes())
    s1.unlink()
    p1.unlink()
    rc = run_cli("repair", "--shards", str(shards), "--node", "S1")
    assert rc == 0
    out = capsys.readouterr().out
    assert "bandwidth.per_stripe = 7/5 M" in out
    assert "also_repaired = P1" in out
    assert (s1.read_bytes(), p1.read_bytes()) == originals


def test_repair_corrupt_shard(tmp_path):
    source, shards = encode_sample(tmp_path)
    target = shards / "data.bin.s0.P3.shard"
    original = target.read_bytes()
    mangled = bytearray(original)
    mangled[-1] ^= 0xFF
    target.write_bytes(bytes(mangled))
    assert run_cli("repair", "--shards", str(shards), "--node", "P3") == 0
    assert target.read_bytes() == original


def test_repair_nothing_to_do(tmp_path, capsys):
    _, shards = encode_sample(tmp_path)
    assert run_cli("repair", "--shards", str(shards), "--node", "S1") == 0
    assert "stripes_repaired = 0" in capsys.readouterr().out


def test_repair_unrecoverable_layout(tmp_path):
    _, shards = encode_sample(tmp_path)
    for label in ("S1", "P1", "S2", "P2"):
        (shards / f"data.bin.s0.{label}.shard").unlink()
    assert run_cli("repair", "--shards", str(shards), "--node", "S1") == 1


def test_repair_bad_node_label_is_usage_error(tmp_path):
    _, shards = encode_sample(tmp_path)
    assert run_cli("repair", "--shards", str(shards), "--node", "S9") == 2
    assert run_cli("repair", "--shards", str(shards), "--node", "Q1") == 2


# ------------------------------------------------------------------- analyze


def test_analyze_k5(tmp_path, capsys):
    assert run_cli("analyze", "--k", "5") == 0
    out = capsys.readouterr().out
    assert "max_tolerated_failures = 3" in out
    assert "three_failure_tolerance = holds" in out
    assert "profile.3 = 120/120" in out
    assert "any_k_minus_one_tolerance = fails" in out


def test_analyze_k3_lists_counterexample(capsys):
    assert run_cli("analyze", "--k", "3") == 0
    out = capsys.readouterr().out
    assert "three_failure_tolerance = fails" in out
    assert "three_failure_counterexample.0 = S1 S2 S3" in out


def test_analyze_json(capsys):
    assert run_cli("analyze", "--k", "4", "--json") == 0
    document = json.loads(capsys.readouterr().out)
    assert document["k"] == 4
    assert document["max_tolerated_failures"] == 3
    assert document["three_failure"]["counterexamples"] == []
    assert document["spread_k_minus_one"]["holds"] is True


def test_analyze_bound_is_operational_error(capsys):
    assert run_cli("analyze", "--k", "13") == 1


# -------------------------------------------------------------------- counts


def test_counts_k5(capsys):
    assert run_cli("counts", "--k", "5") == 0
    out = capsys.readouterr().out
    assert "recovery_sets.doubled_partition = 160" in out
    assert "recovery_sets.even_parity_cover = 16" in out
    assert "recovery_sets.total = 176" in out
    assert "recovery_sets.enumerated = 176" in out
    assert "repair_options.partner_alive = 4" in out
    assert "repair_options.parity_cover = 8" in out
    assert "repair_options.data_cover = 8" in out


def test_counts_k2(capsys):
    assert run_cli("counts", "--k", "2") == 0
    out = capsys.readouterr().out
    assert "recovery_sets.doubled_partition = 2" in out
    assert "recovery_sets.even_parity_cover = 2" in out
    assert "recovery_sets.total = 4" in out


def test_counts_k0_usage_error():
    assert run_cli("counts", "--k", "0") == 2


# ------------------------------------------------------------------ simulate


def test_simulate_single_failure_trace(tmp_path, capsys):
    trace = tmp_path / "trace.txt"
    trace.write_text("0 S1\n")
    rc = run_cli(
        "simulate", "--k", "5", "--rounds", "1", "--trace", str(trace), "--seed", "9"
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "fragment_units_downloaded = 3" in out
    assert "repairs_completed = 1" in out
    assert "baseline.msr_units_per_repair = 3" in out
    assert "this_code.avg_helpers_per_repair = 3" in out


def test_simulate_partition_pair_trace(tmp_path, capsys):
    trace = tmp_path / "trace.txt"
    trace.write_text("0 S1 P1\n")
    rc = run_cli("simulate", "--k", "5", "--rounds", "1", "--trace", str(trace))
    assert rc == 0
    assert "fragment_units_downloaded = 7" in capsys.readouterr().out


def test_simulate_seed_determinism(capsys):
    args = ("simulate", "--k", "5", "--rounds", "12", "--fail-prob", "0.3", "--seed", "5")
    assert run_cli(*args) == 0
    first = capsys.readouterr().out
    assert run_cli(*args) == 0
    second = capsys.readouterr().out
    assert first == second


def test_simulate_json_mode(capsys):
    rc = run_cli(
        "simulate", "--k", "5", "--rounds", "2", "--fail-prob", "0", "--json"
    )
    assert rc == 0
    document = json.loads(capsys.readouterr().out)
    assert document["metrics"]["repairs_completed"] == 0
    assert document["baseline"]["msr_d"] == 6


def test_simulate_bad_trace_node_usage_error(tmp_path, capsys):
    trace = tmp_path / "trace.txt"
    trace.write_text("0 S9\n")
    rc = run_cli("simulate", "--k", "5", "--rounds", "1", "--trace", str(trace))
    assert rc == 2


def test_simulate_trace_and_prob_are_exclusive(tmp_path):
    trace = tmp_path / "trace.txt"
    trace.write_text("0 S1\n")
    rc = run_cli(
        "simulate", "--k", "5", "--rounds", "1",
        "--trace", str(trace), "--fail-prob", "0.5",
    )
    assert rc == 2


def test_simulate_bad_msr_d(capsys):
    rc = run_cli(
        "simulate", "--k", "5", "--rounds", "1", "--fail-prob", "0", "--msr-d", "50"
    )
    assert rc == 2


# ------------------------------------------------------------------- generic


def test_unknown_flag_is_usage_error():
    assert run_cli("counts", "--k", "5", "--frobnicate") == 2


def test_unknown_command_is_usage_error():
    assert run_cli("frobnicate") == 2


@pytest.mark.parametrize("k", range(2, 9))
def test_pipeline_lossless_across_k(tmp_path, k):
    rng = random.Random(500 + k)
    data = rng.randbytes(rng.randrange(1, 300))
    source = tmp_path / "data.bin"
    source.write_bytes(data)
    shards = tmp_path / "shards"
    assert run_cli(
        "encode", "--k", str(k), "--fragment-size", "8",
        "--in", str(source), "--out-dir", str(shards),
    ) == 0
    # Knock out one node per stripe, repair it, decode.
    victims = []
    for path in sorted(shards.glob("*.shard")):
        stripe = int(path.name.split(".s")[1].split(".")[0])
        if path.name.endswith(f".s{stripe}.S1.shard"):
            victims.append(path)
    for path in victims:
        path.unlink()
    assert run_cli("repair", "--shards", str(shards), "--node", "S1") == 0
    out_file = tmp_path / "restored.bin"
    assert run_cli("decode", "--shards", str(shards), "--out", str(out_file)) == 0
    assert out_file.read_bytes() == data
