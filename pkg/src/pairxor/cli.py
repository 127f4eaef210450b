"""Command-line frontend.

Subcommands: encode, decode, repair, analyze, counts, simulate.  Output is
line-oriented ``key = value`` text (stable and scriptable); analyze and
simulate also offer ``--json``.  Exit codes: 0 success, 1 operational
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import zlib
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .analyzer import (
    AnalysisBoundError,
    ClaimCheck,
    ToleranceReport,
    tolerance_profile,
    verify_k_minus_one_tolerance,
    verify_spread_tolerance,
    verify_three_failure_tolerance,
)
from .codec import (
    CodeParams,
    EnumerationLimitError,
    NodeId,
    count_recovery_sets,
    enumerate_recovery_sets,
    format_nodes,
    partner,
)
from .repair import (
    RepairPlan,
    RepairScenario,
    UnrecoverableError,
    count_repair_options,
    execute_plan,
    plan_partition_repair,
    plan_single_repairs,
)
from .simulator import (
    SimConfig,
    SimMetrics,
    TraceError,
    compare_baselines,
    parse_config_text,
    parse_trace,
    run_simulation,
)
from .store import (
    ManifestError,
    MissingStripeError,
    ShardError,
    ShardHeader,
    StripeUnrecoverableError,
    decode_file,
    encode_file,
    load_stripe_packets,
    manifest_filename,
    read_manifest,
    shard_filename,
    write_shard,
    write_shard_files,
)

__all__ = ["main", "run"]


class UsageError(Exception):
    """Bad user input discovered after argument parsing."""


def _emit(key: str, value: object) -> None:
    print(f"{key} = {value}")


def _k_arg(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"k must be an integer, got {text!r}")
    if value < 2:
        raise argparse.ArgumentTypeError("k must be >= 2")
    return value


def _positive_arg(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("value must be >= 1")
    return value


def _nonnegative_arg(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("value must be >= 0")
    return value


def _seed_arg(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _probability_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"probability must be a number, got {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("probability must lie in [0, 1]")
    return value


def _discover_basename(directory: Path) -> str:
    manifests = sorted(path.name for path in directory.glob("*.manifest"))
    if not manifests:
        raise FileNotFoundError(f"no .manifest file in {directory}")
    if len(manifests) > 1:
        raise UsageError(
            f"multiple manifests in {directory}; pick one with --basename"
        )
    return manifests[0][: -len(".manifest")]


def _resolve_basename(args: argparse.Namespace) -> Tuple[Path, str]:
    directory = Path(args.shards)
    if not directory.is_dir():
        raise FileNotFoundError(f"shard directory {directory} does not exist")
    basename = args.basename or _discover_basename(directory)
    return directory, basename


def _cmd_encode(args: argparse.Namespace) -> int:
    source = Path(args.infile)
    data = source.read_bytes()
    stripes, manifest = encode_file(data, args.k, args.fragment_size)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    basename = args.basename or source.name
    paths = write_shard_files(stripes, manifest, out_dir, basename)
    _emit("basename", basename)
    _emit("stripes", manifest.stripe_count)
    _emit("shards_written", len(paths))
    _emit("manifest", out_dir / manifest_filename(basename))
    return 0


def _cmd_decode(args: argparse.Namespace) -> int:
    directory, basename = _resolve_basename(args)
    data = decode_file(directory, basename)
    out = Path(args.out)
    out.write_bytes(data)
    _emit("basename", basename)
    _emit("bytes_written", len(data))
    _emit("out", out)
    return 0


def _cmd_repair(args: argparse.Namespace) -> int:
    directory, basename = _resolve_basename(args)
    manifest = read_manifest(directory, basename)
    params = CodeParams(manifest.k)
    try:
        target = NodeId.from_label(args.node, manifest.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    stripes_repaired = 0
    total_units = 0
    per_stripe_units: Optional[int] = None
    first_plans: List[RepairPlan] = []
    extra_targets: set = set()
    for stripe_index in range(manifest.stripe_count):
        packets, _ = load_stripe_packets(directory, basename, manifest, stripe_index)
        if target in packets:
            continue
        mate = partner(target)
        if mate not in packets:
            plans = list(
                plan_partition_repair(
                    params, target.partition, packets.keys(), parity_first=args.parity_first
                )
            )
            extra_targets.add(mate)
        else:
            plans = [plan_single_repairs(params, target, packets.keys())[0]]
        lookup = dict(packets)
        stripe_units = 0
        for plan in plans:
            payload = execute_plan(plan, lookup)
            lookup[plan.target] = payload
            stripe_units += plan.cost_fragments
            expected_crc = manifest.shard_crcs[(stripe_index, plan.target)]
            actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
            if actual_crc != expected_crc:
                raise UnrecoverableError(
                    f"stripe {stripe_index}: rebuilt {plan.target.label} does not "
                    "match the manifest checksum; helper shards are inconsistent"
                )
            header = ShardHeader(
                k=manifest.k,
                role=plan.target.role,
                partition=plan.target.partition,
                stripe_index=stripe_index,
                fragment_size=manifest.fragment_size,
                original_file_len=manifest.original_file_len,
                payload_crc32=actual_crc,
            )
            path = directory / shard_filename(basename, stripe_index, plan.target)
            path.write_bytes(write_shard(header, payload))
        if not first_plans:
            first_plans = plans
            per_stripe_units = stripe_units
        stripes_repaired += 1
        total_units += stripe_units

    _emit("target", target.label)
    _emit("stripes_repaired", stripes_repaired)
    if stripes_repaired == 0:
        _emit("note", "target shards are already present and valid")
        return 0
    for i, plan in enumerate(first_plans):
        _emit(f"plan.{i}.kind", plan.kind.value)
        _emit(f"plan.{i}.target", plan.target.label)
        _emit(f"plan.{i}.helpers", format_nodes(plan.helpers))
        _emit(f"plan.{i}.cost_fragments", plan.cost_fragments)
    if extra_targets:
        _emit("also_repaired", format_nodes(extra_targets))
    _emit("bandwidth.per_stripe", f"{per_stripe_units}/{manifest.k} M")
    _emit("bandwidth.fragment_units_total", total_units)
    _emit("bandwidth.bytes_downloaded", total_units * manifest.fragment_size)
    return 0


def _tolerance_to_dict(report: ToleranceReport) -> Dict[str, object]:
    return {
        "k": report.k,
        "max_tolerated": report.max_tolerated,
        "per_size": [
            [tally.failures, tally.recoverable, tally.total]
            for tally in report.per_size
        ],
        "counterexamples": [
            sorted(node.label for node in pattern)
            for pattern in report.counterexamples
        ],
    }


def _claim_to_dict(check: ClaimCheck) -> Dict[str, object]:
    return {
        "holds": check.holds,
        "patterns_checked": check.patterns_checked,
        "failures": check.failures,
        "counterexamples": [
            sorted(node.label for node in pattern)
            for pattern in check.counterexamples
        ],
    }


def _cmd_analyze(args: argparse.Namespace) -> int:
    params = CodeParams(args.k)
    profile = tolerance_profile(params)
    three = verify_three_failure_tolerance(params)
    spread = verify_spread_tolerance(params)
    relaxed = verify_k_minus_one_tolerance(params)
    if args.json:
        document = {
            "k": params.k,
            "max_tolerated_failures": profile.max_tolerated,
            "profile": _tolerance_to_dict(profile),
            "three_failure": _tolerance_to_dict(three),
            "spread_k_minus_one": _claim_to_dict(spread),
            "any_k_minus_one": _claim_to_dict(relaxed),
        }
        print(json.dumps(document, indent=2, sort_keys=True))
        return 0
    _emit("k", params.k)
    _emit("max_tolerated_failures", profile.max_tolerated)
    for tally in profile.per_size:
        _emit(f"profile.{tally.failures}", f"{tally.recoverable}/{tally.total}")
    _emit("three_failure_tolerance", "holds" if not three.counterexamples else "fails")
    for i, pattern in enumerate(three.counterexamples):
        _emit(f"three_failure_counterexample.{i}", format_nodes(pattern))
    _emit("spread_k_minus_one_tolerance", "holds" if spread.holds else "fails")
    _emit("any_k_minus_one_tolerance", "holds" if relaxed.holds else "fails")
    for i, pattern in enumerate(relaxed.counterexamples):
        _emit(f"any_k_minus_one_counterexample.{i}", format_nodes(pattern))
    return 0


def _cmd_counts(args: argparse.Namespace) -> int:
    params = CodeParams(args.k)
    counts = count_recovery_sets(params)
    _emit("k", params.k)
    _emit("recovery_sets.doubled_partition", counts.doubled)
    _emit("recovery_sets.even_parity_cover", counts.cover)
    _emit("recovery_sets.total", counts.total)
    try:
        enumerated = len(enumerate_recovery_sets(params))
    except EnumerationLimitError:
        _emit("recovery_sets.enumerated", "skipped (k above enumeration limit)")
    else:
        _emit("recovery_sets.enumerated", enumerated)
        if enumerated != counts.total:
            raise UnrecoverableError(
                f"enumeration found {enumerated} sets, formulas say {counts.total}"
            )
    _emit(
        "repair_options.partner_alive",
        count_repair_options(params, RepairScenario.PARTNER_ALIVE),
    )
    _emit(
        "repair_options.parity_cover",
        count_repair_options(params, RepairScenario.PARITY_COVER),
    )
    _emit(
        "repair_options.data_cover",
        count_repair_options(params, RepairScenario.DATA_COVER),
    )
    return 0


def _metrics_to_dict(metrics: SimMetrics) -> Dict[str, object]:
    return {
        "k": metrics.k,
        "rounds_run": metrics.rounds_run,
        "rng_seed": metrics.rng_seed,
        "fragment_units_downloaded": metrics.fragment_units_downloaded,
        "repairs_completed": metrics.repairs_completed,
        "helpers_contacted_total": metrics.helpers_contacted_total,
        "data_loss_events": metrics.data_loss_events,
        "rounds": [
            {
                "round": log.round_index,
                "injected": [node.label for node in log.injected],
                "repairs": [
                    {
                        "target": record.target.label,
                        "helpers": [node.label for node in record.helpers],
                        "cost_fragments": record.cost_fragments,
                    }
                    for record in log.repairs
                ],
                "fragment_units": log.fragment_units,
                "data_loss": log.data_loss,
            }
            for log in metrics.rounds
        ],
    }


def _cmd_simulate(args: argparse.Namespace) -> int:
    base = None
    if args.config is not None:
        try:
            base = parse_config_text(Path(args.config).read_text())
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    k = args.k if args.k is not None else (base.k if base else None)
    rounds = args.rounds if args.rounds is not None else (base.rounds if base else None)
    if k is None or rounds is None:
        raise UsageError("simulate needs --k and --rounds, via flags or --config")
    params = CodeParams(k)

    trace = None
    if args.trace is not None:
        try:
            trace = parse_trace(Path(args.trace).read_text(), params)
        except TraceError as exc:
            raise UsageError(str(exc)) from exc
    fail_prob = args.fail_prob
    if fail_prob is None and base is not None:
        fail_prob = base.failure_probability
    if trace is not None:
        if fail_prob:
            raise UsageError("a trace and a nonzero failure probability are exclusive")
        fail_prob = 0.0
    elif fail_prob is None:
        raise UsageError(
            "specify --fail-prob, --trace, or failure_probability in --config"
        )
    seed = args.seed if args.seed is not None else (base.rng_seed if base else 0)
    repairs_per_round = args.repairs_per_round
    if repairs_per_round is None and base is not None:
        repairs_per_round = base.repairs_per_round

    d = args.msr_d if args.msr_d is not None else params.k + 1
    if not params.k <= d <= 2 * params.k - 1:
        raise UsageError(f"--msr-d must satisfy k <= d <= 2k-1, got {d}")
    config = SimConfig(
        k=k,
        rounds=rounds,
        failure_probability=fail_prob,
        trace=trace,
        rng_seed=seed,
        repairs_per_round=repairs_per_round,
    )
    metrics = run_simulation(config)
    baseline = compare_baselines(metrics, params.k, d)
    if args.json:
        document = {
            "metrics": _metrics_to_dict(metrics),
            "baseline": {
                "naive_units_per_repair": str(baseline.naive_units_per_repair),
                "msr_d": baseline.msr_d,
                "msr_units_per_repair": str(baseline.msr_units_per_repair),
                "msr_helpers_per_repair": baseline.msr_helpers_per_repair,
                "avg_units_per_repair": str(baseline.avg_units_per_repair),
                "avg_helpers_per_repair": str(baseline.avg_helpers_per_repair),
            },
        }
        print(json.dumps(document, indent=2, sort_keys=True))
        return 0
    _emit("k", metrics.k)
    _emit("rounds_run", metrics.rounds_run)
    _emit("seed", metrics.rng_seed)
    _emit("fragment_units_downloaded", metrics.fragment_units_downloaded)
    _emit("repairs_completed", metrics.repairs_completed)
    _emit("helpers_contacted_total", metrics.helpers_contacted_total)
    _emit("data_loss_events", metrics.data_loss_events)
    for log in metrics.rounds:
        if not log.injected and not log.repairs and not log.data_loss:
            continue
        _emit(f"round.{log.round_index}.injected", format_nodes(log.injected) or "-")
        repaired = " ".join(
            f"{record.target.label}:{record.cost_fragments}" for record in log.repairs
        )
        _emit(f"round.{log.round_index}.repaired", repaired or "-")
        if log.data_loss:
            _emit(f"round.{log.round_index}.data_loss", "yes")
    _emit("baseline.naive_units_per_repair", baseline.naive_units_per_repair)
    _emit("baseline.msr_d", baseline.msr_d)
    _emit("baseline.msr_units_per_repair", baseline.msr_units_per_repair)
    _emit("baseline.msr_helpers_per_repair", baseline.msr_helpers_per_repair)
    _emit("this_code.avg_units_per_repair", baseline.avg_units_per_repair)
    _emit("this_code.avg_helpers_per_repair", baseline.avg_helpers_per_repair)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairxor",
        description="Paired-partition XOR erasure code toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_encode = sub.add_parser("encode", help="split, encode, and write shards")
    p_encode.add_argument("--k", type=_k_arg, required=True, help="number of partitions (>= 2)")
    p_encode.add_argument("--fragment-size", type=_positive_arg, required=True, help="fragment size in bytes")
    p_encode.add_argument("--in", dest="infile", required=True, help="input file")
    p_encode.add_argument("--out-dir", required=True, help="directory for shards and manifest")
    p_encode.add_argument("--basename", help="shard basename (default: input file name)")
    p_encode.set_defaults(func=_cmd_encode)

    p_decode = sub.add_parser("decode", help="reassemble a file from shards")
    p_decode.add_argument("--shards", required=True, help="directory holding shards")
    p_decode.add_argument("--out", required=True, help="output file")
    p_decode.add_argument("--basename", help="shard basename (default: discovered)")
    p_decode.set_defaults(func=_cmd_decode)

    p_repair = sub.add_parser("repair", help="regenerate a missing or corrupt node's shards")
    p_repair.add_argument("--shards", required=True, help="directory holding shards")
    p_repair.add_argument("--node", required=True, help="node label, e.g. S1 or P3")
    p_repair.add_argument("--basename", help="shard basename (default: discovered)")
    p_repair.add_argument(
        "--parity-first",
        action="store_true",
        help="when the whole partition is down, rebuild the parity node first",
    )
    p_repair.set_defaults(func=_cmd_repair)

    p_analyze = sub.add_parser("analyze", help="exhaustive fault-tolerance report")
    p_analyze.add_argument("--k", type=_k_arg, required=True)
    p_analyze.add_argument("--json", action="store_true", help="emit JSON instead of key-value lines")
    p_analyze.set_defaults(func=_cmd_analyze)

    p_counts = sub.add_parser("counts", help="recovery-set and repair-option counts")
    p_counts.add_argument("--k", type=_k_arg, required=True)
    p_counts.set_defaults(func=_cmd_counts)

    p_sim = sub.add_parser("simulate", help="run the failure/repair simulator")
    p_sim.add_argument("--k", type=_k_arg, help="number of partitions (>= 2)")
    p_sim.add_argument("--rounds", type=_nonnegative_arg, help="rounds to simulate")
    p_sim.add_argument(
        "--config", help="key = value config document; explicit flags override it"
    )
    source = p_sim.add_mutually_exclusive_group()
    source.add_argument("--fail-prob", type=_probability_arg, help="per-node per-round failure probability")
    source.add_argument("--trace", help="scripted failure trace file")
    p_sim.add_argument("--seed", type=_seed_arg, default=None, help="64-bit RNG seed (default 0)")
    p_sim.add_argument(
        "--repairs-per-round", type=_nonnegative_arg, default=None, help="cap repairs per round"
    )
    p_sim.add_argument(
        "--msr-d", type=_positive_arg, default=None, help="baseline MSR helper count (default k+1)"
    )
    p_sim.add_argument("--json", action="store_true", help="emit JSON instead of key-value lines")
    p_sim.set_defaults(func=_cmd_simulate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        AnalysisBoundError,
        EnumerationLimitError,
        ManifestError,
        MissingStripeError,
        ShardError,
        StripeUnrecoverableError,
        UnrecoverableError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
