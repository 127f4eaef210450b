"""Paired-partition XOR erasure code toolkit.

A (2k, k) code over GF(2): data fragment i lives on systematic node S_i and
the complement parity (XOR of every other fragment) on its partner P_i.
Single-node repair downloads three fragments regardless of k; the package
bundles the codec, a repair planner, an exhaustive fault-tolerance analyzer,
a shard store, a cluster simulator, and a CLI.
"""

from .analyzer import (
    AnalysisBoundError,
    ClaimCheck,
    SampleEstimate,
    SizeTally,
    ToleranceReport,
    is_recoverable,
    max_tolerated_failures,
    sample_recoverability,
    tolerance_profile,
    verify_k_minus_one_tolerance,
    verify_spread_tolerance,
    verify_three_failure_tolerance,
)
from .codec import (
    DEFAULT_ENUMERATION_LIMIT,
    Classification,
    CodeParams,
    EnumerationLimitError,
    NodeId,
    RecoveryCounts,
    RecoveryKind,
    RecoverySet,
    Role,
    Stripe,
    UndecodableError,
    UndecodableReason,
    all_nodes,
    classify_subset,
    count_recovery_sets,
    decode,
    encode_stripe,
    enumerate_recovery_sets,
    format_nodes,
    gf2_rank,
    is_decodable_oracle,
    make_params,
    node_row,
    partner,
    select_recovery_set,
    xor_packets,
)
from .repair import (
    BandwidthReport,
    PlanKind,
    RepairPlan,
    RepairScenario,
    UnrecoverableError,
    cheapest_next_repair,
    count_repair_options,
    execute_plan,
    msr_repair_bandwidth,
    msr_repair_units,
    plan_partition_repair,
    plan_recovery_sequence,
    plan_single_repairs,
    repair_bandwidth,
)
from .simulator import (
    BaselineComparison,
    RepairPolicy,
    RoundLog,
    SimConfig,
    SimMetrics,
    SplitMix64,
    TraceError,
    compare_baselines,
    parse_config_text,
    parse_trace,
    run_simulation,
)
from .store import (
    FileManifest,
    ManifestError,
    MissingStripeError,
    ScrubFinding,
    ScrubReason,
    ScrubReport,
    ShardError,
    ShardHeader,
    StripeUnrecoverableError,
    assemble_file,
    decode_file,
    encode_file,
    read_shard,
    scrub,
    split_file,
    write_shard,
    write_shard_files,
)

__version__ = "0.1.0"
