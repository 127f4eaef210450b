"""Round-based cluster failure/repair simulator with bandwidth accounting.

One logical stripe lives on 2k nodes.  Each round injects failures (scripted
or seeded pseudo-random), runs the repair policy, then checks whether the
survivors still determine the data; if not, a data-loss event is counted and
the stripe freezes (failures keep being logged, repairs stop).  Identical
config and seed always produce bit-identical metrics.

Random failure injection draws one SplitMix64 value per (round, node) in
canonical node order and fails an alive node when draw/2^64 < probability,
so traces are reproducible from the 64-bit seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .analyzer import is_recoverable
from .codec import CodeParams, NodeId, all_nodes
from .repair import RepairPlan, cheapest_next_repair

__all__ = [
    "RepairPolicy",
    "SimConfig",
    "RepairRecord",
    "RoundLog",
    "SimMetrics",
    "BaselineComparison",
    "TraceError",
    "SplitMix64",
    "parse_trace",
    "parse_config_text",
    "run_simulation",
    "compare_baselines",
]

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator: 64-bit state, golden-gamma increment."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        """Uniform in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (2.0**-53)


class RepairPolicy(Enum):
    CHEAPEST_FIRST = "cheapest_first"


class TraceError(ValueError):
    """A scripted failure trace is malformed."""


@dataclass(frozen=True)
class SimConfig:
    k: int
    rounds: int
    failure_probability: float = 0.0
    trace: Optional[Mapping[int, Sequence[NodeId]]] = None
    rng_seed: int = 0
    repair_policy: RepairPolicy = RepairPolicy.CHEAPEST_FIRST
    repairs_per_round: Optional[int] = None  # None means no per-round cap


@dataclass(frozen=True)
class RepairRecord:
    target: NodeId
    helpers: Tuple[NodeId, ...]
    cost_fragments: int


@dataclass(frozen=True)
class RoundLog:
    round_index: int
    injected: Tuple[NodeId, ...]
    repairs: Tuple[RepairRecord, ...]
    fragment_units: int
    data_loss: bool


@dataclass(frozen=True)
class SimMetrics:
    k: int
    rounds_run: int
    rng_seed: int
    fragment_units_downloaded: int
    repairs_completed: int
    helpers_contacted_total: int
    data_loss_events: int
    rounds: Tuple[RoundLog, ...]


def parse_trace(text: str, params: CodeParams) -> Dict[int, Tuple[NodeId, ...]]:
    """Parse a scripted trace: one ``<round> <node> [<node> ...]`` per line.

    Blank lines and ``#`` comments are ignored; repeated rounds merge.
    """
    trace: Dict[int, List[NodeId]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if not tokens[0].isdigit():
            raise TraceError(f"trace line {lineno}: round must be a nonnegative integer")
        if len(tokens) < 2:
            raise TraceError(f"trace line {lineno}: expected at least one node label")
        round_index = int(tokens[0])
        for token in tokens[1:]:
            try:
                node = NodeId.from_label(token, params.k)
            except ValueError as exc:
                raise TraceError(f"trace line {lineno}: {exc}") from exc
            trace.setdefault(round_index, []).append(node)
    return {r: tuple(sorted(set(nodes))) for r, nodes in trace.items()}


_CONFIG_KEYS = {
    "k": int,
    "rounds": int,
    "failure_probability": float,
    "rng_seed": int,
    "repairs_per_round": int,
}


def parse_config_text(text: str) -> SimConfig:
    """Parse a ``key = value`` config document.

    Recognized keys: k, rounds, failure_probability, rng_seed,
    repairs_per_round.  Scripted traces stay in their own document; see
    :func:`parse_trace`.
    """
    values: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key}")
        if key in values:
            raise ValueError(f"config line {lineno}: duplicate key {key}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ValueError(
                f"config line {lineno}: bad value {value!r} for {key}"
            ) from exc
    for required in ("k", "rounds"):
        if required not in values:
            raise ValueError(f"config document must set {required}")
    return SimConfig(**values)  # type: ignore[arg-type]


def _validate_config(config: SimConfig) -> CodeParams:
    params = CodeParams(config.k)
    if config.rounds < 0:
        raise ValueError("rounds must be >= 0")
    if not 0.0 <= config.failure_probability <= 1.0:
        raise ValueError("failure_probability must lie in [0, 1]")
    if not 0 <= config.rng_seed <= _MASK64:
        raise ValueError("rng_seed must be an unsigned 64-bit integer")
    if config.repairs_per_round is not None and config.repairs_per_round < 0:
        raise ValueError("repairs_per_round must be >= 0")
    if config.trace is not None:
        if config.failure_probability > 0.0:
            raise ValueError("provide either a trace or a failure probability, not both")
        for round_index, nodes in config.trace.items():
            if round_index < 0:
                raise ValueError("trace rounds must be >= 0")
            for node in nodes:
                if not 0 <= node.partition < params.k:
                    raise ValueError(f"trace node {node!r} is outside the k={params.k} code")
    return params


def run_simulation(config: SimConfig) -> SimMetrics:
    """Run the failure/repair rounds and return the accounting."""
    params = _validate_config(config)
    nodes = all_nodes(params)
    rng = SplitMix64(config.rng_seed)
    alive = set(nodes)
    frozen = False

    units_total = 0
    repairs_total = 0
    helpers_total = 0
    loss_events = 0
    logs: List[RoundLog] = []

    for round_index in range(config.rounds):
        if config.trace is not None:
            scripted = config.trace.get(round_index, ())
            injected = tuple(sorted(node for node in set(scripted) if node in alive))
        else:
            hit = []
            for node in nodes:
                draw = rng.next_unit()
                if node in alive and draw < config.failure_probability:
                    hit.append(node)
            injected = tuple(hit)
        alive.difference_update(injected)

        repairs: List[RepairRecord] = []
        round_units = 0
        if not frozen:
            budget = (
                config.repairs_per_round
                if config.repairs_per_round is not None
                else len(nodes)
            )
            while budget > 0 and len(alive) < len(nodes):
                plan = cheapest_next_repair(params, alive)
                if plan is None:
                    break
                repairs.append(
                    RepairRecord(plan.target, plan.helpers, plan.cost_fragments)
                )
                round_units += plan.cost_fragments
                helpers_total += len(plan.helpers)
                alive.add(plan.target)
                budget -= 1

        loss = False
        if not frozen and not is_recoverable(params, set(nodes) - alive):
            loss = True
            frozen = True
            loss_events += 1

        units_total += round_units
        repairs_total += len(repairs)
        logs.append(
            RoundLog(
                round_index=round_index,
                injected=injected,
                repairs=tuple(repairs),
                fragment_units=round_units,
                data_loss=loss,
            )
        )

    return SimMetrics(
        k=config.k,
        rounds_run=config.rounds,
        rng_seed=config.rng_seed,
        fragment_units_downloaded=units_total,
        repairs_completed=repairs_total,
        helpers_contacted_total=helpers_total,
        data_loss_events=loss_events,
        rounds=tuple(logs),
    )


@dataclass(frozen=True)
class BaselineComparison:
    """Per-repair averages against the naive and regenerating baselines.

    Units are fragments of M/k.  The naive strategy re-downloads the whole
    file (k units); a minimum-storage regenerating code contacting d helpers
    moves d/(d-k+1) units split across d nodes.
    """

    repairs: int
    avg_units_per_repair: Fraction
    avg_helpers_per_repair: Fraction
    naive_units_per_repair: Fraction
    msr_d: int
    msr_units_per_repair: Fraction
    msr_helpers_per_repair: int


def compare_baselines(metrics: SimMetrics, k: int, d: int) -> BaselineComparison:
    if k < 2:
        raise ValueError("k must be >= 2")
    if not k <= d <= 2 * k - 1:
        raise ValueError(f"helper count d={d} must satisfy k <= d <= 2k-1 for k={k}")
    repairs = metrics.repairs_completed
    if repairs:
        avg_units = Fraction(metrics.fragment_units_downloaded, repairs)
        avg_helpers = Fraction(metrics.helpers_contacted_total, repairs)
    else:
        avg_units = Fraction(0)
        avg_helpers = Fraction(0)
    return BaselineComparison(
        repairs=repairs,
        avg_units_per_repair=avg_units,
        avg_helpers_per_repair=avg_helpers,
        naive_units_per_repair=Fraction(k),
        msr_d=d,
        msr_units_per_repair=Fraction(d, d - k + 1),
        msr_helpers_per_repair=d,
    )
