"""Exact-repair planning and bandwidth accounting.

Two plan shapes exist.  A three-node plan reads the failed node's partner
plus both nodes of one intact partition; a cover plan reads one node from
every other partition, with the parity-node count even for a parity target
and odd for a data target.  Every plan is an XOR schedule whose result is
bit-identical to the lost packet.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .codec import (
    CodeParams,
    NodeId,
    Role,
    _validate_node,
    all_nodes,
    format_nodes,
    partner,
    xor_packets,
)

__all__ = [
    "PlanKind",
    "RepairScenario",
    "RepairPlan",
    "BandwidthReport",
    "UnrecoverableError",
    "plan_single_repairs",
    "count_repair_options",
    "plan_partition_repair",
    "execute_plan",
    "repair_bandwidth",
    "msr_repair_units",
    "msr_repair_bandwidth",
    "cheapest_next_repair",
    "plan_recovery_sequence",
]


class PlanKind(Enum):
    THREE_NODE = "three_node"
    COVER = "cover"


class RepairScenario(Enum):
    """What the planner can count options for."""

    PARTNER_ALIVE = "partner_alive"
    PARITY_COVER = "parity_cover"  # rebuild a parity node without its partner
    DATA_COVER = "data_cover"  # rebuild a data node without its partner


class UnrecoverableError(RuntimeError):
    """The survivors cannot determine the target packet."""


@dataclass(frozen=True)
class RepairPlan:
    """An XOR schedule regenerating ``target`` from ``helpers``.

    Helpers are listed in canonical order; XOR is commutative so the
    schedule order is only a reporting convention.  Each helper contributes
    exactly one downloaded fragment.
    """

    target: NodeId
    helpers: Tuple[NodeId, ...]
    kind: PlanKind

    @property
    def cost_fragments(self) -> int:
        return len(self.helpers)

    @property
    def schedule(self) -> Tuple[NodeId, ...]:
        return self.helpers

    def describe(self) -> str:
        return f"{self.target.label} <- {' + '.join(h.label for h in self.helpers)}"


@dataclass(frozen=True)
class BandwidthReport:
    fragment_units: int
    nodes_contacted: int
    bytes_downloaded: Optional[int] = None


def plan_single_repairs(
    params: CodeParams, target: NodeId, alive: Iterable[NodeId]
) -> List[RepairPlan]:
    """Every repair plan for one failed node, cheapest first.

    Three-node plans need the partner alive plus an intact partition; cover
    plans need a survivor in every other partition and a role choice meeting
    the parity constraint.  Ties sort by canonical helper order.  Raises
    :class:`UnrecoverableError` when no plan exists.
    """
    _validate_node(params, target)
    alive_set = frozenset(alive)
    for node in alive_set:
        _validate_node(params, node)
    if target in alive_set:
        raise ValueError(f"target {target.label} is still alive")

    plans: List[RepairPlan] = []
    mate = partner(target)
    if mate in alive_set:
        for b in range(params.k):
            if b == target.partition:
                continue
            pair = (NodeId.systematic(b), NodeId.parity(b))
            if pair[0] in alive_set and pair[1] in alive_set:
                helpers = tuple(sorted((mate,) + pair))
                plans.append(RepairPlan(target, helpers, PlanKind.THREE_NODE))

    choices: Optional[List[List[NodeId]]] = []
    for i in range(params.k):
        if i == target.partition:
            continue
        here = [
            node
            for node in (NodeId.systematic(i), NodeId.parity(i))
            if node in alive_set
        ]
        if not here:
            choices = None
            break
        assert choices is not None
        choices.append(here)
    if choices is not None:
        # Odd parity counts cancel down to a single data fragment, even ones
        # to a complement parity.
        want_odd = 1 if target.role is Role.SYSTEMATIC else 0
        for combo in itertools.product(*choices):
            parities = sum(1 for node in combo if node.role is Role.PARITY)
            if parities % 2 == want_odd:
                plans.append(RepairPlan(target, tuple(combo), PlanKind.COVER))

    plans.sort(key=lambda plan: (plan.cost_fragments, plan.helpers))
    if not plans:
        raise UnrecoverableError(
            f"no repair plan for {target.label}: survivors "
            f"{{{format_nodes(alive_set)}}} cannot determine its packet"
        )
    return plans


def count_repair_options(params: CodeParams, scenario: RepairScenario) -> int:
    """Number of repair plans available with all other nodes alive."""
    if scenario is RepairScenario.PARTNER_ALIVE:
        return params.k - 1
    return 2 ** (params.k - 2)


def plan_partition_repair(
    params: CodeParams,
    partition: int,
    alive: Iterable[NodeId],
    parity_first: bool = False,
) -> Tuple[RepairPlan, RepairPlan]:
    """Two-step repair of a fully failed partition.

    The first node is rebuilt by a (k-1)-helper cover plan, the second by a
    three-node plan that leans on the freshly rebuilt partner, for a total
    of k+2 downloaded fragments.  Data node first by default so reads
    recover sooner; ``parity_first`` flips the order.
    """
    if not 0 <= partition < params.k:
        raise ValueError(f"partition {partition} out of range for k={params.k}")
    alive_set = frozenset(alive)
    s_node, p_node = NodeId.systematic(partition), NodeId.parity(partition)
    if s_node in alive_set or p_node in alive_set:
        raise ValueError(f"both nodes of partition {partition} must be failed")
    first_target, second_target = (
        (p_node, s_node) if parity_first else (s_node, p_node)
    )
    first = plan_single_repairs(params, first_target, alive_set)[0]
    second_options = plan_single_repairs(params, second_target, alive_set | {first_target})
    second = next(
        (plan for plan in second_options if plan.kind is PlanKind.THREE_NODE),
        second_options[0],
    )
    return first, second


def execute_plan(plan: RepairPlan, lookup: Mapping[NodeId, bytes]) -> bytes:
    """XOR the helper packets in schedule order; exact repair of the target."""
    packets = []
    for helper in plan.helpers:
        if helper not in lookup:
            raise ValueError(f"missing helper packet for {helper.label}")
        packets.append(lookup[helper])
    result = packets[0]
    for packet in packets[1:]:
        result = xor_packets(result, packet)
    return result


def repair_bandwidth(
    plans: Union[RepairPlan, Iterable[RepairPlan]],
    fragment_size: Optional[int] = None,
) -> BandwidthReport:
    """Account downloaded helper fragments for one plan or a plan sequence.

    Every helper ships exactly one fragment, so contacts equal fragment
    units; a node helping in two plans is contacted twice.
    """
    if isinstance(plans, RepairPlan):
        plans = [plans]
    units = 0
    contacted = 0
    for plan in plans:
        units += plan.cost_fragments
        contacted += len(plan.helpers)
    bytes_downloaded = units * fragment_size if fragment_size is not None else None
    return BandwidthReport(
        fragment_units=units,
        nodes_contacted=contacted,
        bytes_downloaded=bytes_downloaded,
    )


def _check_msr_args(n: int, k: int, d: int) -> None:
    if k < 1 or n <= k:
        raise ValueError(f"need 1 <= k < n, got n={n} k={k}")
    if not k <= d <= n - 1:
        raise ValueError(f"helper count d={d} must satisfy k <= d <= n-1 for n={n}, k={k}")


def msr_repair_units(n: int, k: int, d: int) -> Fraction:
    """Minimum-storage regenerating baseline, in fragment units of M/k."""
    _check_msr_args(n, k, d)
    return Fraction(d, d - k + 1)


def msr_repair_bandwidth(n: int, k: int, d: int, total_bytes: int) -> int:
    """MSR baseline bandwidth M*d / (k*(d-k+1)), rounded up to whole bytes."""
    _check_msr_args(n, k, d)
    if total_bytes < 0:
        raise ValueError("total_bytes must be nonnegative")
    exact = Fraction(total_bytes * d, k * (d - k + 1))
    return -(-exact.numerator // exact.denominator)


def cheapest_next_repair(
    params: CodeParams,
    alive: Iterable[NodeId],
    candidates: Optional[Iterable[NodeId]] = None,
) -> Optional[RepairPlan]:
    """Cheapest plan over the failed nodes (ties to the canonical target).

    ``candidates`` restricts which failed nodes are considered; targets with
    no feasible plan are skipped.  Returns None when nothing is repairable.
    """
    alive_set = frozenset(alive)
    if candidates is None:
        failed = [node for node in all_nodes(params) if node not in alive_set]
    else:
        failed = sorted(set(candidates) - alive_set)
    best: Optional[RepairPlan] = None
    for target in failed:
        try:
            plan = plan_single_repairs(params, target, alive_set)[0]
        except UnrecoverableError:
            continue
        if best is None or (plan.cost_fragments, plan.target) < (
            best.cost_fragments,
            best.target,
        ):
            best = plan
    return best


def plan_recovery_sequence(
    params: CodeParams, alive: Iterable[NodeId], targets: Iterable[NodeId]
) -> List[RepairPlan]:
    """Plans restoring all targets, cheapest-first with replanning.

    Each completed repair rejoins the alive set before the next plan is
    chosen.  Raises :class:`UnrecoverableError` if some target can never be
    rebuilt.
    """
    alive_set = set(alive)
    pending = set(targets) - alive_set
    sequence: List[RepairPlan] = []
    while pending:
        plan = cheapest_next_repair(params, alive_set, pending)
        if plan is None:
            raise UnrecoverableError(
                f"cannot repair {{{format_nodes(pending)}}}: the lost data is "
                "not determined by the survivors"
            )
        sequence.append(plan)
        alive_set.add(plan.target)
        pending.discard(plan.target)
    return sequence
