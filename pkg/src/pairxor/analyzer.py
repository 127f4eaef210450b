"""Exhaustive fault-tolerance analysis.

An erasure pattern is recoverable when the surviving packets still span all
k data fragments over GF(2).  Scans below brute-force every pattern of a
given size; rank results are memoized per survivor signature (how many
partitions keep both, one, or no nodes) since partitions are interchangeable.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .codec import (
    CodeParams,
    NodeId,
    Role,
    _validate_node,
    all_nodes,
    gf2_rank,
    node_row,
)

__all__ = [
    "DEFAULT_NODE_BOUND",
    "DEFAULT_COUNTEREXAMPLE_CAP",
    "AnalysisBoundError",
    "SizeTally",
    "ToleranceReport",
    "ClaimCheck",
    "SampleEstimate",
    "is_recoverable",
    "max_tolerated_failures",
    "tolerance_profile",
    "verify_three_failure_tolerance",
    "verify_spread_tolerance",
    "verify_k_minus_one_tolerance",
    "sample_recoverability",
]

DEFAULT_NODE_BOUND = 24
DEFAULT_COUNTEREXAMPLE_CAP = 32

ErasurePattern = FrozenSet[NodeId]


class AnalysisBoundError(ValueError):
    """The cluster is too large for an exhaustive pattern scan."""


@dataclass(frozen=True)
class SizeTally:
    failures: int
    recoverable: int
    total: int


@dataclass(frozen=True)
class ToleranceReport:
    k: int
    max_tolerated: int
    per_size: Tuple[SizeTally, ...]
    counterexamples: Tuple[ErasurePattern, ...]


@dataclass(frozen=True)
class ClaimCheck:
    holds: bool
    patterns_checked: int
    failures: int
    counterexamples: Tuple[ErasurePattern, ...]


@dataclass(frozen=True)
class SampleEstimate:
    failures_size: int
    samples: int
    recoverable: int
    fraction: float
    margin95: float


def is_recoverable(params: CodeParams, failed: Iterable[NodeId]) -> bool:
    """True iff the survivors' GF(2) rows span rank k (full-file recovery)."""
    failed_set = frozenset(failed)
    for node in failed_set:
        _validate_node(params, node)
    rows = [
        node_row(params, node)
        for node in all_nodes(params)
        if node not in failed_set
    ]
    return gf2_rank(rows) == params.k


def _check_bound(params: CodeParams, node_bound: int) -> None:
    if params.n > node_bound:
        raise AnalysisBoundError(
            f"{params.n} nodes exceed the exhaustive-scan bound of {node_bound}; "
            "use sample_recoverability for estimates"
        )


def _survivor_signature(failed: Sequence[NodeId], k: int) -> Tuple[int, int, int]:
    lost = [0] * k
    for node in failed:
        lost[node.partition] |= 1 << node.role
    full = sys_only = par_only = 0
    for bits in lost:
        if bits == 0:
            full += 1
        elif bits == 1:  # systematic lost, parity survives
            par_only += 1
        elif bits == 2:
            sys_only += 1
    return full, sys_only, par_only


def _signature_recoverable(params: CodeParams, signature: Tuple[int, int, int]) -> bool:
    full, sys_only, par_only = signature
    rows: List[int] = []
    part = 0
    for _ in range(full):
        rows.append(node_row(params, NodeId.systematic(part)))
        rows.append(node_row(params, NodeId.parity(part)))
        part += 1
    for _ in range(sys_only):
        rows.append(node_row(params, NodeId.systematic(part)))
        part += 1
    for _ in range(par_only):
        rows.append(node_row(params, NodeId.parity(part)))
        part += 1
    return gf2_rank(rows) == params.k


def _scan_size(
    params: CodeParams,
    failures: int,
    cache: Dict[Tuple[int, int, int], bool],
    counterexample_cap: int,
) -> Tuple[SizeTally, List[ErasurePattern]]:
    nodes = all_nodes(params)
    recoverable = 0
    total = 0
    bad: List[ErasurePattern] = []
    for combo in itertools.combinations(nodes, failures):
        total += 1
        signature = _survivor_signature(combo, params.k)
        ok = cache.get(signature)
        if ok is None:
            ok = _signature_recoverable(params, signature)
            cache[signature] = ok
        if ok:
            recoverable += 1
        elif len(bad) < counterexample_cap:
            bad.append(frozenset(combo))
    return SizeTally(failures, recoverable, total), bad


def max_tolerated_failures(
    params: CodeParams, node_bound: int = DEFAULT_NODE_BOUND
) -> int:
    """Largest t such that every pattern of at most t failures is recoverable."""
    _check_bound(params, node_bound)
    cache: Dict[Tuple[int, int, int], bool] = {}
    for failures in range(1, params.n + 1):
        tally, bad = _scan_size(params, failures, cache, counterexample_cap=1)
        if bad:
            return failures - 1
    return params.n


def tolerance_profile(
    params: CodeParams,
    node_bound: int = DEFAULT_NODE_BOUND,
    counterexample_cap: int = DEFAULT_COUNTEREXAMPLE_CAP,
) -> ToleranceReport:
    """Recoverable-pattern counts for every failure size 0..2k.

    Counterexamples are collected smallest-size first, in canonical order,
    up to the cap.
    """
    _check_bound(params, node_bound)
    cache: Dict[Tuple[int, int, int], bool] = {}
    tallies: List[SizeTally] = []
    counterexamples: List[ErasurePattern] = []
    for failures in range(params.n + 1):
        room = counterexample_cap - len(counterexamples)
        tally, bad = _scan_size(params, failures, cache, room)
        tallies.append(tally)
        counterexamples.extend(bad)
    max_tolerated = 0
    for tally in tallies[1:]:
        if tally.recoverable != tally.total:
            break
        max_tolerated = tally.failures
    return ToleranceReport(
        k=params.k,
        max_tolerated=max_tolerated,
        per_size=tuple(tallies),
        counterexamples=tuple(counterexamples),
    )


def verify_three_failure_tolerance(
    params: CodeParams,
    node_bound: int = DEFAULT_NODE_BOUND,
    counterexample_cap: int = DEFAULT_COUNTEREXAMPLE_CAP,
) -> ToleranceReport:
    """Scan every 3-failure pattern; empty counterexamples means full cover."""
    _check_bound(params, node_bound)
    cache: Dict[Tuple[int, int, int], bool] = {}
    failures = min(3, params.n)
    tally, bad = _scan_size(params, failures, cache, counterexample_cap)
    return ToleranceReport(
        k=params.k,
        max_tolerated=max_tolerated_failures(params, node_bound),
        per_size=(tally,),
        counterexamples=tuple(bad),
    )


def verify_spread_tolerance(
    params: CodeParams,
    node_bound: int = DEFAULT_NODE_BOUND,
    counterexample_cap: int = DEFAULT_COUNTEREXAMPLE_CAP,
) -> ClaimCheck:
    """Check k-1 failures spread over k-1 distinct partitions, one node each."""
    _check_bound(params, node_bound)
    checked = 0
    failures = 0
    bad: List[ErasurePattern] = []
    roles = (Role.SYSTEMATIC, Role.PARITY)
    for partitions in itertools.combinations(range(params.k), params.k - 1):
        for picks in itertools.product(roles, repeat=params.k - 1):
            pattern = frozenset(
                NodeId(partition, role) for partition, role in zip(partitions, picks)
            )
            checked += 1
            if not is_recoverable(params, pattern):
                failures += 1
                if len(bad) < counterexample_cap:
                    bad.append(pattern)
    return ClaimCheck(
        holds=failures == 0,
        patterns_checked=checked,
        failures=failures,
        counterexamples=tuple(bad),
    )


def verify_k_minus_one_tolerance(
    params: CodeParams,
    node_bound: int = DEFAULT_NODE_BOUND,
    counterexample_cap: int = DEFAULT_COUNTEREXAMPLE_CAP,
) -> ClaimCheck:
    """Check every (k-1)-failure pattern, partition overlap allowed.

    A partition only has two nodes, so "at most two failures per partition"
    excludes nothing; this is the unrestricted k-1 sweep.  It starts failing
    at k=5, where k-1 failures can wipe out two whole partitions.
    """
    _check_bound(params, node_bound)
    cache: Dict[Tuple[int, int, int], bool] = {}
    tally, bad = _scan_size(params, params.k - 1, cache, counterexample_cap)
    failures = tally.total - tally.recoverable
    return ClaimCheck(
        holds=failures == 0,
        patterns_checked=tally.total,
        failures=failures,
        counterexamples=tuple(bad),
    )


def sample_recoverability(
    params: CodeParams, failures: int, samples: int, seed: int = 0
) -> SampleEstimate:
    """Monte Carlo estimate of the recoverable fraction at one failure size.

    For clusters beyond the exhaustive bound.  Reports a normal-approximation
    95% margin.
    """
    if not 0 <= failures <= params.n:
        raise ValueError(f"failures must be in 0..{params.n}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = random.Random(seed)
    nodes = list(all_nodes(params))
    good = 0
    for _ in range(samples):
        pattern = rng.sample(nodes, failures)
        if is_recoverable(params, pattern):
            good += 1
    fraction = good / samples
    margin = 1.96 * math.sqrt(fraction * (1.0 - fraction) / samples)
    return SampleEstimate(
        failures_size=failures,
        samples=samples,
        recoverable=good,
        fraction=fraction,
        margin95=margin,
    )
