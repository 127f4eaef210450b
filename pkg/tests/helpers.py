"""Shared test utilities: label shortcuts and an independent reference decoder."""

from __future__ import annotations

import random
from typing import Dict, List, Mapping, Optional

from pairxor.codec import CodeParams, NodeId, node_row


def S(index: int) -> NodeId:
    """Systematic node by 1-based index, matching user-facing labels."""
    return NodeId.systematic(index - 1)


def P(index: int) -> NodeId:
    return NodeId.parity(index - 1)


def nodes(*labels: str) -> frozenset:
    return frozenset(NodeId.from_label(label) for label in labels)


def labels(node_set) -> set:
    return {node.label for node in node_set}


def random_fragments(rng: random.Random, k: int, size: int) -> List[bytes]:
    return [rng.randbytes(size) for _ in range(k)]


def ref_gauss_decode(
    params: CodeParams, shares: Mapping[NodeId, bytes]
) -> Optional[List[bytes]]:
    """Solve for the data fragments by full GF(2) Gaussian elimination.

    Independent of the structured decoder: rows are (coefficient bitmask,
    packet-as-integer) pairs reduced to the identity.  Returns None when the
    system is singular.
    """
    size = len(next(iter(shares.values())))
    pivots: Dict[int, tuple] = {}
    for node, packet in sorted(shares.items()):
        mask = node_row(params, node)
        value = int.from_bytes(packet, "little")
        for column, (pivot_mask, pivot_value) in pivots.items():
            if (mask >> column) & 1:
                mask ^= pivot_mask
                value ^= pivot_value
        if mask == 0:
            continue
        column = (mask & -mask).bit_length() - 1
        for other_column in list(pivots):
            other_mask, other_value = pivots[other_column]
            if (other_mask >> column) & 1:
                pivots[other_column] = (other_mask ^ mask, other_value ^ value)
        pivots[column] = (mask, value)
    if len(pivots) < params.k:
        return None
    fragments = []
    for j in range(params.k):
        mask, value = pivots[j]
        assert mask == 1 << j
        fragments.append(value.to_bytes(size, "little"))
    return fragments
