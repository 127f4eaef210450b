"""Core primitives of the paired-partition XOR erasure code.

The code places 2k packets on 2k nodes: data fragment ``d_i`` sits verbatim
on systematic node ``S_i`` and, in the same partition, the complement parity
``p_i = XOR(d_j for j != i)`` sits on parity node ``P_i``.  Everything in
this module is a pure function over immutable values: encoding, k-subset
classification, the GF(2) rank oracle, structured decoding, and recovery-set
counting, enumeration, and selection.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum, IntEnum
from types import MappingProxyType
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

__all__ = [
    "DEFAULT_ENUMERATION_LIMIT",
    "Role",
    "NodeId",
    "CodeParams",
    "Stripe",
    "RecoveryKind",
    "UndecodableReason",
    "Classification",
    "RecoveryCounts",
    "RecoverySet",
    "UndecodableError",
    "EnumerationLimitError",
    "make_params",
    "all_nodes",
    "partner",
    "format_nodes",
    "xor_packets",
    "encode_stripe",
    "classify_subset",
    "node_row",
    "gf2_rank",
    "is_decodable_oracle",
    "decode",
    "count_recovery_sets",
    "enumerate_recovery_sets",
    "select_recovery_set",
]

DEFAULT_ENUMERATION_LIMIT = 12


class Role(IntEnum):
    """Which half of a partition a node holds."""

    SYSTEMATIC = 0
    PARITY = 1

    @property
    def letter(self) -> str:
        return "S" if self is Role.SYSTEMATIC else "P"


@dataclass(frozen=True, order=True)
class NodeId:
    """One of the 2k storage nodes, ordered by (partition, role)."""

    partition: int
    role: Role

    @classmethod
    def systematic(cls, partition: int) -> "NodeId":
        return cls(partition, Role.SYSTEMATIC)

    @classmethod
    def parity(cls, partition: int) -> "NodeId":
        return cls(partition, Role.PARITY)

    @classmethod
    def from_label(cls, label: str, k: Optional[int] = None) -> "NodeId":
        """Parse a 1-based user-facing name such as ``S1`` or ``P3``."""
        text = label.strip()
        if len(text) < 2 or text[0] not in "SP" or not text[1:].isdigit():
            raise ValueError(f"bad node label {label!r}: expected S<i> or P<i>")
        index = int(text[1:])
        if index < 1:
            raise ValueError(f"bad node label {label!r}: indices are 1-based")
        if k is not None and index > k:
            raise ValueError(f"node {text} does not exist in a k={k} code")
        role = Role.SYSTEMATIC if text[0] == "S" else Role.PARITY
        return cls(index - 1, role)

    @property
    def label(self) -> str:
        return f"{self.role.letter}{self.partition + 1}"

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class CodeParams:
    """Code geometry: k partitions, n = 2k nodes."""

    k: int

    def __post_init__(self) -> None:
        if not isinstance(self.k, int):
            raise ValueError(f"k must be an integer, got {type(self.k).__name__}")
        if self.k < 2:
            raise ValueError(f"k must be >= 2 (k=1 has no usable parity), got {self.k}")

    @property
    def n(self) -> int:
        return 2 * self.k


def make_params(k: int) -> CodeParams:
    """Validate ``k`` and build the code parameters."""
    return CodeParams(k)


def all_nodes(params: CodeParams) -> Tuple[NodeId, ...]:
    """All 2k node ids in canonical (partition, role) order."""
    return tuple(
        NodeId(partition, role)
        for partition in range(params.k)
        for role in (Role.SYSTEMATIC, Role.PARITY)
    )


def partner(node: NodeId) -> NodeId:
    """The other member of the node's partition."""
    other = Role.PARITY if node.role is Role.SYSTEMATIC else Role.SYSTEMATIC
    return NodeId(node.partition, other)


def format_nodes(nodes: Iterable[NodeId]) -> str:
    return " ".join(node.label for node in sorted(nodes))


def _validate_node(params: CodeParams, node: NodeId) -> None:
    if not isinstance(node, NodeId) or not 0 <= node.partition < params.k:
        raise ValueError(f"node {node!r} is not part of the k={params.k} code")


def xor_packets(a: bytes, b: bytes) -> bytes:
    """Bytewise XOR of two equal-length packets."""
    if len(a) != len(b):
        raise ValueError(f"packet length mismatch: {len(a)} vs {len(b)}")
    value = int.from_bytes(a, "little") ^ int.from_bytes(b, "little")
    return value.to_bytes(len(a), "little")


def _xor_all(packets: Iterable[bytes]) -> bytes:
    acc: Optional[int] = None
    size = 0
    for packet in packets:
        if acc is None:
            acc, size = int.from_bytes(packet, "little"), len(packet)
            continue
        if len(packet) != size:
            raise ValueError(f"packet length mismatch: {len(packet)} vs {size}")
        acc ^= int.from_bytes(packet, "little")
    if acc is None:
        raise ValueError("cannot XOR an empty packet sequence")
    return acc.to_bytes(size, "little")


@dataclass(frozen=True)
class Stripe:
    """One codeword: a packet for every node, all of one fragment size."""

    params: CodeParams
    packets: Mapping[NodeId, bytes]
    fragment_size: int

    def __post_init__(self) -> None:
        if self.fragment_size < 1:
            raise ValueError("fragment_size must be >= 1")
        expected = set(all_nodes(self.params))
        if set(self.packets) != expected:
            raise ValueError("stripe must hold exactly one packet per node")
        for node, packet in self.packets.items():
            if len(packet) != self.fragment_size:
                raise ValueError(
                    f"packet for {node.label} has length {len(packet)}, "
                    f"expected {self.fragment_size}"
                )
        object.__setattr__(self, "packets", MappingProxyType(dict(self.packets)))

    def packet(self, node: NodeId) -> bytes:
        return self.packets[node]

    def data_fragments(self) -> List[bytes]:
        return [self.packets[NodeId.systematic(i)] for i in range(self.params.k)]


def encode_stripe(params: CodeParams, fragments: Sequence[bytes]) -> Stripe:
    """Store k fragments verbatim and derive the k complement parities.

    Parity i is the XOR of every fragment except fragment i, computed here
    as ``(XOR of all fragments) ^ fragment_i``.
    """
    if len(fragments) != params.k:
        raise ValueError(f"expected {params.k} fragments, got {len(fragments)}")
    size = len(fragments[0])
    if size < 1:
        raise ValueError("fragments must be at least one byte long")
    if any(len(fragment) != size for fragment in fragments):
        raise ValueError("fragments must all have the same length")
    total = _xor_all(fragments)
    packets: Dict[NodeId, bytes] = {}
    for i, fragment in enumerate(fragments):
        packets[NodeId.systematic(i)] = bytes(fragment)
        packets[NodeId.parity(i)] = xor_packets(total, fragment)
    return Stripe(params, packets, size)


class RecoveryKind(Enum):
    """Shape of a decodable k-subset."""

    DOUBLED = "doubled"  # one partition contributes both of its nodes
    COVER = "cover"  # every partition contributes one node, even parity count
    UNDECODABLE = "undecodable"


class UndecodableReason(Enum):
    MULTIPLE_DOUBLED = "multiple_doubled_partitions"
    ODD_PARITY_COVER = "odd_parity_full_cover"


@dataclass(frozen=True)
class Classification:
    kind: RecoveryKind
    doubled_partition: Optional[int] = None
    excluded_partition: Optional[int] = None
    parity_pairs: Optional[int] = None
    reason: Optional[UndecodableReason] = None

    @property
    def decodable(self) -> bool:
        return self.kind is not RecoveryKind.UNDECODABLE


class UndecodableError(ValueError):
    """The supplied k-subset cannot reproduce the data fragments."""

    def __init__(self, reason: UndecodableReason, message: str):
        super().__init__(message)
        self.reason = reason


def classify_subset(params: CodeParams, subset: Iterable[NodeId]) -> Classification:
    """Classify a k-subset of nodes by its decoding shape.

    A subset decodes iff exactly one partition contributes both nodes (the
    remaining k-2 partitions contribute one node and one contributes none),
    or every partition contributes exactly one node and the number of parity
    nodes is even.
    """
    nodes = frozenset(subset)
    if len(nodes) != params.k:
        raise ValueError(f"subset must contain exactly k={params.k} distinct nodes, got {len(nodes)}")
    for node in nodes:
        _validate_node(params, node)
    seen = [0] * params.k
    for node in nodes:
        seen[node.partition] |= 1 << node.role
    doubled = [i for i, bits in enumerate(seen) if bits == 3]
    if len(doubled) > 1:
        return Classification(
            RecoveryKind.UNDECODABLE, reason=UndecodableReason.MULTIPLE_DOUBLED
        )
    if len(doubled) == 1:
        excluded = next(i for i, bits in enumerate(seen) if bits == 0)
        return Classification(
            RecoveryKind.DOUBLED,
            doubled_partition=doubled[0],
            excluded_partition=excluded,
        )
    # With k nodes, no doubled partition, and k partitions, every partition
    # contributes exactly one node.
    parity_count = sum(1 for node in nodes if node.role is Role.PARITY)
    if parity_count % 2:
        return Classification(
            RecoveryKind.UNDECODABLE, reason=UndecodableReason.ODD_PARITY_COVER
        )
    return Classification(RecoveryKind.COVER, parity_pairs=parity_count // 2)


def node_row(params: CodeParams, node: NodeId) -> int:
    """The node's packet as a GF(2) row over the data basis d_1..d_k.

    Systematic nodes are unit rows; a parity node is the all-ones row with a
    zero at its own partition.
    """
    _validate_node(params, node)
    if node.role is Role.SYSTEMATIC:
        return 1 << node.partition
    return ((1 << params.k) - 1) ^ (1 << node.partition)


def gf2_rank(rows: Iterable[int]) -> int:
    """Rank of bitmask rows over GF(2) via Gaussian elimination."""
    pivots: Dict[int, int] = {}
    for row in rows:
        while row:
            top = row.bit_length() - 1
            if top in pivots:
                row ^= pivots[top]
            else:
                pivots[top] = row
                break
    return len(pivots)


def is_decodable_oracle(params: CodeParams, subset: Iterable[NodeId]) -> bool:
    """Independent decodability check: do the k rows reach full GF(2) rank?

    Deliberately ignores the structural classification so the two can be
    cross-validated against each other.
    """
    nodes = frozenset(subset)
    if len(nodes) != params.k:
        raise ValueError(f"subset must contain exactly k={params.k} distinct nodes, got {len(nodes)}")
    for node in nodes:
        _validate_node(params, node)
    return gf2_rank(node_row(params, node) for node in nodes) == params.k


def decode(params: CodeParams, shares: Mapping[NodeId, bytes]) -> List[bytes]:
    """Recover the k data fragments from exactly k node packets.

    Callers holding more than k packets must pick a subset first, e.g. via
    :func:`select_recovery_set`.
    """
    if len(shares) != params.k:
        raise ValueError(f"decode needs exactly k={params.k} shares, got {len(shares)}")
    sizes = {len(packet) for packet in shares.values()}
    if len(sizes) != 1:
        raise ValueError("share packets must all have the same length")
    classification = classify_subset(params, shares.keys())
    if not classification.decodable:
        assert classification.reason is not None
        raise UndecodableError(
            classification.reason,
            f"subset {{{format_nodes(shares)}}} is not decodable "
            f"({classification.reason.value})",
        )
    fragments: List[Optional[bytes]] = [None] * params.k
    if classification.kind is RecoveryKind.DOUBLED:
        a = classification.doubled_partition
        x = classification.excluded_partition
        assert a is not None and x is not None
        # The doubled partition yields the running total of all fragments.
        sigma = xor_packets(shares[NodeId.systematic(a)], shares[NodeId.parity(a)])
        fragments[a] = shares[NodeId.systematic(a)]
        for node, packet in shares.items():
            if node.partition == a:
                continue
            if node.role is Role.SYSTEMATIC:
                fragments[node.partition] = packet
            else:
                fragments[node.partition] = xor_packets(sigma, packet)
        known = _xor_all(f for i, f in enumerate(fragments) if i != x and f is not None)
        fragments[x] = xor_packets(sigma, known)
    else:
        # One node per partition with an even parity count: the parities'
        # contributions to the total cancel pairwise, so XOR-ing all k
        # packets yields the total of all data fragments.
        sigma = _xor_all(shares.values())
        for node, packet in shares.items():
            if node.role is Role.SYSTEMATIC:
                fragments[node.partition] = packet
            else:
                fragments[node.partition] = xor_packets(sigma, packet)
    assert all(fragment is not None for fragment in fragments)
    return [f for f in fragments if f is not None]


@dataclass(frozen=True)
class RecoveryCounts:
    doubled: int
    cover: int
    total: int


def count_recovery_sets(params: CodeParams) -> RecoveryCounts:
    """Exact counts of decodable k-subsets per shape.

    Doubled: k choices of the doubled partition, k-1 of the skipped one, and
    a free role pick in the other k-2 partitions.  Cover: any even-sized set
    of partitions may contribute its parity.
    """
    k = params.k
    doubled = k * (k - 1) * 2 ** (k - 2)
    cover = 2 ** (k - 1)
    return RecoveryCounts(doubled=doubled, cover=cover, total=doubled + cover)


@dataclass(frozen=True)
class RecoverySet:
    nodes: Tuple[NodeId, ...]
    classification: Classification


class EnumerationLimitError(ValueError):
    """k is too large to walk every k-subset."""


def enumerate_recovery_sets(
    params: CodeParams, limit: int = DEFAULT_ENUMERATION_LIMIT
) -> List[RecoverySet]:
    """Materialize every decodable k-subset.

    The pool is walked systematics-first (S1..Sk then P1..Pk), so the
    all-systematic subset leads the list; each subset's own nodes are in
    canonical (partition, role) order.
    """
    if params.k > limit:
        raise EnumerationLimitError(
            f"k={params.k} exceeds the enumeration limit {limit}; "
            f"C({2 * params.k},{params.k}) subsets is impractical"
        )
    pool = [NodeId.systematic(i) for i in range(params.k)]
    pool += [NodeId.parity(i) for i in range(params.k)]
    found: List[RecoverySet] = []
    for combo in itertools.combinations(pool, params.k):
        classification = classify_subset(params, combo)
        if classification.decodable:
            found.append(RecoverySet(tuple(sorted(combo)), classification))
    return found


def select_recovery_set(
    params: CodeParams, available: Iterable[NodeId]
) -> Optional[FrozenSet[NodeId]]:
    """Pick a decodable k-subset of the available nodes, or None.

    Prefers systematic packets (decoding them is a pass-through) and breaks
    ties toward low partition indices, so the choice is deterministic.
    """
    nodes: Set[NodeId] = set()
    for node in available:
        _validate_node(params, node)
        nodes.add(node)
    present = [0] * params.k
    for node in nodes:
        present[node.partition] |= 1 << node.role
    empty = [i for i, bits in enumerate(present) if bits == 0]
    full = [i for i, bits in enumerate(present) if bits == 3]
    if len(empty) >= 2:
        return None
    if len(empty) == 1:
        # Need a doubled partition to bridge the uncovered one.
        if not full:
            return None
        doubled = full[0]
        chosen = {NodeId.systematic(doubled), NodeId.parity(doubled)}
        for i, bits in enumerate(present):
            if i == doubled or bits == 0:
                continue
            chosen.add(NodeId.systematic(i) if bits & 1 else NodeId.parity(i))
        return frozenset(chosen)
    picks = [
        NodeId.systematic(i) if bits & 1 else NodeId.parity(i)
        for i, bits in enumerate(present)
    ]
    parity_count = sum(1 for node in picks if node.role is Role.PARITY)
    if parity_count % 2:
        # Flip one full partition to its parity to make the count even.
        if not full:
            return None
        picks[full[0]] = NodeId.parity(full[0])
    return frozenset(picks)
