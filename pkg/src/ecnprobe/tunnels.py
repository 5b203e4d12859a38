"""Encapsulation and decapsulation behaviour models for ECN tunnelling.

Each decapsulation lineage is a total 16-cell table mapping the (inner,
outer) ECN codepoint pair arriving at the tunnel egress to the onward
codepoint, or to a drop.  The tables follow the decapsulation rules of the
relevant standards:

* RFC 6040 section 4.2 (the unified behaviour, figure 4 there),
* RFC 4301 section 5.1.2 (IPsec tunnel mode),
* RFC 3168 section 9.1.1 (the original full-functionality ECN tunnel),
* a pre-ECN "simple" tunnel per RFC 2003, which discards the outer header
  unexamined, so the onward header is always the inner.

Everything an egress can do that matches none of those four is "mangled";
mangled egresses are arbitrary user-supplied tables (a few canned ones are
provided for exercising the classifier).
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

from .ecn import EcnCodepoint, HeaderStack, make_octet

NOT_ECT = EcnCodepoint.NOT_ECT
ECT0 = EcnCodepoint.ECT0
ECT1 = EcnCodepoint.ECT1
CE = EcnCodepoint.CE


@dataclass(frozen=True)
class DecapOutcome:
    """Result of decapsulating one packet: forwarded with a codepoint, or dropped."""

    codepoint: Optional[EcnCodepoint]

    @property
    def is_dropped(self) -> bool:
        return self.codepoint is None

    @property
    def json_name(self) -> str:
        return "dropped" if self.codepoint is None else self.codepoint.json_name

    @property
    def label(self) -> str:
        return "dropped" if self.codepoint is None else self.codepoint.label

    def __str__(self) -> str:
        return self.label


DROPPED = DecapOutcome(None)


def forwarded(cp: EcnCodepoint) -> DecapOutcome:
    return DecapOutcome(cp)


# Deterministic tie-break order for vote aggregation and sorted rendering:
# dropped sorts first, forwarded outcomes by their 2-bit pattern.
def outcome_sort_key(outcome: DecapOutcome) -> int:
    return 0 if outcome.codepoint is None else 1 + outcome.codepoint.value


OUTCOME_ORDER: Tuple[DecapOutcome, ...] = (
    DROPPED,
    forwarded(NOT_ECT),
    forwarded(ECT1),
    forwarded(ECT0),
    forwarded(CE),
)


class DecapBehaviorClass(enum.Enum):
    RFC6040 = "rfc6040"
    RFC4301 = "rfc4301"
    RFC3168 = "rfc3168"
    RFC2003_SIMPLE = "rfc2003"
    MANGLED = "mangled"

    @property
    def json_name(self) -> str:
        return self.value

    @property
    def display(self) -> str:
        """Name as written in reports, e.g. ``RFC6040``."""
        return self.value if self is DecapBehaviorClass.MANGLED else self.value.upper()

    def __str__(self) -> str:
        return self.value


# Classes whose decapsulation propagates ECN marks correctly onward.
GREEN_CLASSES = frozenset(
    {
        DecapBehaviorClass.RFC6040,
        DecapBehaviorClass.RFC4301,
        DecapBehaviorClass.RFC3168,
    }
)


class EncapPolicy(enum.Enum):
    """How the tunnel ingress fills the outer ECN field.

    COPY_EXACT      outer := initial (RFC 6040 normal mode; pre-ECN tunnels
                    copied the whole TOS octet)
    ZERO_OUTER      outer := Not-ECT (RFC 3168 limited functionality,
                    RFC 6040 compatibility mode)
    RFC3168_FULL    outer := initial, except CE becomes ECT(0)
                    (RFC 3168 section 9.1.1 full functionality)

    The inner header is the initial header unchanged in every mode.
    """

    COPY_EXACT = "copy"
    ZERO_OUTER = "zero"
    RFC3168_FULL = "rfc3168full"


class Capability(enum.Enum):
    """What the tester's vantage device can write into the outer ECN field.

    FULL allows arbitrary values; CE_ONLY can only set CE, which supports
    three of the four probe rows (the ECT(1) row needs an arbitrary write).
    """

    FULL = "full"
    CE_ONLY = "ce_only"


# The probed (initial, outer) combinations, in fixed row order.  Under
# CE_ONLY capability only the first three rows can be produced.
PROBE_ROWS: Tuple[Tuple[EcnCodepoint, EcnCodepoint], ...] = (
    (NOT_ECT, CE),
    (ECT1, CE),
    (ECT0, CE),
    (ECT0, ECT1),
)

ProbeSignature = Tuple[DecapOutcome, ...]

DecapTable = Dict[Tuple[EcnCodepoint, EcnCodepoint], DecapOutcome]


class NoSignature(Exception):
    """Raised when asking for the reference signature of the mangled class."""


@dataclass(frozen=True)
class DecapPolicy:
    """A decapsulation behaviour: a class tag plus its total 16-cell table."""

    behavior: DecapBehaviorClass
    table: Mapping[Tuple[EcnCodepoint, EcnCodepoint], DecapOutcome] = field(repr=False)
    label: str = ""

    def __post_init__(self) -> None:
        missing = [
            (i, o)
            for i in EcnCodepoint
            for o in EcnCodepoint
            if (i, o) not in self.table
        ]
        if missing:
            raise ValueError(f"decap table not total, missing {missing}")

    @property
    def name(self) -> str:
        return self.label or self.behavior.value


def decap(policy: DecapPolicy, inner: EcnCodepoint, outer: EcnCodepoint) -> DecapOutcome:
    """Apply a decapsulation policy to the codepoint pair arriving at the egress."""
    return policy.table[(inner, outer)]


def behavior_profile(policy: DecapPolicy) -> DecapTable:
    """The full 16-cell (inner, outer) -> outcome matrix of a policy."""
    return {key: policy.table[key] for key in _ALL_CELLS}


def encap(policy: EncapPolicy, initial: EcnCodepoint, dscp: int = 0) -> HeaderStack:
    """Encapsulate: the inner is the initial header, the outer per policy.

    DSCP is copied to the outer in every mode; only the ECN field differs.
    """
    if policy is EncapPolicy.COPY_EXACT:
        outer_cp = initial
    elif policy is EncapPolicy.ZERO_OUTER:
        outer_cp = NOT_ECT
    else:  # RFC3168_FULL
        outer_cp = ECT0 if initial is CE else initial
    return HeaderStack(inner=make_octet(dscp, initial), outer=make_octet(dscp, outer_cp))


_ALL_CELLS = tuple((i, o) for i in EcnCodepoint for o in EcnCodepoint)

# Column order of the row tuples below, matching the standards' figures.
_COLS = (NOT_ECT, ECT0, ECT1, CE)


def _table_from_rows(rows: Dict[EcnCodepoint, Tuple[Optional[EcnCodepoint], ...]]) -> DecapTable:
    table: DecapTable = {}
    for inner, onward in rows.items():
        for outer, cp in zip(_COLS, onward):
            table[(inner, outer)] = DROPPED if cp is None else forwarded(cp)
    return table


# RFC 6040 s4.2: outer CE is propagated to ECN-capable inners and drops the
# packet for a Not-ECT inner; outer ECT(1) upgrades an ECT(0) inner.
_RFC6040_ROWS = {
    #         outer: Not-ECT   ECT(0)   ECT(1)   CE
    NOT_ECT: (NOT_ECT, NOT_ECT, NOT_ECT, None),
    ECT0:    (ECT0,    ECT0,    ECT1,    CE),
    ECT1:    (ECT1,    ECT1,    ECT1,    CE),
    CE:      (CE,      CE,      CE,      CE),
}

# RFC 4301 s5.1.2: only an outer CE is looked at, and it is copied down to
# ECN-capable inners; nothing is ever dropped.
_RFC4301_ROWS = {
    NOT_ECT: (NOT_ECT, NOT_ECT, NOT_ECT, NOT_ECT),
    ECT0:    (ECT0,    ECT0,    ECT0,    CE),
    ECT1:    (ECT1,    ECT1,    ECT1,    CE),
    CE:      (CE,      CE,      CE,      CE),
}

# RFC 3168 s9.1.1 (full functionality): like RFC 4301, but an outer CE with a
# Not-ECT inner is dropped rather than forwarded unmarked.
_RFC3168_ROWS = {
    NOT_ECT: (NOT_ECT, NOT_ECT, NOT_ECT, None),
    ECT0:    (ECT0,    ECT0,    ECT0,    CE),
    ECT1:    (ECT1,    ECT1,    ECT1,    CE),
    CE:      (CE,      CE,      CE,      CE),
}

# Pre-ECN simple tunnel (RFC 2003 era): the outer is stripped unexamined.
_RFC2003_ROWS = {
    inner: (inner, inner, inner, inner) for inner in EcnCodepoint
}

_BUILTIN_TABLES = {
    DecapBehaviorClass.RFC6040: _table_from_rows(_RFC6040_ROWS),
    DecapBehaviorClass.RFC4301: _table_from_rows(_RFC4301_ROWS),
    DecapBehaviorClass.RFC3168: _table_from_rows(_RFC3168_ROWS),
    DecapBehaviorClass.RFC2003_SIMPLE: _table_from_rows(_RFC2003_ROWS),
}

CONFORMANT_CLASSES: Tuple[DecapBehaviorClass, ...] = (
    DecapBehaviorClass.RFC6040,
    DecapBehaviorClass.RFC4301,
    DecapBehaviorClass.RFC3168,
    DecapBehaviorClass.RFC2003_SIMPLE,
)


def builtin_policy(behavior: DecapBehaviorClass) -> DecapPolicy:
    """The standard decap policy for one of the four non-mangled classes."""
    if behavior not in _BUILTIN_TABLES:
        raise ValueError(f"no builtin table for {behavior}")
    return DecapPolicy(behavior, _BUILTIN_TABLES[behavior])


def mangled_policy(table: DecapTable, label: str = "custom") -> DecapPolicy:
    """A mangled egress defined by an arbitrary total 16-cell table."""
    return DecapPolicy(DecapBehaviorClass.MANGLED, dict(table), label=label)


def mangled_zero_all() -> DecapPolicy:
    """A mangled egress that bleaches everything: onward is always Not-ECT."""
    return mangled_policy({cell: forwarded(NOT_ECT) for cell in _ALL_CELLS}, "zero-all")


def mangled_copy_outer() -> DecapPolicy:
    """A mangled egress that forwards the outer ECN field, ignoring the inner."""
    return mangled_policy({(i, o): forwarded(o) for i, o in _ALL_CELLS}, "copy-outer")


def mangled_random(seed: int) -> DecapPolicy:
    """A mangled egress with a seeded, arbitrary but fixed table."""
    rng = random.Random(derive_seed(seed, "mangled-table"))
    table = {cell: rng.choice(OUTCOME_ORDER) for cell in _ALL_CELLS}
    return mangled_policy(table, f"random:{seed}")


def derive_seed(seed: int, *labels: object) -> int:
    """Derive an independent 64-bit sub-seed from a seed and a label path.

    SHA-256 over the decimal seed and the labels' ``str`` forms, so derived
    streams are stable across platforms and do not depend on call order.
    """
    h = hashlib.sha256()
    h.update(str(seed).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big")


def reference_signature(
    behavior: DecapBehaviorClass, capability: Capability = Capability.FULL
) -> ProbeSignature:
    """Expected probe-row outcomes for a non-mangled class.

    Returns the outcomes of the four probed (initial, outer) rows in
    :data:`PROBE_ROWS` order, truncated to the first three rows under
    CE_ONLY capability.  The mangled class has no signature.
    """
    if behavior not in _BUILTIN_TABLES:
        raise NoSignature(f"{behavior} has no reference signature")
    table = _BUILTIN_TABLES[behavior]
    rows = PROBE_ROWS if capability is Capability.FULL else PROBE_ROWS[:3]
    return tuple(table[row] for row in rows)


def signature_of_policy(policy: DecapPolicy, capability: Capability = Capability.FULL) -> ProbeSignature:
    """Probe-row outcomes any policy (mangled included) would produce on a clean path."""
    rows = PROBE_ROWS if capability is Capability.FULL else PROBE_ROWS[:3]
    return tuple(policy.table[row] for row in rows)


# ---------------------------------------------------------------------------
# Custom-table text form used by scenario configs: 16 entries
# "<inner>,<outer>-><outcome>" joined with ";", names per json_name.

_CP_NAMES = {cp.json_name: cp for cp in EcnCodepoint}
_OUTCOME_NAMES = {"dropped": DROPPED, "drop": DROPPED}
_OUTCOME_NAMES.update({cp.json_name: forwarded(cp) for cp in EcnCodepoint})


def parse_custom_table(text: str, label: str = "custom") -> DecapPolicy:
    """Parse the 16-row custom table grammar into a mangled policy.

    Raises ValueError naming the offending entry; callers translate into
    their own config error type.
    """
    table: DecapTable = {}
    entries = [e.strip() for e in text.split(";") if e.strip()]
    for entry in entries:
        head, sep, tail = entry.partition("->")
        if not sep:
            raise ValueError(f"bad table entry {entry!r}: expected 'inner,outer->outcome'")
        parts = [p.strip() for p in head.split(",")]
        if len(parts) != 2:
            raise ValueError(f"bad table entry {entry!r}: expected two codepoints before '->'")
        try:
            inner, outer = _CP_NAMES[parts[0]], _CP_NAMES[parts[1]]
        except KeyError as exc:
            raise ValueError(f"bad table entry {entry!r}: unknown codepoint {exc.args[0]!r}") from None
        outcome_name = tail.strip()
        if outcome_name not in _OUTCOME_NAMES:
            raise ValueError(f"bad table entry {entry!r}: unknown outcome {outcome_name!r}")
        if (inner, outer) in table:
            raise ValueError(f"duplicate table entry for ({parts[0]},{parts[1]})")
        table[(inner, outer)] = _OUTCOME_NAMES[outcome_name]
    missing = [cell for cell in _ALL_CELLS if cell not in table]
    if missing:
        names = ", ".join(f"({i.json_name},{o.json_name})" for i, o in missing)
        raise ValueError(f"table incomplete: missing {names}")
    return mangled_policy(table, label)


def custom_table_text(policy: DecapPolicy) -> str:
    """Canonical text form of a policy's table; inverse of :func:`parse_custom_table`."""
    entries = []
    for inner, outer in _ALL_CELLS:
        outcome = policy.table[(inner, outer)]
        entries.append(f"{inner.json_name},{outer.json_name}->{outcome.json_name}")
    return ";".join(entries)
