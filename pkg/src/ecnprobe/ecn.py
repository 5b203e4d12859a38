"""ECN codepoints, the traffic-class octet and the masked-overwrite primitive.

The traffic-class octet (IPv4 TOS / IPv6 Traffic Class) carries the 6-bit
DSCP in bits 7..2 and the 2-bit ECN field in bits 1..0.  ECN processing is
identical for both address families, so a single octet model is used
throughout.  Octets are plain ints; this module provides the field accessors
and the ``tc pedit``-style masked overwrite used to rewrite the ECN bits
without disturbing DSCP.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

ECN_MASK = 0x03
DSCP_SHIFT = 2


class EcnCodepoint(enum.Enum):
    """The four ECN codepoints; the enum value is the 2-bit wire pattern."""

    NOT_ECT = 0b00
    ECT1 = 0b01
    ECT0 = 0b10
    CE = 0b11

    @property
    def label(self) -> str:
        """Conventional display name, e.g. ``ECT(0)``."""
        return _LABELS[self]

    @property
    def json_name(self) -> str:
        return self.name.lower()

    def __str__(self) -> str:
        return self.label


_LABELS = {
    EcnCodepoint.NOT_ECT: "Not-ECT",
    EcnCodepoint.ECT1: "ECT(1)",
    EcnCodepoint.ECT0: "ECT(0)",
    EcnCodepoint.CE: "CE",
}

ECN_CAPABLE = frozenset({EcnCodepoint.ECT0, EcnCodepoint.ECT1})


class PathLocation(enum.Enum):
    """Where on the path a header was observed, relative to the tunnel."""

    INITIAL = "Initial"   # arriving at the tunnel ingress
    INNER = "Inner"       # encapsulated between ingress and egress
    OUTER = "Outer"       # the encapsulating header between ingress and egress
    ONWARD = "Onward"     # leaving the tunnel egress

    def __str__(self) -> str:
        return self.value


def codepoint_from_bits(bits: int) -> EcnCodepoint:
    """Map a 2-bit pattern to its codepoint (0=Not-ECT, 1=ECT(1), 2=ECT(0), 3=CE)."""
    return EcnCodepoint(bits)


def codepoint_to_bits(cp: EcnCodepoint) -> int:
    """Inverse of :func:`codepoint_from_bits`."""
    return cp.value


def ecn_of(octet: int) -> EcnCodepoint:
    """Extract the ECN codepoint from a traffic-class octet."""
    return EcnCodepoint(octet & ECN_MASK)


def dscp_of(octet: int) -> int:
    """Extract the 6-bit DSCP from a traffic-class octet."""
    return (octet & 0xFF) >> DSCP_SHIFT


def make_octet(dscp: int, ecn: EcnCodepoint) -> int:
    """Compose a traffic-class octet from a DSCP value and an ECN codepoint."""
    if not 0 <= dscp <= 63:
        raise ValueError(f"DSCP out of range: {dscp}")
    return (dscp << DSCP_SHIFT) | ecn.value


def overwrite_ecn(octet: int, new_bits: int, retain_mask: int = ECN_MASK) -> int:
    """Overwrite the masked bits of a traffic-class octet, keeping the rest.

    Models ``tc ... action pedit ex munge ip dsfield set N retain 0x3``: the
    bits selected by ``retain_mask`` are replaced with ``new_bits``, all other
    bits are preserved.  With the default mask this rewrites the ECN field and
    leaves DSCP untouched.
    """
    return (octet & ~retain_mask & 0xFF) | (new_bits & retain_mask)


@dataclass(frozen=True)
class HeaderStack:
    """Inner and (while the packet is inside the tunnel) outer traffic-class octets."""

    inner: int
    outer: Optional[int] = None

    @property
    def inner_ecn(self) -> EcnCodepoint:
        return ecn_of(self.inner)

    @property
    def outer_ecn(self) -> Optional[EcnCodepoint]:
        return None if self.outer is None else ecn_of(self.outer)
