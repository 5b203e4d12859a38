"""The probe procedure: control test, main test, classification, verdict.

The control test sends each of the four codepoints unmodified and checks
that (a) server feedback reflects the codepoint that was sent and (b) the
ingress copies the initial codepoint into the outer header.  A non-copying
ingress enables the overwrite fallback: the tester's device rewrites the
outer with a copy of the initial codepoint, and the feedback check is
repeated under that fallback.

The main test probes the four (initial, outer) combinations that separate
the known decapsulation behaviours, overwriting the outer after
encapsulation (with CE, and ECT(1) for the last row).  Each row is probed
``repetitions`` times against each server, and the votes are aggregated by
strict majority so that occasional legitimate CE-marking by an AQM, packet
loss, or one buggy server cannot flip a row.  Row consensus vectors are
matched against the reference signatures to classify the egress; behaviour
matching no signature is mangled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Tuple

from .ecn import EcnCodepoint, PathLocation, ecn_of
from .simnet import ExchangeResult, Scenario, TunnelPath
from .tunnels import (
    Capability,
    CONFORMANT_CLASSES,
    DROPPED,
    DecapBehaviorClass,
    DecapOutcome,
    GREEN_CLASSES,
    PROBE_ROWS,
    forwarded,
    outcome_sort_key,
    reference_signature,
)

# Codepoints in wire-pattern order; also the order control probes are sent.
_ALL_CODEPOINTS = tuple(EcnCodepoint)


class ControlFailure(Exception):
    """The tunnel and server set is unusable for testing.

    Raised when, even with the overwrite fallback in place, feedback never
    reflected any probed codepoint across all repetitions and servers.
    Carries the control report gathered so far.
    """

    def __init__(self, report: "ControlReport"):
        self.report = report
        super().__init__("no probed codepoint was ever reflected in feedback")


@dataclass(frozen=True)
class CodepointControl:
    """Control-test outcome for one initial codepoint."""

    feedback_matches: bool
    outer_matches_initial: bool


@dataclass(frozen=True)
class ControlReport:
    results: Dict[EcnCodepoint, CodepointControl]
    ingress_copies: bool
    overwrite_fallback_enabled: bool

    @property
    def failed_codepoints(self) -> Tuple[EcnCodepoint, ...]:
        return tuple(cp for cp in _ALL_CODEPOINTS if not self.results[cp].feedback_matches)


@dataclass(frozen=True)
class ProbeObservation:
    """Aggregated result of probing one main-test row."""

    row: int
    initial: EcnCodepoint
    outer_set: EcnCodepoint
    consensus: DecapOutcome
    votes: Dict[DecapOutcome, int]
    ambiguous: bool


class ClassificationKind(enum.Enum):
    SINGLE = "single"
    AMBIGUOUS = "ambiguous"
    MANGLED = "mangled"


@dataclass(frozen=True)
class Classification:
    """Which known behaviours the observed signature matches.

    SINGLE carries exactly one class, AMBIGUOUS two or more (only possible
    when probing with reduced capability, where reference signatures
    collide), MANGLED none.
    """

    kind: ClassificationKind
    classes: FrozenSet[DecapBehaviorClass]

    def __post_init__(self) -> None:
        if self.kind is ClassificationKind.SINGLE and len(self.classes) != 1:
            raise ValueError("single classification must carry exactly one class")
        if self.kind is ClassificationKind.AMBIGUOUS and len(self.classes) < 2:
            raise ValueError("ambiguous classification must carry at least two classes")
        if self.kind is ClassificationKind.MANGLED and self.classes:
            raise ValueError("mangled classification carries no classes")

    @classmethod
    def single(cls, behavior: DecapBehaviorClass) -> "Classification":
        return cls(ClassificationKind.SINGLE, frozenset({behavior}))

    @classmethod
    def ambiguous(cls, behaviors) -> "Classification":
        return cls(ClassificationKind.AMBIGUOUS, frozenset(behaviors))

    @classmethod
    def mangled(cls) -> "Classification":
        return cls(ClassificationKind.MANGLED, frozenset())

    @property
    def single_class(self) -> Optional[DecapBehaviorClass]:
        if self.kind is ClassificationKind.SINGLE:
            (behavior,) = self.classes
            return behavior
        return None


class PropagationVerdict(enum.Enum):
    PROPAGATES_CORRECTLY = "propagates_correctly"
    DOES_NOT_PROPAGATE = "does_not_propagate"
    UNKNOWN = "unknown"


def aggregate(votes: Dict[DecapOutcome, int]) -> Tuple[DecapOutcome, bool]:
    """Reduce per-exchange outcomes for one row to a consensus.

    An outcome with a strict majority wins outright.  Without one, the
    consensus is the plurality winner and the observation is flagged
    ambiguous; ties break deterministically toward the smallest outcome in
    the order dropped, Not-ECT, ECT(1), ECT(0), CE.
    """
    total = sum(votes.values())
    if total < 1:
        raise ValueError("aggregate needs at least one vote")
    best = min(votes, key=lambda o: (-votes[o], outcome_sort_key(o)))
    return best, votes[best] * 2 <= total


def _feedback_outcome(result: ExchangeResult) -> DecapOutcome:
    return DROPPED if result.feedback is None else forwarded(result.feedback)


def _control_feedback_phase(
    path: TunnelPath, repetitions: int, override: bool
) -> Dict[EcnCodepoint, Tuple[bool, bool]]:
    """One pass of the control test; returns (any_feedback_match, all_outer_match) per codepoint."""
    servers = path.scenario.servers
    out: Dict[EcnCodepoint, Tuple[bool, bool]] = {}
    for cp in _ALL_CODEPOINTS:
        feedback_hit = False
        outer_ok = True
        for _ in range(repetitions):
            for server_id in range(servers):
                result = path.exchange(cp, cp if override else None, server_id)
                if result.feedback is cp:
                    feedback_hit = True
                outer_octet = next(o for loc, o in result.trace if loc is PathLocation.OUTER)
                if ecn_of(outer_octet) is not cp:
                    outer_ok = False
        out[cp] = (feedback_hit, outer_ok)
    return out


def run_control_test(
    scenario: Scenario, repetitions: int = 5, path: Optional[TunnelPath] = None
) -> ControlReport:
    """Verify the measurement channel before the main test.

    A codepoint's feedback check passes if at least one of its exchanges
    reflected it; a mismatch counts only when it persists across every
    repetition and server, since loss and legitimate AQM marking corrupt
    individual exchanges.  If no codepoint ever passes, the path is
    unusable and :class:`ControlFailure` is raised.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if path is None:
        path = TunnelPath(scenario)

    first_pass = _control_feedback_phase(path, repetitions, override=False)
    ingress_copies = all(outer_ok for _, outer_ok in first_pass.values())
    fallback = not ingress_copies

    final_pass = first_pass
    if fallback:
        # Re-verify feedback with the outer forced to a copy of the initial.
        final_pass = _control_feedback_phase(path, repetitions, override=True)

    results = {
        cp: CodepointControl(
            feedback_matches=final_pass[cp][0],
            outer_matches_initial=first_pass[cp][1],
        )
        for cp in _ALL_CODEPOINTS
    }
    report = ControlReport(
        results=results,
        ingress_copies=ingress_copies,
        overwrite_fallback_enabled=fallback,
    )
    if not any(r.feedback_matches for r in results.values()):
        raise ControlFailure(report)
    return report


def run_main_test(
    scenario: Scenario,
    capability: Capability = Capability.FULL,
    repetitions: int = 5,
    control: Optional[ControlReport] = None,
    path: Optional[TunnelPath] = None,
) -> List[ProbeObservation]:
    """Probe the signature rows and aggregate each row's votes.

    Each row sends its initial codepoint and overwrites the outer after
    encapsulation with the row's value, ``repetitions`` times per server.
    The row overwrite makes the control test's fallback decision moot here
    (the outer is forced either way), so results are identical for copying
    and non-copying ingresses; ``control`` is accepted to document that the
    control test ran first and to let callers thread one session through.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if path is None:
        path = TunnelPath(scenario)

    rows = PROBE_ROWS if capability is Capability.FULL else PROBE_ROWS[:3]
    observations = []
    for row_index, (initial, outer_set) in enumerate(rows):
        votes: Dict[DecapOutcome, int] = {}
        for _ in range(repetitions):
            for server_id in range(scenario.servers):
                result = path.exchange(initial, outer_set, server_id)
                outcome = _feedback_outcome(result)
                votes[outcome] = votes.get(outcome, 0) + 1
        consensus, ambiguous = aggregate(votes)
        observations.append(
            ProbeObservation(
                row=row_index,
                initial=initial,
                outer_set=outer_set,
                consensus=consensus,
                votes=votes,
                ambiguous=ambiguous,
            )
        )
    return observations


def classify(
    observations: List[ProbeObservation], capability: Capability = Capability.FULL
) -> Classification:
    """Match the observed consensus vector against the reference signatures.

    Exactly one matching class is a definite identification.  With reduced
    capability the truncated RFC 6040 and RFC 3168 signatures coincide, so
    both are reported.  No match at all means the egress mangles the ECN
    field in some way none of the specifications produce.
    """
    expected_len = 4 if capability is Capability.FULL else 3
    if len(observations) != expected_len:
        raise ValueError(f"expected {expected_len} observations for {capability.value}, got {len(observations)}")
    observed = tuple(obs.consensus for obs in observations)
    matches = [
        behavior
        for behavior in CONFORMANT_CLASSES
        if reference_signature(behavior, capability) == observed
    ]
    if not matches:
        return Classification.mangled()
    if len(matches) == 1:
        return Classification.single(matches[0])
    return Classification.ambiguous(matches)


def interpret(classification: Classification) -> PropagationVerdict:
    """Translate a classification into the propagation verdict.

    The RFC 6040, RFC 4301 and RFC 3168 behaviours all propagate ECN marks
    correctly, so any classification that cannot fall outside that set is a
    pass; a simple or mangled egress is a fail; anything else is unknown.
    """
    if classification.kind is ClassificationKind.MANGLED:
        return PropagationVerdict.DOES_NOT_PROPAGATE
    if classification.classes <= GREEN_CLASSES:
        return PropagationVerdict.PROPAGATES_CORRECTLY
    if classification.kind is ClassificationKind.SINGLE:
        return PropagationVerdict.DOES_NOT_PROPAGATE
    return PropagationVerdict.UNKNOWN


@dataclass(frozen=True)
class ProbeSessionResult:
    control: ControlReport
    observations: List[ProbeObservation]
    classification: Classification
    verdict: PropagationVerdict
    exchanges: List[ExchangeResult]

    @property
    def any_ambiguous(self) -> bool:
        return any(obs.ambiguous for obs in self.observations)


def run_probe_session(
    scenario: Scenario,
    capability: Capability = Capability.FULL,
    repetitions: int = 5,
) -> ProbeSessionResult:
    """Run the full procedure over one path: control, main, classify, interpret."""
    path = TunnelPath(scenario)
    control = run_control_test(scenario, repetitions, path=path)
    observations = run_main_test(scenario, capability, repetitions, control, path=path)
    classification = classify(observations, capability)
    verdict = interpret(classification)
    return ProbeSessionResult(
        control=control,
        observations=observations,
        classification=classification,
        verdict=verdict,
        exchanges=list(path.log),
    )
