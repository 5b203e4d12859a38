"""Active-probe classifier for the ECN decapsulation behaviour of tunnel egresses."""

from ._version import __version__
from .ecn import (
    EcnCodepoint,
    HeaderStack,
    PathLocation,
    codepoint_from_bits,
    codepoint_to_bits,
    dscp_of,
    ecn_of,
    make_octet,
    overwrite_ecn,
)
from .engine import (
    Classification,
    ClassificationKind,
    ControlFailure,
    ControlReport,
    ProbeObservation,
    ProbeSessionResult,
    PropagationVerdict,
    aggregate,
    classify,
    interpret,
    run_control_test,
    run_main_test,
    run_probe_session,
)
from .report import ProbeReport, build_report, parse_report, render_report
from .feedback import (
    EcnByteCounters,
    InvalidFeedback,
    NotCounted,
    QuicEcnCounts,
    TcpEcnFlags,
    decode_handshake,
    encode_handshake,
    record_bytes,
    record_packet,
    wireshark_string,
)
from .simnet import (
    ConfigError,
    ExchangeResult,
    ManglerRule,
    Scenario,
    ScenarioConfig,
    TunnelPath,
    apply_mangler,
    build_scenario,
    run_exchange,
    serialize_trace,
)
from .tunnels import (
    Capability,
    DecapBehaviorClass,
    DecapOutcome,
    DecapPolicy,
    DROPPED,
    EncapPolicy,
    GREEN_CLASSES,
    NoSignature,
    PROBE_ROWS,
    behavior_profile,
    builtin_policy,
    decap,
    encap,
    forwarded,
    mangled_copy_outer,
    mangled_policy,
    mangled_random,
    mangled_zero_all,
    reference_signature,
)

__all__ = [
    "__version__",
    "EcnCodepoint",
    "HeaderStack",
    "PathLocation",
    "codepoint_from_bits",
    "codepoint_to_bits",
    "dscp_of",
    "ecn_of",
    "make_octet",
    "overwrite_ecn",
    "Classification",
    "ClassificationKind",
    "ControlFailure",
    "ControlReport",
    "ProbeObservation",
    "ProbeSessionResult",
    "PropagationVerdict",
    "aggregate",
    "classify",
    "interpret",
    "run_control_test",
    "run_main_test",
    "run_probe_session",
    "ProbeReport",
    "build_report",
    "parse_report",
    "render_report",
    "EcnByteCounters",
    "InvalidFeedback",
    "NotCounted",
    "QuicEcnCounts",
    "TcpEcnFlags",
    "decode_handshake",
    "encode_handshake",
    "record_bytes",
    "record_packet",
    "wireshark_string",
    "ConfigError",
    "ExchangeResult",
    "ManglerRule",
    "Scenario",
    "ScenarioConfig",
    "TunnelPath",
    "apply_mangler",
    "build_scenario",
    "run_exchange",
    "serialize_trace",
    "Capability",
    "DecapBehaviorClass",
    "DecapOutcome",
    "DecapPolicy",
    "DROPPED",
    "EncapPolicy",
    "GREEN_CLASSES",
    "NoSignature",
    "PROBE_ROWS",
    "behavior_profile",
    "builtin_policy",
    "decap",
    "encap",
    "forwarded",
    "mangled_copy_outer",
    "mangled_policy",
    "mangled_random",
    "mangled_zero_all",
    "reference_signature",
]
