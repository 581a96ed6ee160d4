"""Message-level simulation of the alignment protocol, with attacks and security checks."""
from .engine import (
    detect_eavesdropper,
    replay,
    run_attack_session,
    run_honest_session,
    run_session,
)
from .messages import (
    AttackConfig,
    Message,
    MessageKind,
    PartyRole,
    ProtocolTranscript,
    Scenario,
    SessionConfig,
    Verdict,
    validate_transcript,
)
from .security import (
    LeakageReport,
    announcement_uniformity_test,
    detection_test,
    eve_information_leakage,
    plugin_mutual_information,
    predictive_concordance_pmf,
)

__all__ = [
    "AttackConfig", "LeakageReport", "Message", "MessageKind", "PartyRole", "ProtocolTranscript",
    "Scenario", "SessionConfig", "Verdict", "announcement_uniformity_test", "detect_eavesdropper",
    "detection_test", "eve_information_leakage", "plugin_mutual_information", "predictive_concordance_pmf",
    "replay", "run_attack_session", "run_honest_session", "run_session", "validate_transcript",
]
