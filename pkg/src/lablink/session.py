"""Session orchestration: roles, level gating, state machine, feedback rules.

Linking levels run from 1 (coordinated studies) to 4 (immersive
synchronous interaction). Each of the eight participant roles carries a
fixed agency/linkage/placement profile and a minimum level; sessions are
validated against that table and against measured link quality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .errors import IllegalTransition, NonNumericChannel
from .transport import LinkMetrics


class Role(str, Enum):
    REACTING_EXPERIMENTER = "ReactingExperimenter"
    PARALLEL_EXPERIMENTER = "ParallelExperimenter"
    INTERACTOR = "Interactor"
    CONTROLLER = "Controller"
    MIRROR = "Mirror"
    OBSERVER = "Observer"
    EXECUTOR = "Executor"
    STATE_FEEDBACK = "StateFeedback"


class Agency(str, Enum):
    ACTIVE = "active"
    PASSIVE = "passive"


class Linkage(str, Enum):
    INDEPENDENT = "independent"
    RECEIVES = "receives"
    SENDS = "sends"
    BIDIRECTIONAL = "bidirectional"


class Placement(str, Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class RoleAttributes:
    role: Role
    agency: Agency
    linkage: Linkage
    placement: Placement
    min_lll: int


#: Fixed role taxonomy. StateFeedback sends despite passive agency: the
#: participant's measured state influences the scene without conscious action.
ROLE_TABLE: dict[Role, RoleAttributes] = {
    attrs.role: attrs for attrs in (
        RoleAttributes(Role.PARALLEL_EXPERIMENTER, Agency.ACTIVE, Linkage.INDEPENDENT, Placement.INSIDE, 1),
        RoleAttributes(Role.REACTING_EXPERIMENTER, Agency.ACTIVE, Linkage.RECEIVES, Placement.INSIDE, 2),
        RoleAttributes(Role.INTERACTOR, Agency.ACTIVE, Linkage.BIDIRECTIONAL, Placement.INSIDE, 3),
        RoleAttributes(Role.CONTROLLER, Agency.ACTIVE, Linkage.SENDS, Placement.OUTSIDE, 3),
        RoleAttributes(Role.MIRROR, Agency.PASSIVE, Linkage.RECEIVES, Placement.OUTSIDE, 2),
        RoleAttributes(Role.OBSERVER, Agency.PASSIVE, Linkage.RECEIVES, Placement.OUTSIDE, 2),
        RoleAttributes(Role.EXECUTOR, Agency.PASSIVE, Linkage.RECEIVES, Placement.INSIDE, 3),
        RoleAttributes(Role.STATE_FEEDBACK, Agency.PASSIVE, Linkage.SENDS, Placement.OUTSIDE, 3),
    )
}


@dataclass(frozen=True)
class Lab:
    lab_id: str
    immersion_capable: bool = False


@dataclass(frozen=True)
class Participant:
    participant_id: str
    lab_id: str
    role: Role


@dataclass(frozen=True)
class FeedbackRule:
    """Threshold rule on a scalar stream channel firing a control event."""

    source_stream_uid: str
    channel_index: int
    comparator: str  # "<" or ">"
    threshold: float
    action_event: str
    hysteresis: float = 0.0
    min_interval: float = 0.0

    def __post_init__(self) -> None:
        if self.comparator not in ("<", ">"):
            raise ValueError(f"comparator must be < or >, got {self.comparator!r}")
        if self.hysteresis < 0 or self.min_interval < 0:
            raise ValueError("hysteresis and min_interval must be >= 0")


@dataclass(frozen=True)
class SessionSpec:
    session_id: str
    labs: tuple[Lab, ...]
    participants: tuple[Participant, ...]
    target_lll: int
    feedback_rules: tuple[FeedbackRule, ...] = ()
    stream_bindings: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "labs": [{"lab_id": l.lab_id, "immersion_capable": l.immersion_capable}
                     for l in self.labs],
            "participants": [{"participant_id": p.participant_id, "lab_id": p.lab_id,
                              "role": p.role.value} for p in self.participants],
            "target_lll": self.target_lll,
            "feedback_rules": [vars(r).copy() for r in self.feedback_rules],
            "stream_bindings": {pid: list(uids) for pid, uids in self.stream_bindings},
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SessionSpec":
        return cls(
            session_id=d["session_id"],
            labs=tuple(Lab(l["lab_id"], bool(l.get("immersion_capable", False)))
                       for l in d.get("labs", ())),
            participants=tuple(Participant(p["participant_id"], p["lab_id"], Role(p["role"]))
                               for p in d.get("participants", ())),
            target_lll=int(d["target_lll"]),
            feedback_rules=tuple(FeedbackRule(**r) for r in d.get("feedback_rules", ())),
            stream_bindings=tuple((pid, tuple(uids))
                                  for pid, uids in sorted(d.get("stream_bindings", {}).items())),
        )

    @classmethod
    def from_json(cls, text: str) -> "SessionSpec":
        return cls.from_json_dict(json.loads(text))


# -- validation -------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


def validate_session(spec: SessionSpec) -> list[Violation]:
    """Empty list means the session is valid for its target level."""
    violations = []
    if not spec.labs:
        violations.append(Violation("NoLabs", "a session needs at least one lab"))
    lab_ids = {l.lab_id for l in spec.labs}
    for p in spec.participants:
        if p.lab_id not in lab_ids:
            violations.append(Violation(
                "UnknownLab", f"participant {p.participant_id} assigned to unknown lab {p.lab_id}"))
        attrs = ROLE_TABLE[p.role]
        if attrs.min_lll > spec.target_lll:
            violations.append(Violation(
                "RoleRequiresHigherLLL",
                f"{p.participant_id} ({p.role.value}) needs LLL-{attrs.min_lll}, "
                f"target is LLL-{spec.target_lll}"))
        if attrs.linkage is not Linkage.INDEPENDENT and len(spec.labs) < 2:
            violations.append(Violation(
                "LinkedRoleNeedsTwoLabs",
                f"{p.participant_id} ({p.role.value}) is linked but only one lab is present"))
    if spec.target_lll >= 4:
        for lab in spec.labs:
            if not lab.immersion_capable:
                violations.append(Violation(
                    "Lll4NeedsImmersion", f"lab {lab.lab_id} is not immersion capable"))
    return violations


# -- level gating -----------------------------------------------------------

@dataclass(frozen=True)
class LllThresholds:
    """Link-quality gates. Defaults are deployment configuration, not measured truths."""

    max_loss_fraction_lll2: float = 0.5
    max_offset_uncertainty_lll2: float = 0.050
    max_median_rtt_lll3: float = 0.150
    max_rtt_jitter_lll3: float = 0.050
    max_offset_uncertainty_lll3: float = 0.005


DEFAULT_THRESHOLDS = LllThresholds()


def achievable_lll(metrics: dict[tuple[str, str], LinkMetrics | None],
                   labs: tuple[Lab, ...],
                   thresholds: LllThresholds = DEFAULT_THRESHOLDS) -> int:
    """Highest level the measured links and lab capabilities admit.

    `metrics` maps inter-lab link (lab_a, lab_b) to its LinkMetrics; a
    missing or None entry pins the result at level 1.
    """
    if not metrics or any(m is None for m in metrics.values()):
        # no measured inter-lab links: coordination only
        return 1
    ms = list(metrics.values())
    if not all(m.loss_fraction < thresholds.max_loss_fraction_lll2
               and m.offset_uncertainty <= thresholds.max_offset_uncertainty_lll2
               for m in ms):
        return 1
    if not all(m.median_rtt <= thresholds.max_median_rtt_lll3
               and m.rtt_jitter <= thresholds.max_rtt_jitter_lll3
               and m.offset_uncertainty <= thresholds.max_offset_uncertainty_lll3
               for m in ms):
        return 2
    if not all(l.immersion_capable for l in labs):
        return 3
    return 4


# -- state machine ----------------------------------------------------------

class State(str, Enum):
    CREATED = "Created"
    ROLES_ASSIGNED = "RolesAssigned"
    CALIBRATING = "Calibrating"
    READY = "Ready"
    RUNNING = "Running"
    STOPPED = "Stopped"


@dataclass(frozen=True)
class SessionState:
    state: State = State.CREATED
    entered_at: float = 0.0


_TRANSITIONS: dict[tuple[State, str], State] = {
    (State.CREATED, "assign_roles"): State.ROLES_ASSIGNED,
    (State.ROLES_ASSIGNED, "calibrated"): State.CALIBRATING,
    (State.CALIBRATING, "calibrated"): State.READY,
    (State.READY, "start"): State.RUNNING,
    (State.RUNNING, "pause"): State.READY,
}


def transition(current: SessionState, event: str, at: float = 0.0) -> SessionState:
    """Advance the session state machine; IllegalTransition leaves state unchanged."""
    if event == "stop":
        return SessionState(State.STOPPED, at)
    nxt = _TRANSITIONS.get((current.state, event))
    if nxt is None:
        raise IllegalTransition(f"{event!r} in state {current.state.value}")
    return SessionState(nxt, at)


# -- authorization ----------------------------------------------------------

def authorize_event(role: RoleAttributes, event_kind: str) -> bool:
    """Control needs a sending linkage, observation a receiving one."""
    if event_kind == "control":
        return role.linkage in (Linkage.SENDS, Linkage.BIDIRECTIONAL)
    if event_kind == "observe":
        return role.linkage in (Linkage.RECEIVES, Linkage.BIDIRECTIONAL)
    raise ValueError(f"unknown event kind {event_kind!r}")


def denial_reason(role: RoleAttributes, event_kind: str) -> str:
    if role.linkage is Linkage.INDEPENDENT:
        return f"{role.role.value} acts independently and has no linkage"
    if event_kind == "control":
        return f"{role.role.value} has no agency over the scene (linkage: {role.linkage.value})"
    return f"{role.role.value} does not receive remote streams (linkage: {role.linkage.value})"


# -- feedback rules ---------------------------------------------------------

@dataclass(frozen=True)
class ControlEvent:
    label: str
    at: float
    source: str = ""


class FeedbackEvaluator:
    """Hysteresis state machine for one rule.

    Fires when the comparison first holds, then stays disarmed until the
    value crosses back beyond threshold +/- hysteresis; a fire within
    min_interval of the previous one is suppressed without disarming.
    """

    def __init__(self, rule: FeedbackRule):
        self.rule = rule
        self.armed = True
        self.last_fired: float | None = None

    def _triggered(self, value: float) -> bool:
        return value < self.rule.threshold if self.rule.comparator == "<" \
            else value > self.rule.threshold

    def _rearmed(self, value: float) -> bool:
        band = self.rule.threshold + self.rule.hysteresis if self.rule.comparator == "<" \
            else self.rule.threshold - self.rule.hysteresis
        return value >= band if self.rule.comparator == "<" else value <= band

    def update(self, timestamp: float, value) -> ControlEvent | None:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise NonNumericChannel(f"value {value!r} on channel {self.rule.channel_index}")
        if not self.armed and self._rearmed(value):
            self.armed = True
        if self.armed and self._triggered(value):
            self.armed = False
            if self.last_fired is not None and timestamp - self.last_fired < self.rule.min_interval:
                return None
            self.last_fired = timestamp
            return ControlEvent(self.rule.action_event, timestamp,
                                source=self.rule.source_stream_uid)
        return None
