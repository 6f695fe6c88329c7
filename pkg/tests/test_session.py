import random

import pytest

from lablink.errors import IllegalTransition, NonNumericChannel
from lablink.session import (Agency, ControlEvent, FeedbackEvaluator,
                             FeedbackRule, Lab, Linkage, LllThresholds,
                             Participant, Placement, Role, ROLE_TABLE,
                             SessionSpec, SessionState, State, achievable_lll,
                             authorize_event, transition, validate_session)
from lablink.transport import LinkMetrics

TWO_LABS = (Lab("lab-a"), Lab("lab-b"))


def spec_with(role: Role, target: int, labs=TWO_LABS) -> SessionSpec:
    return SessionSpec(session_id="s", labs=labs,
                       participants=(Participant("p1", labs[0].lab_id, role),),
                       target_lll=target)


class TestRoleTable:
    def test_fixed_attribute_table(self):
        expected = {
            Role.PARALLEL_EXPERIMENTER: (Agency.ACTIVE, Linkage.INDEPENDENT, Placement.INSIDE, 1),
            Role.REACTING_EXPERIMENTER: (Agency.ACTIVE, Linkage.RECEIVES, Placement.INSIDE, 2),
            Role.INTERACTOR: (Agency.ACTIVE, Linkage.BIDIRECTIONAL, Placement.INSIDE, 3),
            Role.CONTROLLER: (Agency.ACTIVE, Linkage.SENDS, Placement.OUTSIDE, 3),
            Role.MIRROR: (Agency.PASSIVE, Linkage.RECEIVES, Placement.OUTSIDE, 2),
            Role.OBSERVER: (Agency.PASSIVE, Linkage.RECEIVES, Placement.OUTSIDE, 2),
            Role.EXECUTOR: (Agency.PASSIVE, Linkage.RECEIVES, Placement.INSIDE, 3),
            Role.STATE_FEEDBACK: (Agency.PASSIVE, Linkage.SENDS, Placement.OUTSIDE, 3),
        }
        for role, (agency, linkage, placement, min_lll) in expected.items():
            attrs = ROLE_TABLE[role]
            assert (attrs.agency, attrs.linkage, attrs.placement, attrs.min_lll) == \
                (agency, linkage, placement, min_lll)


class TestValidateSession:
    def test_parallel_experimenters_at_level_1(self):
        spec = SessionSpec(
            session_id="s", labs=TWO_LABS,
            participants=(Participant("p1", "lab-a", Role.PARALLEL_EXPERIMENTER),
                          Participant("p2", "lab-b", Role.PARALLEL_EXPERIMENTER)),
            target_lll=1)
        assert validate_session(spec) == []

    def test_interactor_needs_level_3(self):
        violations = validate_session(spec_with(Role.INTERACTOR, 2))
        kinds = [v.kind for v in violations]
        assert kinds == ["RoleRequiresHigherLLL"]
        assert "LLL-3" in violations[0].detail

    def test_mirror_ok_at_level_2(self):
        assert validate_session(spec_with(Role.MIRROR, 2)) == []

    def test_linked_role_needs_two_labs(self):
        spec = spec_with(Role.OBSERVER, 2, labs=(Lab("solo"),))
        kinds = [v.kind for v in validate_session(spec)]
        assert kinds == ["LinkedRoleNeedsTwoLabs"]

    def test_lll4_needs_immersion(self):
        labs = (Lab("lab-a", immersion_capable=True), Lab("lab-b"))
        spec = spec_with(Role.INTERACTOR, 4, labs=labs)
        kinds = [v.kind for v in validate_session(spec)]
        assert kinds == ["Lll4NeedsImmersion"]

    def test_min_lll_boundary_for_every_role(self):
        for role, attrs in ROLE_TABLE.items():
            at_min = validate_session(spec_with(role, attrs.min_lll))
            assert not any(v.kind == "RoleRequiresHigherLLL" for v in at_min)
            if attrs.min_lll > 1:
                below = validate_session(spec_with(role, attrs.min_lll - 1))
                assert sum(v.kind == "RoleRequiresHigherLLL" for v in below) == 1

    def test_json_round_trip(self):
        spec = SessionSpec(
            session_id="s", labs=TWO_LABS,
            participants=(Participant("p1", "lab-a", Role.CONTROLLER),),
            target_lll=3,
            feedback_rules=(FeedbackRule("a" * 32, 0, "<", 0.5, "speed.up",
                                         hysteresis=0.1, min_interval=2.0),),
            stream_bindings=(("p1", ("a" * 32,)),))
        assert SessionSpec.from_json_dict(spec.to_json_dict()) == spec


def metrics(rtt=0.02, jitter=0.005, unc=0.002, loss=0.0) -> LinkMetrics:
    return LinkMetrics(median_rtt=rtt, rtt_jitter=jitter,
                       offset_uncertainty=unc, loss_fraction=loss)


class TestAchievableLll:
    def test_single_lab_no_links(self):
        assert achievable_lll({}, (Lab("solo"),)) == 1

    def test_slow_link_caps_at_2(self):
        m = {("lab-a", "lab-b"): metrics(rtt=2.0, unc=0.004)}
        assert achievable_lll(m, TWO_LABS) == 2

    def test_fast_link_without_immersion_is_3(self):
        m = {("lab-a", "lab-b"): metrics(rtt=0.05, jitter=0.01, unc=0.001)}
        assert achievable_lll(m, TWO_LABS) == 3

    def test_immersion_unlocks_4(self):
        labs = (Lab("lab-a", True), Lab("lab-b", True))
        m = {("lab-a", "lab-b"): metrics(rtt=0.05, jitter=0.01, unc=0.001)}
        assert achievable_lll(m, labs) == 4

    def test_missing_metrics_pin_level_1(self):
        m = {("lab-a", "lab-b"): None}
        assert achievable_lll(m, TWO_LABS) == 1

    def test_monotone_under_degradation(self):
        rng = random.Random(31)
        labs = (Lab("lab-a", True), Lab("lab-b", True))
        for _ in range(1000):
            base = metrics(rtt=rng.uniform(0, 0.3), jitter=rng.uniform(0, 0.1),
                           unc=rng.uniform(0, 0.06), loss=rng.uniform(0, 0.8))
            worse_field = rng.choice(["median_rtt", "rtt_jitter",
                                      "offset_uncertainty", "loss_fraction"])
            bump = rng.uniform(0, 0.2)
            if worse_field == "loss_fraction":
                bump = min(bump, 1.0 - base.loss_fraction)
            worse = LinkMetrics(**{**base.to_json_dict(), "dropped_samples": 0,
                                   worse_field: getattr(base, worse_field) + bump})
            before = achievable_lll({("a", "b"): base}, labs)
            after = achievable_lll({("a", "b"): worse}, labs)
            assert after <= before


class TestTransitions:
    def test_happy_path(self):
        s = SessionState()
        s = transition(s, "assign_roles")
        assert s.state is State.ROLES_ASSIGNED
        s = transition(s, "calibrated")
        assert s.state is State.CALIBRATING
        s = transition(s, "calibrated")
        assert s.state is State.READY
        s = transition(s, "start")
        assert s.state is State.RUNNING

    def test_illegal_from_created(self):
        with pytest.raises(IllegalTransition):
            transition(SessionState(), "start")

    def test_pause_and_resume(self):
        s = SessionState(State.RUNNING, 0.0)
        s = transition(s, "pause")
        assert s.state is State.READY
        s = transition(s, "start")
        assert s.state is State.RUNNING

    def test_stop_from_anywhere(self):
        for state in State:
            s = transition(SessionState(state, 0.0), "stop", at=9.0)
            assert s.state is State.STOPPED
            assert s.entered_at == 9.0


class TestAuthorize:
    def test_controller_may_control(self):
        assert authorize_event(ROLE_TABLE[Role.CONTROLLER], "control")

    def test_executor_may_not_control(self):
        assert not authorize_event(ROLE_TABLE[Role.EXECUTOR], "control")

    def test_parallel_experimenter_may_not_observe(self):
        assert not authorize_event(ROLE_TABLE[Role.PARALLEL_EXPERIMENTER], "observe")

    def test_full_matrix_matches_linkage(self):
        from lablink.session import Linkage
        for role, attrs in ROLE_TABLE.items():
            assert authorize_event(attrs, "control") == \
                (attrs.linkage in (Linkage.SENDS, Linkage.BIDIRECTIONAL))
            assert authorize_event(attrs, "observe") == \
                (attrs.linkage in (Linkage.RECEIVES, Linkage.BIDIRECTIONAL))


class TestFeedback:
    RULE = FeedbackRule("a" * 32, 0, "<", 0.5, "task.speed_up", hysteresis=0.1)

    def test_fires_on_first_crossing(self):
        ev = FeedbackEvaluator(self.RULE)
        assert ev.update(0.0, 0.9) is None
        fired = ev.update(1.0, 0.4)
        assert fired == ControlEvent("task.speed_up", 1.0, source="a" * 32)

    def test_no_refire_until_rearmed(self):
        ev = FeedbackEvaluator(self.RULE)
        ev.update(0.0, 0.9)
        assert ev.update(1.0, 0.4) is not None
        assert ev.update(2.0, 0.45) is None
        assert ev.update(3.0, 0.48) is None

    def test_rearm_then_refire(self):
        ev = FeedbackEvaluator(self.RULE)
        ev.update(0.0, 0.9)
        assert ev.update(1.0, 0.4) is not None
        assert ev.update(2.0, 0.45) is None
        assert ev.update(3.0, 0.65) is None  # re-arm at >= 0.6
        assert ev.update(4.0, 0.4) is not None

    def test_min_interval_suppression(self):
        rule = FeedbackRule("b" * 32, 0, ">", 1.0, "alarm", hysteresis=0.2,
                            min_interval=5.0)
        ev = FeedbackEvaluator(rule)
        assert ev.update(0.0, 1.5) is not None
        assert ev.update(1.0, 0.5) is None   # re-arms
        assert ev.update(2.0, 1.5) is None   # within min_interval
        assert ev.update(3.0, 0.5) is None
        assert ev.update(6.0, 1.5) is not None

    def test_non_numeric_channel(self):
        ev = FeedbackEvaluator(self.RULE)
        with pytest.raises(NonNumericChannel):
            ev.update(0.0, "low")

    def test_firing_rate_bounded_by_min_interval(self):
        rule = FeedbackRule("c" * 32, 0, "<", 0.0, "tick", min_interval=1.0)
        ev = FeedbackEvaluator(rule)
        rng = random.Random(5)
        fired = 0
        duration = 50.0
        t = 0.0
        while t < duration:
            if ev.update(t, rng.uniform(-1, 1)) is not None:
                fired += 1
            t += 0.05
        assert fired <= duration / rule.min_interval + 1
