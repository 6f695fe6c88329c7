import json

import pytest

from lablink.errors import UnknownScenario
from lablink.recorder import write_partitur
from lablink.scenarios import (FOOD_ITEM_PAIRS, MIRROR_EPISODES,
                               food_choice, mirror_table_setting, run_scenario)


class TestFoodChoice:
    def test_one_decision_per_item(self):
        result = food_choice(seed=3)
        assert len(result.report["decisions"]) == len(FOOD_ITEM_PAIRS)
        assert sorted(d["item"] for d in result.report["decisions"]) == \
            list(range(len(FOOD_ITEM_PAIRS)))

    def test_latency_window(self):
        """Round trip over a 20 ms each-way link plus 10 ms processing."""
        for seed in (0, 1, 7):
            result = food_choice(seed=seed)
            for d in result.report["decisions"]:
                assert 0.04 <= d["round_trip_latency"] <= 0.09

    def test_choices_come_from_the_presented_pair(self):
        result = food_choice(seed=11)
        for d in result.report["decisions"]:
            assert d["choice"] in FOOD_ITEM_PAIRS[d["item"]]

    def test_healthy_count_matches_decisions(self):
        result = food_choice(seed=5)
        healthy = {pair[1] for pair in FOOD_ITEM_PAIRS}
        expected = sum(1 for d in result.report["decisions"]
                       if d["choice"] in healthy)
        assert result.report["healthy_choices"] == expected

    def test_same_seed_same_bytes(self):
        first = food_choice(seed=42)
        second = food_choice(seed=42)
        assert first.report_json() == second.report_json()
        assert first.trace == second.trace
        assert write_partitur(first.partitur) == write_partitur(second.partitur)

    def test_seed_changes_decisions_only_in_choice(self):
        a = food_choice(seed=1).report
        b = food_choice(seed=2).report
        assert [d["item"] for d in a["decisions"]] == \
            [d["item"] for d in b["decisions"]]

    def test_partitur_has_both_marker_tracks(self):
        result = food_choice(seed=0)
        names = sorted(t.info.name for t in result.partitur.signal_tracks)
        assert names == ["decisions", "item-presentations"]
        for track in result.partitur.signal_tracks:
            assert len(track.samples) == len(FOOD_ITEM_PAIRS)

    def test_tracks_land_on_one_timeline(self):
        """Decision markers sit just after their presentation on lab A's clock."""
        result = food_choice(seed=9)
        by_name = {t.info.name: t for t in result.partitur.signal_tracks}
        presents = by_name["item-presentations"].samples
        decides = by_name["decisions"].samples
        for (tp, _), (td, _) in zip(presents, decides):
            assert 0.0 < td - tp < 0.1

    def test_link_metrics_reported(self):
        result = food_choice(seed=0)
        metrics = result.report["link_metrics"]
        assert metrics["median_rtt"] == pytest.approx(0.04, abs=1e-6)
        assert metrics["loss_fraction"] == 0.0
        # 40 ms rtt bounds the offset uncertainty at 20 ms, above the
        # 5 ms gate for level 3
        assert result.report["achievable_lll"] == 2

    def test_trace_is_jsonl(self):
        result = food_choice(seed=4)
        events = [json.loads(line) for line in result.trace.splitlines()]
        kinds = {e["event"] for e in events}
        assert "item_presented" in kinds
        assert "decision_received" in kinds


class TestMirrorTableSetting:
    def test_three_paired_episodes(self):
        result = mirror_table_setting(seed=0)
        labels = [e["label"] for e in result.report["episodes"]]
        assert labels == list(MIRROR_EPISODES)
        assert result.report["pairing_violations"] == []

    def test_episode_order_and_positivity(self):
        result = mirror_table_setting(seed=6)
        episodes = result.report["episodes"]
        for e in episodes:
            assert e["end"] > e["start"]
        starts = [e["start"] for e in episodes]
        assert starts == sorted(starts)

    def test_episode_lengths_follow_the_source(self):
        """Viewing-side begin/end lag by the same amount, so lengths survive."""
        import random
        rng = random.Random(13)
        lengths = [1.0 + rng.random() for _ in MIRROR_EPISODES]
        result = mirror_table_setting(seed=13)
        for e, expect in zip(result.report["episodes"], lengths):
            assert e["end"] - e["start"] == pytest.approx(expect, abs=0.01)

    def test_deterministic(self):
        assert mirror_table_setting(seed=2).report_json() == \
            mirror_table_setting(seed=2).report_json()

    def test_partitur_carries_the_tier(self):
        result = mirror_table_setting(seed=0)
        assert len(result.partitur.annotation_tiers) == 1
        tier = result.partitur.annotation_tiers[0]
        assert tier.tier_name == "viewed-episodes"
        assert len(tier.segments) == len(MIRROR_EPISODES)


class TestDispatch:
    def test_by_name(self):
        assert run_scenario("food_choice", seed=1).report["scenario"] == "food_choice"
        assert run_scenario("mirror_table_setting").report["scenario"] == \
            "mirror_table_setting"

    def test_unknown_name(self):
        with pytest.raises(UnknownScenario):
            run_scenario("coffee_break")
