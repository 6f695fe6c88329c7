"""Simulated end-to-end scenarios with ground-truth reporting.

Both scenarios run entirely in virtual time over netsim, so reports and
traces are byte-identical for identical seeds.

food_choice: lab A presents breakfast items to its acting participant;
the participant in lab B sees them over the link and backchannels a
decision per item. The report carries per-decision round-trip latency
against ground truth, and a Partitur of both labs' marker tracks.

mirror_table_setting: a previously recorded episode document is replayed
to a passive mirror lab, whose viewing-side markers are recorded and
paired into an episode tier.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from .errors import UnknownScenario
from .netsim import LinkModel, Simulation
from .recorder import (PartiturDocument, assemble_partitur, markers_to_tier)
from .session import (DEFAULT_THRESHOLDS, Lab, achievable_lll)
from .streams import (Chunk, StreamInfo, StreamKind, ValueFormat, make_chunk)
from .timebase import IDENTITY_MODEL
from .transport import SimHost, invert_model

FOOD_ITEM_PAIRS = (
    ("white-flour toast", "whole-grain bread"),
    ("chocolate spread", "low-fat curd"),
    ("soda", "orange juice"),
    ("bacon", "avocado"),
    ("sugar cereal", "oatmeal"),
    ("pastry", "apple"),
)

#: index 1 of each pair is the healthier choice

SYNC_SECONDS = 15.0
PRESENT_START = 20.0
PRESENT_SPACING = 2.0
DECISION_PROCESSING = 0.01  # deliberate per-decision processing delay in lab B


def _marker_info(uid_seed: str, name: str, lab_id: str) -> StreamInfo:
    import hashlib
    uid = hashlib.md5(uid_seed.encode()).hexdigest()
    return StreamInfo(uid=uid, name=name, kind=StreamKind.MARKER,
                      channel_count=1, nominal_rate=0.0,
                      value_format=ValueFormat.UTF8, units=("",), lab_id=lab_id)


@dataclass
class ScenarioResult:
    report: dict
    partitur: PartiturDocument
    trace: str

    def report_json(self) -> str:
        return json.dumps(self.report, sort_keys=True, separators=(",", ":")) + "\n"


def run_scenario(name: str, seed: int = 0) -> ScenarioResult:
    if name == "food_choice":
        return food_choice(seed)
    if name == "mirror_table_setting":
        return mirror_table_setting(seed)
    raise UnknownScenario(name)


def food_choice(seed: int = 0) -> ScenarioResult:
    rng = random.Random(seed)
    sim = Simulation()
    sim.add_node("lab-a")
    sim.add_node("lab-b", clock_offset=0.25, clock_drift=3e-5)
    # jitter-free link so decision latency is exactly rtt + processing
    sim.add_link("lab-a", "lab-b", LinkModel(base_latency_fwd=0.02,
                                             base_latency_rev=0.02, seed=seed))
    host_a = SimHost(sim, "lab-a")
    host_b = SimHost(sim, "lab-b")

    present_info = _marker_info(f"food/present/{seed}", "item-presentations", "lab-a")
    decide_info = _marker_info(f"food/decide/{seed}", "decisions", "lab-b")
    present_out = host_a.node.create_outlet(present_info)
    decide_out = host_b.node.create_outlet(decide_info)

    host_a.start_announcing(["lab-b"], until=SYNC_SECONDS)
    host_b.start_announcing(["lab-a"], until=SYNC_SECONDS)
    host_a.start_clock_sync("lab-b", count=int(SYNC_SECONDS), interval=1.0, start=0.5)
    sim.run(until=SYNC_SECONDS + 1.0)

    model_ab = host_a.node.fit_link_model("lab-b")  # lab-a clock -> lab-b clock
    link_metrics = host_a.node.measure_link("lab-b", window=SYNC_SECONDS + 1.0)

    # recording inlets: local presentations, remote decisions mapped back
    rec_present = host_a.node.subscribe(present_info.uid, lossless=True)
    rec_decide = host_a.node.subscribe(decide_info.uid, lossless=True,
                                       model=invert_model(model_ab))
    sim.run(until=SYNC_SECONDS + 1.5)

    # lab B: decide on each presented item after a fixed processing delay
    b_inlet = host_b.node.subscribe(present_info.uid, lossless=True,
                                    model=IDENTITY_MODEL)
    decisions: list[dict] = []
    presented_at: dict[int, float] = {}

    def decide(chunk: Chunk) -> None:
        for _, (label,) in chunk.samples:
            item_idx = int(label.split(":", 1)[0])
            unhealthy, healthy = FOOD_ITEM_PAIRS[item_idx % len(FOOD_ITEM_PAIRS)]
            choice = healthy if rng.random() < 0.7 else unhealthy

            def emit(item_idx=item_idx, choice=choice):
                decide_out.push_chunk(make_chunk(
                    decide_info.uid, [(sim.node_now("lab-b"), (f"choose:{choice}",))]))
                host_b.node.send_event("lab-a", {"kind": "decision",
                                                 "item": item_idx, "choice": choice})
                sim.log("decision_sent", item=item_idx, choice=choice)

            sim.schedule(sim.sim_time + DECISION_PROCESSING, emit)

    b_inlet.on_chunk = decide

    def on_decision(peer: str, payload: dict) -> None:
        item = payload["item"]
        latency = sim.sim_time - presented_at[item]
        decisions.append({"item": item, "choice": payload["choice"],
                          "round_trip_latency": latency})
        sim.log("decision_received", item=item, latency=latency)

    host_a.node.on_event = on_decision
    sim.run(until=PRESENT_START - 0.5)

    for i, pair in enumerate(FOOD_ITEM_PAIRS):
        t = PRESENT_START + i * PRESENT_SPACING

        def present(i=i, pair=pair, t=t):
            presented_at[i] = sim.sim_time
            present_out.push_chunk(make_chunk(
                present_info.uid,
                [(sim.node_now("lab-a"), (f"{i}:{pair[0]} vs {pair[1]}",))]))
            sim.log("item_presented", item=i)

        sim.schedule(t, present)

    sim.run(until=PRESENT_START + len(FOOD_ITEM_PAIRS) * PRESENT_SPACING + 2.0)

    partitur = assemble_partitur(
        f"food_choice-{seed}",
        [(present_info, rec_present.drain().samples, rec_present.model),
         (decide_info, rec_decide.drain().samples, rec_decide.model)],
        recorder_host="netsim", created_at=sim.sim_time)

    labs = (Lab("lab-a"), Lab("lab-b"))
    report = {
        "scenario": "food_choice",
        "seed": seed,
        "decisions": decisions,
        "link_metrics": link_metrics.to_json_dict(),
        "achievable_lll": achievable_lll({("lab-a", "lab-b"): link_metrics}, labs,
                                         DEFAULT_THRESHOLDS),
        "healthy_choices": sum(1 for d in decisions
                               if d["choice"] in {p[1] for p in FOOD_ITEM_PAIRS}),
    }
    return ScenarioResult(report, partitur, sim.trace_jsonl())


MIRROR_EPISODES = ("pick", "place", "pour")
MIRROR_REACTION = 0.35  # viewing-side marker lag behind the replayed scene


def _three_episode_document(seed: int) -> tuple[PartiturDocument, StreamInfo]:
    """A recorded acting-side document with three begin/end episode pairs."""
    rng = random.Random(seed)
    info = _marker_info(f"mirror/source/{seed}", "acting-markers", "lab-a")
    t = 1.0
    samples = []
    for name in MIRROR_EPISODES:
        length = 1.0 + rng.random()
        samples.append((t, (f"{name}.begin",)))
        samples.append((t + length, (f"{name}.end",)))
        t += length + 0.5
    doc = assemble_partitur(f"mirror-source-{seed}",
                            [(info, tuple(samples), IDENTITY_MODEL)],
                            recorder_host="netsim", created_at=0.0)
    return doc, info


def mirror_table_setting(seed: int = 0,
                         source: PartiturDocument | None = None) -> ScenarioResult:
    sim = Simulation()
    sim.add_node("lab-a")
    sim.add_node("lab-b", clock_offset=-0.1)
    sim.add_link("lab-a", "lab-b", LinkModel(base_latency_fwd=0.03,
                                             base_latency_rev=0.03, seed=seed))
    host_a = SimHost(sim, "lab-a")
    host_b = SimHost(sim, "lab-b")

    if source is None:
        source, src_info = _three_episode_document(seed)
    else:
        src_info = source.signal_tracks[0].info

    replay_out = host_a.node.create_outlet(src_info)
    viewing_info = _marker_info(f"mirror/viewing/{seed}", "viewing-markers", "lab-b")
    viewing_out = host_b.node.create_outlet(viewing_info)

    host_a.start_announcing(["lab-b"], until=4.0)
    host_b.start_announcing(["lab-a"], until=4.0)
    host_b.start_clock_sync("lab-a", count=10, interval=0.5, start=0.2)
    sim.run(until=6.0)
    model_ba = host_b.node.fit_link_model("lab-a")  # lab-b clock -> lab-a clock

    mirror_inlet = host_b.node.subscribe(src_info.uid, lossless=True,
                                         model=invert_model(model_ba))

    def mirror_view(chunk: Chunk) -> None:
        for _, (label,) in chunk.samples:
            def emit(label=label):
                viewing_out.push_chunk(make_chunk(
                    viewing_info.uid,
                    [(sim.node_now("lab-b"), (f"viewing.{label}",))]))
            sim.schedule(sim.sim_time + MIRROR_REACTION, emit)

    mirror_inlet.on_chunk = mirror_view

    rec_viewing = host_b.node.subscribe(viewing_info.uid, lossless=True)
    sim.run(until=7.0)

    # replay the recorded acting-side document in virtual time
    origin = source.origin_common_time
    start = 8.0
    for track in source.signal_tracks:
        for ts, vals in track.samples:
            at = start + (ts - origin)

            def emit(at=at, vals=vals, uid=track.info.uid):
                replay_out.push_chunk(make_chunk(uid, [(sim.node_now("lab-a"), vals)]))
                sim.log("replayed", label=vals[0])

            sim.schedule(at, emit)
    sim.run(until=start + source.duration + 5.0)

    viewing_samples = rec_viewing.drain().samples
    tier, violations = markers_to_tier(
        [(ts, (vals[0].removeprefix("viewing."),)) for ts, vals in viewing_samples],
        tier_name="viewed-episodes")
    partitur = assemble_partitur(
        f"mirror_table_setting-{seed}",
        [(viewing_info, viewing_samples, rec_viewing.model)],
        [tier], recorder_host="netsim", created_at=sim.sim_time)

    report = {
        "scenario": "mirror_table_setting",
        "seed": seed,
        "episodes": [{"label": s.label, "start": s.start, "end": s.end}
                     for s in tier.segments],
        "pairing_violations": violations,
    }
    return ScenarioResult(report, partitur, sim.trace_jsonl())
