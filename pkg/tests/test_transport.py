import pytest

from lablink.errors import InsufficientData, Timeout
from lablink.netsim import LinkModel, Simulation
from lablink.streams import (Chunk, StreamInfo, StreamKind, ValueFormat,
                             make_chunk, new_uid)
from lablink.timebase import fit_clock_model
from lablink.transport import (LinkMetrics, SimHost, invert_model,
                               sim_clock_exchange)
from lablink.timebase import ClockModel, to_common_time


def make_pair(link: LinkModel, offset_b: float = 0.0, drift_b: float = 0.0):
    sim = Simulation()
    sim.add_node("a")
    sim.add_node("b", clock_offset=offset_b, clock_drift=drift_b)
    sim.add_link("a", "b", link)
    return sim, SimHost(sim, "a", "lab-a"), SimHost(sim, "b", "lab-b")


def signal_info(lab_id, channels=1):
    return StreamInfo(uid=new_uid(), name="eeg", kind=StreamKind.SIGNAL,
                      channel_count=channels, nominal_rate=100.0,
                      value_format=ValueFormat.F32, units=("uV",) * channels,
                      lab_id=lab_id)


class TestClockExchange:
    def test_zero_latency_zero_offset(self):
        sim, a, b = make_pair(LinkModel())
        est = sim_clock_exchange(sim, a, "b")
        assert est.offset == 0.0
        assert est.rtt == 0.0

    def test_known_offset_symmetric_latency(self):
        sim, a, b = make_pair(LinkModel(base_latency_fwd=0.02, base_latency_rev=0.02),
                              offset_b=0.25)
        est = sim_clock_exchange(sim, a, "b")
        assert est.offset == pytest.approx(0.25, abs=1e-9)
        assert est.rtt == pytest.approx(0.04, abs=1e-9)

    def test_silent_peer_times_out(self):
        sim, a, b = make_pair(LinkModel(loss_prob=1.0))
        with pytest.raises(Timeout):
            sim_clock_exchange(sim, a, "b")


class TestResolve:
    def test_two_peers_announcing(self):
        sim, a, b = make_pair(LinkModel(base_latency_fwd=0.001, base_latency_rev=0.001))
        a.node.create_outlet(signal_info("lab-a"))
        b.node.create_outlet(signal_info("lab-b"))
        a.start_announcing(["b"], until=3.0)
        b.start_announcing(["a"], until=3.0)
        sim.run(until=3.5)
        assert len(a.node.resolve()) == 2
        assert len(b.node.resolve()) == 2

    def test_predicate_filters(self):
        sim, a, b = make_pair(LinkModel())
        b.node.create_outlet(signal_info("lab-b"))
        b.start_announcing(["a"], until=2.0)
        sim.run(until=2.5)
        assert a.node.resolve(lambda i: i.kind is StreamKind.MARKER) == []

    def test_lossy_announce_still_discovers(self):
        # 30% ANNOUNCE loss, 5 s of re-announcement at 1 Hz
        sim, a, b = make_pair(LinkModel(loss_prob=0.3, seed=13))
        for i in range(3):
            b.node.create_outlet(signal_info("lab-b"))
        b.start_announcing(["a"], until=5.0)
        sim.run(until=5.5)
        assert len(a.node.resolve()) == 3

    def test_deterministic_ordering(self):
        sim, a, b = make_pair(LinkModel())
        infos = [signal_info("lab-b") for _ in range(4)]
        for info in infos:
            b.node.create_outlet(info)
        b.start_announcing(["a"], until=1.0)
        sim.run(until=1.5)
        got = a.node.resolve()
        assert got == sorted(got, key=lambda i: (i.lab_id, i.name, i.uid))


class TestChunkDelivery:
    def test_remote_delivery_with_model_offset(self):
        sim, a, b = make_pair(LinkModel(base_latency_fwd=0.005, base_latency_rev=0.005),
                              offset_b=0.25)
        info = signal_info("lab-b")
        outlet = b.node.create_outlet(info)
        b.start_announcing(["a"], until=1.0)
        sim.run(until=1.1)

        # clock-sync the link, then attach the inverse map publisher -> us
        a.start_clock_sync("b", count=10, interval=0.2, start=1.2)
        sim.run(until=4.0)
        model = invert_model(a.node.fit_link_model("b"))

        inlet = a.node.subscribe(info.uid, model=model)
        sim.run(until=4.1)
        t_pub = sim.node_now("b")
        sim.schedule(sim.sim_time, lambda: outlet.push_chunk(
            make_chunk(info.uid, [(t_pub, (1.0,))])))
        sim.run(until=5.0)
        got = inlet.pull_chunk()
        # publisher stamp mapped back onto subscriber clock
        truth = t_pub - sim.true_offset("a", "b")
        assert got.samples[0][0] == pytest.approx(truth, abs=1e-3)
        assert got.samples[0][1] == (1.0,)

    def test_order_preserved_end_to_end(self):
        sim, a, b = make_pair(LinkModel(base_latency_fwd=0.002, base_latency_rev=0.002))
        info = signal_info("lab-b")
        outlet = b.node.create_outlet(info)
        b.start_announcing(["a"], until=0.5)
        sim.run(until=0.6)
        inlet = a.node.subscribe(info.uid, model=ClockModel())
        sim.run(until=0.7)
        for i in range(20):
            sim.schedule(0.8 + i * 0.01, lambda i=i: outlet.push_chunk(
                make_chunk(info.uid, [(float(i), (float(i),))])))
        sim.run(until=2.0)
        got = inlet.pull_chunk(max_samples=100)
        assert [v[0] for _, v in got.samples] == [float(i) for i in range(20)]

    def test_subscribe_idempotent(self):
        sim, a, b = make_pair(LinkModel())
        info = signal_info("lab-b")
        outlet = b.node.create_outlet(info)
        b.start_announcing(["a"], until=0.5)
        sim.run(until=0.6)
        first = a.node.subscribe(info.uid, model=ClockModel())
        second = a.node.subscribe(info.uid, model=ClockModel())
        assert first is second
        sim.run(until=0.7)
        sim.schedule(0.8, lambda: outlet.push_chunk(make_chunk(info.uid, [(0.0, (1.0,))])))
        sim.run(until=1.0)
        assert len(first.pull_chunk(max_samples=10).samples) == 1


class TestMeasureLink:
    def test_exact_latency_lossless(self):
        sim, a, b = make_pair(LinkModel(base_latency_fwd=0.01, base_latency_rev=0.01))
        a.start_clock_sync("b", count=20, interval=0.5)
        sim.run(until=12.0)
        metrics = a.node.measure_link("b", window=12.0)
        assert metrics.median_rtt == pytest.approx(0.02, abs=1e-9)
        assert metrics.rtt_jitter == pytest.approx(0.0, abs=1e-9)
        assert metrics.loss_fraction == 0.0
        assert metrics.offset_uncertainty == pytest.approx(0.01, abs=1e-9)

    def test_loss_fraction(self):
        # an exchange survives only if ping and pong both make it, so
        # per-frame loss p yields exchange loss 1-(1-p)^2
        sim, a, b = make_pair(LinkModel(base_latency_fwd=0.005, base_latency_rev=0.005,
                                        loss_prob=0.5, seed=3))
        a.start_clock_sync("b", count=100, interval=0.1)
        sim.run(until=15.0)
        metrics = a.node.measure_link("b", window=15.0)
        assert metrics.loss_fraction == pytest.approx(0.75, abs=0.1)

    def test_loss_fraction_half(self):
        # per-frame loss tuned so the exchange loss is ~0.5
        sim, a, b = make_pair(LinkModel(base_latency_fwd=0.005, base_latency_rev=0.005,
                                        loss_prob=0.293, seed=4))
        a.start_clock_sync("b", count=100, interval=0.1)
        sim.run(until=15.0)
        metrics = a.node.measure_link("b", window=15.0)
        assert metrics.loss_fraction == pytest.approx(0.5, abs=0.1)

    def test_insufficient_data(self):
        sim, a, b = make_pair(LinkModel())
        a.start_clock_sync("b", count=3, interval=0.1)
        sim.run(until=2.0)
        with pytest.raises(InsufficientData):
            a.node.measure_link("b", window=5.0)


class TestFitOverSimLink:
    def test_offset_and_drift_recovery(self):
        # true offset 250 ms, drift 50 ppm, 20 ms +/- 5 ms symmetric latency
        sim, a, b = make_pair(
            LinkModel(base_latency_fwd=0.02, base_latency_rev=0.02,
                      jitter_stddev=0.005, seed=42),
            offset_b=0.25, drift_b=5e-5)
        a.start_clock_sync("b", count=30, interval=1.0)
        sim.run(until=35.0)
        model = a.node.fit_link_model("b")
        t_local = sim.node_now("a")
        predicted = to_common_time(model, t_local) - t_local
        truth = sim.true_offset("a", "b")
        assert abs(predicted - truth) <= 0.002
