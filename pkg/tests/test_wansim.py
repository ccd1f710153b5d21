import io

import pytest
from hypothesis import given, settings, strategies as st

from geolearn.wansim import (CLOCK_BYTES, CostLedger, CostRates, GB,
                             KIND_BARRIER, KIND_CLOCK, KIND_TRAVEL,
                             KIND_UPDATE, LinkSpec, Message, OverlayPlan,
                             RateMonitor, Simulator, Topology, account_cost,
                             barrier_bytes, broadcast_hops, build_topology,
                             default_bandwidth, default_costs,
                             dense_update_bytes, forward_hops,
                             load_bandwidth_csv, load_cost_csv,
                             sparse_update_bytes)


# ---------------------------------------------------------------------------
# wire-format byte accounting


def test_byte_constants_oracle():
    # sparse entry carries a 4-byte index plus an 8-byte value
    assert sparse_update_bytes(3) == 36
    assert sparse_update_bytes(0) == 0
    assert dense_update_bytes(5) == 40
    # barrier: 16-byte header plus 4 bytes per advertised index
    assert barrier_bytes(0) == 16
    assert barrier_bytes(4) == 32
    assert CLOCK_BYTES == 24


def test_message_defaults_and_validation():
    msg = Message(kind=KIND_UPDATE, src="a", dst="b",
                  byte_split={KIND_UPDATE: 80, KIND_BARRIER: 20})
    assert msg.origin == "a"
    assert msg.nbytes == 100
    assert msg.klass == "data"
    assert Message(kind=KIND_CLOCK, src="a", dst="b",
                   byte_split={KIND_CLOCK: 24}).klass == "control"
    with pytest.raises(ValueError):
        Message(kind=KIND_UPDATE, src="a", dst="b", byte_split={"gossip": 8})


def test_linkspec_validation():
    with pytest.raises(ValueError):
        LinkSpec(src="a", dst="b", bandwidth=0.0, latency=0.1)
    with pytest.raises(ValueError):
        LinkSpec(src="a", dst="b", bandwidth=1.0, latency=-0.1)


# ---------------------------------------------------------------------------
# the event loop


class _Recorder:
    def __init__(self):
        self.inbox = []
        self.wakes = []

    def on_message(self, sim, msg):
        self.inbox.append((sim.now, msg.payload))

    def on_wake(self, sim):
        self.wakes.append(sim.now)


def _one_link_sim(bandwidth=100.0, latency=0.5):
    topo = Topology(dcs=["a", "b"],
                    links={("a", "b"): LinkSpec("a", "b", bandwidth, latency)})
    sim = Simulator(topo)
    sink = _Recorder()
    sim.register("b", sink)
    return sim, sink


def _update(payload, nbytes):
    return Message(kind=KIND_UPDATE, src="a", dst="b",
                   byte_split={KIND_UPDATE: nbytes}, payload=payload)


def test_delivery_time_oracle():
    # 200 B at 100 B/s: service 0..2, plus 0.5 s latency -> lands at 2.5
    sim, sink = _one_link_sim()
    sim.send(_update("m", 200))
    sim.run()
    assert sink.inbox == [(2.5, "m")]


def test_queued_message_waits_for_the_link():
    sim, sink = _one_link_sim()
    sim.send(_update("first", 200))
    sim.send(_update("second", 100))
    sim.run()
    # second starts when the link frees at t=2, lands at 2 + 1 + 0.5
    assert sink.inbox == [(2.5, "first"), (3.5, "second")]


def test_control_class_jumps_the_data_queue():
    sim, sink = _one_link_sim()
    sim.send(_update("d1", 200))           # in flight immediately
    sim.send(_update("d2", 100))           # queued behind it
    sim.send(Message(kind=KIND_CLOCK, src="a", dst="b",
                     byte_split={KIND_CLOCK: CLOCK_BYTES}, payload="c1"))
    sim.run()
    # the clock overtakes d2 but never preempts d1 mid-flight
    assert [p for _, p in sink.inbox] == ["d1", "c1", "d2"]
    times = [t for t, _ in sink.inbox]
    assert times == sorted(times)


def test_fifo_within_a_priority_class():
    sim, sink = _one_link_sim()
    for tag in ("u1", "u2", "u3"):
        sim.send(_update(tag, 100))
    sim.run()
    assert [p for _, p in sink.inbox] == ["u1", "u2", "u3"]
    assert [t for t, _ in sink.inbox] == [1.5, 2.5, 3.5]


def test_send_requires_a_configured_link():
    sim, _ = _one_link_sim()
    with pytest.raises(KeyError):
        sim.send(Message(kind=KIND_UPDATE, src="b", dst="a",
                         byte_split={KIND_UPDATE: 8}))
    with pytest.raises(KeyError):
        sim.topology.link("b", "a")


def test_wake_and_past_scheduling():
    sim, sink = _one_link_sim()
    sim.wake_at(1.25, "b")
    sim.run()
    assert sink.wakes == [1.25]
    assert sim.now == 1.25
    with pytest.raises(ValueError):
        sim.wake_at(1.0, "b")


def test_run_event_bound_and_pending():
    sim, sink = _one_link_sim()
    sim.wake_at(1.0, "b")
    sim.wake_at(2.0, "b")
    assert sim.pending() == 2
    assert sim.run(max_events=1) == 1
    assert sim.pending() == 1
    sim.run()
    assert sink.wakes == [1.0, 2.0]


def test_ledger_conservation_tracks_in_flight_bytes():
    sim, _ = _one_link_sim()
    sim.send(_update("m", 300))
    # booked as sent immediately, delivered only once it lands
    assert sim.ledger.sent_bytes() == 300
    assert not sim.ledger.conservation_ok()
    sim.run()
    assert sim.ledger.delivered_bytes() == 300
    assert sim.ledger.conservation_ok()


def test_ledger_splits_bytes_by_kind():
    sim, _ = _one_link_sim()
    sim.send(Message(kind=KIND_UPDATE, src="a", dst="b",
                     byte_split={KIND_UPDATE: 80, KIND_BARRIER: 20}))
    sim.run()
    assert sim.ledger.sent_bytes(KIND_UPDATE) == 80
    assert sim.ledger.sent_bytes(KIND_BARRIER) == 20
    assert sim.ledger.delivered_bytes(KIND_TRAVEL) == 0
    assert sim.ledger.sent_bytes() == 100


@settings(max_examples=40, deadline=None)
@given(sizes=st.lists(st.integers(1, 10_000), min_size=1, max_size=12))
def test_conservation_holds_for_any_traffic_mix(sizes):
    sim, sink = _one_link_sim(bandwidth=1000.0, latency=0.01)
    for i, nbytes in enumerate(sizes):
        kind = KIND_CLOCK if i % 3 == 0 else KIND_UPDATE
        sim.send(Message(kind=kind, src="a", dst="b",
                         byte_split={kind: nbytes}, payload=i))
    sim.run()
    assert sim.ledger.conservation_ok()
    assert sim.ledger.delivered_bytes() == sum(sizes)
    assert len(sink.inbox) == len(sizes)


# ---------------------------------------------------------------------------
# cost accounting


def test_account_cost_hand_oracle():
    ledger = CostLedger()
    ledger.record_machine_time("east", 7200.0)        # 2 machine-hours
    ledger.record_sent("east", "west", {KIND_UPDATE: int(2 * GB)})
    ledger.record_delivered("east", "west", {KIND_UPDATE: int(2 * GB)})
    rates = {"east": CostRates("east", 1.0, 0.05, 0.0),
             "west": CostRates("west", 0.5, 0.0, 0.02)}
    # 2.0 machine + 2 GB * 0.05 egress + 2 GB * 0.02 ingress, in ledger order
    hand = 7200.0 * (1.0 / 3600.0) + 2.0 * 0.05 + 2.0 * 0.02
    assert account_cost(ledger, rates) == hand
    assert account_cost(ledger, rates) == pytest.approx(2.14)


def test_rate_monitor_smoothing_oracle():
    mon = RateMonitor(alpha=0.5)
    assert not mon.warm
    assert mon.rate == 0.0
    mon.observe(100, 1.0)
    assert mon.rate == 100.0            # first observation seeds the average
    mon.observe(200, 1.0)
    assert mon.rate == 150.0            # 0.5*100 + 0.5*200
    mon.observe(50, 0.5)
    assert mon.rate == 125.0            # 0.5*150 + 0.5*100
    assert mon.warm
    with pytest.raises(ValueError):
        mon.observe(10, 0.0)


# ---------------------------------------------------------------------------
# overlay routing


def _plan():
    return OverlayPlan(groups=[["a", "b"], ["c", "d"]],
                       hubs={(0, 1): "c", (1, 0): "a"})


def test_overlay_plan_validation():
    with pytest.raises(ValueError):
        OverlayPlan(groups=[["a"], ["a"]], hubs={})
    with pytest.raises(ValueError):
        OverlayPlan(groups=[["a"], ["b"]], hubs={(0, 1): "a"})
    plan = _plan()
    assert plan.group_of("d") == 1
    with pytest.raises(ValueError):
        plan.group_of("z")
    with pytest.raises(ValueError):
        plan.hub_for(1, 1)


def test_broadcast_without_plan_is_direct():
    hops = broadcast_hops(None, "a", ["a", "b", "c"])
    assert hops == [("b", False), ("c", False)]


def test_broadcast_and_forward_hops_oracle():
    plan = _plan()
    # in-group peer direct, one flagged copy to the remote group's hub
    assert broadcast_hops(plan, "a", ["a", "b", "c", "d"]) == [("b", False), ("c", True)]
    assert broadcast_hops(plan, "d", ["a", "b", "c", "d"]) == [("c", False), ("a", True)]
    assert forward_hops(plan, "c", origin="a") == ["d"]
    assert forward_hops(plan, "a", origin="d") == ["b"]


def test_overlay_reaches_every_dc_exactly_once():
    plan = _plan()
    dcs = ["a", "b", "c", "d"]
    for source in dcs:
        reached = []
        for dst, needs_forward in broadcast_hops(plan, source, dcs):
            reached.append(dst)
            if needs_forward:
                reached.extend(forward_hops(plan, dst, origin=source))
        assert sorted(reached) == sorted(set(dcs) - {source})


# ---------------------------------------------------------------------------
# external file formats


def test_bandwidth_csv_round_trip():
    text = ",east,west\neast,,100\nwest,50,\n"
    names, matrix = load_bandwidth_csv(io.StringIO(text))
    assert names == ["east", "west"]
    # cells are Mb/s: 1 Mb/s = 125000 B/s
    assert matrix[("east", "west")] == 100 * 125_000.0
    assert matrix[("west", "east")] == 50 * 125_000.0
    assert ("east", "east") not in matrix


def test_bandwidth_csv_rejects_bad_inputs():
    with pytest.raises(ValueError):
        load_bandwidth_csv(io.StringIO(",east,west\neast,,0\nwest,50,\n"))
    with pytest.raises(ValueError):
        load_bandwidth_csv(io.StringIO(",east,west\nwest,,100\neast,50,\n"))


def test_cost_csv_rejects_wrong_header():
    with pytest.raises(ValueError):
        load_cost_csv(io.StringIO("region,machine_rate_usd_per_hr,send_usd_per_gb\nx,1,1\n"))


def test_packaged_tables_frozen_values():
    rates = default_costs()
    assert rates["virginia"].machine_usd_per_hr == 0.86
    assert rates["virginia"].send_usd_per_gb == 0.02
    assert rates["virginia"].recv_usd_per_gb == 0.01
    assert rates["saopaulo"].machine_usd_per_hr == 1.37
    assert rates["saopaulo"].send_usd_per_gb == 0.16
    names, matrix = default_bandwidth()
    assert "virginia" in names and "saopaulo" in names
    assert matrix[("virginia", "saopaulo")] == 140 * 125_000.0
    assert matrix[("saopaulo", "virginia")] == 140 * 125_000.0


def test_build_topology_wiring():
    topo = build_topology(["virginia", "saopaulo"])
    wan = topo.link("virginia", "saopaulo")
    assert wan.bandwidth == 140 * 125_000.0
    assert wan.latency == 0.05
    assert wan.send_cost_per_gb == 0.02    # virginia egress
    assert wan.recv_cost_per_gb == 0.01    # saopaulo ingress
    # intra-DC links are free and 15x the mean WAN bandwidth
    lan = topo.link("virginia", "virginia")
    assert lan.bandwidth == 15.0 * 140 * 125_000.0
    assert lan.latency == 0.0
    assert lan.send_cost_per_gb == 0.0 and lan.recv_cost_per_gb == 0.0
    assert topo.machine_rate == {"virginia": 0.86, "saopaulo": 1.37}
    assert topo.compute_s == {"virginia": 0.001, "saopaulo": 0.001}


def test_build_topology_rejects_unknown_dc():
    with pytest.raises(ValueError):
        build_topology(["virginia", "atlantis"])
