import pytest

from manetsim.link import (BROADCAST, LinkModel, Packet, PacketType, control_size)
from conftest import Recorder, build_net


def pkt(uid=1, ptype=PacketType.CBR_DATA, dst=BROADCAST):
    return Packet(uid, ptype, 0, dst, 64)


def with_recorders(positions):
    sim, net, tracer = build_net(positions)
    net.agents = [Recorder(i) for i in range(len(positions))]
    return sim, net, tracer


def test_close_nodes_are_mutual_neighbours():
    sim, net, _ = with_recorders([(0, 0), (100, 0)])
    assert net.neighbors(0) == [1] and net.neighbors(1) == [0]


def test_range_boundary_is_closed():
    sim, net, _ = with_recorders([(0, 0), (250, 0), (250.001, 250)])
    assert net.connected(0, 1)
    assert not net.connected(0, 2)


def test_chain_geometry(chain):
    sim, net, _ = with_recorders(chain)
    assert net.neighbors(0) == [1]
    assert net.neighbors(1) == [0, 2]
    assert not net.connected(0, 2)


def test_broadcast_fan_out_timing():
    sim, net, tracer = with_recorders([(300, 300), (350, 300), (250, 300), (300, 350),
                                       (300, 250), (600, 600)])
    sim.run_until(1.0)
    assert net.broadcast(0, pkt()) == 4
    sim.run_until(1.0 + 0.002 - 1e-9)
    assert all(not a.got for a in net.agents)
    sim.run_until(1.002)
    assert [len(a.got) for a in net.agents] == [0, 1, 1, 1, 1, 0]
    assert len(tracer.records) == 1


def test_unicast_out_of_range_fails():
    sim, net, tracer = with_recorders([(0, 0), (500, 0)])
    assert net.unicast(0, 1, pkt(dst=1)) is False
    sim.run_until(1.0)
    assert net.agents[1].got == []
    # the attempt is still a transmission
    assert [r.op for r in tracer.records] == ["s"]


def test_isolated_broadcast():
    sim, net, tracer = with_recorders([(0, 0), (600, 600)])
    assert net.broadcast(0, pkt()) == 0
    sim.run_until(1.0)
    assert len(tracer.records) == 1 and tracer.records[0].layer == "RTR"


def test_unicast_in_range_delivers_once():
    sim, net, _ = with_recorders([(0, 0), (100, 0), (150, 0)])
    assert net.unicast(0, 1, pkt(7, dst=1))
    sim.run_until(1.0)
    assert net.agents[1].got == [(7, 0)] and net.agents[2].got == []


def test_control_sizes():
    assert control_size(PacketType.DSDV_UPDATE, 3) == 48
    assert control_size(PacketType.DSR_RREQ, 2) == 24
    assert control_size(PacketType.AODV_RREQ) == 24
    assert PacketType.CBR_DATA.is_control is False
    assert all(p.is_control for p in PacketType if p is not PacketType.CBR_DATA)


@pytest.mark.parametrize("kwargs", [dict(range=0.0), dict(hop_latency=0.0)])
def test_link_model_validation(kwargs):
    with pytest.raises(ValueError):
        LinkModel(**kwargs)


def test_packet_size_must_be_positive():
    with pytest.raises(ValueError):
        Packet(1, PacketType.CBR_DATA, 0, 1, 0)


def _mean_pdr(link, seeds=range(1, 6)):
    from manetsim.harness import Protocol, RunConfig, run_single
    from manetsim.mobility import MobilityModel, MobilityParams
    vals = []
    for s in seeds:
        cfg = RunConfig(Protocol.AODV, MobilityParams(MobilityModel.RANDOM_WAYPOINT, 0, 10, 25),
                        10, duration=100.0, conn_fraction=0.2, seed=s, link=link)
        vals.append(run_single(cfg).metrics.pdr)
    return sum(vals) / len(vals)


def test_range_sensitivity_is_monotone():
    pdrs = [_mean_pdr(LinkModel(range=r)) for r in (100.0, 250.0, 1000.0)]
    assert pdrs[0] < pdrs[1] < pdrs[2]
    # a range covering the whole area makes every pair one hop apart; only a
    # packet still in flight at the end of the run can be missing
    assert pdrs[2] > 0.99


@pytest.mark.parametrize("latency", [0.0005, 0.002, 0.01])
def test_latency_sweep_keeps_delivery(latency):
    assert _mean_pdr(LinkModel(hop_latency=latency)) > 0.5
