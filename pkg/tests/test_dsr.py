import pytest
from hypothesis import given, strategies as st

from manetsim.dsr import (DsrAgent, DsrRreq, RouteCache, SourceHeader, is_source_route)
from manetsim.link import BROADCAST, Packet, PacketType
from conftest import CHAIN, build_net


def data(uid, src=0, dst=2):
    return Packet(uid, PacketType.CBR_DATA, src, dst, 512)


def records(tracer, ptype=None, op=None, node=None):
    return [r for r in tracer.records
            if (ptype is None or r.ptype is ptype) and (op is None or r.op == op)
            and (node is None or r.node == node)]


def test_cached_route_sets_source_header():
    sim, net, tracer = build_net(CHAIN, DsrAgent)
    a = net.agents[0]
    a.cache.add((0, 1, 2), 0.0)
    p = data(1)
    assert a.dsr_send(p) == "sent"
    assert p.payload.route == (0, 1, 2)
    sim.run_until(0.003)
    assert records(tracer, PacketType.CBR_DATA, "f", 1)


def test_shortest_cached_route_chosen():
    c = RouteCache(0)
    c.add((0, 1, 2, 3), 0.0)
    c.add((0, 4, 3), 1.0)
    assert c.best(3, 2.0) == (0, 4, 3)


def test_equal_length_prefers_newest():
    c = RouteCache(0)
    c.add((0, 1, 3), 0.0)
    c.add((0, 2, 3), 1.0)
    assert c.best(3, 2.0) == (0, 2, 3)


def test_cache_evicts_oldest_at_capacity():
    c = RouteCache(0, capacity=2)
    c.add((0, 1, 9), 0.0)
    c.add((0, 2, 9), 1.0)
    c.add((0, 3, 4, 9), 2.0)
    routes = [r for r, _ in c.routes[9]]
    assert (0, 1, 9) not in routes and len(routes) == 2


def test_cache_expiry():
    c = RouteCache(0, expiry=10.0)
    c.add((0, 1), 0.0)
    assert c.best(1, 5.0) == (0, 1)
    assert c.best(1, 11.0) is None


def test_learn_path_caches_prefixes_both_ways():
    c = RouteCache(1)
    c.learn_path((0, 1, 2, 3), 0.0)
    assert c.best(3, 0.0) == (1, 2, 3)
    assert c.best(0, 0.0) == (1, 0)


def test_remove_link_either_direction():
    c = RouteCache(0)
    c.add((0, 1, 2, 3), 0.0)
    c.add((0, 4, 3), 0.0)
    assert c.remove_link(2, 1) == 1
    assert c.best(3, 0.0) == (0, 4, 3)


def test_chain_discovery_records_and_reply():
    sim, net, tracer = build_net(CHAIN, DsrAgent)
    a, b, c = net.agents
    a.dsr_send(data(1))
    sim.run_until(1.0)
    # B rebroadcast the request with itself appended; C replied with the full route
    assert c.cache.best(0, 1.0) == (2, 1, 0)
    assert a.cache.best(2, 1.0) == (0, 1, 2)
    assert b.cache.best(2, 1.0) == (1, 2) and b.cache.best(0, 1.0) == (1, 0)
    assert len(records(tracer, PacketType.DSR_RREQ, "f", 1)) == 1
    assert len(records(tracer, PacketType.DSR_RREP)) == 2
    assert records(tracer, PacketType.CBR_DATA, "r", 2)


def rreq_packet(uid, record, target=2, ttl=64):
    return Packet(uid, PacketType.DSR_RREQ, record[0], BROADCAST, 20, ttl=ttl,
                  payload=DsrRreq((record[0], 1), target, record))


def test_duplicate_request_dropped():
    sim, net, tracer = build_net(CHAIN, DsrAgent)
    b = net.agents[1]
    assert b.process_rreq(rreq_packet(5, (0,))) == "rebroadcast"
    assert b.process_rreq(rreq_packet(5, (0,))) == "drop"
    assert len(records(tracer, PacketType.DSR_RREQ)) == 1


def test_request_already_through_node_dropped():
    sim, net, tracer = build_net(CHAIN, DsrAgent)
    b = net.agents[1]
    assert b.process_rreq(rreq_packet(5, (0, 1))) == "drop"


def test_reply_flushes_buffer():
    sim, net, tracer = build_net(CHAIN, DsrAgent)
    a = net.agents[0]
    for uid in (1, 2, 3):
        a.dsr_send(data(uid))
    sim.run_until(1.0)
    sent = records(tracer, PacketType.CBR_DATA, "s", 0)
    assert len(sent) == 3
    assert len(records(tracer, PacketType.CBR_DATA, "f", 1)) == 3
    assert len(records(tracer, PacketType.DSR_RREQ, "s", 0)) == 1


def test_intermediate_forwards_to_successor():
    sim, net, tracer = build_net(CHAIN, DsrAgent)
    p = data(9)
    p.payload = SourceHeader((0, 1, 2), 0)
    assert net.agents[1].dsr_forward(p) == "forwarded"
    sim.run_until(0.01)
    assert records(tracer, PacketType.CBR_DATA, "r", 2)


def test_final_hop_delivers():
    sim, net, tracer = build_net(CHAIN, DsrAgent)
    p = data(9)
    p.payload = SourceHeader((0, 1, 2), 1)
    assert net.agents[2].dsr_forward(p) == "delivered"
    assert [(r.op, r.layer, r.node) for r in tracer.records] == [("r", "AGT", 2)]


def test_broken_link_sends_error_back_to_source():
    # C sits beyond B's range, so B's forward fails
    sim, net, tracer = build_net([(0, 0), (200, 0), (460, 0)], DsrAgent)
    a, b, _ = net.agents
    a.cache.add((0, 1, 2), 0.0)
    b.cache.add((1, 2), 0.0)
    p = data(1)
    p.payload = SourceHeader((0, 1, 2), 0)
    assert b.dsr_forward(p) == "rerr"
    sim.run_until(0.01)
    assert records(tracer, PacketType.CBR_DATA, "d", 1)
    assert records(tracer, PacketType.DSR_RERR, "s", 1)
    assert a.cache.best(2, 0.01) is None
    assert b.cache.best(2, 0.01) is None


@given(st.lists(st.integers(0, 9), min_size=0, max_size=8))
def test_source_route_validity(route):
    assert is_source_route(tuple(route)) == (len(route) >= 2 and len(set(route)) == len(route))
