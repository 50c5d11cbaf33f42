import pytest

from manetsim.engine import TAG_PROTOCOL, RandomStream, Simulator
from manetsim.link import LinkModel, Network
from manetsim.metrics import Tracer
from manetsim.mobility import AreaBounds, Scenario

CHAIN = [(0.0, 0.0), (200.0, 0.0), (400.0, 0.0)]


def build_net(positions, agent_cls=None, duration=200.0, link=None, seed=1):
    """Static topology with one agent per node; agents are not started."""
    sim = Simulator()
    tracer = Tracer()
    scenario = Scenario.static(positions, AreaBounds(), duration)
    net = Network(sim, scenario, link or LinkModel(), tracer)
    if agent_cls is not None:
        rng = RandomStream(seed).derive(TAG_PROTOCOL)
        net.agents = [agent_cls(i, net, rng) for i in range(len(positions))]
    return sim, net, tracer


class Recorder:
    """Stand-in agent that remembers what it received."""

    def __init__(self, node):
        self.node = node
        self.got = []

    def receive(self, pkt, sender):
        self.got.append((pkt.uid, sender))


@pytest.fixture
def chain():
    return CHAIN


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
