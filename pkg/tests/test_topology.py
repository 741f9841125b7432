from __future__ import annotations

import dataclasses

import pytest

from hetnetsim.config import CloudConfig, WifiPhyParams, builtin
from hetnetsim.packets import Packet, PacketKind
from hetnetsim.rng import RngFactory, RngStream
from hetnetsim.scheduler import Kernel
from hetnetsim.topology import CLOUD, CloudLink, Network, UnknownNode
from hetnetsim.wimax_mac import AdmissionRefused


def _network(config):
    kernel = Kernel()
    network = Network(kernel, config, RngFactory(config.seed))
    received, lost = [], []
    network.on_receive = lambda packet: received.append((kernel.now(), packet))
    network.on_loss = lambda packet, cause: lost.append((packet, cause))
    return kernel, network, received, lost


def _no_backoff(config):
    subnets = [
        dataclasses.replace(s, wifi=WifiPhyParams(cw_min=0)) if s.wifi is not None else s
        for s in config.subnets
    ]
    return dataclasses.replace(config, subnets=subnets)


def _voice(src, dst):
    return Packet(kind=PacketKind.VOICE, src=src, dst=dst, size_bytes=200, payload=None)


def test_subnets_follow_config():
    _, network, _, _ = _network(builtin("wifi_wimax"))
    assert network.stations == [
        "Manchester/ss1", "Manchester/ss2", "Manchester/ss3", "Manchester/ss4",
        "Cambridge/ss1", "Cambridge/ss2", "Cambridge/ss3", "Cambridge/ss4",
    ]
    assert network.subnet_of("Cambridge/ss2").mac_kind == "wimax"
    assert network.subnets["Manchester"].sip_proxy == "Manchester/sip"


def test_intra_subnet_route():
    _, network, _, _ = _network(builtin("wifi_wifi"))
    assert network.route("London/ss1", "London/ss2") == ["London/ss1", "London/bs", "London/ss2"]


def test_inter_subnet_route():
    _, network, _, _ = _network(builtin("wifi_wimax"))
    assert network.route("Manchester/ss1", "Cambridge/ss3") == [
        "Manchester/ss1", "Manchester/bs", CLOUD, "Cambridge/bs", "Cambridge/ss3",
    ]


def test_route_to_self_is_empty():
    kernel, network, received, _ = _network(builtin("wifi_wifi"))
    assert network.route("London/ss1", "London/ss1") == []
    network.send(_voice("London/ss1", "London/ss1"))
    [(at, packet)] = received
    assert at == 0 and packet.network_delay() == 0


def test_unknown_node():
    _, network, _, _ = _network(builtin("wifi_wifi"))
    with pytest.raises(UnknownNode) as excinfo:
        network.route("London/ss1", "Paris/ss1")
    assert str(excinfo.value) == "Paris/ss1 is not part of the topology"
    assert isinstance(excinfo.value, ValueError)


def test_wimax_cells_provision_both_directions():
    _, network, _, _ = _network(builtin("wimax_wimax"))
    cell = network.wimax_cell("Cambridge")
    assert len(cell.grants) == 8
    assert "Cambridge/ss1/ul" in cell.connections and "Cambridge/ss4/dl" in cell.connections


def test_oversubscribed_cell_is_refused_at_build():
    config = builtin("wimax_wimax")
    subnets = [dataclasses.replace(config.subnets[0], station_count=100), config.subnets[1]]
    with pytest.raises(AdmissionRefused):
        _network(dataclasses.replace(config, subnets=subnets))


def test_cloud_transit_without_jitter_is_exact():
    kernel = Kernel()
    link = CloudLink(kernel, CloudConfig(), RngStream(1, "cloud-latency"), "a->b")
    arrivals = []
    for t in range(0, 100_000, 7_000):
        kernel.call_at(t, lambda: link.cloud_transit(_voice("x", "y"), lambda p: arrivals.append(kernel.now())))
    kernel.run_until(1_000_000)
    assert arrivals == [t + 10_000 for t in range(0, 100_000, 7_000)]


def test_cloud_jitter_keeps_fifo_and_mean():
    kernel = Kernel()
    link = CloudLink(kernel, CloudConfig(latency_jitter_ms=2.0), RngStream(4, "cloud-latency"), "a->b")
    transits = []
    for i in range(1000):
        kernel.call_at(i * 20_000, lambda: transits.append((kernel.now(), link.cloud_transit(_voice("x", "y"), lambda p: None))))
    kernel.run_until(100_000_000)
    arrivals = [arrival for _, arrival in transits]
    assert arrivals == sorted(arrivals)
    mean = sum(arrival - sent for sent, arrival in transits) / len(transits)
    assert mean == pytest.approx(10_000, abs=200)


def test_wifi_path_delay_is_sum_of_hops():
    kernel, network, received, _ = _network(_no_backoff(builtin("wifi_wifi")))
    network.send(_voice("London/ss1", "Manchester/ss2"))
    kernel.run_until(1_000_000)
    [(at, packet)] = received
    assert [(hop.link, hop.delay) for hop in packet.hops] == [
        ("London:up", 626), (CLOUD, 10_000), ("Manchester:down", 626),
    ]
    assert at == packet.network_delay() == 11_252


def test_wimax_path_delay_follows_grants():
    kernel, network, received, _ = _network(builtin("wimax_wimax"))
    kernel.call_at(1_000, network.send, _voice("Cambridge/ss1", "Bradford/ss1"))
    kernel.run_until(1_000_000)
    [(at, packet)] = received
    # ss1/ul sits at offset 500, ss1/dl at 523 in each cell.
    assert [(hop.link, hop.delay) for hop in packet.hops] == [
        ("Cambridge:up", 4_523), (CLOUD, 10_000), ("Bradford:down", 23),
    ]
    assert at == 1_000 + packet.network_delay()


def test_mac_stats_cover_both_subnets():
    kernel, network, _, _ = _network(builtin("wifi_wimax"))
    network.send(_voice("Manchester/ss1", "Cambridge/ss1"))
    kernel.run_until(1_000_000)
    stats = network.mac_stats()
    assert stats["Manchester"]["delivered"] == 1
    assert stats["Cambridge"]["delivered"] == 1
    assert stats["Cambridge"]["grants"] == 8
