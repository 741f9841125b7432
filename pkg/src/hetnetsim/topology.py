"""Subnets, base stations, SIP proxies and the IP cloud joining two subnets."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

from .config import WIFI, CloudConfig, ScenarioConfig, SubnetSpec
from .packets import DropCause, HopRecord, NodeId, Packet, TxOutcome
from .rng import BACKOFF, CLOUD_LATENCY, RngFactory, RngStream
from .scheduler import Kernel, SimTime, millis
from .wifi_mac import WifiChannel, WifiStationState
from .wimax_mac import WimaxCell

logger = logging.getLogger(__name__)

CLOUD: NodeId = "cloud"


class UnknownNode(ValueError):
    """A route endpoint is not part of the topology."""


@dataclass(frozen=True)
class Subnet:
    name: str
    mac_kind: str
    stations: Tuple[NodeId, ...]
    base_station: NodeId
    sip_proxy: NodeId


def build_subnet(spec: SubnetSpec) -> Subnet:
    stations = tuple(f"{spec.name}/ss{i + 1}" for i in range(spec.station_count))
    return Subnet(
        name=spec.name,
        mac_kind=spec.mac_kind,
        stations=stations,
        base_station=f"{spec.name}/bs",
        sip_proxy=f"{spec.name}/sip",
    )


class CloudLink:
    """One direction of the IP backbone; FIFO even when latency jitters."""

    def __init__(self, kernel: Kernel, config: CloudConfig, rng: RngStream, name: str) -> None:
        self.kernel = kernel
        self.name = name
        self.base_latency = millis(config.base_latency_ms)
        self.latency_jitter = millis(config.latency_jitter_ms)
        self._rng = rng
        self._last_arrival: SimTime = 0
        self.carried = 0

    def cloud_transit(self, packet: Packet, on_arrival: Callable[[Packet], None]) -> SimTime:
        now = self.kernel.now()
        delay = self.base_latency
        if self.latency_jitter:
            delay += int(round(self._rng.symmetric(self.latency_jitter)))
        arrival = max(now + delay, self._last_arrival, now)
        self._last_arrival = arrival
        self.carried += 1
        self.kernel.call_at(arrival, on_arrival, packet)
        return arrival


class Network:
    """
    Static star-of-stars topology built from a ScenarioConfig.

    Packets are forwarded hop by hop; every hop records how long the packet
    spent on it, so the network delay is exactly the sum of its hops.
    """

    def __init__(self, kernel: Kernel, config: ScenarioConfig, rngs: RngFactory) -> None:
        self.kernel = kernel
        self.config = config
        self.subnets: Dict[str, Subnet] = {}
        self._subnet_of: Dict[NodeId, Subnet] = {}
        self._wifi: Dict[str, WifiChannel] = {}
        self._wimax: Dict[str, WimaxCell] = {}
        self._clouds: Dict[Tuple[str, str], CloudLink] = {}
        self.on_receive: Optional[Callable[[Packet], None]] = None
        self.on_loss: Optional[Callable[[Packet, DropCause], None]] = None

        voice_bytes = config.codec.packet_bytes
        for spec in config.subnets:
            subnet = build_subnet(spec)
            self.subnets[subnet.name] = subnet
            for node in subnet.stations + (subnet.base_station,):
                self._subnet_of[node] = subnet
            if spec.mac_kind == WIFI:
                assert spec.wifi is not None
                channel = WifiChannel(kernel, spec.wifi, rngs.stream(f"{BACKOFF}/{spec.name}"), spec.name)
                for node in subnet.stations + (subnet.base_station,):
                    channel.register(node)
                channel.on_delivered = self._on_wifi_delivered
                channel.on_dropped = self._on_wifi_dropped
                self._wifi[subnet.name] = channel
            else:
                assert spec.wimax is not None
                cell = WimaxCell(kernel, spec.wimax, spec.name)
                for station in subnet.stations:
                    cell.admit(f"{station}/ul", voice_bytes)
                    cell.admit(f"{station}/dl", voice_bytes)
                cell.on_delivered = self._on_wimax_delivered
                cell.on_dropped = self._on_wimax_dropped
                self._wimax[subnet.name] = cell
            logger.info(
                "Built subnet %s (%s) with %s stations", subnet.name, subnet.mac_kind, len(subnet.stations)
            )

        names = list(self.subnets)
        cloud_rng = rngs.stream(CLOUD_LATENCY)
        for a in names:
            for b in names:
                if a != b:
                    self._clouds[(a, b)] = CloudLink(kernel, config.cloud, cloud_rng, f"{a}->{b}")

    @property
    def stations(self) -> List[NodeId]:
        return [s for subnet in self.subnets.values() for s in subnet.stations]

    def subnet_of(self, node: NodeId) -> Subnet:
        try:
            return self._subnet_of[node]
        except KeyError:
            raise UnknownNode(f"{node} is not part of the topology") from None

    def wifi_channel(self, subnet: str) -> WifiChannel:
        return self._wifi[subnet]

    def wimax_cell(self, subnet: str) -> WimaxCell:
        return self._wimax[subnet]

    def cloud_link(self, src_subnet: str, dst_subnet: str) -> CloudLink:
        return self._clouds[(src_subnet, dst_subnet)]

    def route(self, src: NodeId, dst: NodeId) -> List[NodeId]:
        """Static hop list: src, BS, [cloud, BS'], dst."""
        a = self.subnet_of(src)
        b = self.subnet_of(dst)
        if src == dst:
            return []
        path = [src] if src == a.base_station else [src, a.base_station]
        if a is not b:
            path += [CLOUD, b.base_station]
        if dst != path[-1]:
            path.append(dst)
        return path

    def send(self, packet: Packet) -> None:
        packet.path = self.route(packet.src, packet.dst)
        packet.hop_index = 0
        packet.created_at = self.kernel.now()
        if not packet.path:
            self._deliver(packet)
            return
        self._forward(packet)

    def _deliver(self, packet: Packet) -> None:
        if self.on_receive is not None:
            self.on_receive(packet)

    def _lose(self, packet: Packet, cause: DropCause) -> None:
        if self.on_loss is not None:
            self.on_loss(packet, cause)

    def _finish_hop(self, packet: Packet, link: str, hops: int = 1) -> None:
        packet.hops.append(HopRecord(link=link, delay=self.kernel.now() - packet.hop_started))
        packet.hop_index += hops
        self._forward(packet)

    def _forward(self, packet: Packet) -> None:
        if packet.hop_index >= len(packet.path) - 1:
            self._deliver(packet)
            return
        here = packet.path[packet.hop_index]
        there = packet.path[packet.hop_index + 1]
        packet.hop_started = self.kernel.now()
        if there == CLOUD:
            src_subnet = self.subnet_of(here).name
            dst_subnet = self.subnet_of(packet.path[packet.hop_index + 2]).name
            self._clouds[(src_subnet, dst_subnet)].cloud_transit(packet, self._on_cloud_arrival)
            return
        subnet = self.subnet_of(here)
        if subnet.name in self._wifi:
            sender = here
            if not self._wifi[subnet.name].enqueue(sender, packet):
                self._lose(packet, DropCause.QUEUE_OVERFLOW)
            return
        station = here if here != subnet.base_station else there
        direction = "ul" if here != subnet.base_station else "dl"
        self._wimax[subnet.name].service_frame(f"{station}/{direction}", packet)

    def _on_cloud_arrival(self, packet: Packet) -> None:
        self._finish_hop(packet, CLOUD, hops=2)

    def _link_name(self, packet: Packet) -> str:
        here = packet.path[packet.hop_index]
        subnet = self.subnet_of(here)
        return f"{subnet.name}:{'down' if here == subnet.base_station else 'up'}"

    def _on_wifi_delivered(self, _station: WifiStationState, frame: Packet, _outcome: TxOutcome) -> None:
        self._finish_hop(frame, self._link_name(frame))

    def _on_wifi_dropped(self, _station: WifiStationState, frame: Packet, outcome: TxOutcome) -> None:
        assert outcome.dropped is not None
        self._lose(frame, outcome.dropped)

    def _on_wimax_delivered(self, _connection: str, frame: Packet, _outcome: TxOutcome) -> None:
        self._finish_hop(frame, self._link_name(frame))

    def _on_wimax_dropped(self, _connection: str, frame: Packet, outcome: TxOutcome) -> None:
        assert outcome.dropped is not None
        self._lose(frame, outcome.dropped)

    def mac_stats(self) -> Dict[str, Dict[str, Any]]:
        """Per-subnet MAC counters for run summaries."""
        stats: Dict[str, Dict[str, Any]] = {}
        for name, channel in self._wifi.items():
            states = list(channel.stations.values())
            delivered = sum(s.delivered for s in states)
            stats[name] = {
                "mac_kind": "wifi",
                "transmissions": channel.transmissions,
                "collisions": channel.collisions,
                "delivered": delivered,
                "retry_drops": sum(s.dropped for s in states),
                "overflow_drops": sum(s.overflow for s in states),
                "still_queued": sum(len(s.queue) for s in states),
                "mean_access_delay_ms": (
                    sum(s.mac_delay_total for s in states) / delivered / 1000 if delivered else 0.0
                ),
                "busy_fraction": channel.busy_time / self.kernel.now() if self.kernel.now() else 0.0,
                "delivered_bits": channel.delivered_bits,
            }
        for name, cell in self._wimax.items():
            connections = list(cell.connections.values())
            delivered = sum(c.delivered for c in connections)
            stats[name] = {
                "mac_kind": "wimax",
                "grants": len(cell.grants),
                "delivered": delivered,
                "overflow_drops": sum(c.dropped for c in connections),
                "mean_access_delay_ms": (
                    sum(c.mac_delay_total for c in connections) / delivered / 1000 if delivered else 0.0
                ),
                "delivered_bits": cell.delivered_bits,
            }
        return stats
