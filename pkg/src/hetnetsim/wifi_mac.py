"""802.11 DCF: CSMA/CA with binary exponential backoff, ACKs and retries."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, Optional

from .config import WifiPhyParams
from .packets import DropCause, NodeId, Packet, TxOutcome
from .rng import RngStream
from .scheduler import Event, Kernel, SimTime

logger = logging.getLogger(__name__)

FrameCallback = Callable[["WifiStationState", Packet, TxOutcome], None]


def _ceil_div(numerator: int, denominator: int) -> int:
    return -(-numerator // denominator)


def frame_airtime(payload_bytes: int, phy: WifiPhyParams) -> SimTime:
    """Preamble plus MAC header and payload at the PHY rate, rounded up to 1 us."""
    if payload_bytes <= 0:
        raise ValueError("payload must be at least one byte")
    bits = 8 * (phy.mac_header_bytes + payload_bytes)
    return phy.preamble_us + _ceil_div(bits * 1_000_000, phy.phy_rate)


def ack_airtime(phy: WifiPhyParams) -> SimTime:
    return phy.preamble_us + _ceil_div(8 * phy.ack_bytes * 1_000_000, phy.phy_rate)


def contention_window(stage: int, phy: WifiPhyParams) -> int:
    """CW after ``stage`` consecutive collisions."""
    return min((phy.cw_min + 1) * (2**stage) - 1, phy.cw_max)


@dataclass(eq=False)
class WifiStationState:
    """Per-station DCF state; the access point is one of these too."""

    node_id: NodeId
    queue: Deque[Packet] = field(default_factory=deque)
    backoff_counter: int = 0
    cw_stage: int = 0
    cw: int = 0
    retry_count: int = 0
    # Slot-grid instant from which the backoff counter runs; None while frozen.
    count_from: Optional[SimTime] = None
    head_since: SimTime = 0
    enqueued: int = 0
    delivered: int = 0
    dropped: int = 0
    overflow: int = 0
    mac_delay_total: SimTime = 0

    def finish_time(self, slot: int) -> SimTime:
        assert self.count_from is not None
        return self.count_from + self.backoff_counter * slot


class WifiChannel:
    """
    One shared medium (a single BSS) resolving contention between its stations.

    Stations count down on a common slot grid anchored DIFS after the medium
    last went idle; stations whose counters expire on the same slot collide.
    The channel is otherwise perfect: collisions are the only loss cause.
    """

    def __init__(self, kernel: Kernel, phy: WifiPhyParams, backoff: RngStream, name: str) -> None:
        self.kernel = kernel
        self.phy = phy
        self.name = name
        self._backoff = backoff
        self.stations: Dict[NodeId, WifiStationState] = {}
        self._contenders: List[WifiStationState] = []
        self._busy_until: SimTime = 0
        self._anchor: Optional[SimTime] = None
        self._pending: Optional[Event] = None
        self.ack_time = ack_airtime(phy)
        self.on_delivered: Optional[FrameCallback] = None
        self.on_dropped: Optional[FrameCallback] = None
        self.transmissions = 0
        self.collisions = 0
        self.busy_time: SimTime = 0
        self.delivered_bits = 0

    def register(self, node_id: NodeId) -> WifiStationState:
        station = WifiStationState(node_id=node_id)
        self.stations[node_id] = station
        return station

    def enqueue(self, node_id: NodeId, frame: Packet) -> bool:
        """Queue a frame at a station; False when the queue is full."""
        station = self.stations[node_id]
        if len(station.queue) >= self.phy.queue_limit:
            station.overflow += 1
            return False
        station.queue.append(frame)
        station.enqueued += 1
        if len(station.queue) == 1:
            self._new_head(station)
        return True

    def service_time(self, frame: Packet, backoff_slots: int = 0) -> SimTime:
        """Collision-free access delay for a frame at the head of an idle channel."""
        return (
            self.phy.difs_us
            + backoff_slots * self.phy.slot_us
            + frame_airtime(frame.size_bytes, self.phy)
            + self.phy.sifs_us
            + self.ack_time
        )

    def _new_head(self, station: WifiStationState) -> None:
        station.head_since = self.kernel.now()
        station.cw_stage = 0
        station.retry_count = 0
        station.cw = self.phy.cw_min
        station.backoff_counter = self._backoff.randint(station.cw)
        self._join(station)

    def _join(self, station: WifiStationState) -> None:
        now = self.kernel.now()
        self._contenders.append(station)
        if now < self._busy_until:
            station.count_from = None
        else:
            earliest = now + self.phy.difs_us
            others_counting = any(
                c.count_from is not None for c in self._contenders if c is not station
            )
            if not others_counting or self._anchor is None:
                self._anchor = earliest
                station.count_from = earliest
            else:
                slots = _ceil_div(max(earliest - self._anchor, 0), self.phy.slot_us)
                station.count_from = self._anchor + slots * self.phy.slot_us
        self._reschedule()

    def _reschedule(self) -> None:
        if self.kernel.now() < self._busy_until:
            return
        slot = self.phy.slot_us
        counting = [c for c in self._contenders if c.count_from is not None]
        if not counting:
            if self._pending is not None:
                self._pending.cancel()
                self._pending = None
            return
        fire_at = min(c.finish_time(slot) for c in counting)
        if self._pending is not None:
            if self._pending.fire_at == fire_at and not self._pending.cancelled:
                return
            self._pending.cancel()
        self._pending = self.kernel.call_at(fire_at, self._on_backoff_expired)

    def _on_backoff_expired(self) -> None:
        self._pending = None
        now = self.kernel.now()
        slot = self.phy.slot_us
        counting = [c for c in self._contenders if c.count_from is not None]
        winners = [c for c in counting if c.finish_time(slot) == now]
        for station in counting:
            if station not in winners and station.count_from <= now:
                station.backoff_counter -= (now - station.count_from) // slot
            station.count_from = None
        self._contenders = [c for c in self._contenders if c not in winners]

        if len(winners) == 1:
            station = winners[0]
            airtime = frame_airtime(station.queue[0].size_bytes, self.phy)
            end = now + airtime + self.phy.sifs_us + self.ack_time
            self.transmissions += 1
            self.kernel.call_at(end, self._on_tx_success, station)
        else:
            longest = max(frame_airtime(w.queue[0].size_bytes, self.phy) for w in winners)
            # Senders learn of the collision when the ACK timeout expires.
            end = now + longest + self.phy.sifs_us + self.ack_time
            self.collisions += 1
            self.kernel.call_at(end, self._on_collision_end, winners)
        self.busy_time += end - now
        self._busy_until = end

    def _medium_idle(self) -> None:
        now = self.kernel.now()
        self._anchor = now + self.phy.difs_us if self._contenders else None
        for station in self._contenders:
            station.count_from = self._anchor

    def _on_tx_success(self, station: WifiStationState) -> None:
        now = self.kernel.now()
        frame = station.queue.popleft()
        station.delivered += 1
        mac_delay = now - station.head_since
        station.mac_delay_total += mac_delay
        self.delivered_bits += 8 * frame.size_bytes
        outcome = TxOutcome(delivered_at=now, attempts=station.retry_count + 1, mac_delay=mac_delay)
        self._medium_idle()
        if station.queue:
            self._new_head(station)
        if self.on_delivered is not None:
            self.on_delivered(station, frame, outcome)
        self._reschedule()

    def _on_collision_end(self, winners: List[WifiStationState]) -> None:
        now = self.kernel.now()
        self._medium_idle()
        dropped = []
        for station in winners:
            station.retry_count += 1
            if station.retry_count >= self.phy.retry_limit:
                frame = station.queue.popleft()
                station.dropped += 1
                outcome = TxOutcome(
                    delivered_at=None,
                    attempts=station.retry_count,
                    mac_delay=now - station.head_since,
                    dropped=DropCause.RETRY_LIMIT,
                )
                dropped.append((station, frame, outcome))
                logger.debug("%s: %s dropped a frame after %s attempts", self.name, station.node_id, station.retry_count)
                if station.queue:
                    self._new_head(station)
            else:
                station.cw_stage += 1
                station.cw = contention_window(station.cw_stage, self.phy)
                station.backoff_counter = self._backoff.randint(station.cw)
                self._join(station)
        if self.on_dropped is not None:
            for station, frame, outcome in dropped:
                self.on_dropped(station, frame, outcome)
        self._reschedule()
