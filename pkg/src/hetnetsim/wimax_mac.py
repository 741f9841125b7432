"""802.16 cell with Unsolicited Grant Service scheduling for the 'Gold' class."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, Optional

from .config import WimaxPhyParams
from .packets import DropCause, Packet, TxOutcome
from .scheduler import Kernel, SimTime

logger = logging.getLogger(__name__)

ConnectionCallback = Callable[[str, Packet, TxOutcome], None]


class AdmissionRefused(RuntimeError):
    """The cell has no room left in the frame for another UGS grant."""


def _ceil_div(numerator: int, denominator: int) -> int:
    return -(-numerator // denominator)


def serialization_time(bits: int, phy: WimaxPhyParams) -> SimTime:
    return _ceil_div(bits * 1_000_000, phy.capacity)


def overhead_end(phy: WimaxPhyParams) -> SimTime:
    return int(round(phy.overhead_fraction * phy.frame_duration_us))


@dataclass(frozen=True)
class UgsGrant:
    """A fixed slice of every frame reserved for one connection."""

    connection_id: str
    offset_in_frame: SimTime
    grant_bits: int
    duration: SimTime
    period: SimTime

    @property
    def end(self) -> SimTime:
        return self.offset_in_frame + self.duration


def allocate_ugs_grant(
    connection_id: str,
    grant_bits: int,
    phy: WimaxPhyParams,
    existing: List[UgsGrant],
) -> UgsGrant:
    """First-fit placement of a periodic grant after the control overhead."""

    duration = serialization_time(grant_bits, phy)
    cursor = overhead_end(phy)
    for grant in sorted(existing, key=lambda g: g.offset_in_frame):
        if cursor + duration <= grant.offset_in_frame:
            break
        cursor = max(cursor, grant.end)
    if cursor + duration > phy.frame_duration_us:
        raise AdmissionRefused(
            f"no room for connection {connection_id}: {len(existing)} grants already "
            f"fill the {phy.frame_duration_us}us frame"
        )
    return UgsGrant(
        connection_id=connection_id,
        offset_in_frame=cursor,
        grant_bits=grant_bits,
        duration=duration,
        period=phy.frame_duration_us,
    )


@dataclass(eq=False)
class UgsConnection:
    grant: UgsGrant
    # Completion times of packets still waiting for or using a grant.
    backlog: Deque[SimTime] = field(default_factory=deque)
    next_free: SimTime = 0
    enqueued: int = 0
    delivered: int = 0
    dropped: int = 0
    mac_delay_total: SimTime = 0


class WimaxCell:
    """
    Base station plus subscriber stations sharing one frame.

    Service is computed analytically per packet: wait for the next unused grant
    occurrence, then serialize at cell capacity. No contention, no collisions.
    """

    def __init__(self, kernel: Kernel, phy: WimaxPhyParams, name: str) -> None:
        self.kernel = kernel
        self.phy = phy
        self.name = name
        self.grants: List[UgsGrant] = []
        self.connections: Dict[str, UgsConnection] = {}
        self.on_delivered: Optional[ConnectionCallback] = None
        self.on_dropped: Optional[ConnectionCallback] = None
        self.delivered_bits = 0

    def admit(self, connection_id: str, payload_bytes: int) -> UgsGrant:
        """Provision a UGS flow sized for one packet of ``payload_bytes`` per frame."""
        grant_bits = 8 * (payload_bytes + self.phy.mac_overhead_bytes)
        grant = allocate_ugs_grant(connection_id, grant_bits, self.phy, self.grants)
        self.grants.append(grant)
        self.connections[connection_id] = UgsConnection(grant=grant)
        logger.debug(
            "%s: admitted %s at offset %sus (%sus)",
            self.name,
            connection_id,
            grant.offset_in_frame,
            grant.duration,
        )
        return grant

    def release(self, connection_id: str) -> None:
        connection = self.connections.pop(connection_id)
        self.grants.remove(connection.grant)

    def next_occurrence(self, grant: UgsGrant, t: SimTime) -> SimTime:
        """Start of the first occurrence of ``grant`` at or after ``t``."""
        frames = _ceil_div(max(t - grant.offset_in_frame, 0), grant.period)
        return frames * grant.period + grant.offset_in_frame

    def service_frame(self, connection_id: str, frame: Packet) -> TxOutcome:
        """Schedule delivery of ``frame`` on its connection's grants."""
        now = self.kernel.now()
        connection = self.connections[connection_id]
        grant = connection.grant
        while connection.backlog and connection.backlog[0] <= now:
            connection.backlog.popleft()
        if len(connection.backlog) >= self.phy.queue_limit:
            connection.dropped += 1
            outcome = TxOutcome(
                delivered_at=None, attempts=0, mac_delay=0, dropped=DropCause.QUEUE_OVERFLOW
            )
            if self.on_dropped is not None:
                self.on_dropped(connection_id, frame, outcome)
            return outcome

        # Frames larger than one grant are fragmented over consecutive frames.
        frame_bits = 8 * (frame.size_bytes + self.phy.mac_overhead_bytes)
        occurrences = max(1, _ceil_div(frame_bits, grant.grant_bits))
        last_bits = frame_bits - (occurrences - 1) * grant.grant_bits
        start = max(self.next_occurrence(grant, now), connection.next_free)
        last = start + (occurrences - 1) * grant.period
        done = last + serialization_time(last_bits, self.phy)
        connection.next_free = last + grant.period
        connection.backlog.append(done)
        connection.enqueued += 1

        outcome = TxOutcome(delivered_at=done, attempts=1, mac_delay=done - now)
        self.kernel.call_at(done, self._on_delivered, connection_id, frame, outcome)
        return outcome

    def _on_delivered(self, connection_id: str, frame: Packet, outcome: TxOutcome) -> None:
        connection = self.connections.get(connection_id)
        if connection is not None:
            connection.delivered += 1
            connection.mac_delay_total += outcome.mac_delay
        self.delivered_bits += 8 * frame.size_bytes
        if self.on_delivered is not None:
            self.on_delivered(connection_id, frame, outcome)
