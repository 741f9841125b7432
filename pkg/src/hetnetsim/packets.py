"""Packet and transmission-outcome types shared by the MAC, topology and VoIP layers."""

from __future__ import annotations

import dataclasses
from enum import Enum
from typing import Any, List, Optional

from .scheduler import SimTime

NodeId = str


class PacketKind(str, Enum):
    VOICE = "voice"
    SIP = "sip"


class DropCause(str, Enum):
    RETRY_LIMIT = "retry_limit"
    QUEUE_OVERFLOW = "queue_overflow"
    LATE = "late"
    UNDELIVERED = "undelivered"


@dataclasses.dataclass
class VoiceFrame:
    """One codec frame carried in exactly one packet."""

    call_id: int
    direction: str
    seq: int
    generated_at: SimTime
    send_ts: SimTime


@dataclasses.dataclass(frozen=True)
class HopRecord:
    link: str
    delay: SimTime


@dataclasses.dataclass
class Packet:
    """A network packet moving hop by hop along a static route."""

    kind: PacketKind
    src: NodeId
    dst: NodeId
    size_bytes: int
    payload: Any
    created_at: SimTime = 0
    path: List[NodeId] = dataclasses.field(default_factory=list)
    hop_index: int = 0
    hop_started: SimTime = 0
    hops: List[HopRecord] = dataclasses.field(default_factory=list)

    @property
    def next_hop(self) -> Optional[NodeId]:
        if self.hop_index + 1 < len(self.path):
            return self.path[self.hop_index + 1]
        return None

    def network_delay(self) -> SimTime:
        return sum(hop.delay for hop in self.hops)


@dataclasses.dataclass(frozen=True)
class TxOutcome:
    """Result of one MAC service attempt sequence for a frame."""

    delivered_at: Optional[SimTime]
    attempts: int
    mac_delay: SimTime
    dropped: Optional[DropCause] = None

    @property
    def delivered(self) -> bool:
        return self.dropped is None
