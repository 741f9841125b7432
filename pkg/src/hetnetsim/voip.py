"""Call generation, SIP session setup and teardown, voice framing and receive timestamping."""

from __future__ import annotations

import dataclasses
import logging
from collections import Counter
from enum import Enum
from typing import Dict, List, Optional

from .config import ScenarioConfig
from .metrics import MetricsCollector, QosSample
from .packets import DropCause, NodeId, Packet, PacketKind, VoiceFrame
from .rng import CALL_ARRIVALS, CALL_DURATIONS, CALL_PAIRING, RngFactory, exp_sample
from .scheduler import Event, Kernel, SimTime, millis, seconds
from .topology import Network

logger = logging.getLogger(__name__)

FORWARD = "fwd"
REVERSE = "rev"


class SessionState(str, Enum):
    SETUP = "Setup"
    ACTIVE = "Active"
    TERMINATED = "Terminated"
    ABANDONED = "Abandoned"


_TRANSITIONS = {
    SessionState.SETUP: (SessionState.ACTIVE, SessionState.ABANDONED),
    SessionState.ACTIVE: (SessionState.TERMINATED,),
}


class IllegalStateError(RuntimeError):
    pass


class SipMethod(str, Enum):
    INVITE = "INVITE"
    OK = "200-OK"
    ACK = "ACK"


# Typical on-the-wire sizes including UDP/IP headers.
SIP_MESSAGE_BYTES = {
    SipMethod.INVITE: 620,
    SipMethod.OK: 520,
    SipMethod.ACK: 360,
}


@dataclasses.dataclass(frozen=True)
class SipMessage:
    call_id: int
    method: SipMethod


@dataclasses.dataclass(eq=False)
class FlowLog:
    """Packet log of one direction of a call."""

    sent: int = 0
    received: int = 0
    lost: int = 0
    next_seq: int = 0
    outstanding: Dict[int, SimTime] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass(eq=False)
class CallSession:
    """A SIP-established bidirectional voice flow between two stations."""

    call_id: int
    caller: NodeId
    callee: NodeId
    duration: SimTime
    state: SessionState = SessionState.SETUP
    setup_started: SimTime = 0
    active_at: Optional[SimTime] = None
    media_end: Optional[SimTime] = None
    ended_at: Optional[SimTime] = None
    setup_delay: Optional[SimTime] = None
    ok_received: bool = False
    timeout_event: Optional[Event] = None
    flows: Dict[str, FlowLog] = dataclasses.field(
        default_factory=lambda: {FORWARD: FlowLog(), REVERSE: FlowLog()}
    )

    def transition(self, new_state: SessionState) -> None:
        if new_state not in _TRANSITIONS.get(self.state, ()):
            raise IllegalStateError(f"call {self.call_id}: cannot go from {self.state.value} to {new_state.value}")
        self.state = new_state

    def endpoints(self, direction: str) -> tuple[NodeId, NodeId]:
        if direction == FORWARD:
            return self.caller, self.callee
        return self.callee, self.caller


@dataclasses.dataclass
class CallStats:
    attempted: int = 0
    retargeted: int = 0
    blocked: int = 0
    established: int = 0
    abandoned: int = 0
    completed: int = 0
    truncated: int = 0
    setup_delay_total: SimTime = 0
    sip_lost: int = 0
    drops: Counter = dataclasses.field(default_factory=Counter)

    @property
    def mean_setup_delay_ms(self) -> float:
        return self.setup_delay_total / self.established / 1000 if self.established else 0.0


class VoipApp:
    """
    Interactive-voice application running on every station.

    Each station originates calls as a Poisson process. A station holds at
    most one generated call; arrivals at a busy station are re-targeted to a
    random idle station or counted as blocked.
    """

    def __init__(
        self,
        kernel: Kernel,
        network: Network,
        config: ScenarioConfig,
        rngs: RngFactory,
        metrics: MetricsCollector,
    ) -> None:
        self.kernel = kernel
        self.network = network
        self.config = config
        self.metrics = metrics
        self.profile = config.call_profile
        self.codec = config.codec
        self._arrivals = rngs.stream(CALL_ARRIVALS)
        self._durations = rngs.stream(CALL_DURATIONS)
        self._pairing = rngs.stream(CALL_PAIRING)
        self.frame_period = millis(self.codec.frame_period_ms)
        self.encode_stage = millis(self.codec.encode_delay_ms + self.codec.lookahead_ms)
        self.media_end = seconds(config.duration_s)
        self.teardown_grace = seconds(self.profile.teardown_grace_s)
        self.sessions: Dict[int, CallSession] = {}
        self.stats = CallStats()
        self._busy: Dict[NodeId, int] = {station: 0 for station in network.stations}
        self._next_call_id = 1
        network.on_receive = self._on_packet
        network.on_loss = self._on_loss

    # -- call generation -------------------------------------------------

    def start_call_generator(self) -> None:
        mean = seconds(self.profile.mean_interarrival_s)
        for station in self.network.stations:
            first = exp_sample(mean, self._arrivals)
            if first < self.media_end:
                self.kernel.call_later(first, self._on_call_arrival, station)

    def _idle(self, exclude: Optional[NodeId] = None) -> List[NodeId]:
        return [s for s, calls in self._busy.items() if calls == 0 and s != exclude]

    def _on_call_arrival(self, station: NodeId) -> None:
        now = self.kernel.now()
        next_at = now + exp_sample(seconds(self.profile.mean_interarrival_s), self._arrivals)
        if next_at < self.media_end:
            self.kernel.call_at(next_at, self._on_call_arrival, station)
        self.stats.attempted += 1

        caller = station
        if self._busy[caller]:
            idle = self._idle()
            if not idle:
                self.stats.blocked += 1
                return
            caller = self._pairing.choice(idle)
            self.stats.retargeted += 1

        candidates = self._idle(exclude=caller)
        if self.config.heterogeneous:
            caller_kind = self.network.subnet_of(caller).mac_kind
            candidates = [c for c in candidates if self.network.subnet_of(c).mac_kind != caller_kind]
        if not candidates:
            self.stats.blocked += 1
            return
        callee = self._pairing.choice(candidates)
        duration = exp_sample(seconds(self.profile.mean_duration_s), self._durations)
        self.sip_setup(caller, callee, duration)

    # -- signalling ------------------------------------------------------

    def sip_setup(self, caller: NodeId, callee: NodeId, duration: SimTime) -> CallSession:
        """Start the INVITE / 200-OK / ACK exchange via the subnet SIP proxies."""
        now = self.kernel.now()
        session = CallSession(
            call_id=self._next_call_id,
            caller=caller,
            callee=callee,
            duration=duration,
            setup_started=now,
        )
        self._next_call_id += 1
        self.sessions[session.call_id] = session
        self._busy[caller] += 1
        self._busy[callee] += 1
        session.timeout_event = self.kernel.call_later(
            seconds(self.profile.setup_timeout_s), self._on_setup_timeout, session
        )
        logger.debug("Call %s: %s -> %s INVITE", session.call_id, caller, callee)
        self._send_sip(session, SipMethod.INVITE, caller, callee)
        return session

    def _send_sip(self, session: CallSession, method: SipMethod, src: NodeId, dst: NodeId) -> None:
        self.network.send(
            Packet(
                kind=PacketKind.SIP,
                src=src,
                dst=dst,
                size_bytes=SIP_MESSAGE_BYTES[method],
                payload=SipMessage(session.call_id, method),
            )
        )

    def _on_sip(self, message: SipMessage) -> None:
        session = self.sessions[message.call_id]
        if session.state != SessionState.SETUP:
            return
        if message.method == SipMethod.INVITE:
            self._send_sip(session, SipMethod.OK, session.callee, session.caller)
        elif message.method == SipMethod.OK and not session.ok_received:
            session.ok_received = True
            self._send_sip(session, SipMethod.ACK, session.caller, session.callee)
        elif message.method == SipMethod.ACK:
            self._activate(session)

    def _activate(self, session: CallSession) -> None:
        now = self.kernel.now()
        session.transition(SessionState.ACTIVE)
        if session.timeout_event is not None:
            session.timeout_event.cancel()
        session.active_at = now
        session.setup_delay = now - session.setup_started
        session.media_end = min(now + session.duration, max(self.media_end, now))
        self.stats.established += 1
        self.stats.setup_delay_total += session.setup_delay
        logger.debug("Call %s active after %sus", session.call_id, session.setup_delay)
        self.emit_voice_frames(session)
        self.kernel.call_at(session.media_end, self._teardown, session)

    def _on_setup_timeout(self, session: CallSession) -> None:
        if session.state != SessionState.SETUP:
            return
        session.transition(SessionState.ABANDONED)
        session.ended_at = self.kernel.now()
        self.stats.abandoned += 1
        self._release(session)
        logger.debug("Call %s abandoned: setup timed out", session.call_id)

    def _teardown(self, session: CallSession) -> None:
        session.transition(SessionState.TERMINATED)
        session.ended_at = self.kernel.now()
        assert session.active_at is not None
        if session.ended_at < session.active_at + session.duration:
            self.stats.truncated += 1
        else:
            self.stats.completed += 1
        self._release(session)

    def _release(self, session: CallSession) -> None:
        self._busy[session.caller] -= 1
        self._busy[session.callee] -= 1

    # -- media -----------------------------------------------------------

    def emit_voice_frames(self, session: CallSession) -> None:
        """Start one periodic packet stream per direction."""
        assert session.active_at is not None
        first_send = session.active_at + self.encode_stage
        for direction in (FORWARD, REVERSE):
            if session.active_at < session.media_end:
                self.kernel.call_at(first_send, self._emit, session, direction)

    def _emit(self, session: CallSession, direction: str) -> None:
        now = self.kernel.now()
        generated = now - self.encode_stage
        if session.state != SessionState.ACTIVE or session.media_end is None or generated >= session.media_end:
            return
        flow = session.flows[direction]
        frame = VoiceFrame(
            call_id=session.call_id,
            direction=direction,
            seq=flow.next_seq,
            generated_at=generated,
            send_ts=now,
        )
        flow.next_seq += 1
        flow.sent += 1
        flow.outstanding[frame.seq] = now
        src, dst = session.endpoints(direction)
        self.network.send(
            Packet(kind=PacketKind.VOICE, src=src, dst=dst, size_bytes=self.codec.packet_bytes, payload=frame)
        )
        if generated + self.frame_period < session.media_end:
            self.kernel.call_at(now + self.frame_period, self._emit, session, direction)

    def receive_frame(self, session: CallSession, packet: Packet) -> Optional[QosSample]:
        """Timestamp an arriving voice packet and hand it to the metrics collector."""
        frame: VoiceFrame = packet.payload
        flow = session.flows[frame.direction]
        send_ts = flow.outstanding.pop(frame.seq, None)
        if send_ts is None:
            return None
        now = self.kernel.now()
        if session.ended_at is not None and now > session.ended_at + self.teardown_grace:
            flow.lost += 1
            self.stats.drops[DropCause.LATE.value] += 1
            self.metrics.record_lost(send_ts)
            return None
        flow.received += 1
        return self.metrics.record_received(
            session.call_id, frame.direction, frame.seq, send_ts, now, packet.size_bytes
        )

    # -- network callbacks ------------------------------------------------

    def _on_packet(self, packet: Packet) -> None:
        if packet.kind == PacketKind.SIP:
            self._on_sip(packet.payload)
        else:
            self.receive_frame(self.sessions[packet.payload.call_id], packet)

    def _on_loss(self, packet: Packet, cause: DropCause) -> None:
        self.stats.drops[cause.value] += 1
        if packet.kind == PacketKind.SIP:
            self.stats.sip_lost += 1
            return
        frame: VoiceFrame = packet.payload
        flow = self.sessions[frame.call_id].flows[frame.direction]
        send_ts = flow.outstanding.pop(frame.seq, None)
        if send_ts is not None:
            flow.lost += 1
            self.metrics.record_lost(send_ts)

    def finalize(self) -> None:
        """Count packets still in flight at the end of the run as lost."""
        for session in self.sessions.values():
            for direction, flow in session.flows.items():
                for send_ts in flow.outstanding.values():
                    flow.lost += 1
                    self.stats.drops[DropCause.UNDELIVERED.value] += 1
                    self.metrics.record_lost(send_ts)
                flow.outstanding.clear()
                self.metrics.close_flow(session.call_id, direction)
