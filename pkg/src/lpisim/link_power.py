"""EEE port power states, the two-sided power-state handshake and PDT timers.

Each link's two ports always move through the same phases together:

    Wake -> Handshaking -> TransitionDown --t_s--> Sleep
    Sleep -> Handshaking -> TransitionUp   --t_w--> Wake

A handshake is a request/response exchange of 64 B control frames. The
requester starts the transition (for both ends) one round-trip after it sent
the request. Down requests are rejected when the responder still has queued
output or a transmission in flight; up requests are always accepted. When
two requests cross on the wire, the one from the lower port id wins.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

from .des import NS, US, SimulationError

if TYPE_CHECKING:  # pragma: no cover
    from .fabric import Port


class PowerState(enum.Enum):
    WAKE = "wake"
    SLEEP = "sleep"
    TRANSITION_UP = "transition_up"
    TRANSITION_DOWN = "transition_down"
    HANDSHAKING = "handshaking"


STATES = tuple(PowerState)


@dataclass(frozen=True)
class LinkPowerProfile:
    name: str
    power: float  # W while in this state
    t_w: int  # ps, sleep -> Wake
    t_s: int  # ps, Wake -> sleep


WAKE = LinkPowerProfile("wake", 24.0, 0, 0)
FAST_WAKE = LinkPowerProfile("fast_wake", 9.6, 375 * NS, 200 * NS)
DEEP_SLEEP = LinkPowerProfile("deep_sleep", 2.4, 4480 * NS, 2 * US)

PROFILES = {p.name: p for p in (FAST_WAKE, DEEP_SLEEP)}


def get_profile(name: str) -> LinkPowerProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown sleep profile {name!r}; expected one of {sorted(PROFILES)}")


CONTROL_FRAME_BYTES = 64


@dataclass
class Handshake:
    role: str  # "req" | "resp"
    direction: str  # "down" | "up"
    started: int


class LinkPowerMixin:
    """Power-state logic for :class:`lpisim.fabric.Network` ports.

    Relies on the host class for ``sim``, ``profile``, ``wire_delay(port)``,
    ``ser_time(nbytes)``, ``try_transmit(port)`` and ``reject_retry``.
    """

    # -- bookkeeping ----------------------------------------------------------
    def set_state(self, port: "Port", new: PowerState) -> None:
        now = self.sim.now
        old = port.state
        port.time_in[old] += now - port.state_entered_at
        port.state = new
        port.state_entered_at = now
        port.transitions += 1
        if self.state_log is not None:
            self.state_log.append((now, port.id, old.value, new.value))

    def state_power(self, port: "Port", state: Optional[PowerState] = None) -> float:
        state = port.state if state is None else state
        return self.profile.power if state is PowerState.SLEEP else self.wake_power

    # -- PDT timer ------------------------------------------------------------
    def arm_pdt(self, port: "Port") -> None:
        tpdt = port.policy.tpdt
        if tpdt is None or port.state is not PowerState.WAKE:
            return
        self.sim.cancel(port.timer)
        port.armed_tpdt = tpdt
        port.timer = self.sim.schedule_in(tpdt, "pdt-expiry", self._pdt_expired, port,
                                          entity=port.id)

    def cancel_pdt(self, port: "Port") -> None:
        if port.timer is not None:
            self.sim.cancel(port.timer)
            port.timer = None

    def _pdt_expired(self, port: "Port") -> None:
        port.timer = None
        if port.state is PowerState.WAKE and not port.out_q and not port.transmitting:
            self.request_power_down(port)

    def on_transmission_complete_power(self, port: "Port") -> None:
        """Queue just drained: arm the PDT timer."""
        self.arm_pdt(port)

    def on_reception_power(self, port: "Port") -> None:
        """Data arriving over the link cancels the receiving port's timer."""
        self.cancel_pdt(port)

    # -- control frames -------------------------------------------------------
    def _send_ctrl(self, port: "Port", msg: str) -> None:
        ser = self.ser_time(CONTROL_FRAME_BYTES)
        port.ctrl_busy_until = max(port.ctrl_busy_until, self.sim.now) + ser
        self.ctrl_frames += 1
        self.sim.schedule(port.ctrl_busy_until + self.wire_delay(port), "sync-message",
                          self._on_ctrl, port.peer, msg, port.id, entity=port.peer.id)

    def request_power_down(self, port: "Port") -> None:
        if port.state is not PowerState.WAKE:
            raise SimulationError(f"power-down requested on port {port.id} in {port.state}")
        self.cancel_pdt(port)
        self.set_state(port, PowerState.HANDSHAKING)
        port.hs = Handshake("req", "down", self.sim.now)
        self.handshakes += 1
        self._send_ctrl(port, "REQ_DOWN")

    def request_power_up(self, port: "Port") -> None:
        if port.state is not PowerState.SLEEP:
            raise SimulationError(f"power-up requested on port {port.id} in {port.state}")
        self.set_state(port, PowerState.HANDSHAKING)
        port.hs = Handshake("req", "up", self.sim.now)
        self.handshakes += 1
        self._send_ctrl(port, "REQ_UP")

    def _would_reject(self, port: "Port") -> bool:
        return bool(port.out_q) or port.transmitting

    def _on_ctrl(self, port: "Port", msg: str, sender_id: int) -> None:
        hs = port.hs
        if msg == "REQ_DOWN":
            if port.state is PowerState.HANDSHAKING:
                if not (hs.role == "req" and hs.direction == "down"):
                    raise SimulationError(f"port {port.id}: REQ_DOWN during {hs}")
                if sender_id > port.id:
                    return  # our own request wins; the peer will answer it
                # peer's request wins: withdraw ours and answer as responder
                if self._would_reject(port):
                    port.hs = None
                    port.wake_after_down = False
                    self.set_state(port, PowerState.WAKE)
                    self._send_ctrl(port, "NAK_DOWN")
                    self.try_transmit(port)
                else:
                    port.hs = Handshake("resp", "down", self.sim.now)
                    self._send_ctrl(port, "ACK_DOWN")
                return
            if port.state is not PowerState.WAKE:
                raise SimulationError(f"port {port.id}: REQ_DOWN in {port.state}")
            self.cancel_pdt(port)
            if self._would_reject(port):
                self.rejections += 1
                self._send_ctrl(port, "NAK_DOWN")
            else:
                self.set_state(port, PowerState.HANDSHAKING)
                port.hs = Handshake("resp", "down", self.sim.now)
                self._send_ctrl(port, "ACK_DOWN")
        elif msg == "REQ_UP":
            if port.state is PowerState.HANDSHAKING:
                if not (hs.role == "req" and hs.direction == "up"):
                    raise SimulationError(f"port {port.id}: REQ_UP during {hs}")
                if sender_id > port.id:
                    return
                port.hs = Handshake("resp", "up", self.sim.now)
                self._send_ctrl(port, "ACK_UP")
                return
            if port.state is not PowerState.SLEEP:
                raise SimulationError(f"port {port.id}: REQ_UP in {port.state}")
            self.set_state(port, PowerState.HANDSHAKING)
            port.hs = Handshake("resp", "up", self.sim.now)
            self._send_ctrl(port, "ACK_UP")
        elif msg == "NAK_DOWN":
            if hs is None or hs.role != "req" or hs.direction != "down":
                return  # stale answer to a withdrawn request
            port.hs = None
            port.wake_after_down = False
            self.set_state(port, PowerState.WAKE)
            if port.out_q:
                self.try_transmit(port)
            elif self.reject_retry == "rearm":
                self.arm_pdt(port)
        elif msg == "ACK_DOWN":
            if hs is None or hs.role != "req" or hs.direction != "down":
                return
            self._start_transition(port, PowerState.TRANSITION_DOWN)
        elif msg == "ACK_UP":
            if hs is None or hs.role != "req" or hs.direction != "up":
                return
            self._start_transition(port, PowerState.TRANSITION_UP)
        else:  # pragma: no cover
            raise SimulationError(f"unknown control message {msg!r}")

    def _start_transition(self, port: "Port", state: PowerState) -> None:
        peer = port.peer
        if peer.state is not PowerState.HANDSHAKING or peer.hs is None or peer.hs.role != "resp":
            raise SimulationError(f"link {port.id}-{peer.id}: peer not synchronised")
        now = self.sim.now
        for p in (port, peer):
            p.hs = None
            p.sync_log_last = now
            self.cancel_pdt(p)
            self.set_state(p, state)
        dur = self.profile.t_s if state is PowerState.TRANSITION_DOWN else self.profile.t_w
        done = self._down_done if state is PowerState.TRANSITION_DOWN else self._up_done
        self.sim.schedule_in(dur, "transition-end", done, port, peer, entity=port.id)

    def _down_done(self, a: "Port", b: "Port") -> None:
        self.set_state(a, PowerState.SLEEP)
        self.set_state(b, PowerState.SLEEP)
        self.sleeps += 1
        for p in (a, b):
            if p.wake_after_down or p.out_q:
                p.wake_after_down = False
                if p.state is PowerState.SLEEP:
                    self.request_power_up(p)

    def _up_done(self, a: "Port", b: "Port") -> None:
        self.set_state(a, PowerState.WAKE)
        self.set_state(b, PowerState.WAKE)
        for p in (a, b):
            p.wake_after_down = False
            if p.out_q:
                self.try_transmit(p)

    def on_output_enqueue_power(self, port: "Port") -> None:
        """A packet reached the output queue; wake the link if needed."""
        self.cancel_pdt(port)
        st = port.state
        if st is PowerState.SLEEP:
            self.request_power_up(port)
        elif st is PowerState.TRANSITION_DOWN:
            port.wake_after_down = True
        elif st is PowerState.HANDSHAKING and port.hs is not None and port.hs.direction == "down":
            port.wake_after_down = True
