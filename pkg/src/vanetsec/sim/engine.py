"""Deterministic discrete-event road simulator.

Vehicles drive along a 1-D road past evenly spaced base stations. Each run
covers one (protocol mode, traffic load) point. All randomness is drawn from
streams keyed on the scenario seed and a purpose string, and link losses are a
hash of (seed, packet, hop, receiver), so the secure mode and the three routing
baselines see the same mobility, traffic and loss pattern.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .. import crypto, mutesla, snep, zones
from ..mutesla import RecvStatus
from ..wire import HEADER_SIZE, TAG_SIZE, SecurePacket
from .config import Mode, ScenarioConfig
from .routing import (
    BMFR_PACKET_STATE_BYTES,
    DSDV_ENTRY_BYTES,
    GPSR_PACKET_STATE_BYTES,
    NEIGHBOR_ENTRY_BYTES,
    DSDVTable,
    NeighborTable,
    greedy_next_hop,
    sector_next_hop,
)

log = logging.getLogger(__name__)

BS_ID_BASE = 10_000
MAX_HOPS = 64
LINK_ATTEMPTS = 3
STALE_FACTOR = 3.0

# Fixed per-vehicle security state in SECURE mode.
ASSOC_KEY_BYTES = 4 * crypto.KEY_SIZE
COUNTER_BYTES = 8
COMMITMENT_BYTES = crypto.CHAIN_KEY_SIZE
SCHEDULE_BYTES = 20
SECURE_FIXED_BYTES = ASSOC_KEY_BYTES + COUNTER_BYTES + COMMITMENT_BYTES + SCHEDULE_BYTES


class EventKind(str, Enum):
    MOVE_TICK = "MOVE_TICK"
    BEACON = "BEACON"
    APP_SEND = "APP_SEND"
    DELIVER = "DELIVER"
    KEY_DISCLOSE = "KEY_DISCLOSE"
    ZONE_CROSS = "ZONE_CROSS"
    TABLE_UPDATE = "TABLE_UPDATE"


@dataclass
class PacketRecord:
    uid: int
    kind: str              # "unicast" or "broadcast"
    src: int
    dst: int
    send_time: float
    size: int
    mode: Mode
    deliver_time: float | None = None
    auth_time: float | None = None
    status: str = "in_flight"
    crypto_us: float = 0.0
    queue_ms: float = 0.0
    hops: int = 0


@dataclass
class CrossingRecord:
    vehicle: int
    time: float
    from_bs: int | None
    to_bs: int
    kind: str              # "handoff", "fallback" or "bootstrap"
    messages: int
    duration_ms: float
    vehicle_ctr_before: int | None = None
    vehicle_ctr_after: int | None = None
    infra_ctr_before: int | None = None
    infra_ctr_after: int | None = None
    commit_before: int | None = None
    commit_after: int | None = None


@dataclass
class MetricsRecord:
    """One CSV row: aggregates for a (load, mode) point."""

    load: float
    mode: Mode
    avg_e2e_delay_ms: float
    avg_auth_delay_ms: float
    delivery_ratio: float
    avg_storage_bytes: float
    max_storage_bytes: int
    packets_sent: int
    packets_delivered: int


@dataclass
class PointResult:
    metrics: MetricsRecord
    packets: list[PacketRecord]
    broadcasts: list[PacketRecord]
    crossings: list[CrossingRecord]
    storage_samples: list[tuple[float, int, dict[str, int]]]
    trace: list[str]
    events_processed: int
    avg_crypto_delay_ms: float

    @property
    def lost(self) -> int:
        return sum(1 for p in self.packets if p.status == "lost")

    @property
    def in_flight(self) -> int:
        return sum(1 for p in self.packets if p.status == "in_flight")


@dataclass(eq=False)
class Node:
    id: int
    is_bs: bool
    position: float
    speed: float = 0.0
    clock_offset: float = 0.0
    busy_until: float = 0.0
    queue: deque = field(default_factory=deque)
    dsdv: DSDVTable | None = None
    neighbors: NeighborTable | None = None
    agent: zones.Vehicle | None = None
    station: zones.BaseStation | None = None

    def queued_state(self, now: float) -> int:
        q = self.queue
        while q and q[0][0] <= now:
            q.popleft()
        return sum(b for _, b in q)


def _chance(seed: int, *parts) -> float:
    h = hashlib.blake2b(f"{seed}|{parts}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "big") / 2.0 ** 64


class Simulation:
    """One mode at one traffic load.

    ``positions`` optionally pins the vehicles' starting points (one per vehicle)
    instead of drawing them from the mobility stream.
    """

    def __init__(self, config: ScenarioConfig, mode: Mode, load: float, trace: bool = False,
                 positions: list[float] | None = None):
        self.cfg = config
        self.mode = Mode(mode)
        self.load = float(load)
        self.tracing = trace
        self.trace: list[str] = []
        self.now = 0.0
        self.end = config.sim_duration_s * 1000.0
        self.warmup = config.warmup_s * 1000.0
        self._heap: list = []
        self._seq = 0
        self._uid = 0
        self.events_processed = 0
        self.packets: list[PacketRecord] = []
        self.broadcasts: list[PacketRecord] = []
        self.crossings: list[CrossingRecord] = []
        self.samples: list[tuple[float, int, dict[str, int]]] = []
        seed = config.rng_seed
        self.seed = seed

        keys = random.Random(f"{seed}/keys")
        self.master_key = keys.randbytes(crypto.KEY_SIZE)
        self.chain = None
        if self.mode is Mode.SECURE_PRIMITIVES:
            n = math.ceil(self.end / config.tesla_interval) + config.tesla_delay + 2
            self.chain = mutesla.generate_chain(keys.randbytes(crypto.CHAIN_KEY_SIZE), n, 0,
                                                config.tesla_interval, config.tesla_delay)

        mob = random.Random(f"{seed}/mobility")
        self.vehicles: list[Node] = []
        if positions is not None and len(positions) != config.vehicle_count:
            raise ValueError("need one starting position per vehicle")
        for k in range(config.vehicle_count):
            v = Node(k + 1, False, mob.uniform(0, config.road_length),
                     mob.uniform(config.speed_min, config.speed_max),
                     mob.uniform(-config.clock_skew, config.clock_skew))
            if positions is not None:
                v.position = float(positions[k]) % config.road_length
            self.vehicles.append(v)
        self.stations = [Node(BS_ID_BASE + k, True, pos)
                         for k, pos in enumerate(config.bs_positions)]
        self.nodes = {n.id: n for n in self.vehicles + self.stations}
        self._traffic = {v.id: random.Random(f"{seed}/traffic/{v.id}") for v in self.vehicles}
        self._alerts = {b.id: random.Random(f"{seed}/alerts/{b.id}") for b in self.stations}
        self._phase = random.Random(f"{seed}/phase")

        for n in self.nodes.values():
            if self.mode is Mode.DSDV:
                n.dsdv = DSDVTable(n.id)
            elif self.mode in (Mode.GPSR, Mode.BMFR):
                n.neighbors = NeighborTable(n.id)
        if self.mode in (Mode.GPSR, Mode.BMFR):
            for b in self.stations:
                for o in self.stations:
                    if o is not b:
                        b.neighbors.permanent[o.id] = o.position
        if self.mode is Mode.SECURE_PRIMITIVES:
            for b in self.stations:
                b.station = zones.BaseStation(b.id, b.position, config.bs_radius, self.master_key,
                                              self.chain, rng=random.Random(f"{seed}/nonce/{b.id}"))
            for v in self.vehicles:
                v.agent = zones.Vehicle(v.id, self.master_key, v.position, config.max_skew,
                                        rng=random.Random(f"{seed}/nonce/{v.id}"))

    # -- event plumbing -------------------------------------------------

    def _schedule(self, t: float, kind: EventKind, *data) -> None:
        if t > self.end:
            return
        heapq.heappush(self._heap, (t, self._seq, kind, data))
        self._seq += 1

    def _new_uid(self) -> int:
        self._uid += 1
        return self._uid

    def run(self) -> PointResult:
        if not self.vehicles:
            return self._result()
        cfg = self.cfg
        self._schedule(0.0, EventKind.MOVE_TICK, 0)
        for n in self.nodes.values():
            if self.mode is Mode.DSDV:
                self._schedule(self._phase.uniform(0, cfg.table_interval), EventKind.TABLE_UPDATE, n.id)
            else:
                self._schedule(self._phase.uniform(0, cfg.beacon_interval), EventKind.BEACON, n.id)
        for v in self.vehicles:
            self._schedule(self.warmup + self._traffic[v.id].expovariate(self.load / 1000.0),
                           EventKind.APP_SEND, v.id)
        for b in self.stations:
            self._schedule(self.warmup + self._alerts[b.id].expovariate(cfg.broadcast_rate / 1000.0),
                           EventKind.APP_SEND, b.id)
        if self.mode is Mode.SECURE_PRIMITIVES:
            for v in self.vehicles:
                self._schedule(0.0, EventKind.ZONE_CROSS, v.id, False)
            self._schedule(float(cfg.tesla_interval), EventKind.KEY_DISCLOSE, 1)

        handlers = {
            EventKind.MOVE_TICK: self._on_move_tick,
            EventKind.BEACON: self._on_beacon,
            EventKind.APP_SEND: self._on_app_send,
            EventKind.DELIVER: self._on_deliver,
            EventKind.KEY_DISCLOSE: self._on_key_disclose,
            EventKind.ZONE_CROSS: self._on_zone_cross,
            EventKind.TABLE_UPDATE: self._on_table_update,
        }
        heap = self._heap
        while heap:
            t, _, kind, data = heapq.heappop(heap)
            self.now = t
            self.events_processed += 1
            if self.tracing:
                self.trace.append(f"{t:.4f} {kind.value} {' '.join(_trace_arg(x) for x in data)}")
            handlers[kind](t, *data)
        return self._result()

    # -- geometry -------------------------------------------------------

    def _link_ok(self, a: Node, b: Node) -> bool:
        if a.is_bs and b.is_bs:
            return True
        radius = self.cfg.bs_radius if (a.is_bs or b.is_bs) else self.cfg.v2v_radius
        return abs(a.position - b.position) <= radius

    def _in_range(self, sender: Node, vehicles_only: bool = False) -> list[Node]:
        out = []
        for n in (self.vehicles if vehicles_only else self.nodes.values()):
            if n is sender or (n.is_bs and sender.is_bs):
                continue
            if self._link_ok(sender, n):
                out.append(n)
        return out

    def _lost(self, *parts) -> bool:
        return _chance(self.seed, *parts) < self.cfg.loss_prob

    def _transmit(self, sender: Node, t_ready: float, state_bytes: int = 0) -> tuple[float, float]:
        """Reserve the sender's radio; returns (start, end) of the transmission."""
        start = max(t_ready, sender.busy_until)
        end = start + self.cfg.per_hop_latency
        sender.busy_until = end
        if state_bytes:
            sender.queue.append((end, state_bytes))
        return start, end

    def _crypto_ms(self, blocks: int) -> float:
        return blocks * self.cfg.crypto_cost / 1000.0

    # -- mobility and zones --------------------------------------------

    def _on_move_tick(self, t: float, tick: int) -> None:
        cfg = self.cfg
        dt = cfg.move_tick / 1000.0
        if tick > 0:
            for v in self.vehicles:
                v.position += v.speed * dt
                wrapped = v.position >= cfg.road_length
                if wrapped:
                    v.position -= cfg.road_length
                if v.agent is not None:
                    v.agent.position = v.position
                    bs = self._station_of(v)
                    if wrapped or bs is None or not bs.covers(v.position):
                        self._schedule(t, EventKind.ZONE_CROSS, v.id, wrapped)
        per_sample = max(1, round(cfg.sample_interval / cfg.move_tick))
        if t >= self.warmup and tick % per_sample == 0:
            self._sample_storage(t)
        self._schedule(t + cfg.move_tick, EventKind.MOVE_TICK, tick + 1)

    def _station_of(self, v: Node) -> zones.BaseStation | None:
        if v.agent is None or v.agent.zone is None:
            return None
        return self.nodes[v.agent.zone].station

    def _best_station(self, v: Node) -> Node | None:
        covering = [b for b in self.stations if b.station.covers(v.position)]
        if not covering:
            return None
        return min(covering, key=lambda b: (abs(b.position - v.position), b.id))

    def _on_zone_cross(self, t: float, vid: int, wrapped: bool) -> None:
        v = self.nodes[vid]
        agent = v.agent
        current = self._station_of(v)
        if not wrapped and current is not None and current.covers(v.position):
            return
        target = self._best_station(v)
        if wrapped and current is not None:
            current.sessions.pop(vid, None)
            agent.zone = None
            current = None
        if target is None:
            if current is not None:
                current.sessions.pop(vid, None)
            agent.zone = None
            return
        before = self._counters(agent, current)
        commit_before = agent.auth_state.commit_index if agent.auth_state else None
        if current is None:
            ex = zones.bootstrap(agent, target.station, t)
        else:
            ex = zones.handoff(agent, current, target.station, t)
        senders = self._control_senders(ex, v, target)
        t_done = t
        for pkt, sender in zip(ex.messages, senders):
            blocks = snep.seal_block_ops(len(pkt.payload), 8)
            _, t_done = self._transmit(sender, t_done + 2 * self._crypto_ms(blocks))
        after = self._counters(agent, target.station)
        self.crossings.append(CrossingRecord(
            vid, t, current.id if current else None, target.id, ex.kind, ex.message_count,
            t_done - t, before[0], after[0], before[1], after[1], commit_before,
            agent.auth_state.commit_index if agent.auth_state else None))

    @staticmethod
    def _counters(agent: zones.Vehicle, bs: zones.BaseStation | None) -> tuple[int | None, int | None]:
        if bs is None or agent.id not in bs.sessions:
            return None, None
        a = bs.sessions[agent.id].association
        return a.ctr_recv, a.ctr_send

    def _control_senders(self, ex: zones.Exchange, v: Node, bs: Node) -> list[Node]:
        if ex.kind == "handoff":
            return [v]
        boot = [v, bs, v, bs]
        return boot if ex.kind == "bootstrap" else [v] + boot

    # -- storage ----------------------------------------------------------

    def storage_usage(self, node_id: int, t: float | None = None) -> dict[str, int]:
        """Bytes of protocol state held by a node, by component."""
        t = self.now if t is None else t
        n = self.nodes[node_id]
        if self.mode is Mode.SECURE_PRIMITIVES:
            agent = n.agent
            if agent is None or agent.auth_state is None:
                return {}
            return {
                "association_keys": ASSOC_KEY_BYTES,
                "counters": COUNTER_BYTES,
                "chain_commitment": COMMITMENT_BYTES,
                "schedule": SCHEDULE_BYTES,
                "tesla_buffer": agent.auth_state.buffered_bytes,
            }
        if self.mode is Mode.DSDV:
            n.dsdv.expire(t, STALE_FACTOR * self.cfg.table_interval)
            return {"routing_table": len(n.dsdv) * DSDV_ENTRY_BYTES,
                    "pending_updates": n.queued_state(t)}
        n.neighbors.expire(t, STALE_FACTOR * self.cfg.beacon_interval)
        return {"neighbor_table": len(n.neighbors) * NEIGHBOR_ENTRY_BYTES,
                "forwarding_state": n.queued_state(t)}

    def _sample_storage(self, t: float) -> None:
        for v in self.vehicles:
            usage = self.storage_usage(v.id, t)
            self.samples.append((t, v.id, usage))

    # -- traffic ----------------------------------------------------------

    def _body(self, uid: int) -> bytes:
        size = self.cfg.message_size
        return uid.to_bytes(8, "big")[-size:].rjust(size, b"\x00")

    def _on_app_send(self, t: float, nid: int) -> None:
        node = self.nodes[nid]
        if node.is_bs:
            rng = self._alerts[nid]
            self._schedule(t + rng.expovariate(self.cfg.broadcast_rate / 1000.0), EventKind.APP_SEND, nid)
            self._send_alert(t, node)
            return
        rng = self._traffic[nid]
        self._schedule(t + rng.expovariate(self.load / 1000.0), EventKind.APP_SEND, nid)
        if len(self.vehicles) < 2:
            return
        k = rng.randrange(len(self.vehicles) - 1)
        dst = self.vehicles[k if k < nid - 1 else k + 1]
        uid = self._new_uid()
        size = self.cfg.message_size + HEADER_SIZE
        if self.mode is Mode.SECURE_PRIMITIVES:
            size += TAG_SIZE
        rec = PacketRecord(uid, "unicast", nid, dst.id, t, size, self.mode)
        self.packets.append(rec)
        if self.mode is Mode.SECURE_PRIMITIVES:
            self._secure_uplink(t, rec, node)
        else:
            self._forward(t, rec, node, self._body(uid))

    def _drop(self, rec: PacketRecord, reason: str) -> None:
        rec.status = "lost"
        if self.tracing:
            self.trace.append(f"{self.now:.4f} DROP {rec.uid} {reason}")

    # secure mode: vehicle -> BS -> backbone -> BS -> vehicle

    def _secure_uplink(self, t: float, rec: PacketRecord, v: Node) -> None:
        bs = self._station_of(v)
        if bs is None:
            self._drop(rec, "no_session")
            return
        pkt = snep.seal(v.agent.assoc, self._body(rec.uid))
        c = self._crypto_ms(snep.seal_block_ops(self.cfg.message_size))
        rec.crypto_us += c * 1000.0
        start, end = self._transmit(v, t + c)
        rec.queue_ms += start - (t + c)
        rec.hops += 1
        bs_node = self.nodes[bs.id]
        if not self._link_ok(v, bs_node) or self._lost(rec.uid, rec.hops, bs.id):
            self._drop(rec, "link")
            return
        self._schedule(end, EventKind.DELIVER, bs.id, "up", rec, pkt)

    def _secure_at_bs(self, t: float, bs_node: Node, rec: PacketRecord, pkt) -> None:
        station = bs_node.station
        session = station.sessions.get(rec.src)
        if session is None:
            self._drop(rec, "stale_zone")
            return
        try:
            plain = snep.open_packet(session.association, pkt)
        except snep.SnepError:
            self._drop(rec, "mac")
            return
        c = self._crypto_ms(snep.seal_block_ops(len(plain)))
        rec.crypto_us += c * 1000.0
        self._secure_route_down(t + c, bs_node, rec, plain)

    def _secure_route_down(self, t: float, bs_node: Node, rec: PacketRecord, plain: bytes) -> None:
        dst = self.nodes[rec.dst]
        session = bs_node.station.sessions.get(rec.dst)
        if session is None:
            target = dst.agent.zone
            if target is None or target == bs_node.id or rec.hops > MAX_HOPS:
                self._drop(rec, "no_session")
                return
            rec.hops += 1
            self._schedule(t + self.cfg.backbone_latency, EventKind.DELIVER, target, "backbone", rec, plain)
            return
        pkt = snep.seal(session.association, plain)
        c = self._crypto_ms(snep.seal_block_ops(len(plain)))
        rec.crypto_us += c * 1000.0
        start, end = self._transmit(bs_node, t + c)
        rec.queue_ms += start - (t + c)
        rec.hops += 1
        if not self._link_ok(bs_node, dst) or self._lost(rec.uid, rec.hops, dst.id):
            self._drop(rec, "link")
            return
        self._schedule(end, EventKind.DELIVER, dst.id, "down", rec, pkt)

    def _secure_at_vehicle(self, t: float, v: Node, rec: PacketRecord, pkt) -> None:
        try:
            snep.open_packet(v.agent.assoc, pkt)
        except snep.SnepError:
            self._drop(rec, "mac")
            return
        c = self._crypto_ms(snep.seal_block_ops(self.cfg.message_size))
        rec.crypto_us += c * 1000.0
        rec.deliver_time = rec.auth_time = t + c
        rec.status = "delivered"

    # baselines: hop-by-hop forwarding

    def _forward(self, t: float, rec: PacketRecord, node: Node, body: bytes) -> None:
        if node.id == rec.dst:
            rec.deliver_time = rec.auth_time = t
            rec.status = "delivered"
            return
        if rec.hops >= MAX_HOPS:
            self._drop(rec, "hop_limit")
            return
        dst = self.nodes[rec.dst]
        geographic = self.mode is not Mode.DSDV
        if geographic:
            node.neighbors.expire(t, STALE_FACTOR * self.cfg.beacon_interval)
            rule = greedy_next_hop if self.mode is Mode.GPSR else sector_next_hop
            state = GPSR_PACKET_STATE_BYTES if self.mode is Mode.GPSR else BMFR_PACKET_STATE_BYTES
        else:
            state = 0
        t_ready = t
        for _ in range(LINK_ATTEMPTS if geographic else 1):
            if geographic:
                nh = rule(node.position, rec.dst, dst.position, node.neighbors.positions())
            else:
                nh = node.dsdv.next_hop(rec.dst)
            if nh is None or nh == node.id:
                self._drop(rec, "no_route")
                return
            nxt = self.nodes[nh]
            if node.is_bs and nxt.is_bs:
                rec.hops += 1
                self._schedule(t_ready + self.cfg.backbone_latency, EventKind.DELIVER, nh, "fwd", rec, body)
                return
            start, end = self._transmit(node, t_ready, state)
            rec.queue_ms += start - t_ready
            if self._link_ok(node, nxt):
                break
            # no link-layer ack: forget the neighbor and pick again
            if geographic:
                node.neighbors.entries.pop(nh, None)
            t_ready = end
        else:
            self._drop(rec, "link")
            return
        rec.hops += 1
        if self._lost(rec.uid, rec.hops, nh):
            self._drop(rec, "link")
            return
        self._schedule(end, EventKind.DELIVER, nh, "fwd", rec, body)

    # base-station zone alerts (μTESLA broadcasts in secure mode)

    def _send_alert(self, t: float, bs: Node) -> None:
        uid = self._new_uid()
        body = self._body(uid)
        pkt = None
        c = 0.0
        if self.mode is Mode.SECURE_PRIMITIVES:
            pkt = mutesla.bcast_seal(self.chain, t, bs.id, body)
            c = self._crypto_ms(crypto.cbc_mac_blocks(HEADER_SIZE + len(pkt.payload)))
            size = len(pkt)
        else:
            size = HEADER_SIZE + len(body)
        _, end = self._transmit(bs, t + c)
        for v in self._in_range(bs, vehicles_only=True):
            rec = PacketRecord(uid, "broadcast", bs.id, v.id, t, size, self.mode, crypto_us=c * 1000.0)
            self.broadcasts.append(rec)
            if self._lost(uid, 1, v.id):
                rec.status = "lost"
                continue
            self._schedule(end, EventKind.DELIVER, v.id, "alert", rec, pkt)

    def _on_key_disclose(self, t: float, k: int) -> None:
        d = self.cfg.tesla_delay
        self._schedule(t + self.cfg.tesla_interval, EventKind.KEY_DISCLOSE, k + 1)
        if k < d or k - d > self.chain.n:
            return
        for bs in self.stations:
            pkt = mutesla.disclose_packet(self.chain, k - d, bs.id)
            _, end = self._transmit(bs, t)
            for v in self._in_range(bs, vehicles_only=True):
                if not self._lost("disclose", k, bs.id, v.id):
                    self._schedule(end, EventKind.DELIVER, v.id, "disclose", None, pkt)

    def _tesla_receive(self, t: float, v: Node, rec: PacketRecord | None, pkt) -> None:
        state = v.agent.auth_state
        if state is None:
            if rec is not None:
                rec.status = "lost"
            return
        local = t + v.clock_offset
        status, result = mutesla.receive(state, pkt, local, token=rec)
        if rec is not None:
            if status is RecvStatus.REJECTED_UNSAFE or status is RecvStatus.REJECTED_STALE:
                rec.status = "rejected"
            else:
                rec.deliver_time = t
                rec.status = "delivered"
        verify = self._crypto_ms(crypto.cbc_mac_blocks(HEADER_SIZE + 16 + self.cfg.message_size))
        for rel in result.authenticated:
            r = rel.token
            r.crypto_us += verify * 1000.0
            r.auth_time = t + verify
            r.status = "authenticated"
        for rel in result.failed:
            rel.token.status = "auth_failed"

    # -- beacons / tables / delivery --------------------------------------

    def _on_beacon(self, t: float, nid: int) -> None:
        node = self.nodes[nid]
        self._schedule(t + self.cfg.beacon_interval, EventKind.BEACON, nid)
        if self.mode is Mode.SECURE_PRIMITIVES:
            if node.is_bs:
                return
            bs = self._station_of(node)
            if bs is None:
                return
            body = int(node.position).to_bytes(4, "big") + int(node.speed * 100).to_bytes(4, "big")
            pkt = snep.seal(node.agent.assoc, body)
            c = self._crypto_ms(snep.seal_block_ops(len(body)))
            _, end = self._transmit(node, t + c)
            bs_node = self.nodes[bs.id]
            if self._link_ok(node, bs_node) and not self._lost("beacon", nid, t, bs.id):
                self._schedule(end, EventKind.DELIVER, bs.id, "status", None, pkt)
            return
        _, end = self._transmit(node, t)
        pos = node.position
        for r in self._in_range(node):
            if not self._lost("beacon", nid, t, r.id):
                self._schedule(end, EventKind.DELIVER, r.id, "beacon", nid, pos)

    def _on_table_update(self, t: float, nid: int) -> None:
        node = self.nodes[nid]
        interval = self.cfg.table_interval
        self._schedule(t + interval, EventKind.TABLE_UPDATE, nid)
        node.dsdv.expire(t, STALE_FACTOR * interval)
        advert = node.dsdv.advertise(t)
        _, end = self._transmit(node, t, len(advert) * DSDV_ENTRY_BYTES)
        for r in self._in_range(node):
            if not self._lost("table", nid, t, r.id):
                self._schedule(end, EventKind.DELIVER, r.id, "table", nid, advert)
        if node.is_bs:
            for b in self.stations:
                if b is not node:
                    self._schedule(t + self.cfg.backbone_latency, EventKind.DELIVER, b.id, "table", nid, advert)

    def _on_deliver(self, t: float, nid: int, what: str, a, b) -> None:
        node = self.nodes[nid]
        if what == "fwd":
            self._forward(t, a, node, b)
        elif what == "beacon":
            node.neighbors.heard(a, b, t)
        elif what == "table":
            node.dsdv.merge(a, b, t)
        elif what == "up":
            self._secure_at_bs(t, node, a, b)
        elif what == "backbone":
            self._secure_route_down(t, node, a, b)
        elif what == "down":
            self._secure_at_vehicle(t, node, a, b)
        elif what == "alert":
            if self.mode is Mode.SECURE_PRIMITIVES:
                self._tesla_receive(t, node, a, b)
            else:
                a.deliver_time = a.auth_time = t
                a.status = "authenticated"
        elif what == "disclose":
            self._tesla_receive(t, node, None, b)
        elif what == "status":
            session = node.station.sessions.get(b.src_id)
            if session is not None:
                try:
                    snep.open_packet(session.association, b)
                except snep.SnepError:
                    pass

    # -- results ------------------------------------------------------------

    def _result(self) -> PointResult:
        delivered = [p for p in self.packets if p.status == "delivered"]
        authed = [p for p in self.broadcasts if p.auth_time is not None]
        totals = [sum(u.values()) for _, _, u in self.samples]
        avg_delay = _mean([p.deliver_time - p.send_time for p in delivered])
        metrics = MetricsRecord(
            load=self.load,
            mode=self.mode,
            avg_e2e_delay_ms=avg_delay,
            avg_auth_delay_ms=_mean([p.auth_time - p.send_time for p in authed]),
            delivery_ratio=len(delivered) / len(self.packets) if self.packets else 0.0,
            avg_storage_bytes=_mean(totals),
            max_storage_bytes=max(totals, default=0),
            packets_sent=len(self.packets),
            packets_delivered=len(delivered),
        )
        return PointResult(metrics, self.packets, self.broadcasts, self.crossings, self.samples,
                           self.trace, self.events_processed,
                           _mean([p.crypto_us / 1000.0 for p in delivered]))


def _mean(xs) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs) if xs else 0.0


def _trace_arg(x) -> str:
    if isinstance(x, PacketRecord):
        return f"pkt{x.uid}"
    if isinstance(x, SecurePacket):
        return x.ptype.name
    if isinstance(x, bytes):
        return f"{len(x)}B"
    if isinstance(x, list):
        return f"table[{len(x)}]"
    if isinstance(x, float):
        return f"{x:.3f}"
    return str(x)


@dataclass
class SweepResult:
    points: list[PointResult]

    @property
    def rows(self) -> list[MetricsRecord]:
        return [p.metrics for p in self.points]

    def point(self, load: float, mode: Mode) -> PointResult:
        for p in self.points:
            if p.metrics.load == load and p.metrics.mode is Mode(mode):
                return p
        raise KeyError((load, mode))


def run(config: ScenarioConfig, trace: bool = False, progress=None) -> SweepResult:
    """Simulate every (load, mode) point of the scenario, loads outermost."""
    points = []
    for load in config.traffic_load:
        for mode in config.protocol_mode:
            res = Simulation(config, mode, load, trace=trace).run()
            log.debug("load %s mode %s: %d events", load, mode.value, res.events_processed)
            if progress is not None:
                progress(res)
            points.append(res)
    return SweepResult(points)
