"""Discrete-event drone-swarm simulator.

One run moves the swarm, drives the bee-message routing protocol at the BM
rate and pushes a message every ``message_interval`` seconds from a random
sender to a random two-hop receiver. Relays are chosen according to the
enabled features: consensus among the routing candidates (in cyberspace or
over the physical channel), coded multipath forwarding, or plain
top-fitness forwarding.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analytics
from .abc_routing import BeeRouting, NetworkView
from .analytics import ChannelParams, MobilityParams, truncated_normal
from .config import ScenarioConfig
from .cyberuav import (
    Cyberspace,
    Ledger,
    Role as ReplicaRole,
    append_block,
    build_transaction,
    default_servers,
    map_to_cyberspace,
    update_physical,
)
from .ponc import ConsensusFailed, ConsensusNode, run_consensus

PROPAGATION_SPEED = analytics.LIGHT_SPEED

# stream tags for keyed random draws
_HOP, _CONSENSUS, _P2PC = 1, 2, 3


class DegenerateGeometry(ValueError):
    pass


@dataclass
class DroneState:
    id: int
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    speed: float = 0.0
    waypoint: Optional[np.ndarray] = None
    coding_capability: float = 200.0
    is_malicious: bool = False
    queue_capacity: int = 64
    mu_window: int = 20
    queue: deque = field(default_factory=deque)
    resident_bms: int = 0
    outcomes: deque = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.outcomes is None:
            self.outcomes = deque(maxlen=self.mu_window)

    @property
    def load(self) -> float:
        """Queue occupancy (data plus resident bee messages) over capacity."""
        return min(1.0, (len(self.queue) + self.resident_bms) / self.queue_capacity)

    @property
    def success_rate(self) -> float:
        return sum(self.outcomes) / len(self.outcomes) if self.outcomes else 1.0

    def record(self, ok: bool):
        self.outcomes.append(1 if ok else 0)


class EventQueue:
    """Min-heap on (time, sequence); equal times pop in insertion order."""

    def __init__(self):
        self._heap = []
        self._seq = itertools.count()

    def __len__(self):
        return len(self._heap)

    def push(self, time: float, payload):
        heapq.heappush(self._heap, (float(time), next(self._seq), payload))

    def pop(self):
        time, seq, payload = heapq.heappop(self._heap)
        return time, seq, payload

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf


@dataclass
class SimMetrics:
    messages_sent: int = 0
    messages_delivered: int = 0
    messages_lost: int = 0
    delays: list = field(default_factory=list)
    delivered_bits: int = 0
    duration: float = 0.0
    consensus_messages: int = 0
    consensus_rounds: int = 0
    consensus_failures: int = 0
    bm_hops: int = 0
    p2pc_attempts: int = 0
    p2pc_successes: int = 0
    no_route: int = 0
    blackholed: int = 0
    blocks: int = 0

    @property
    def arrival_rate(self) -> float:
        return 1.0 if self.messages_sent == 0 else self.messages_delivered / self.messages_sent

    @property
    def mean_delay(self) -> float:
        return float(np.mean(self.delays)) if self.delays else 0.0

    @property
    def throughput(self) -> float:
        """Delivered payload bits per simulated second."""
        return self.delivered_bits / self.duration if self.duration > 0 else 0.0

    @property
    def p2pc_success_rate(self) -> float:
        return self.p2pc_successes / self.p2pc_attempts if self.p2pc_attempts else 1.0


# --- physical layer -------------------------------------------------------

def compute_snr(p: ChannelParams, h: float, r: float) -> float:
    if r <= 0:
        raise DegenerateGeometry("colocated drones: distance must be > 0")
    if h < 0:
        raise ValueError("fading gain must be >= 0")
    if p.noise_power == 0:
        return math.inf if h > 0 else 0.0
    return p.transmit_power * h * r ** (-p.path_loss_exponent) / p.noise_power


@dataclass(frozen=True)
class Delivered:
    delay: float


@dataclass(frozen=True)
class Lost:
    reason: str = "fading"


def attempt_transmission(sender: DroneState, receiver: DroneState, p: ChannelParams, rng,
                         comm_range: float = 20.0, mac_delay: float = 0.005):
    """One hop over a Rayleigh link; updates the sender's success window."""
    diff = sender.position - receiver.position
    r = math.sqrt(float(diff @ diff))
    if r > comm_range:
        sender.record(False)
        return Lost("range")
    if p.noise_power == 0:
        ok = True
    else:
        h = rng.exponential(1.0)
        ok = compute_snr(p, h, max(r, 1e-9)) > p.snr_threshold
    sender.record(ok)
    if not ok:
        return Lost("fading")
    return Delivered(mac_delay + r / PROPAGATION_SPEED)


# --- mobility -------------------------------------------------------------

def _advance(pos, wp, speed, dt):
    """Move rows of ``pos`` toward ``wp`` by speed*dt; returns mask of rows that arrived."""
    delta = wp - pos
    dist = np.linalg.norm(delta, axis=1)
    step = speed * dt
    arrived = dist <= step
    move = np.where(arrived[:, None], delta, delta * np.divide(step, dist, out=np.zeros_like(dist), where=dist > 0)[:, None])
    pos += move
    return arrived


def step_mobility(drones, dt: float, rng, bounds=(1000.0, 1000.0, 1000.0)):
    """Independent random waypoint inside [0, bounds]."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    hi = np.asarray(bounds, dtype=float)
    for d in drones:
        if d.waypoint is None:
            d.waypoint = rng.random(3) * hi
        if d.speed == 0:
            d.velocity = np.zeros(3)
            continue
        pos = d.position[None, :].copy()
        arrived = _advance(pos, d.waypoint[None, :], d.speed, dt)
        d.velocity = (pos[0] - d.position) / dt
        d.position[:] = np.clip(pos[0], 0.0, hi)
        if arrived[0]:
            d.waypoint = rng.random(3) * hi
    return drones


def _uniform_ball(rng, n, radius):
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    return u * radius * rng.random(n)[:, None] ** (1.0 / 3.0)


class SwarmMobility:
    """Reference-point group mobility: the swarm centre and each member's offset follow random waypoints."""

    def __init__(self, n, cfg: ScenarioConfig, rng):
        self.bounds = np.asarray(cfg.volume, dtype=float)
        self.radius = cfg.swarm_radius
        self.speed = cfg.speed
        self.rng = rng
        self.group = cfg.mobility_model == "group"
        if self.group:
            self.centre = self._centre_point()[None, :]
            self.centre_wp = self._centre_point()[None, :]
            self.offset = _uniform_ball(rng, n, self.radius)
            self.offset_wp = _uniform_ball(rng, n, self.radius)
        else:
            self.pos = rng.random((n, 3)) * self.bounds
            self.wp = rng.random((n, 3)) * self.bounds

    def _centre_point(self):
        return self.radius + self.rng.random(3) * (self.bounds - 2 * self.radius)

    @property
    def positions(self) -> np.ndarray:
        return self.centre + self.offset if self.group else self.pos

    def step(self, dt):
        if self.speed == 0:
            return
        if self.group:
            if _advance(self.centre, self.centre_wp, self.speed, dt)[0]:
                self.centre_wp = self._centre_point()[None, :]
            arrived = _advance(self.offset, self.offset_wp, self.speed, dt)
            if arrived.any():
                self.offset_wp[arrived] = _uniform_ball(self.rng, int(arrived.sum()), self.radius)
        else:
            arrived = _advance(self.pos, self.wp, self.speed, dt)
            if arrived.any():
                self.wp[arrived] = self.rng.random((int(arrived.sum()), 3)) * self.bounds
            np.clip(self.pos, 0.0, self.bounds, out=self.pos)


# --- simulator ------------------------------------------------------------

@dataclass
class _Message:
    id: int
    sender: int
    receiver: int
    created: float
    pending: int = 0
    done: bool = False


class Simulator:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        root = np.random.SeedSequence(cfg.seed)
        setup, mob, bm, msg = (np.random.default_rng(s) for s in root.spawn(4))
        self.rng_bm, self.rng_msg = bm, msg
        n = cfg.n_drones
        self.mobility = SwarmMobility(n, cfg, mob)
        cr = truncated_normal(setup, cfg.cr.mean, cfg.cr.std, cfg.cr.min, cfg.cr.max, n)
        bad = set(setup.choice(n, size=int(round(cfg.ponc.malicious_fraction * n)), replace=False).tolist())
        pos = self.mobility.positions
        self.drones = [
            DroneState(i, pos[i].copy(), speed=cfg.speed, coding_capability=float(cr[i]), is_malicious=i in bad,
                       queue_capacity=cfg.queue_capacity, mu_window=cfg.mu_window)
            for i in range(n)
        ]
        self.malicious = np.array([d.is_malicious for d in self.drones])
        self.routing = BeeRouting(n, cfg.abc, cfg.bm_ttl, cfg.bm_size)
        self.servers = default_servers(cfg.volume[0], cfg.es.count, cfg.es.radius)
        self.ledger = Ledger()
        self.metrics = SimMetrics()
        self.events = EventQueue()
        self.view: Optional[NetworkView] = None
        self.adj = None
        self.messages: dict[int, _Message] = {}
        self.trace = []

    # -- helpers --
    def _keyed_rng(self, *key):
        return np.random.default_rng([self.cfg.seed, *key])

    def _sync_positions(self):
        pos = self.mobility.positions
        for d in self.drones:
            d.position[:] = pos[d.id]

    def _advertised_view(self) -> NetworkView:
        load = np.array([d.load for d in self.drones])
        succ = np.array([d.success_rate for d in self.drones])
        # malicious drones advertise an idle, perfect relay
        load[self.malicious] = 0.0
        succ[self.malicious] = 1.0
        return NetworkView(self.mobility.positions.copy(), load, succ, self.cfg.comm_range,
                           (0.0, 0.0, 0.0), tuple(self.cfg.volume))

    def _bm_hop(self, a, b) -> bool:
        out = attempt_transmission(self.drones[a], self.drones[b], self.cfg.link, self.rng_bm,
                                   self.cfg.comm_range, self.cfg.mac_delay)
        return isinstance(out, Delivered)

    # -- event handlers --
    def _on_tick(self, now):
        view = self._advertised_view()
        adj = view.in_range()
        self.routing.tick(view, self.rng_bm, self._bm_hop, adj=adj)
        for d in self.drones:
            d.resident_bms = int(self.routing.crowding[d.id])
        # routing decisions until the next tick use this snapshot, with refreshed load
        view.load = np.array([d.load for d in self.drones])
        view.success = np.array([d.success_rate for d in self.drones])
        view.load[self.malicious] = 0.0
        view.success[self.malicious] = 1.0
        self.view, self.adj = view, adj
        self.metrics.bm_hops = self.routing.hops

    def _on_message(self, now, msg_id):
        cfg = self.cfg
        m = self.metrics
        n = cfg.n_drones
        s = int(self.rng_msg.integers(n))
        adj = self.adj
        two_hop = [j for j in range(n) if j != s and not adj[s, j] and (adj[s] & adj[j]).any()]
        one_hop = [j for j in np.flatnonzero(adj[s]).tolist() if (adj[s] & adj[j]).any()]
        pool = two_hop or one_hop
        draw = self.rng_msg.random()
        m.messages_sent += 1
        if not pool:
            self._lose(msg_id, "no_route")
            return
        r = pool[min(int(draw * len(pool)), len(pool) - 1)]
        msg = _Message(msg_id, s, r, now)
        self.messages[msg_id] = msg
        cands = self.routing.candidates(self.view, s, r, cfg.k_candidates, adj=adj, allow_fewer=True)
        if not cands:
            self._lose(msg_id, "no_route")
            return
        relays, setup_delay = self._choose_relays(msg, cands, now)
        msg.pending = len(relays)
        for relay in relays:
            self.events.push(now + setup_delay, ("hop", msg_id, s, relay, 0))

    def _choose_relays(self, msg, cands, now):
        cfg = self.cfg
        paths = cfg.coding_paths if cfg.features.coding else 1
        if not cfg.features.ponc:
            return cands[:paths], 0.0
        nodes = [ConsensusNode(c, self.drones[c].coding_capability, bool(self.malicious[c]),
                               cfg.ponc.malicious_strategy if self.malicious[c] else None,
                               cfg.ponc.inflation_factor) for c in cands]
        deliver, phase = self._consensus_channel(msg, len(cands))
        self.metrics.consensus_rounds += 1
        try:
            res = run_consensus(nodes, self._keyed_rng(msg.id, _CONSENSUS), max_retries=cfg.ponc.max_retries,
                                weighting=cfg.ponc.weighting, deliver=deliver)
        except ConsensusFailed as exc:
            self.metrics.consensus_failures += 1
            self.metrics.consensus_messages += exc.messages
            return cands[:paths], exc.attempts * 3 * phase
        self.metrics.consensus_messages += res.messages_exchanged
        ranked = res.ranking + [c for c in cands if c not in res.ranking]
        delay = (res.retries + 1) * 3 * phase
        if cfg.features.dt:
            delay += self._record_in_cyberspace(msg, cands, res, now)
        return ranked[:paths], delay

    def _consensus_channel(self, msg, k):
        cfg = self.cfg
        if cfg.features.dt:
            return (lambda a, b: True), cfg.v2vc_latency
        # physical-channel consensus: each message sees a fresh link draw at the analytic geometry
        rng = self._keyed_rng(msg.id, _P2PC)
        ch = cfg.channel
        radius = math.sqrt(k / (math.pi * ch.density))
        mob = MobilityParams(relative_speed=cfg.speed, elapsed_time=cfg.mobility.elapsed_time,
                             light_speed=cfg.mobility.light_speed, doppler_mode=cfg.mobility.doppler_mode)
        p_av = analytics.average_doppler_power(ch.transmit_power, mob)
        vt = mob.max_displacement

        def deliver(a, b):
            r = radius * math.sqrt(rng.random())
            d = rng.uniform(-vt, vt) if vt > 0 else 0.0
            h = rng.exponential(1.0)
            dist = abs(r + d)
            ok = dist == 0 or ch.noise_power == 0 or \
                p_av * h * dist ** (-ch.path_loss_exponent) / ch.noise_power > ch.snr_threshold
            self.metrics.p2pc_attempts += 1
            self.metrics.p2pc_successes += ok
            return ok

        return deliver, cfg.mac_delay

    def _record_in_cyberspace(self, msg, cands, res, now) -> float:
        space = Cyberspace([type(s)(s.id, s.position, s.radius) for s in self.servers])
        sender = map_to_cyberspace(self.drones[msg.sender], space, ReplicaRole.SENDER)
        receiver = map_to_cyberspace(self.drones[msg.receiver], space, ReplicaRole.RECEIVER)
        for c in cands:
            if c not in (msg.sender, msg.receiver):
                map_to_cyberspace(self.drones[c], space, ReplicaRole.CANDIDATE_RELAY)
        tx = build_transaction(space, sender, sender.address, receiver.address, now)
        append_block(self.ledger, self.ledger.next_block([tx], res.elected, res.scheme.digest, now))
        self.metrics.blocks = len(self.ledger)
        route = update_physical(res.elected, res.scheme.digest, res.ranking, [True] * self.cfg.n_drones,
                                self.cfg.v2vc_latency, self.cfg.es.link_delay)
        # uplink mapping plus downlink notification
        return self.cfg.es.link_delay + route.notify_latency

    def _on_hop(self, now, msg_id, src, relay, stage):
        msg = self.messages[msg_id]
        self._sync_positions()
        dst = relay if stage == 0 else msg.receiver
        if stage == 1 and self.malicious[relay]:
            self.metrics.blackholed += 1
            self._path_done(msg, now, False)
            return
        rng = self._keyed_rng(msg_id, _HOP, relay, stage)
        out = attempt_transmission(self.drones[src], self.drones[dst], self.cfg.link, rng,
                                   self.cfg.comm_range, self.cfg.mac_delay)
        if isinstance(out, Lost):
            self._path_done(msg, now, False)
        elif stage == 0:
            self.events.push(now + out.delay, ("hop", msg_id, relay, relay, 1))
        else:
            self._path_done(msg, now + out.delay, True)

    def _path_done(self, msg, when, ok):
        msg.pending -= 1
        if msg.done:
            return
        if ok:
            msg.done = True
            self.metrics.messages_delivered += 1
            self.metrics.delays.append(when - msg.created)
            self.metrics.delivered_bits += self.cfg.message_size
        elif msg.pending == 0:
            msg.done = True
            self.metrics.messages_lost += 1

    def _lose(self, msg_id, reason):
        self.metrics.messages_lost += 1
        if reason == "no_route":
            self.metrics.no_route += 1

    # -- main loop --
    def run(self) -> SimMetrics:
        cfg = self.cfg
        end = cfg.duration
        dt = cfg.mobility_dt
        tick = cfg.bm_period
        n_ticks = int(math.floor(end / tick + 1e-9))
        for i in range(n_ticks):
            self.events.push(i * tick, ("tick",))
        n_steps = int(math.floor(end / dt + 1e-9))
        for i in range(1, n_steps + 1):
            self.events.push(i * dt, ("move",))
        t = cfg.warmup
        msg_id = 0
        while t < end:
            jitter = self.rng_msg.random() * tick
            if t + jitter < end:
                self.events.push(t + jitter, ("message", msg_id))
                msg_id += 1
            t += cfg.message_interval
        while self.events:
            now, _, ev = self.events.pop()
            kind = ev[0]
            self.trace.append((now, kind) + tuple(ev[1:]))
            if kind == "move":
                self.mobility.step(dt)
            elif kind == "tick":
                self._sync_positions()
                self._on_tick(now)
            elif kind == "message":
                self._sync_positions()
                self._on_message(now, ev[1])
            elif kind == "hop":
                self._on_hop(now, *ev[1:])
        self.metrics.duration = end
        self._sync_positions()
        return self.metrics


def run(cfg: ScenarioConfig) -> SimMetrics:
    return Simulator(cfg).run()


# --- parallel-forwarding throughput model ---------------------------------

THROUGHPUT_MODES = ("p2pc", "v2vc_uncoded", "v2vc_coded")


def simulate_throughput(cfg: ScenarioConfig, n: int, q: int, seed: int, rounds: int = 200,
                        n_max: Optional[int] = None) -> dict:
    """Throughput (bits/s) of delivering q messages per consensus round through n relays.

    Each round elects relays among the k best-resourced of the n relays. The
    consensus costs ``ponc_overhead(k)`` messages: over the physical channel
    every message is retried until it survives a link draw at the mobile
    success rate and costs ``mac_delay`` per attempt; between replicas it
    costs ``v2vc_latency`` and never fails. Uncoded forwarding pushes the q
    messages one after another through the single best relay; coded
    forwarding sends one Vandermonde combination through each of the q best
    relays in parallel, with a q-byte coefficient header.

    Draws for a seed are shared across ``n`` (relays are a prefix of
    ``n_max`` drawn relays) and ``q`` so sweeps compare like with like.
    """
    k = cfg.topology.k
    if not 1 <= q < k < n:
        raise ValueError("need 1 <= q < k < n")
    n_max = max(n, n_max or n)
    rng = np.random.default_rng([seed, n_max, 11])
    cr = truncated_normal(rng, cfg.cr.mean, cfg.cr.std, cfg.cr.min, cfg.cr.max, (rounds, n_max))[:, :n] * 1e3
    msgs = analytics.ponc_overhead(k)
    ch = ChannelParams(cfg.channel.transmit_power, cfg.channel.noise_power, cfg.channel.path_loss_exponent,
                       cfg.channel.snr_threshold_db, cfg.channel.density, k)
    mob = MobilityParams(cfg.speed, cfg.mobility.elapsed_time, cfg.mobility.light_speed, cfg.mobility.doppler_mode)
    p = analytics.mobile_success_rate(ch, mob)
    attempts = rng.geometric(p, size=(rounds, msgs)).sum(axis=1) if p > 0 else np.full(rounds, np.inf)
    size = cfg.message_size
    top = -np.sort(-cr, axis=1)[:, :k]
    hop = size / np.minimum(top, cfg.data_rate) + cfg.mac_delay
    forward_uncoded = q * hop[:, 0]
    coded_hop = (size + 8 * q) / np.minimum(top[:, :q], cfg.data_rate) + cfg.mac_delay
    forward_coded = coded_hop.max(axis=1)
    bits = rounds * q * size
    return {
        "p2pc": bits / float(np.sum(attempts * cfg.mac_delay + forward_uncoded)),
        "v2vc_uncoded": bits / float(np.sum(msgs * cfg.v2vc_latency + forward_uncoded)),
        "v2vc_coded": bits / float(np.sum(msgs * cfg.v2vc_latency + forward_coded)),
    }
