"""Digital-twin layer: edge servers host signed replicas of drones and keep a hash-chained ledger."""

from __future__ import annotations

import enum
import hashlib
import hmac
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

DIGEST_SIZE = 32
GENESIS_PREVIOUS = bytes(DIGEST_SIZE)
IPC_LATENCY = 1e-3


class NoServerInRange(LookupError):
    pass


class AddressUnknown(KeyError):
    pass


class ChainMismatch(ValueError):
    pass


class ElectedDroneLost(RuntimeError):
    def __init__(self, relay, fallback=None):
        self.relay, self.fallback = relay, fallback
        super().__init__(f"elected relay {relay} is no longer in the network")


class RoleImmutable(ValueError):
    pass


class Role(enum.Enum):
    SENDER = "sender"
    RECEIVER = "receiver"
    CANDIDATE_RELAY = "candidate_relay"


# --- signatures -----------------------------------------------------------

class Signer(Protocol):
    def sign(self, identity: int, data: bytes) -> bytes: ...

    def verify(self, identity: int, data: bytes, signature: bytes) -> bool: ...


class HmacSigner:
    """Deterministic keyed-hash stand-in for a real signature scheme.

    Each identity's key is derived from a master secret, so two signers built
    from the same secret agree on every signature.
    """

    def __init__(self, master: bytes = b"escm-test-master"):
        self._master = master

    def key(self, identity: int) -> bytes:
        return hmac.new(self._master, struct.pack(">q", identity), hashlib.sha256).digest()

    def sign(self, identity: int, data: bytes) -> bytes:
        return hmac.new(self.key(identity), data, hashlib.sha256).digest()

    def verify(self, identity: int, data: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self.sign(identity, data), signature)


def _identity_bytes(drone_id: int) -> bytes:
    return b"drone:" + struct.pack(">q", drone_id)


# --- servers and replicas -------------------------------------------------

@dataclass
class EdgeServer:
    id: int
    position: np.ndarray
    radius: float = 650.0
    hosted: set = field(default_factory=set)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)

    def covers(self, point) -> bool:
        return float(np.linalg.norm(np.asarray(point, dtype=float) - self.position)) <= self.radius


def default_servers(side: float = 1000.0, count: int = 4, radius: float = 650.0) -> list:
    """Servers on a square grid in the mid plane of a cube of the given side."""
    per_row = math.ceil(math.sqrt(count))
    step = side / per_row
    out = []
    for i in range(count):
        row, col = divmod(i, per_row)
        out.append(EdgeServer(i, [(col + 0.5) * step, (row + 0.5) * step, side / 2], radius))
    return out


@dataclass(frozen=True)
class Replica:
    drone_id: int
    address: str
    sig_id: bytes
    atr: tuple
    role: Role
    server_id: int

    @property
    def attributes(self) -> dict:
        return dict(self.atr)


def address_of(drone_id: int) -> str:
    return hashlib.sha256(_identity_bytes(drone_id)).hexdigest()[:16]


class Cyberspace:
    """Replica registry for one mapping snapshot."""

    def __init__(self, servers: Sequence[EdgeServer], signer: Optional[Signer] = None):
        self.servers = list(servers)
        self.signer = signer or HmacSigner()
        self.replicas: dict[str, Replica] = {}
        self._by_drone: dict[int, str] = {}
        self._last_ts: dict[str, float] = {}

    def __len__(self):
        return len(self.replicas)

    def address(self, drone_id: int) -> str:
        try:
            return self._by_drone[drone_id]
        except KeyError:
            raise AddressUnknown(f"drone {drone_id} is not mapped") from None

    def replica(self, address: str) -> Replica:
        try:
            return self.replicas[address]
        except KeyError:
            raise AddressUnknown(f"address {address} is not registered") from None

    def verify_replica(self, replica: Replica) -> bool:
        return self.signer.verify(replica.drone_id, _identity_bytes(replica.drone_id), replica.sig_id)


def map_to_cyberspace(drone, space: Cyberspace, role: Role) -> Replica:
    """Mirror a drone onto the nearest edge server that covers it (lower id on ties).

    ``drone`` needs ``id``, ``position`` and ``coding_capability`` attributes.
    """
    pos = np.asarray(drone.position, dtype=float)
    existing = space._by_drone.get(drone.id)
    if existing is not None:
        rep = space.replicas[existing]
        if rep.role is not role:
            raise RoleImmutable(f"drone {drone.id} is already mapped as {rep.role.value}")
        return rep
    best = None
    for s in space.servers:
        d = float(np.linalg.norm(pos - s.position))
        if d <= s.radius and (best is None or (d, s.id) < best[0]):
            best = ((d, s.id), s)
    if best is None:
        raise NoServerInRange(f"drone {drone.id} at {pos.tolist()} is outside every server's range")
    server = best[1]
    atr = (
        ("coding_capability", float(drone.coding_capability)),
        ("relay_capable", True),
    )
    addr = address_of(drone.id)
    rep = Replica(drone.id, addr, space.signer.sign(drone.id, _identity_bytes(drone.id)), atr, role, server.id)
    server.hosted.add(drone.id)
    space.replicas[addr] = rep
    space._by_drone[drone.id] = addr
    return rep


# --- transactions ---------------------------------------------------------

@dataclass(frozen=True)
class CyberTransaction:
    replica: str
    sender: str
    receiver: str
    ts: float
    sig_req: bytes

    def body(self) -> bytes:
        return _tx_body(self.replica, self.sender, self.receiver, self.ts)

    def serialize(self) -> bytes:
        b = self.body()
        return struct.pack(">I", len(b)) + b + struct.pack(">H", len(self.sig_req)) + self.sig_req


def _str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">H", len(raw)) + raw


def _tx_body(replica, sender, receiver, ts) -> bytes:
    return _str(replica) + _str(sender) + _str(receiver) + struct.pack(">d", ts)


def build_transaction(space: Cyberspace, replica: Replica, sender: str, receiver: str, clock: float) -> CyberTransaction:
    """Signed relay request between two mapped drones, stamped no earlier than ``clock``."""
    if sender == receiver:
        raise ValueError("sender and receiver addresses must differ")
    for addr in (replica.address, sender, receiver):
        space.replica(addr)
    last = space._last_ts.get(replica.address)
    ts = float(clock) if last is None or clock > last else math.nextafter(last, math.inf)
    space._last_ts[replica.address] = ts
    sig = space.signer.sign(replica.drone_id, _tx_body(replica.address, sender, receiver, ts))
    return CyberTransaction(replica.address, sender, receiver, ts, sig)


def verify_transaction(space: Cyberspace, tx: CyberTransaction) -> bool:
    try:
        rep = space.replica(tx.replica)
        space.replica(tx.sender)
        space.replica(tx.receiver)
    except AddressUnknown:
        return False
    return space.signer.verify(rep.drone_id, tx.body(), tx.sig_req)


# --- blocks and ledger ----------------------------------------------------

@dataclass(frozen=True)
class Block:
    height: int
    previous: bytes
    transactions: tuple
    elected_relay: int
    scheme_digest: bytes
    ts: float

    def serialize(self) -> bytes:
        if len(self.previous) != DIGEST_SIZE or len(self.scheme_digest) != DIGEST_SIZE:
            raise ValueError("digests must be 32 bytes")
        parts = [struct.pack(">Q", self.height), self.previous, struct.pack(">I", len(self.transactions))]
        parts += [tx.serialize() for tx in self.transactions]
        parts += [struct.pack(">q", self.elected_relay), self.scheme_digest, struct.pack(">d", self.ts)]
        return b"".join(parts)

    @property
    def digest(self) -> bytes:
        return hashlib.sha256(self.serialize()).digest()

    @classmethod
    def deserialize(cls, data: bytes) -> "Block":
        view = memoryview(data)
        height, = struct.unpack_from(">Q", view, 0)
        previous = bytes(view[8:40])
        count, = struct.unpack_from(">I", view, 40)
        off = 44
        txs = []
        for _ in range(count):
            blen, = struct.unpack_from(">I", view, off)
            body = bytes(view[off + 4: off + 4 + blen])
            off += 4 + blen
            slen, = struct.unpack_from(">H", view, off)
            sig = bytes(view[off + 2: off + 2 + slen])
            off += 2 + slen
            txs.append(_parse_tx(body, sig))
        relay, = struct.unpack_from(">q", view, off)
        scheme = bytes(view[off + 8: off + 40])
        ts, = struct.unpack_from(">d", view, off + 40)
        if off + 48 != len(data):
            raise ValueError("trailing bytes after block")
        return cls(height, previous, tuple(txs), relay, scheme, ts)


def _parse_tx(body: bytes, sig: bytes) -> CyberTransaction:
    fields = []
    off = 0
    for _ in range(3):
        n, = struct.unpack_from(">H", body, off)
        fields.append(body[off + 2: off + 2 + n].decode("utf-8"))
        off += 2 + n
    ts, = struct.unpack_from(">d", body, off)
    return CyberTransaction(*fields, ts, sig)


class Ledger:
    """Append-only chain of blocks."""

    def __init__(self):
        self.blocks: list[Block] = []

    def __len__(self):
        return len(self.blocks)

    @property
    def head_digest(self) -> bytes:
        return self.blocks[-1].digest if self.blocks else GENESIS_PREVIOUS

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def next_block(self, transactions: Iterable[CyberTransaction], elected_relay: int,
                   scheme_digest: bytes, ts: float) -> Block:
        return Block(len(self.blocks), self.head_digest, tuple(transactions), elected_relay, scheme_digest, ts)

    def export_lines(self) -> list:
        return [b.serialize().hex() for b in self.blocks]

    def export(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.export_lines():
                fh.write(line + "\n")

    @classmethod
    def replay(cls, lines: Iterable[str]) -> "Ledger":
        led = cls()
        for line in lines:
            line = line.strip()
            if line:
                append_block(led, Block.deserialize(bytes.fromhex(line)))
        return led


def append_block(ledger: Ledger, block: Block) -> Ledger:
    expected = len(ledger.blocks)
    if block.height != expected:
        raise ChainMismatch(f"block height {block.height}, expected {expected}")
    if block.previous != ledger.head_digest:
        raise ChainMismatch("previous digest does not match ledger head")
    ledger.blocks.append(block)
    return ledger


# --- physical update ------------------------------------------------------

@dataclass(frozen=True)
class InstalledRoute:
    relay: int
    scheme_digest: bytes
    fallback_used: bool
    notify_latency: float


def update_physical(elected: int, scheme_digest: bytes, ranking: Sequence[int], alive,
                    ipc_latency: float = IPC_LATENCY, downlink_latency: float = 0.0,
                    allow_fallback: bool = True) -> InstalledRoute:
    """Install the consensus winner on the physical forwarding path.

    Replica-to-replica notification costs ``ipc_latency``; the edge server's
    notice to the drone adds ``downlink_latency``. If the winner is gone the
    next live drone in ``ranking`` is installed instead.
    """
    latency = ipc_latency + downlink_latency
    if alive[elected]:
        return InstalledRoute(elected, scheme_digest, False, latency)
    backup = next((r for r in ranking if r != elected and alive[r]), None)
    if not allow_fallback or backup is None:
        raise ElectedDroneLost(elected, backup)
    return InstalledRoute(backup, scheme_digest, True, latency)
