"""Coding-scheme consensus among candidate relays, a sequential baseline and attack injection.

Every candidate proposes a generator assignment for a small combination
network. All candidates verify all proposals in parallel, exchange their
verdicts, pick the best scheme a majority considers valid and then ask for
approval of that scheme. The canonical score of a scheme is its provider's
computing resource (CR), or minus infinity when some receiver cannot decode.
"""

from __future__ import annotations

import hashlib
import json
import math
from functools import cached_property
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .cn_coding import CnTopology, CodingVector, assign_vectors, is_decodable

SCORE_INFLATION = "score_inflation"
DEPENDENT_VECTORS = "dependent_vectors"
VERDICT_INVERSION = "verdict_inversion"
ABSTENTION = "abstention"
STRATEGIES = (SCORE_INFLATION, DEPENDENT_VECTORS, VERDICT_INVERSION, ABSTENTION)

COUNT = "count"
CR_WEIGHTED = "cr"
WEIGHTINGS = (COUNT, CR_WEIGHTED)

DEFAULT_TOPOLOGY = CnTopology.combination(3, 2)

Deliver = Callable[[int, int], bool]


class ConsensusFailed(RuntimeError):
    def __init__(self, attempts, messages, trace=()):
        self.attempts, self.messages, self.trace = attempts, messages, list(trace)
        super().__init__(f"no scheme won a majority after {attempts} attempts ({messages} messages)")


@dataclass
class ConsensusNode:
    id: int
    cr: float
    is_malicious: bool = False
    strategy: Optional[str] = None
    inflation_factor: float = 10.0
    sent: int = 0
    received: int = 0

    def __post_init__(self):
        if not self.cr > 0:
            raise ValueError("CR must be > 0")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")

    @property
    def colludes(self) -> bool:
        return self.is_malicious and self.strategy in (SCORE_INFLATION, DEPENDENT_VECTORS)


@dataclass(frozen=True)
class CodingScheme:
    provider: int
    vectors: tuple
    claimed_score: float
    topology: CnTopology = DEFAULT_TOPOLOGY

    @property
    def assignment(self) -> dict:
        return dict(enumerate(self.vectors))

    @cached_property
    def decodable(self) -> bool:
        return all(is_decodable([self.vectors[r] for r in relays]) for relays in self.topology.receivers)

    @property
    def digest(self) -> bytes:
        body = bytes([self.provider & 0xFF]) + bytes(v.generator for v in self.vectors)
        return hashlib.sha256(body + repr(self.claimed_score).encode()).digest()


@dataclass(frozen=True)
class Verdict:
    valid: bool
    score: float = -math.inf


INVALID = Verdict(False)


@dataclass
class RoundResult:
    elected: int
    scheme: CodingScheme
    approvals: float
    k: int
    messages_exchanged: int
    retries: int
    trace: list = field(default_factory=list)
    ranking: list = field(default_factory=list)


# --- scoring --------------------------------------------------------------

def canonical_score(scheme: CodingScheme, cr_of: dict) -> float:
    return float(cr_of[scheme.provider]) if scheme.decodable else -math.inf


def _honest_verdict(scheme, cr_of):
    score = canonical_score(scheme, cr_of)
    if score == -math.inf or scheme.claimed_score != score:
        return INVALID
    return Verdict(True, score)


def _judge(scheme: CodingScheme, verifier: ConsensusNode, cr_of: dict, malicious: set) -> Optional[Verdict]:
    truth = _honest_verdict(scheme, cr_of)
    if not verifier.is_malicious:
        return truth
    if verifier.strategy == ABSTENTION:
        return None
    if verifier.strategy == VERDICT_INVERSION:
        return INVALID if truth.valid else Verdict(True, scheme.claimed_score)
    # colluders vouch for each other and reject everybody else
    if scheme.provider in malicious:
        return Verdict(True, scheme.claimed_score)
    return INVALID


def verify_scheme(scheme: CodingScheme, verifier: ConsensusNode, nodes: Sequence[ConsensusNode]) -> Optional[Verdict]:
    """A verifier's verdict on someone else's scheme; None when it abstains."""
    if verifier.id == scheme.provider:
        raise ValueError("a node does not verify its own scheme through this call")
    cr_of = {n.id: n.cr for n in nodes}
    return _judge(scheme, verifier, cr_of, {n.id for n in nodes if n.is_malicious})


# --- rounds ---------------------------------------------------------------

def _propose(node: ConsensusNode, topology: CnTopology, rng) -> Optional[CodingScheme]:
    if node.is_malicious and node.strategy == ABSTENTION:
        return None
    vecs = assign_vectors(topology, rng)
    vectors = tuple(vecs[r] for r in range(topology.n))
    score = node.cr
    if node.is_malicious and node.strategy == SCORE_INFLATION:
        score = node.cr * node.inflation_factor
    elif node.is_malicious and node.strategy == DEPENDENT_VECTORS:
        g = vectors[0].generator
        vectors = tuple(CodingVector(g, v.length) for v in vectors)
        score = node.cr * node.inflation_factor
    return CodingScheme(node.id, vectors, float(score), topology)


class _Round:
    def __init__(self, nodes, topology, rng, deliver, weighting, attempt, trace):
        self.nodes = list(nodes)
        self.k = len(self.nodes)
        self.topology = topology
        self.rng = rng
        self.deliver = deliver
        self.weighting = weighting
        self.attempt = attempt
        self.trace = trace
        self.messages = 0
        self.cr_of = {n.id: n.cr for n in self.nodes}
        self.malicious = {n.id for n in self.nodes if n.is_malicious}
        self.total_weight = sum(self._weight(n) for n in self.nodes)

    def _weight(self, node):
        return node.cr if self.weighting == CR_WEIGHTED else 1.0

    def _send(self, src, dst, step, kind) -> bool:
        self.messages += 1
        src.sent += 1
        self.trace.append({"round": self.attempt, "step": step, "from": src.id, "to": dst.id, "type": kind})
        if src.id == dst.id or self.deliver(src.id, dst.id):
            dst.received += 1
            return True
        return False

    def _majority(self, weight) -> bool:
        return weight > self.total_weight / 2

    def run(self) -> Optional[RoundResult]:
        # proposals
        schemes = {}
        seen = {n.id: set() for n in self.nodes}
        for n in self.nodes:
            s = _propose(n, self.topology, self.rng)
            if s is None:
                continue
            schemes[n.id] = s
            seen[n.id].add(n.id)
            for m in self.nodes:
                if m.id != n.id and self._send(n, m, "propose", "scheme"):
                    seen[m.id].add(n.id)
        # local verdicts
        local = {}
        for v in self.nodes:
            local[v.id] = {p: _judge(schemes[p], v, self.cr_of, self.malicious) for p in sorted(seen[v.id])}
        # all-pairs view exchange, self-delivery included
        views = {n.id: {} for n in self.nodes}
        for v in self.nodes:
            if v.is_malicious and v.strategy == ABSTENTION:
                continue
            for m in self.nodes:
                if self._send(v, m, "views", "verdicts"):
                    views[m.id][v.id] = local[v.id]
        # each node picks its optimum; providers that find themselves optimal broadcast
        broadcasters = []
        for n in self.nodes:
            best = self._optimum(views[n.id], schemes)
            if best == n.id and n.id in schemes:
                broadcasters.append(n)
        results = []
        for b in broadcasters:
            scheme = schemes[b.id]
            approvals = self._weight(b) if self._approves(b, local[b.id].get(b.id), scheme) else 0.0
            for m in self.nodes:
                if m.id != b.id and self._send(b, m, "broadcast", "optimal"):
                    if self._approves(m, local[m.id].get(b.id), scheme):
                        approvals += self._weight(m)
            if self._majority(approvals):
                results.append((b.id, scheme, approvals))
        if not results:
            return None
        elected, scheme, approvals = min(results, key=lambda r: (-canonical_score(r[1], self.cr_of), r[0]))
        ranking = self._ranked(views[elected], schemes)
        return RoundResult(elected, scheme, approvals, self.k, self.messages, 0, ranking=ranking)

    def _ranked(self, view, schemes):
        """Providers whose scheme a majority in ``view`` marks valid, best canonical score first."""
        ok = []
        for p in sorted(schemes):
            weight = sum(self._weight_of(vid) for vid, verdicts in view.items()
                         if (verdict := verdicts.get(p)) is not None and verdict.valid)
            if self._majority(weight):
                ok.append(p)
        return sorted(ok, key=lambda p: (-canonical_score(schemes[p], self.cr_of), p))

    def _optimum(self, view, schemes):
        ranked = self._ranked(view, schemes)
        return ranked[0] if ranked else None

    def _weight_of(self, node_id):
        return self.cr_of[node_id] if self.weighting == CR_WEIGHTED else 1.0

    def _approves(self, node, verdict, scheme) -> bool:
        if verdict is None or not verdict.valid:
            return False
        if node.is_malicious:
            return True
        return verdict.score == scheme.claimed_score


def run_consensus(nodes: Sequence[ConsensusNode], rng, topology: CnTopology = DEFAULT_TOPOLOGY,
                  max_retries: int = 3, weighting: str = COUNT, deliver: Optional[Deliver] = None) -> RoundResult:
    """Full protocol with retries and fresh proposals; raises ConsensusFailed when out of retries."""
    if len(nodes) < 1:
        raise ValueError("need at least one node")
    if len({n.id for n in nodes}) != len(nodes):
        raise ValueError("node ids must be unique")
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    deliver = deliver or (lambda a, b: True)
    rng = np.random.default_rng(rng)
    trace = []
    messages = 0
    for attempt in range(max_retries + 1):
        rnd = _Round(nodes, topology, rng, deliver, weighting, attempt, trace)
        result = rnd.run()
        messages += rnd.messages
        if result is not None:
            result.messages_exchanged = messages
            result.retries = attempt
            result.trace = trace
            return result
    raise ConsensusFailed(max_retries + 1, messages, trace)


# Step-level entry points, mirroring the protocol's phases for a lossless round.

def propose_schemes(nodes: Sequence[ConsensusNode], rng, topology: CnTopology = DEFAULT_TOPOLOGY):
    """One scheme per proposing node and the fan-out message count k(k-1) over proposers."""
    if len(nodes) < 2:
        raise ValueError("need k >= 2 nodes")
    rng = np.random.default_rng(rng)
    schemes = [s for s in (_propose(n, topology, rng) for n in nodes) if s is not None]
    return schemes, len(schemes) * (len(nodes) - 1)


def exchange_views(nodes: Sequence[ConsensusNode], schemes: Sequence[CodingScheme]):
    """Every node's verdict vector delivered to every node; returns (views, message count)."""
    cr_of = {n.id: n.cr for n in nodes}
    malicious = {n.id for n in nodes if n.is_malicious}
    by_id = {s.provider: s for s in schemes}
    messages = 0
    views = {n.id: {} for n in nodes}
    for v in nodes:
        if v.is_malicious and v.strategy == ABSTENTION:
            continue
        verdicts = {p: _judge(s, v, cr_of, malicious) for p, s in sorted(by_id.items())}
        for m in nodes:
            views[m.id][v.id] = verdicts
            messages += 1
    return views, messages


def decide_and_broadcast(views: dict, nodes: Sequence[ConsensusNode], schemes: Sequence[CodingScheme],
                         weighting: str = COUNT) -> Optional[RoundResult]:
    """Pick the best majority-valid scheme, broadcast it and tally approvals. None means retry."""
    rnd = _Round(nodes, DEFAULT_TOPOLOGY, None, lambda a, b: True, weighting, 0, [])
    by_id = {s.provider: s for s in schemes}
    ref = next(iter(views.values()))
    best = rnd._optimum(ref, by_id)
    if best is None:
        return None
    scheme = by_id[best]
    approvals = 0.0
    for n in nodes:
        verdict = views[n.id].get(n.id, {}).get(best)
        if rnd._approves(n, verdict, scheme):
            approvals += rnd._weight(n)
    k = len(nodes)
    if not rnd._majority(approvals):
        return None
    return RoundResult(best, scheme, approvals, k, k - 1, 0)


def ground_truth(nodes: Sequence[ConsensusNode], schemes: Sequence[CodingScheme]) -> Optional[int]:
    """Best canonical score among proposed schemes an honest verifier accepts; lower id on ties."""
    cr_of = {n.id: n.cr for n in nodes}
    best = None
    for s in sorted(schemes, key=lambda s: s.provider):
        v = _honest_verdict(s, cr_of)
        if v.valid and (best is None or v.score > best[0]):
            best = (v.score, s.provider)
    return None if best is None else best[1]


def honest_optimum(nodes: Sequence[ConsensusNode]) -> Optional[int]:
    """Ground truth without proposals: highest CR among nodes that would propose a valid scheme."""
    cands = [n for n in nodes if not (n.is_malicious and n.strategy in (ABSTENTION, SCORE_INFLATION, DEPENDENT_VECTORS))]
    if not cands:
        return None
    return min(cands, key=lambda n: (-n.cr, n.id)).id


# --- baseline -------------------------------------------------------------

def poso_candidate_cost(k: int) -> int:
    """One sequential verification: announce, all-pairs check, confirm."""
    return (k - 1) + (k - 1) ** 2 + (k - 1)


def run_poso_baseline(nodes: Sequence[ConsensusNode], rng) -> RoundResult:
    """Sequential verification scheduled by the lowest-id node.

    The other k-1 nodes are verified one at a time in random order and the
    round stops once the best of them has been verified.
    """
    k = len(nodes)
    if k < 2:
        raise ValueError("need k >= 2 nodes")
    if not hasattr(rng, "permutation"):
        rng = np.random.default_rng(rng)
    ordered = sorted(nodes, key=lambda n: n.id)
    proposers = ordered[1:]
    order = rng.permutation(len(proposers))
    best = min(proposers, key=lambda n: (-n.cr, n.id))
    stop = next(i for i, j in enumerate(order) if proposers[j].id == best.id) + 1
    topo = DEFAULT_TOPOLOGY
    vecs = assign_vectors(topo)
    scheme = CodingScheme(best.id, tuple(vecs[r] for r in range(topo.n)), float(best.cr), topo)
    return RoundResult(best.id, scheme, float(k - 1), k, stop * poso_candidate_cost(k), 0)


# --- attacks --------------------------------------------------------------

def inject_internal_attack(nodes: Sequence[ConsensusNode], malicious_ids, strategy: str = SCORE_INFLATION,
                           inflation_factor: float = 10.0) -> list:
    """Copies of ``nodes`` with the given ids turned adversarial."""
    ids = set(malicious_ids)
    known = {n.id for n in nodes}
    if not ids <= known:
        raise ValueError(f"malicious ids {sorted(ids - known)} are not in the node set")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    return [
        replace(n, is_malicious=True, strategy=strategy, inflation_factor=inflation_factor, sent=0, received=0)
        if n.id in ids else replace(n, sent=0, received=0)
        for n in nodes
    ]


def attack_succeeds(nodes: Sequence[ConsensusNode], rng, **kwargs) -> bool:
    """True when the round fails to elect the honest optimum."""
    try:
        res = run_consensus(nodes, rng, **kwargs)
    except ConsensusFailed:
        return True
    return res.elected != honest_optimum(nodes)


def export_trace(trace: Sequence[dict], path):
    """One JSON object per message: round, step, from, to, type."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
