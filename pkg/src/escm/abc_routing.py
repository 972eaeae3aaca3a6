"""Artificial-bee-colony optimisation and its bee-message routing adaptation.

The first half is a generic ABC optimiser over a box. The second half turns
drones into food sources: bee messages (BMs) walk the drone graph, fill each
drone's priority set with next-hop candidates and use a crowding counter so
that no relay is mined beyond ``limit`` concurrent BMs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class CandidateShortage(RuntimeError):
    """Fewer admissible relays than requested."""

    def __init__(self, wanted, found):
        self.wanted, self.found = wanted, found
        super().__init__(f"need {wanted} candidate relays, only {found} admissible")


class InvalidTransition(ValueError):
    pass


# --- generic optimiser ----------------------------------------------------

@dataclass(frozen=True)
class AbcConfig:
    population: int = 20
    dimension: int = 3
    max_generations: int = 500
    limit: int = 20
    lower: tuple = (0.0, 0.0, 0.0)
    upper: tuple = (1000.0, 1000.0, 1000.0)
    weight_load: float = 0.5
    weight_success: float = 0.5
    invert_concentration: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.limit < 1:
            raise ValueError("limit must be >= 1")
        if self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")
        if len(self.lower) != self.dimension or len(self.upper) != self.dimension:
            raise ValueError("bounds must have one entry per dimension")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bound must be < upper bound in every dimension")
        _check_weights(self.weight_load, self.weight_success)

    @property
    def bounds(self):
        return np.array(self.lower), np.array(self.upper)


def _check_weights(a, b):
    if a < 0 or b < 0 or a + b != 1.0:
        raise ValueError(f"weights must be non-negative with a + b = 1, got a={a}, b={b}")


@dataclass
class FoodSource:
    solution: np.ndarray
    value: float
    fit: float
    trials: int = 0
    crowding: int = 0


def fitness(value: float) -> float:
    if not math.isfinite(value):
        raise ValueError("objective value must be finite")
    return 1.0 / (1.0 + value) if value >= 0 else 1.0 + abs(value)


def selection_probability(fit_i: float, fit_max: float) -> float:
    if fit_max <= 0:
        raise ValueError("fit_max must be > 0")
    return 0.9 * fit_i / fit_max + 0.1


def food_concentration(load: float, success: float, a: float, b: float) -> float:
    """Weighted concentration a*load + b*success."""
    _check_weights(a, b)
    if not (0 <= load <= 1 and 0 <= success <= 1):
        raise ValueError("load and success rate must lie in [0, 1]")
    return a * load + b * success


def init_population(cfg: AbcConfig, rng, objective: Optional[Callable] = None) -> list:
    """Uniform solutions in the box. Without an objective every value is 0."""
    lo, hi = cfg.bounds
    out = []
    for _ in range(cfg.population):
        x = lo + rng.random(cfg.dimension) * (hi - lo)
        val = 0.0 if objective is None else float(objective(x))
        out.append(FoodSource(x, val, fitness(val)))
    return out


def explore_neighbor(x_i, x_k, rng, bounds=None, *, i: Optional[int] = None, k: Optional[int] = None):
    """v = x_i + phi * (x_i - x_k), phi ~ U[-1, 1] per component, clamped to ``bounds``."""
    if i is not None and i == k:
        raise ValueError("neighbour index must differ from the source index")
    x_i = np.asarray(x_i, dtype=float)
    x_k = np.asarray(x_k, dtype=float)
    phi = np.asarray(rng.uniform(-1.0, 1.0, x_i.shape), dtype=float)
    v = x_i + phi * (x_i - x_k)
    if bounds is not None:
        v = np.clip(v, bounds[0], bounds[1])
    return v


@dataclass
class AbcResult:
    solution: np.ndarray
    value: float
    fit: float
    history: list
    evaluations: int


def _try_improve(food, others_idx, foods, i, objective, rng, bounds):
    k = int(others_idx[rng.integers(len(others_idx))])
    v = explore_neighbor(food.solution, foods[k].solution, rng, bounds, i=i, k=k)
    val = float(objective(v))
    fit_v = fitness(val)
    if fit_v > food.fit:
        food.solution, food.value, food.fit, food.trials = v, val, fit_v, 0
    else:
        food.trials += 1


def abc_optimize(cfg: AbcConfig, objective: Callable, rng, callback: Optional[Callable] = None) -> AbcResult:
    """Employed, onlooker and scout phases for ``max_generations`` rounds; keeps the best ever.

    ``callback(generation, foods)`` runs after each generation's scout phase.
    """
    bounds = cfg.bounds
    foods = init_population(cfg, rng, objective)
    evals = len(foods)
    best = max(foods, key=lambda f: f.fit)
    best_sol, best_val, best_fit = best.solution.copy(), best.value, best.fit
    history = []
    n = len(foods)
    for gen in range(cfg.max_generations):
        for i, food in enumerate(foods):
            _try_improve(food, [j for j in range(n) if j != i], foods, i, objective, rng, bounds)
            evals += 1
        fit_max = max(f.fit for f in foods)
        probs = np.array([selection_probability(f.fit, fit_max) for f in foods])
        probs /= probs.sum()
        for _ in range(n):
            i = int(rng.choice(n, p=probs))
            _try_improve(foods[i], [j for j in range(n) if j != i], foods, i, objective, rng, bounds)
            evals += 1
        for f in foods:
            if f.fit > best_fit:
                best_sol, best_val, best_fit = f.solution.copy(), f.value, f.fit
        # scouts replace every source mined out at the limit
        worn = [i for i, f in enumerate(foods) if f.trials >= cfg.limit]
        for i in worn:
            x = bounds[0] + rng.random(cfg.dimension) * (bounds[1] - bounds[0])
            val = float(objective(x))
            evals += 1
            foods[i] = FoodSource(x, val, fitness(val))
            if foods[i].fit > best_fit:
                best_sol, best_val, best_fit = x.copy(), val, foods[i].fit
        history.append(best_fit)
        if callback is not None:
            callback(gen, foods)
    return AbcResult(best_sol, best_val, best_fit, history, evals)


# --- bee messages ---------------------------------------------------------

class Role(enum.Enum):
    EBM = "EBM"
    SBM = "SBM"
    OBM = "OBM"


ALLOWED_TRANSITIONS = frozenset({
    (Role.SBM, Role.SBM),
    (Role.SBM, Role.EBM),
    (Role.EBM, Role.EBM),
    (Role.EBM, Role.SBM),
    (Role.OBM, Role.EBM),
    (Role.OBM, Role.SBM),
})


@dataclass
class BeeMessage:
    role: Role
    origin: int
    current: int
    hops_remaining: int = 15
    size_bits: int = 16
    target: Optional[int] = None
    payload: dict = field(default_factory=dict)

    @property
    def alive(self) -> bool:
        return self.hops_remaining > 0

    def set_role(self, role: Role):
        if (self.role, role) not in ALLOWED_TRANSITIONS:
            raise InvalidTransition(f"{self.role.value} -> {role.value} is not a permitted transition")
        self.role = role

    def hop(self, to: int):
        if not self.alive:
            raise RuntimeError("bee message has expired")
        self.current = to
        self.hops_remaining -= 1


@dataclass
class PriorityEntry:
    drone: int
    fit: float
    crowding: int


class PrioritySet:
    """Next-hop candidates known to one drone, keyed by drone id."""

    def __init__(self, owner: int):
        self.owner = owner
        self._entries: dict[int, PriorityEntry] = {}

    def __contains__(self, drone):
        return drone in self._entries

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self.ranked())

    def update(self, drone: int, fit: float, crowding: int):
        if drone == self.owner:
            raise ValueError("a drone cannot be its own next hop")
        self._entries[drone] = PriorityEntry(drone, fit, crowding)

    def discard(self, drone: int):
        self._entries.pop(drone, None)

    def ranked(self):
        return sorted(self._entries.values(), key=lambda e: (-e.fit, e.drone))

    def admissible(self, limit: int):
        """Entries whose crowding is below ``limit``, best first."""
        return [e for e in self.ranked() if e.crowding < limit]


def bm_transition(bm: BeeMessage, food: Optional[FoodSource], priority_set: PrioritySet, limit: int,
                  rng=None) -> Role:
    """Apply one role transition.

    ``food`` is the food drone the BM currently sits at (EBM) or the one an
    SBM just identified as best. Crowding on ``food`` is incremented when an
    SBM or OBM commits and decremented when an EBM leaves a saturated source.
    For an OBM the chosen entry is stored in ``bm.target``.
    """
    if not bm.alive:
        raise ValueError("bee message has expired")
    if bm.role is Role.SBM:
        if food is not None and food.crowding < limit:
            food.crowding += 1
            bm.set_role(Role.EBM)
        return bm.role
    if bm.role is Role.EBM:
        if food is None:
            raise ValueError("an EBM must be evaluated at its food source")
        if food.crowding >= limit:
            bm.set_role(Role.SBM)
            bm.target = None
        return bm.role
    choices = [e for e in priority_set.admissible(limit) if e.drone != bm.target]
    if not choices:
        bm.set_role(Role.SBM)
        bm.target = None
        return bm.role
    bm.target = _roulette(choices, rng)
    if food is not None:
        food.crowding += 1
    bm.set_role(Role.EBM)
    return bm.role


def _roulette(entries, rng) -> int:
    if rng is None or len(entries) == 1:
        return entries[0].drone
    fit_max = max(e.fit for e in entries)
    w = np.array([selection_probability(e.fit, fit_max) for e in entries])
    return entries[int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right").clip(0, len(w) - 1))].drone


# --- drone-network adaptation ---------------------------------------------

@dataclass
class NetworkView:
    """What the routing layer can observe: positions and advertised load / success."""

    positions: np.ndarray
    load: np.ndarray
    success: np.ndarray
    comm_range: float = 20.0
    lower: tuple = (0.0, 0.0, 0.0)
    upper: tuple = (1000.0, 1000.0, 1000.0)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.load = np.asarray(self.load, dtype=float)
        self.success = np.asarray(self.success, dtype=float)

    @property
    def size(self) -> int:
        return len(self.positions)

    def distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=-1))

    def in_range(self) -> np.ndarray:
        d = self.distances()
        adj = d <= self.comm_range
        np.fill_diagonal(adj, False)
        return adj


def drone_concentration(load: float, success: float, cfg: AbcConfig) -> float:
    """Concentration of a drone; by default low success counts as crowding."""
    s = 1.0 - success if cfg.invert_concentration else success
    return food_concentration(min(1.0, max(0.0, load)), min(1.0, max(0.0, s)), cfg.weight_load, cfg.weight_success)


def _concentrations(view: NetworkView, cfg: AbcConfig) -> np.ndarray:
    load = np.clip(view.load, 0.0, 1.0)
    succ = np.clip(view.success, 0.0, 1.0)
    s = 1.0 - succ if cfg.invert_concentration else succ
    return cfg.weight_load * load + cfg.weight_success * s


def drone_fitness(view: NetworkView, drone: int, cfg: AbcConfig) -> float:
    return fitness(drone_concentration(view.load[drone], view.success[drone], cfg))


def rank_relays(view: NetworkView, cfg: AbcConfig, relays) -> list:
    """Relays sorted by descending fitness, lower id first on ties."""
    return sorted(relays, key=lambda r: (-drone_fitness(view, r, cfg), r))


def common_neighbors(view: NetworkView, sender: int, receiver: int, adj=None) -> list:
    adj = view.in_range() if adj is None else adj
    return [int(j) for j in np.flatnonzero(adj[sender] & adj[receiver]) if j not in (sender, receiver)]


Transmit = Callable[[int, int], bool]


class BeeRouting:
    """Stateful BM protocol over a drone population.

    Call :meth:`tick` once per BM period with the current view. Each alive
    drone emits one BM per tick, alternating scout and onlooker roles. Walks
    complete within the tick; an employed BM that settles stays resident for
    one tick and so contributes to its food drone's crowding and load.
    Every delivered hop carries a range advertisement, so both ends of the
    hop learn each other as next-hop candidates.
    """

    def __init__(self, n_drones: int, cfg: AbcConfig, ttl: int = 15, size_bits: int = 16):
        self.cfg = cfg
        self.n = n_drones
        self.ttl = ttl
        self.size_bits = size_bits
        self.known = np.zeros((n_drones, n_drones), dtype=bool)
        self.crowding = np.zeros(n_drones, dtype=np.int64)
        self.resident: list[BeeMessage] = []
        self.ticks = 0
        self.hops = 0
        self._fit = np.ones(n_drones)
        self._rank = np.arange(n_drones)

    def priority_set(self, drone: int, view: Optional[NetworkView] = None) -> PrioritySet:
        if view is not None:
            self._rate(view)
        ps = PrioritySet(drone)
        for j in np.flatnonzero(self.known[drone]):
            ps.update(int(j), float(self._fit[j]), int(self.crowding[j]))
        return ps

    def _rate(self, view):
        self._fit = 1.0 / (1.0 + _concentrations(view, self.cfg))
        order = np.lexsort((np.arange(self.n), -self._fit))
        self._rank = np.empty(self.n, dtype=np.int64)
        self._rank[order] = np.arange(self.n)

    @property
    def _open(self):
        return self.crowding < self.cfg.limit

    def _admissible(self, x, adj):
        return np.nonzero(self.known[x] & adj[x] & self._open)[0]

    def _explore(self, view, adj, x, rng) -> Optional[int]:
        nbrs = np.nonzero(adj[x])[0]
        if nbrs.size == 0:
            return None
        k = int(nbrs[rng.integers(nbrs.size)])
        v = explore_neighbor(view.positions[x], view.positions[k], rng, self._box)
        unknown = nbrs[~self.known[x, nbrs]]
        pool = unknown if unknown.size else nbrs
        d2 = ((view.positions[pool] - v) ** 2).sum(axis=1)
        # pool is ascending, so argmin breaks distance ties toward the lower id
        return int(pool[np.argmin(d2)])

    def _walk(self, bm: BeeMessage, view, adj, transmit: Transmit, rng):
        limit = self.cfg.limit
        while bm.alive:
            x = bm.current
            if bm.role is Role.SBM:
                y = self._explore(view, adj, x, rng)
                if y is None:
                    return
                self.known[x, y] = True
                best = self._admissible(x, adj)
                if best.size == 0:
                    if not self._send(bm, y, transmit):
                        return
                    continue
                bm.target = int(best[np.argmin(self._rank[best])])
                bm.set_role(Role.EBM)
            elif bm.role is Role.OBM:
                choices = self._admissible(x, adj)
                if choices.size == 0:
                    bm.set_role(Role.SBM)
                    continue
                fit = self._fit[choices]
                w = 0.9 * fit / fit.max() + 0.1
                pick = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
                bm.target = int(choices[min(pick, choices.size - 1)])
                bm.set_role(Role.EBM)
            f = bm.target
            if not self._send(bm, f, transmit):
                return
            if self.crowding[f] >= limit:
                bm.set_role(Role.SBM)
                bm.target = None
                continue
            self.crowding[f] += 1
            self.resident.append(bm)
            return

    def _send(self, bm, to, transmit) -> bool:
        src = bm.current
        bm.hop(to)
        self.hops += 1
        if transmit(src, to):
            self.known[src, to] = self.known[to, src] = True
            return True
        return False

    def tick(self, view: NetworkView, rng, transmit: Optional[Transmit] = None, alive=None, adj=None):
        """Advance the protocol by one BM period."""
        for bm in self.resident:
            self.crowding[bm.current] -= 1
        self.resident = []
        adj = view.in_range() if adj is None else adj
        self._rate(view)
        self._box = (np.asarray(view.lower, dtype=float), np.asarray(view.upper, dtype=float))
        send = transmit or (lambda a, b: True)
        scout_turn = self.ticks % 2 == 0
        for x in range(view.size):
            if alive is not None and not alive[x]:
                continue
            scout = scout_turn or not self.known[x].any()
            bm = BeeMessage(Role.SBM if scout else Role.OBM, x, x, self.ttl, self.size_bits)
            self._walk(bm, view, adj, send, rng)
        self.ticks += 1

    def candidates(self, view: NetworkView, sender: int, receiver: int, k: int, adj=None,
                   allow_fewer: bool = False) -> list:
        """Top-k admissible entries of the sender's priority set reachable by both ends."""
        adj = view.in_range() if adj is None else adj
        self._rate(view)
        usable = self._admissible(sender, adj)
        usable = usable[adj[receiver, usable] & (usable != receiver)]
        if usable.size < k and not allow_fewer:
            raise CandidateShortage(k, int(usable.size))
        return [int(j) for j in usable[np.argsort(self._rank[usable])][:k]]


def select_candidates(sender: int, receiver: int, k: int, view: NetworkView, rng,
                      cfg: Optional[AbcConfig] = None, warmup: float = 10.0, bm_rate: float = 5.0,
                      routing: Optional[BeeRouting] = None) -> list:
    """Warm up a BM protocol on a frozen view and return the sender's best k relays."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cfg = cfg or AbcConfig()
    if routing is None:
        routing = BeeRouting(view.size, cfg)
        for _ in range(int(round(warmup * bm_rate))):
            routing.tick(view, rng)
    return routing.candidates(view, sender, receiver, k)
