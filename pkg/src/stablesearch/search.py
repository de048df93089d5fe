"""NSGA-II search over constrained DAG structures.

Objectives are (chi_square, complexity), both minimized.  Structures are
encoded as bit vectors over ordered node pairs; crossover and mutation may
break acyclicity, so every operator runs its output through cycle repair.
The module keeps two faces: small, contract-shaped operator functions, and a
batched evolve() loop that scores through per-node and per-structure caches
(the search is the hot path of the whole pipeline).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateData
from .graphs import ConstraintMask, Cpdag, Dag, dag_to_cpdag, repair_arcs
from .scoring import FitResult, fit_dag_ml

log = logging.getLogger(__name__)

INFEASIBLE = float("inf")


def ordered_pairs(p: int) -> list[tuple[int, int]]:
    """Bit position k of a chromosome corresponds to ordered_pairs(p)[k]."""
    return [(a, b) for a in range(p) for b in range(p) if a != b]


@dataclass(frozen=True)
class SearchParams:
    generations: int = 35
    population_size: int = 150
    p_crossover: float = 0.85
    p_mutation: float = 0.07
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.p_crossover <= 1 or not 0 <= self.p_mutation <= 1:
            raise ValueError("operator probabilities must lie in [0, 1]")
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population_size must be even and at least 4")
        if self.generations < 1:
            raise ValueError("generations must be positive")


@dataclass(frozen=True, eq=False)
class Chromosome:
    """Bit vector over ordered pairs; forbidden positions are always false."""

    bits: np.ndarray
    mask: ConstraintMask

    def __post_init__(self):
        p = self.mask.n_nodes
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (p * (p - 1),):
            raise ValueError(f"expected {p * (p - 1)} bits")
        object.__setattr__(self, "bits", bits)
        self.bits.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.mask.n_nodes

    def arcs(self) -> frozenset[tuple[int, int]]:
        pairs = ordered_pairs(self.n_nodes)
        return frozenset(pairs[k] for k in np.flatnonzero(self.bits))

    def decode(self) -> Dag:
        return Dag(self.n_nodes, self.arcs())

    @classmethod
    def from_arcs(cls, arcs, mask: ConstraintMask) -> "Chromosome":
        index = {pair: k for k, pair in enumerate(ordered_pairs(mask.n_nodes))}
        bits = np.zeros(len(index), dtype=bool)
        for arc in arcs:
            bits[index[arc]] = True
        return cls(bits, mask)

    @classmethod
    def random(cls, mask: ConstraintMask, rng: np.random.Generator) -> "Chromosome":
        """Sparse random start: each allowed bit set with probability 2/p(p-1)."""
        p = mask.n_nodes
        length = p * (p - 1)
        bits = rng.random(length) < 2.0 / length
        return cls._repaired(bits, mask, rng)

    @classmethod
    def _repaired(cls, bits, mask: ConstraintMask, rng) -> "Chromosome":
        pairs = ordered_pairs(mask.n_nodes)
        raw = {pairs[k] for k in np.flatnonzero(bits)}
        return cls.from_arcs(repair_arcs(mask.n_nodes, raw, mask, rng), mask)


@dataclass
class Individual:
    chromosome: Chromosome
    objectives: tuple[float, int] | None = None
    rank: int | None = None
    crowding: float | None = None


@dataclass(frozen=True)
class ParetoModel:
    """One member of the returned Pareto set, with its equivalence class."""

    dag: Dag
    fit: FitResult
    cpdag: Cpdag


def dominates(a, b) -> bool:
    """True when objective pair a dominates b (minimization, infeasible never wins)."""
    if not np.isfinite(a[0]):
        return False
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def _domination_matrix(objs: np.ndarray) -> np.ndarray:
    chi = objs[:, 0]
    k = objs[:, 1]
    le = (chi[:, None] <= chi[None, :]) & (k[:, None] <= k[None, :])
    lt = (chi[:, None] < chi[None, :]) | (k[:, None] < k[None, :])
    dom = le & lt
    dom[~np.isfinite(chi)] = False
    return dom


def _rank_array(objs: np.ndarray) -> np.ndarray:
    """Front index per row, by Deb's iterative peeling on the domination matrix."""
    n = objs.shape[0]
    dom = _domination_matrix(objs)
    n_dominators = dom.sum(axis=0).astype(np.int64)
    ranks = np.full(n, -1, dtype=np.int64)
    current = 0
    remaining = n
    while remaining:
        front = (n_dominators == 0) & (ranks < 0)
        if not front.any():  # safety net; cannot happen for a strict partial order
            front = ranks < 0
        ranks[front] = current
        n_dominators -= dom[front].sum(axis=0)
        remaining -= int(front.sum())
        current += 1
    return ranks


def fast_nondominated_sort(pop: list[Individual]) -> list[list[Individual]]:
    """Assign ranks and return the fronts, best first."""
    objs = np.array([ind.objectives for ind in pop], dtype=float)
    ranks = _rank_array(objs)
    fronts: list[list[Individual]] = [[] for _ in range(int(ranks.max()) + 1)]
    for ind, r in zip(pop, ranks):
        ind.rank = int(r)
        fronts[int(r)].append(ind)
    return fronts


def _crowding_array(objs: np.ndarray) -> np.ndarray:
    m = objs.shape[0]
    d = np.zeros(m)
    if m <= 2:
        d[:] = np.inf
        return d
    for col in range(2):
        vals = objs[:, col].astype(float)
        finite = np.isfinite(vals)
        if not finite.all():
            # clip infeasible fits to a finite ceiling so spans stay defined
            ceiling = (vals[finite].max() * 2 + 1.0) if finite.any() else 1.0
            vals = np.where(finite, vals, ceiling)
        order = np.argsort(vals, kind="stable")
        d[order[0]] = d[order[-1]] = np.inf
        span = vals[order[-1]] - vals[order[0]]
        if span > 0:
            d[order[1:-1]] += (vals[order[2:]] - vals[order[:-2]]) / span
    return d


def crowding_distance(front: list[Individual]) -> None:
    """Assign crowding in place: boundaries +inf, interior normalized gaps."""
    objs = np.array([ind.objectives for ind in front], dtype=float)
    for ind, val in zip(front, _crowding_array(objs)):
        ind.crowding = float(val)


def binary_tournament(pop: list[Individual], rng: np.random.Generator) -> Individual:
    i, j = rng.integers(0, len(pop), size=2)
    a, b = pop[int(i)], pop[int(j)]
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a if rng.random() < 0.5 else b


def crossover(
    a: Chromosome,
    b: Chromosome,
    rng: np.random.Generator,
    p_crossover: float = 0.85,
) -> tuple[Chromosome, Chromosome]:
    """Uniform crossover with per-bit exchange probability 0.5, then repair."""
    if a.mask != b.mask:
        raise ValueError("parents use different masks")
    if rng.random() >= p_crossover:
        return a, b
    take_b = rng.random(a.bits.shape[0]) < 0.5
    c1 = np.where(take_b, b.bits, a.bits)
    c2 = np.where(take_b, a.bits, b.bits)
    return (
        Chromosome._repaired(c1, a.mask, rng),
        Chromosome._repaired(c2, a.mask, rng),
    )


def mutate(
    c: Chromosome, rng: np.random.Generator, p_mutation: float = 0.07
) -> Chromosome:
    """With probability p_mutation, flip each allowed bit with rate 1/p(p-1)."""
    if rng.random() >= p_mutation:
        return c
    p = c.n_nodes
    length = p * (p - 1)
    allowed = np.array(
        [c.mask.allows(x, y) for x, y in ordered_pairs(p)], dtype=bool
    )
    flips = (rng.random(length) < 1.0 / length) & allowed
    return Chromosome._repaired(c.bits ^ flips, c.mask, rng)


class _Scorer:
    """Chi-square scoring with per-structure and per-(node, parents) memo caches.

    Only (chi_square, complexity) is produced here; full FitResults are fitted
    once at the end for the returned Pareto set.
    """

    def __init__(self, cov: np.ndarray, n: int):
        sign, logdet = np.linalg.slogdet(cov)
        if sign <= 0:
            raise DegenerateData("covariance is not positive definite")
        self.cov = cov
        self.n = n
        self.logdet_s = logdet
        self.node_cache: dict[tuple, float | None] = {}
        self.struct_cache: dict[bytes, float] = {}

    def _node_psi(self, j: int, pa: tuple[int, ...]) -> float | None:
        key = (j, pa)
        hit = self.node_cache.get(key, 0)
        if hit != 0:
            return hit
        cov = self.cov
        if not pa:
            val = float(cov[j, j])
        else:
            idx = list(pa)
            try:
                beta = np.linalg.solve(cov[np.ix_(idx, idx)], cov[idx, j])
                val = float(cov[j, j] - cov[j, idx] @ beta)
            except np.linalg.LinAlgError:
                val = None
            if val is not None and (val <= 0 or not np.isfinite(val)):
                val = None
        self.node_cache[key] = val
        return val

    def chi_square(self, adj: np.ndarray) -> float:
        """adj is a p x p boolean matrix; returns +inf for degenerate fits."""
        key = adj.tobytes()
        hit = self.struct_cache.get(key)
        if hit is not None:
            return hit
        total = 0.0
        ok = True
        for j in range(adj.shape[0]):
            psi = self._node_psi(j, tuple(np.flatnonzero(adj[:, j])))
            if psi is None:
                ok = False
                break
            total += np.log(psi)
        if ok:
            value = max((self.n - 1) * (total - self.logdet_s), 0.0)
        else:
            value = INFEASIBLE
        self.struct_cache[key] = value
        return value


def _repair_adj(
    adj: np.ndarray, mask: ConstraintMask, rng: np.random.Generator, p: int,
    pairs: list[tuple[int, int]],
) -> np.ndarray:
    """Cycle repair on an adjacency matrix (forbidden bits are already clear)."""
    arcs = {pairs[k] for k in np.flatnonzero(adj.reshape(-1)[_offdiag_index(p)])}
    fixed = repair_arcs(p, arcs, mask, rng)
    if len(fixed) == len(arcs):
        return adj
    out = np.zeros((p, p), dtype=bool)
    for a, b in fixed:
        out[a, b] = True
    return out


_OFFDIAG_CACHE: dict[int, np.ndarray] = {}


def _offdiag_index(p: int) -> np.ndarray:
    """Flat indices of the off-diagonal entries, in ordered_pairs order."""
    hit = _OFFDIAG_CACHE.get(p)
    if hit is None:
        hit = np.array([a * p + b for a, b in ordered_pairs(p)], dtype=np.int64)
        _OFFDIAG_CACHE[p] = hit
    return hit


def _is_acyclic_adj(adj: np.ndarray) -> bool:
    p = adj.shape[0]
    m = adj.astype(np.uint8)
    # closure of (I | adj) by repeated squaring covers all path lengths <= p
    reach = m | np.eye(p, dtype=np.uint8)
    steps = 1
    while steps < p:
        reach = (reach @ reach > 0).astype(np.uint8)
        steps *= 2
    return not bool((m @ reach).diagonal().any())


def _pareto_postfilter(
    front_adj: list[np.ndarray], mask: ConstraintMask, cov: np.ndarray, n: int,
    labels: tuple[str, ...] | None,
) -> list[ParetoModel]:
    """Dedup front 0 by CPDAG, keep the best fit per complexity level."""
    p = mask.n_nodes
    pairs = ordered_pairs(p)
    models = []
    seen_structs = set()
    for adj in front_adj:
        key = adj.tobytes()
        if key in seen_structs:
            continue
        seen_structs.add(key)
        arcs = frozenset(
            pairs[k] for k in np.flatnonzero(adj.reshape(-1)[_offdiag_index(p)])
        )
        dag = Dag(p, arcs, labels)
        try:
            fit = fit_dag_ml(dag, cov, n)
        except DegenerateData:
            continue
        models.append((dag, fit))

    # same constrained CPDAG implies same skeleton, hence the same complexity,
    # so keeping the best fit per complexity also deduplicates by CPDAG
    models.sort(key=lambda m: (m[1].complexity, m[1].chi_square, sorted(m[0].arcs)))
    out: list[ParetoModel] = []
    seen_complexity = set()
    for dag, fit in models:
        if fit.complexity in seen_complexity:
            continue
        seen_complexity.add(fit.complexity)
        out.append(ParetoModel(dag, fit, dag_to_cpdag(dag, mask)))
    return out


def evolve(
    cov: np.ndarray,
    n: int,
    p: int,
    mask: ConstraintMask,
    params: SearchParams,
    labels: tuple[str, ...] | None = None,
) -> list[ParetoModel]:
    """Full NSGA-II run; returns the final front 0 after the Pareto post-filter.

    Deterministic for a fixed params.seed.  Individuals whose fit degenerates
    carry chi_square = +inf; they stay in the population but never dominate.
    """
    if mask.n_nodes != p or cov.shape != (p, p):
        raise DegenerateData("covariance, mask and p disagree on dimensions")
    rng = np.random.default_rng(params.seed)
    scorer = _Scorer(cov, n)
    pairs = ordered_pairs(p)
    flat_idx = _offdiag_index(p)
    pop_n = params.population_size

    allowed_flat = np.array([mask.allows(a, b) for a, b in pairs], dtype=bool)
    allowed_mat = np.zeros((p, p), dtype=bool)
    for bit, (a, b) in zip(allowed_flat, pairs):
        allowed_mat[a, b] = bit

    def repair(adj: np.ndarray) -> np.ndarray:
        if _is_acyclic_adj(adj):
            return adj
        return _repair_adj(adj, mask, rng, p, pairs)

    def score_all(adjs: list[np.ndarray]) -> np.ndarray:
        out = np.empty((len(adjs), 2))
        for i, adj in enumerate(adjs):
            out[i, 0] = scorer.chi_square(adj)
            out[i, 1] = adj.sum()
        return out

    # random sparse initialization
    length = p * (p - 1)
    population: list[np.ndarray] = []
    for _ in range(pop_n):
        flat = np.zeros(p * p, dtype=bool)
        flat[flat_idx] = (rng.random(length) < 2.0 / length) & allowed_flat
        population.append(repair(flat.reshape(p, p)))
    objs = score_all(population)

    half = pop_n // 2
    for _ in range(params.generations):
        ranks = _rank_array(objs)
        crowding = np.empty(pop_n)
        for r in range(int(ranks.max()) + 1):
            idx = np.flatnonzero(ranks == r)
            crowding[idx] = _crowding_array(objs[idx])

        # batched binary tournaments: one winner per parent slot
        cand = rng.integers(0, pop_n, size=(pop_n, 2))
        a, b = cand[:, 0], cand[:, 1]
        coin = rng.random(pop_n) < 0.5
        a_better = (ranks[a] < ranks[b]) | (
            (ranks[a] == ranks[b]) & (crowding[a] > crowding[b])
        )
        tie = (ranks[a] == ranks[b]) & (crowding[a] == crowding[b])
        pick_a = a_better | (tie & coin)
        winners = np.where(pick_a, a, b)

        apply_cx = rng.random(half) < params.p_crossover
        mix = rng.random((half, p, p)) < 0.5
        do_mut = rng.random(pop_n) < params.p_mutation
        flip = rng.random((pop_n, p, p)) < 1.0 / length

        offspring: list[np.ndarray] = []
        for t in range(half):
            pa = population[int(winners[2 * t])]
            pb = population[int(winners[2 * t + 1])]
            if apply_cx[t]:
                c1 = np.where(mix[t], pb, pa)
                c2 = np.where(mix[t], pa, pb)
            else:
                c1, c2 = pa.copy(), pb.copy()
            offspring.append(c1)
            offspring.append(c2)
        for i in range(pop_n):
            if do_mut[i]:
                offspring[i] = offspring[i] ^ (flip[i] & allowed_mat)
            offspring[i] = repair(offspring[i])

        off_objs = score_all(offspring)

        # elitist (mu + lambda) environmental selection
        union = population + offspring
        union_objs = np.vstack([objs, off_objs])
        union_ranks = _rank_array(union_objs)
        chosen: list[int] = []
        for r in range(int(union_ranks.max()) + 1):
            idx = np.flatnonzero(union_ranks == r)
            if len(chosen) + len(idx) <= pop_n:
                chosen.extend(idx.tolist())
            else:
                gap = pop_n - len(chosen)
                crowd = _crowding_array(union_objs[idx])
                order = np.argsort(-crowd, kind="stable")
                chosen.extend(idx[order[:gap]].tolist())
            if len(chosen) == pop_n:
                break
        population = [union[i] for i in chosen]
        objs = union_objs[chosen]

    final_ranks = _rank_array(objs)
    front_adj = [population[i] for i in np.flatnonzero(final_ranks == 0)]
    return _pareto_postfilter(front_adj, mask, cov, n, labels)
