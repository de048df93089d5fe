"""Stability selection over subsampled searches.

Each data subset yields a Pareto set of models; aggregation turns those into
per-structure selection-probability curves indexed by model complexity, from
which thresholds carve out the relevant structures and the final summary
graph is assembled.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateData, SearchFailed, StableSearchError
from .graphs import ConstraintMask, Dag, dag_to_cpdag, topological_order
from .scoring import Dataset, sample_covariance
from .search import ParetoModel, SearchParams, evolve
from .seeding import SEARCH_LANE, derived_seed

log = logging.getLogger(__name__)

EDGE = "edge"
CAUSAL_PATH = "causal_path"


@dataclass(frozen=True)
class Thresholds:
    pi_sel: float = 0.6
    pi_bic: int = 0

    def __post_init__(self):
        if not 0 < self.pi_sel <= 1:
            raise ValueError("pi_sel must lie in (0, 1]")
        if self.pi_bic < 0:
            raise ValueError("pi_bic must be nonnegative")


@dataclass(frozen=True)
class RelevantStructure:
    kind: str
    key: tuple[int, int]
    reliability: float


@dataclass(frozen=True)
class StabilityGraph:
    """Selection-probability curves per structure, indexed by complexity 0..J.

    probabilities holds one (J+1)-vector per key: unordered (a, b) pairs with
    a < b for edges, ordered pairs for causal paths.  imputed marks the
    complexities at which no model was observed and the value was pinned or
    interpolated.
    """

    kind: str
    labels: tuple[str, ...]
    probabilities: dict[tuple[int, int], np.ndarray]
    imputed: np.ndarray

    @property
    def max_complexity(self) -> int:
        return len(self.imputed) - 1

    def curve(self, a: int, b: int) -> np.ndarray:
        if self.kind == EDGE:
            return self.probabilities[(min(a, b), max(a, b))]
        return self.probabilities[(a, b)]


@dataclass
class SubsetResult:
    index: int
    models: list[ParetoModel] | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.models is None


def subsample(data: Dataset, n_subsets: int, rng: np.random.Generator) -> list[Dataset]:
    """n_subsets subsets of size floor(n/2), rows drawn without replacement."""
    n = data.n_rows
    if n < 4:
        raise DegenerateData("need at least 4 rows to subsample")
    half = n // 2
    if half < data.n_cols + 2:
        raise DegenerateData(
            f"subset size {half} too small for {data.n_cols} columns"
        )
    if n_subsets < 1:
        raise ValueError("n_subsets must be positive")
    return [
        data.take_rows(rng.choice(n, size=half, replace=False))
        for _ in range(n_subsets)
    ]


def cross_sectional_cov(subset: Dataset):
    """Default cov-fn: sample covariance, row count, column names."""
    return sample_covariance(subset), subset.n_rows, subset.names


def _search_one(task):
    index, subset, cov_fn, mask, params = task
    try:
        cov, n_eff, labels = cov_fn(subset)
        seed_i = derived_seed(params.seed, SEARCH_LANE, index)
        models = evolve(
            cov, n_eff, mask.n_nodes, mask, replace(params, seed=seed_i), labels
        )
        return SubsetResult(index, models)
    except StableSearchError as exc:
        return SubsetResult(index, None, f"{type(exc).__name__}: {exc}")


def run_searches(
    subsets: list[Dataset],
    cov_fn,
    mask: ConstraintMask,
    params: SearchParams,
    parallelism: int = 1,
) -> list[SubsetResult]:
    """One evolve() per subset with an index-derived seed.

    Results are ordered by subset index whatever the parallelism degree, and
    the derived seeds depend only on (params.seed, index), so outputs are
    reproducible bit for bit.  Fails when more than 10% of subsets fail.
    """
    if not subsets:
        raise SearchFailed("no subsets to search")
    tasks = [(i, s, cov_fn, mask, params) for i, s in enumerate(subsets)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_search_one, tasks))
    else:
        results = [_search_one(t) for t in tasks]

    failures = [r for r in results if r.failed]
    for r in failures:
        log.warning("subset %d failed: %s", r.index, r.error)
    if len(failures) > 0.1 * len(subsets):
        raise SearchFailed(
            f"{len(failures)} of {len(subsets)} subset searches failed"
        )
    return results


def collect_models(results: list[SubsetResult]) -> list[ParetoModel]:
    out = []
    for r in results:
        if not r.failed:
            out.extend(r.models)
    return out


def _directed_closure(cpdag) -> np.ndarray:
    p = cpdag.n_nodes
    adj = np.zeros((p, p), dtype=np.uint8)
    for a, b in cpdag.directed:
        adj[a, b] = 1
    reach = adj | np.eye(p, dtype=np.uint8)
    steps = 1
    while steps < p:
        reach = (reach @ reach > 0).astype(np.uint8)
        steps *= 2
    return (adj @ reach) > 0  # paths of length >= 1


def complete_dag_under(mask: ConstraintMask) -> Dag | None:
    """The densest DAG the mask allows: one arc per pair with a free direction.

    Pairs forbidden in both directions stay disconnected.  Returns None only
    when the forced precedences (pairs with exactly one allowed direction)
    form a cycle, so no consistent total order exists.
    """
    p = mask.n_nodes
    forced = set()
    skipped = set()
    for a in range(p):
        for b in range(a + 1, p):
            fwd, bwd = mask.allows(a, b), mask.allows(b, a)
            if not fwd and not bwd:
                skipped.add((a, b))
            elif not bwd:
                forced.add((a, b))
            elif not fwd:
                forced.add((b, a))
    order = topological_order(p, forced)
    if order is None:
        return None
    arcs = frozenset(
        (order[i], order[j])
        for i in range(p)
        for j in range(i + 1, p)
        if (min(order[i], order[j]), max(order[i], order[j])) not in skipped
    )
    return Dag(p, arcs)


def _tabulate(models, p: int):
    """One pass over the models: per-complexity counts, edge and path hits."""
    max_j = p * (p - 1) // 2
    counts = np.zeros(max_j + 1, dtype=np.int64)
    edge_hits: dict[tuple[int, int], np.ndarray] = {
        (a, b): np.zeros(max_j + 1) for a in range(p) for b in range(a + 1, p)
    }
    path_hits: dict[tuple[int, int], np.ndarray] = {
        (a, b): np.zeros(max_j + 1) for a in range(p) for b in range(p) if a != b
    }
    for m in models:
        j = m.fit.complexity
        counts[j] += 1
        skel = m.cpdag.skeleton()
        for pair in skel:
            edge_hits[pair][j] += 1
        closure = _directed_closure(m.cpdag)
        for a, b in zip(*np.nonzero(closure)):
            path_hits[(int(a), int(b))][j] += 1
    return counts, edge_hits, path_hits


def _finalize_curves(hits, counts, pinned: dict[int, dict]):
    """Observed ratios + pinned anchors, linear interpolation across gaps.

    Beyond the last anchor the curve extends as a constant.  Returns the
    curves plus the imputed-complexity flags (True where nothing was
    observed).
    """
    max_j = len(counts) - 1
    observed = np.flatnonzero(counts > 0)
    anchors = sorted(set(observed.tolist()) | set(pinned))
    curves = {}
    for key, hit in hits.items():
        ys = []
        for j in anchors:
            if counts[j] > 0:
                ys.append(hit[j] / counts[j])
            else:
                ys.append(pinned[j][key])
        curves[key] = np.interp(np.arange(max_j + 1), anchors, ys)
    imputed = counts == 0
    return curves, imputed


def stability_graphs(
    models, mask: ConstraintMask, labels: tuple[str, ...] | None = None
) -> tuple[StabilityGraph, StabilityGraph]:
    """Edge- and causal-path-stability graphs in one aggregation pass.

    Boundary complexities are pinned analytically: complexity 0 has only the
    empty pattern (probability 0 everywhere), and the maximum complexity has
    the single constrained class of complete DAGs (edge probability 1; path
    probabilities from that class when the mask admits a complete DAG).
    """
    models = list(models)
    if not models:
        raise SearchFailed("no models to aggregate")
    p = mask.n_nodes
    if labels is None:
        labels = models[0].dag.labels
    max_j = p * (p - 1) // 2
    counts, edge_hits, path_hits = _tabulate(models, p)

    edge_pins = {
        0: {k: 0.0 for k in edge_hits},
        max_j: {k: 1.0 for k in edge_hits},
    }
    path_pins = {0: {k: 0.0 for k in path_hits}}
    full = complete_dag_under(mask)
    if full is not None:
        closure = _directed_closure(dag_to_cpdag(full, mask))
        path_pins[max_j] = {
            k: float(closure[k[0], k[1]]) for k in path_hits
        }

    edge_curves, imputed = _finalize_curves(edge_hits, counts, edge_pins)
    path_curves, _ = _finalize_curves(path_hits, counts, path_pins)
    return (
        StabilityGraph(EDGE, labels, edge_curves, imputed),
        StabilityGraph(CAUSAL_PATH, labels, path_curves, imputed.copy()),
    )


def edge_stability(models, mask: ConstraintMask, labels=None) -> StabilityGraph:
    return stability_graphs(models, mask, labels)[0]


def causal_path_stability(models, mask: ConstraintMask, labels=None) -> StabilityGraph:
    return stability_graphs(models, mask, labels)[1]


def compute_pi_bic(models) -> int:
    """Complexity with the smallest mean BIC; ties go to the smaller level."""
    sums: dict[int, float] = {}
    ns: dict[int, int] = {}
    for m in models:
        j = m.fit.complexity
        sums[j] = sums.get(j, 0.0) + m.fit.bic
        ns[j] = ns.get(j, 0) + 1
    if not sums:
        raise SearchFailed("no models, pi_bic undefined")
    best_j = min(sums)  # fallback when every mean is infinite
    best = np.inf
    for j in sorted(sums):
        mean = sums[j] / ns[j]
        if mean < best:
            best = mean
            best_j = j
    return best_j


def relevant_structures(
    edge_sg: StabilityGraph, path_sg: StabilityGraph, thr: Thresholds
) -> list[RelevantStructure]:
    """Structures whose probability within complexities <= pi_bic peaks >= pi_sel."""
    out = []
    for sg in (edge_sg, path_sg):
        window = slice(0, min(thr.pi_bic, sg.max_complexity) + 1)
        for key in sorted(sg.probabilities):
            reliability = float(np.max(sg.probabilities[key][window]))
            if reliability >= thr.pi_sel:
                out.append(RelevantStructure(sg.kind, key, reliability))
    return out


@dataclass(frozen=True)
class AnnotatedCausalGraph:
    """Final summary graph: reliability on every edge, effects on directed ones."""

    n_nodes: int
    labels: tuple[str, ...]
    directed: dict[tuple[int, int], float]
    undirected: dict[tuple[int, int], float]
    effects: dict[tuple[int, int], float]

    def arc_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.directed)


def assemble_graph(
    relevant_edges: list[RelevantStructure],
    relevant_paths: list[RelevantStructure],
    mask: ConstraintMask,
    labels: tuple[str, ...],
) -> AnnotatedCausalGraph:
    """Summary-graph assembly: edges first, mask-forced orientations second,
    then relevant causal paths orient their endpoints' edges where possible.

    Orientations that would close a directed cycle, or contradict an earlier
    orientation, are logged and skipped; the directed part stays acyclic.
    """
    p = mask.n_nodes
    undirected: dict[tuple[int, int], float] = {}
    directed: dict[tuple[int, int], float] = {}

    for st in relevant_edges:
        a, b = min(st.key), max(st.key)
        undirected[(a, b)] = st.reliability

    def cycle_with(x: int, y: int) -> bool:
        arcs = set(directed) | {(x, y)}
        return topological_order(p, arcs) is None

    # arcs the mask forces: pair present, one direction forbidden
    for a, b in sorted(undirected):
        fwd, bwd = mask.allows(a, b), mask.allows(b, a)
        if fwd and not bwd:
            arc = (a, b)
        elif bwd and not fwd:
            arc = (b, a)
        else:
            continue
        if cycle_with(*arc):
            log.warning(
                "mask-forced arc %s -> %s would close a cycle; edge left undirected",
                labels[arc[0]], labels[arc[1]],
            )
            continue
        directed[arc] = undirected.pop((a, b))

    order = sorted(relevant_paths, key=lambda st: (-st.reliability, st.key))
    for st in order:
        a, b = st.key
        pair = (min(a, b), max(a, b))
        if (b, a) in directed:
            log.warning(
                "orientation conflict: path %s -> %s contradicts existing arc",
                labels[a], labels[b],
            )
            continue
        if (a, b) in directed or pair not in undirected:
            continue
        if cycle_with(a, b):
            log.warning(
                "skipping orientation %s -> %s: would close a directed cycle",
                labels[a], labels[b],
            )
            continue
        directed[(a, b)] = undirected.pop(pair)

    return AnnotatedCausalGraph(p, tuple(labels), directed, undirected, {})


def annotate_effects(
    graph: AnnotatedCausalGraph, estimates
) -> AnnotatedCausalGraph:
    """Attach standardized (or raw, for discrete endpoints) effects to arcs."""
    effects = dict(graph.effects)
    for est in estimates:
        key = (est.source, est.target)
        if key in graph.directed:
            value = est.standardized if est.standardized is not None else est.median
            effects[key] = value
    return AnnotatedCausalGraph(
        graph.n_nodes, graph.labels, graph.directed, graph.undirected, effects
    )
