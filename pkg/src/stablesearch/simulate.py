"""Ground-truth SEM data generation and ROC/AUC recovery evaluation.

A ground-truth longitudinal model has a baseline part over the first slice
and a stationary transition part over consecutive slice pairs.  Data is
sampled slice-recursively with Gaussian noise.  Recovery quality is measured
by sweeping the selection threshold over stability curves and comparing the
selected structures against the true pattern, yielding ROC curves and AUCs
for both edges and causal paths.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeMismatch
from .graphs import ConstraintMask, Cpdag, Dag, dag_to_cpdag, is_acyclic, topological_order
from .longitudinal import (
    Layout,
    LongitudinalDataset,
    TransitionCov,
    subsample_subjects,
    transition_labels,
    transition_mask,
)
from .scoring import Dataset
from .search import SearchParams
from .seeding import DATAGEN_LANE, PIPELINE_LANE, SUBSAMPLE_LANE, derived_rng, derived_seed
from .stability import (
    EDGE,
    StabilityGraph,
    _directed_closure,
    collect_models,
    compute_pi_bic,
    run_searches,
    stability_graphs,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruthModel:
    """Generating SEM: baseline arcs over p nodes, transition arcs over 2p.

    Transition nodes follow the reshaped convention, prev block first; the
    structural rules (nothing prev-internal, nothing backward) must hold.
    """

    p: int
    n_slices: int
    baseline_arcs: frozenset
    transition_arcs: frozenset
    baseline_weights: dict
    transition_weights: dict
    baseline_noise: tuple
    transition_noise: tuple

    def __post_init__(self):
        p = self.p
        if self.n_slices < 2:
            raise ShapeMismatch("a longitudinal model needs at least two slices")
        if any(not (0 <= a < p and 0 <= b < p) for a, b in self.baseline_arcs):
            raise ShapeMismatch("baseline arcs out of range")
        for a, b in self.transition_arcs:
            if not (0 <= a < 2 * p and 0 <= b < 2 * p):
                raise ShapeMismatch("transition arcs out of range")
            if b < p:
                raise ShapeMismatch(
                    "transition arcs may not point into the previous slice"
                )
        if not is_acyclic(p, self.baseline_arcs):
            raise ShapeMismatch("baseline arcs contain a cycle")
        if not is_acyclic(2 * p, self.transition_arcs):
            raise ShapeMismatch("transition arcs contain a cycle")
        if set(self.baseline_weights) != set(self.baseline_arcs) or set(
            self.transition_weights
        ) != set(self.transition_arcs):
            raise ShapeMismatch("weights must cover exactly the arcs")
        if len(self.baseline_noise) != p or len(self.transition_noise) != p:
            raise ShapeMismatch("need one noise scale per variable and part")
        if min(self.baseline_noise + self.transition_noise, default=1.0) <= 0:
            raise ShapeMismatch("noise scales must be positive")

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(f"X{i + 1}" for i in range(self.p))

    def layout(self) -> Layout:
        return Layout(self.variables, self.n_slices)


def default_structure(n_slices: int = 3) -> GroundTruthModel:
    """The four-variable demo structure used by the simulation commands.

    Baseline: X2 -> X1 and X4 -> X3.  Transition: every variable drives its
    own next-slice value, X1 drives next-slice X2, X3 drives next-slice X4,
    and the current slice repeats the baseline's two intra-slice arcs.
    Weights default to 1 and are meant to be replaced by
    random_parameterization.
    """
    p = 4
    baseline = frozenset({(1, 0), (3, 2)})
    transition = frozenset(
        {(v, p + v) for v in range(p)}
        | {(0, p + 1), (2, p + 3)}
        | {(p + 1, p + 0), (p + 3, p + 2)}
    )
    return GroundTruthModel(
        p,
        n_slices,
        baseline,
        transition,
        {a: 1.0 for a in baseline},
        {a: 1.0 for a in transition},
        (1.0,) * p,
        (1.0,) * p,
    )


def random_parameterization(
    structure: GroundTruthModel, rng: np.random.Generator
) -> GroundTruthModel:
    """Same arcs, fresh weights: magnitude Uniform[0.3, 1.0], random sign."""

    def draw(arcs):
        arcs = sorted(arcs)
        mags = rng.uniform(0.3, 1.0, size=len(arcs))
        signs = rng.choice([-1.0, 1.0], size=len(arcs))
        return {a: float(m * s) for a, m, s in zip(arcs, mags, signs)}

    return replace(
        structure,
        baseline_weights=draw(structure.baseline_arcs),
        transition_weights=draw(structure.transition_arcs),
        baseline_noise=(1.0,) * structure.p,
        transition_noise=(1.0,) * structure.p,
    )


def generate_data(
    model: GroundTruthModel, s: int, rng: np.random.Generator
) -> LongitudinalDataset:
    """Sample s subjects slice-recursively from the generating SEM."""
    p, T = model.p, model.n_slices
    base_parents = {v: [] for v in range(p)}
    for (u, v), w in sorted(model.baseline_weights.items()):
        base_parents[v].append((u, w))
    cur_parents = {v: [] for v in range(p)}
    intra = set()
    for (u, c), w in sorted(model.transition_weights.items()):
        cur_parents[c - p].append((u, w))
        if u >= p:
            intra.add((u - p, c - p))

    base_order = topological_order(p, model.baseline_arcs)
    cur_order = topological_order(p, intra)

    slices = np.empty((T, s, p))
    x0 = np.zeros((s, p))
    for v in base_order:
        total = model.baseline_noise[v] * rng.standard_normal(s)
        for u, w in base_parents[v]:
            total = total + w * x0[:, u]
        x0[:, v] = total
    slices[0] = x0
    for t in range(1, T):
        prev, cur = slices[t - 1], np.zeros((s, p))
        for v in cur_order:
            total = model.transition_noise[v] * rng.standard_normal(s)
            for u, w in cur_parents[v]:
                total = total + w * (prev[:, u] if u < p else cur[:, u - p])
            cur[:, v] = total
        slices[t] = cur

    layout = model.layout()
    wide = np.empty((s, p * T))
    names = layout.column_names()
    for j, name in enumerate(names):
        v, k = name.rsplit("_t", 1)
        wide[:, j] = slices[int(k)][:, layout.variables.index(v)]
    return LongitudinalDataset(Dataset(names, wide), layout)


def simulate_datasets(
    model: GroundTruthModel, n_datasets: int, s: int, seed: int
) -> list[LongitudinalDataset]:
    """Replicate datasets with per-index derived generator streams."""
    return [
        generate_data(model, s, derived_rng(seed, DATAGEN_LANE, d))
        for d in range(n_datasets)
    ]


def true_cpdag(
    model: GroundTruthModel,
    baseline_mask: ConstraintMask | None = None,
    trans_mask: ConstraintMask | None = None,
) -> tuple[Cpdag, Cpdag]:
    """Patterns of the two ground-truth parts under their masks."""
    if trans_mask is None:
        trans_mask = transition_mask(model.variables)
    baseline = dag_to_cpdag(Dag(model.p, model.baseline_arcs), baseline_mask)
    transition = dag_to_cpdag(
        Dag(2 * model.p, model.transition_arcs), trans_mask
    )
    return baseline, transition


@dataclass(frozen=True)
class RocCurve:
    """Threshold-swept operating points, sorted by FPR, with the AUC."""

    points: tuple
    auc: float


def _allowed_structures(sg: StabilityGraph, mask: ConstraintMask | None):
    """The evaluation universe: structures the constrained search can emit."""
    keys = sg.probabilities.keys()
    if mask is None:
        return set(keys)
    if sg.kind == EDGE:
        return {
            (a, b) for a, b in keys if mask.allows(a, b) or mask.allows(b, a)
        }
    p = mask.n_nodes
    adj = np.zeros((p, p), dtype=np.uint8)
    for a in range(p):
        for b in range(p):
            if a != b and mask.allows(a, b):
                adj[a, b] = 1
    reach = adj | np.eye(p, dtype=np.uint8)
    steps = 1
    while steps < p:
        reach = (reach @ reach > 0).astype(np.uint8)
        steps *= 2
    possible = (adj @ reach) > 0
    return {(a, b) for a, b in keys if possible[a, b]}


def roc_and_auc(
    sg: StabilityGraph,
    truth: Cpdag,
    pi_bic: int,
    mask: ConstraintMask | None = None,
) -> RocCurve:
    """Sweep the selection threshold over a 101-point grid.

    A structure counts as selected when its best probability within the
    complexity window [0, pi_bic] reaches the threshold; it counts as true
    when the ground-truth pattern contains it (skeleton membership for
    edges, a directed path for causal paths).  ``mask`` restricts the
    universe to structures the constrained search could ever return.
    """
    window = slice(0, min(pi_bic, sg.max_complexity) + 1)
    universe = _allowed_structures(sg, mask)
    reliability = {
        k: float(np.max(sg.probabilities[k][window])) for k in universe
    }
    if sg.kind == EDGE:
        skel = truth.skeleton()
        positives = {k for k in universe if k in skel}
    else:
        closure = _directed_closure(truth)
        positives = {k for k in universe if closure[k[0], k[1]]}
    n_pos = len(positives)
    n_neg = len(universe) - n_pos

    points = {(0.0, 0.0), (1.0, 1.0)}
    for thr in np.linspace(0.0, 1.0, 101):
        selected = {k for k, r in reliability.items() if r >= thr}
        tp = len(selected & positives)
        fp = len(selected) - tp
        tpr = tp / n_pos if n_pos else 1.0
        fpr = fp / n_neg if n_neg else 0.0
        points.add((float(fpr), float(tpr)))
    ordered = sorted(points)
    auc = float(
        np.trapezoid([t for _, t in ordered], [f for f, _ in ordered])
    )
    return RocCurve(tuple(ordered), auc)


def averaging_scheme(sgs: list[StabilityGraph]) -> StabilityGraph:
    """Pointwise mean of probability curves across datasets."""
    if not sgs:
        raise ShapeMismatch("nothing to average")
    first = sgs[0]
    for sg in sgs[1:]:
        if (
            sg.kind != first.kind
            or sg.labels != first.labels
            or sg.probabilities.keys() != first.probabilities.keys()
            or len(sg.imputed) != len(first.imputed)
        ):
            raise ShapeMismatch("stability graphs do not line up")
    probabilities = {
        k: np.mean([sg.probabilities[k] for sg in sgs], axis=0)
        for k in first.probabilities
    }
    imputed = np.logical_or.reduce([sg.imputed for sg in sgs])
    return StabilityGraph(first.kind, first.labels, probabilities, imputed)


@dataclass
class EvaluationReport:
    """Averaged ROC curves plus the per-dataset (individual-scheme) AUCs."""

    edge_roc: RocCurve
    causal_roc: RocCurve
    edge_aucs: list[float]
    causal_aucs: list[float]
    pi_bics: list[int]


def evaluate_recovery(
    datasets: list[LongitudinalDataset],
    model: GroundTruthModel,
    params: SearchParams,
    prior=(),
    n_subsets: int = 50,
    parallelism: int = 1,
) -> EvaluationReport:
    """Transition-model recovery across replicate datasets.

    Each dataset gets its own subject-level subsampling and searches, all
    seeded from the dataset index.  The averaging scheme pools the stability
    curves before the ROC sweep, with the BIC complexity fixed at the median
    of the per-dataset values; the individual scheme keeps one ROC per
    dataset.
    """
    variables = model.variables
    tmask = transition_mask(variables, prior)
    _, truth = true_cpdag(model, trans_mask=tmask)

    edge_sgs, path_sgs, pi_bics = [], [], []
    for d, ld in enumerate(datasets):
        t_params = replace(
            params, seed=derived_seed(params.seed, PIPELINE_LANE, d)
        )
        rng = derived_rng(t_params.seed, SUBSAMPLE_LANE, 0)
        subsets = subsample_subjects(ld, n_subsets, rng)
        results = run_searches(
            subsets, TransitionCov(ld.layout), tmask, t_params, parallelism
        )
        models = collect_models(results)
        edge_sg, path_sg = stability_graphs(
            models, tmask, transition_labels(variables)
        )
        edge_sgs.append(edge_sg)
        path_sgs.append(path_sg)
        pi_bics.append(compute_pi_bic(models))
        log.info("dataset %d searched, pi_bic=%d", d, pi_bics[-1])

    pi_med = int(np.median(pi_bics))
    edge_roc = roc_and_auc(averaging_scheme(edge_sgs), truth, pi_med, tmask)
    causal_roc = roc_and_auc(averaging_scheme(path_sgs), truth, pi_med, tmask)
    edge_aucs = [
        roc_and_auc(sg, truth, j, tmask).auc for sg, j in zip(edge_sgs, pi_bics)
    ]
    causal_aucs = [
        roc_and_auc(sg, truth, j, tmask).auc for sg, j in zip(path_sgs, pi_bics)
    ]
    return EvaluationReport(edge_roc, causal_roc, edge_aucs, causal_aucs, pi_bics)


def truth_to_dict(model: GroundTruthModel) -> dict:
    return {
        "p": model.p,
        "slices": model.n_slices,
        "baseline_arcs": sorted(map(list, model.baseline_arcs)),
        "transition_arcs": sorted(map(list, model.transition_arcs)),
        "baseline_weights": {
            f"{a},{b}": w for (a, b), w in sorted(model.baseline_weights.items())
        },
        "transition_weights": {
            f"{a},{b}": w
            for (a, b), w in sorted(model.transition_weights.items())
        },
        "baseline_noise": list(model.baseline_noise),
        "transition_noise": list(model.transition_noise),
    }


def truth_from_dict(obj: dict) -> GroundTruthModel:
    def weights(raw):
        out = {}
        for key, w in raw.items():
            a, b = key.split(",")
            out[(int(a), int(b))] = float(w)
        return out

    try:
        return GroundTruthModel(
            int(obj["p"]),
            int(obj["slices"]),
            frozenset(tuple(a) for a in obj["baseline_arcs"]),
            frozenset(tuple(a) for a in obj["transition_arcs"]),
            weights(obj["baseline_weights"]),
            weights(obj["transition_weights"]),
            tuple(obj["baseline_noise"]),
            tuple(obj["transition_noise"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ShapeMismatch(f"bad ground-truth file: {exc}") from exc
