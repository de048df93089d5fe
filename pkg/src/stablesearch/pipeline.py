"""End-to-end stability selection on one search problem.

Composition of the pieces: subsample the data, run one evolutionary search
per subset, aggregate Pareto models into stability curves, pick the BIC
complexity, collect the relevant structures, assemble the summary graph and
annotate it with median causal effects.
"""

from __future__ import annotations

from dataclasses import dataclass

from .effects import EffectEstimate, aggregate_effects
from .graphs import ConstraintMask
from .scoring import Dataset
from .search import SearchParams
from .seeding import SUBSAMPLE_LANE, derived_rng
from .stability import (
    CAUSAL_PATH,
    EDGE,
    AnnotatedCausalGraph,
    RelevantStructure,
    StabilityGraph,
    SubsetResult,
    Thresholds,
    annotate_effects,
    assemble_graph,
    collect_models,
    compute_pi_bic,
    cross_sectional_cov,
    relevant_structures,
    run_searches,
    stability_graphs,
    subsample,
)


@dataclass
class PipelineResult:
    """Everything one stability-selection run produces."""

    labels: tuple[str, ...]
    edge_sg: StabilityGraph
    path_sg: StabilityGraph
    pi_bic: int
    thresholds: Thresholds
    relevant: list[RelevantStructure]
    graph: AnnotatedCausalGraph
    estimates: list[EffectEstimate]
    subset_results: list[SubsetResult]


def run_pipeline(
    data: Dataset,
    mask: ConstraintMask,
    params: SearchParams,
    n_subsets: int = 50,
    pi_sel: float = 0.6,
    parallelism: int = 1,
    cov_fn=cross_sectional_cov,
    subsets: list[Dataset] | None = None,
    labels: tuple[str, ...] | None = None,
    effects_data: Dataset | None = None,
) -> PipelineResult:
    """Subsample, search, aggregate, threshold, assemble, estimate.

    ``subsets`` overrides the default row subsampling (used for
    subject-level draws on longitudinal data), in which case ``data`` only
    provides the fallback for ``effects_data``.  ``cov_fn`` turns a subset
    into (covariance, effective n, labels) and is what the transition model
    hooks to reshape each subset.
    """
    if labels is None:
        labels = data.names
    if subsets is None:
        rng = derived_rng(params.seed, SUBSAMPLE_LANE, 0)
        subsets = subsample(data, n_subsets, rng)
    results = run_searches(subsets, cov_fn, mask, params, parallelism)
    models = collect_models(results)
    edge_sg, path_sg = stability_graphs(models, mask, tuple(labels))
    pi_bic = compute_pi_bic(models)
    thresholds = Thresholds(pi_sel, pi_bic)
    relevant = relevant_structures(edge_sg, path_sg, thresholds)
    edges = [st for st in relevant if st.kind == EDGE]
    paths = [st for st in relevant if st.kind == CAUSAL_PATH]
    graph = assemble_graph(edges, paths, mask, tuple(labels))

    estimates: list[EffectEstimate] = []
    if paths:
        covariances = [
            None if r.failed else cov_fn(s)[0] for r, s in zip(results, subsets)
        ]
        estimates = aggregate_effects(
            results,
            covariances,
            pi_bic,
            paths,
            data if effects_data is None else effects_data,
            mask,
        )
        graph = annotate_effects(graph, estimates)
    return PipelineResult(
        tuple(labels),
        edge_sg,
        path_sg,
        pi_bic,
        thresholds,
        relevant,
        graph,
        estimates,
        results,
    )
