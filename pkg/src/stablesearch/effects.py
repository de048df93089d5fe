"""Total causal-effect estimation over equivalence classes and subsets.

For one DAG the total effect of x on y is the coefficient of x in the
least-squares regression of y on {x} union pa(x); adjusting for the parents
of x blocks every back-door path, so the coefficient is computable from a
covariance matrix alone.  Over a pattern the effect becomes a multiset with
one value per class member, and over subsampled searches the multisets
concatenate; the reported estimate is the median.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateData, EmptyMultiset
from .graphs import ConstraintMask, Cpdag, Dag, enumerate_extensions
from .scoring import CONTINUOUS, MAX_CONDITION, Dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EffectEstimate:
    """Median total effect of source on target, optionally standardized."""

    source: int
    target: int
    median: float
    standardized: float | None
    n_values: int


def causal_effect(dag: Dag, cov: np.ndarray, x: int, y: int) -> float:
    """Total effect of x on y in the DAG, from the covariance alone.

    When y is a parent of x, intervening on x cannot change y and the
    effect is 0 by convention.
    """
    if x == y:
        raise ValueError("source and target must differ")
    cov = np.asarray(cov, dtype=float)
    pa = dag.parents(x)
    if y in pa:
        return 0.0
    pred = [x] + [v for v in pa if v != x]
    block = cov[np.ix_(pred, pred)]
    if np.linalg.cond(block) > MAX_CONDITION:
        raise DegenerateData("regressor submatrix is singular")
    beta = np.linalg.solve(block, cov[pred, y])
    return float(beta[0])


def ida_multiset(
    cpdag: Cpdag,
    cov: np.ndarray,
    mask: ConstraintMask | None,
    x: int,
    y: int,
) -> list[float]:
    """One total-effect value per member DAG of the pattern's class.

    Order follows the class enumeration, so repeated calls agree exactly.
    """
    return [causal_effect(dag, cov, x, y) for dag in enumerate_extensions(cpdag, mask)]


def aggregate_effects(
    results,
    covariances,
    pi_bic: int,
    paths,
    data: Dataset,
    mask: ConstraintMask | None = None,
) -> list[EffectEstimate]:
    """Median effects for the given causal paths across all subsets.

    For each path the multisets of every subset's model at the chosen
    complexity are concatenated in subset order, each evaluated against that
    subset's own covariance (``covariances`` is indexed by subset, None for
    failed subsets).  When no subset produced a model at complexity
    ``pi_bic`` the nearest populated complexity substitutes, with a warning.
    Standard deviations for standardization come from the full dataset, and
    standardized values are reported only when both endpoints are
    continuous.
    """
    models = [(r.index, m) for r in results if not r.failed for m in r.models]
    if not models:
        raise EmptyMultiset("no models to estimate effects from")
    populated = sorted({m.fit.complexity for _, m in models})
    if pi_bic in populated:
        target = pi_bic
    else:
        target = min(populated, key=lambda j: (abs(j - pi_bic), j))
        log.warning(
            "no subset produced a complexity-%d model; falling back to the "
            "nearest populated complexity %d",
            pi_bic,
            target,
        )
    chosen = [(i, m) for i, m in models if m.fit.complexity == target]

    sds = np.std(data.values, axis=0, ddof=1)
    kinds = data.kinds()
    out = []
    for key in paths:
        x, y = getattr(key, "key", key)
        values: list[float] = []
        for i, m in chosen:
            cov = covariances[i]
            if cov is None:
                continue
            values.extend(ida_multiset(m.cpdag, cov, mask, x, y))
        if not values:
            raise EmptyMultiset(f"no effect values for path {x} -> {y}")
        median = float(np.median(values))
        standardized = None
        if kinds[x] == CONTINUOUS and kinds[y] == CONTINUOUS:
            standardized = median * float(sds[x]) / float(sds[y])
        out.append(EffectEstimate(x, y, median, standardized, len(values)))
    return out
