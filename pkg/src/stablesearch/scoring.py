"""Linear-Gaussian SEM scoring: ML fit of a DAG against a sample covariance.

Maximum likelihood for a linear-Gaussian DAG model decomposes per node into a
least-squares regression of the node on its parents, solvable from covariance
blocks alone.  At the optimum, with coefficient matrix C (row j holds node
j's weights) and residual variances psi, the implied covariance
Sigma = (I-C)^-1 diag(psi) (I-C)^-T satisfies ln|Sigma| = sum_j ln psi_j and
tr(S Sigma^-1) = p, so the deviance reduces to
chi_square = (n-1) * (sum_j ln psi_j - ln|S|) with no matrix inversion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateData, ShapeMismatch
from .graphs import Dag

CONTINUOUS = "continuous"
DISCRETE = "discrete"

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = CONTINUOUS

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise ValueError(f"unknown column kind {self.kind!r}")


class Dataset:
    """Complete numeric data matrix with named, kinded columns."""

    __slots__ = ("columns", "values")

    def __init__(self, columns, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ShapeMismatch("values must be a 2-d matrix")
        cols = tuple(c if isinstance(c, Column) else Column(str(c)) for c in columns)
        if values.shape[1] != len(cols):
            raise ShapeMismatch(
                f"{len(cols)} columns declared but values have {values.shape[1]}"
            )
        if not np.all(np.isfinite(values)):
            raise DegenerateData("data contains missing or non-finite values")
        self.columns = cols
        self.values = values
        self.values.setflags(write=False)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def kinds(self) -> tuple[str, ...]:
        return tuple(c.kind for c in self.columns)

    def take_rows(self, idx) -> "Dataset":
        return Dataset(self.columns, self.values[np.asarray(idx)])

    def take_columns(self, idx) -> "Dataset":
        idx = list(idx)
        return Dataset([self.columns[i] for i in idx], self.values[:, idx])


def rank_normalize(data: Dataset) -> Dataset:
    """Replace discrete columns by standardized midranks.

    Continuous columns pass through untouched; kinds are preserved so that
    effect standardization can still tell the two apart.
    """
    values = np.array(data.values, copy=True)
    for j, col in enumerate(data.columns):
        if col.kind != DISCRETE:
            continue
        ranks = rankdata(values[:, j], method="average")
        sd = ranks.std(ddof=1)
        if sd == 0:
            raise DegenerateData(f"discrete column {col.name!r} is constant")
        values[:, j] = (ranks - ranks.mean()) / sd
    return Dataset(data.columns, values)


def load_dataset(csv_path, kinds: dict[str, str] | None = None) -> Dataset:
    """Read a header+rows CSV; `kinds` maps column name -> kind (default continuous)."""
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DegenerateData(f"{csv_path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ShapeMismatch(f"{csv_path}:{lineno}: wrong field count")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise DegenerateData(f"{csv_path}:{lineno}: {exc}") from None
    if not rows:
        raise DegenerateData(f"{csv_path}: no data rows")
    kinds = kinds or {}
    unknown = set(kinds) - set(header)
    if unknown:
        raise ShapeMismatch(f"kind declared for unknown columns {sorted(unknown)}")
    cols = [Column(name, kinds.get(name, CONTINUOUS)) for name in header]
    return Dataset(cols, np.array(rows))


def sample_covariance(data: Dataset, validate: bool = True) -> np.ndarray:
    """Unbiased (n-1 divisor) sample covariance of the dataset.

    With validate on (the pipeline default), zero-variance columns and
    numerically singular matrices raise DegenerateData; validate=False
    returns the raw matrix for diagnostics.
    """
    n, p = data.values.shape
    if validate and n < p + 2:
        raise DegenerateData(f"need at least p+2={p + 2} rows, got {n}")
    if n < 2:
        raise DegenerateData("covariance needs at least 2 rows")
    cov = np.cov(data.values, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    cov = (cov + cov.T) / 2.0
    if validate:
        diag = np.diag(cov)
        if np.any(diag <= 0):
            bad = data.columns[int(np.argmin(diag))].name
            raise DegenerateData(f"column {bad!r} has zero variance")
        if np.linalg.cond(cov) > MAX_CONDITION:
            raise DegenerateData("sample covariance is numerically singular")
    return cov


@dataclass(frozen=True)
class FitResult:
    chi_square: float
    complexity: int
    bic: float
    coefficients: dict[int, dict[int, float]] = field(compare=False)
    residual_variances: tuple[float, ...] = field(compare=False)


def implied_covariance(fit: FitResult) -> np.ndarray:
    """Sigma = (I - C)^-1 diag(psi) (I - C)^-T from the fitted parameters."""
    p = len(fit.residual_variances)
    c = np.zeros((p, p))
    for j, row in fit.coefficients.items():
        for a, w in row.items():
            c[j, a] = w
    inv = np.linalg.inv(np.eye(p) - c)
    return inv @ np.diag(fit.residual_variances) @ inv.T


def _node_regressions(parent_lists, cov):
    """Per-node least squares on parents; returns (psi, coefficient map)."""
    psi = []
    coeffs: dict[int, dict[int, float]] = {}
    for j, pa in enumerate(parent_lists):
        if not pa:
            psi.append(float(cov[j, j]))
            continue
        sub = cov[np.ix_(pa, pa)]
        rhs = cov[pa, j]
        try:
            b = np.linalg.solve(sub, rhs)
        except np.linalg.LinAlgError:
            raise DegenerateData(f"singular parent block for node {j}") from None
        resid = float(cov[j, j] - rhs @ b)
        if resid <= 0 or not np.isfinite(resid):
            raise DegenerateData(f"non-positive residual variance at node {j}")
        psi.append(resid)
        coeffs[j] = {a: float(w) for a, w in zip(pa, b)}
    return psi, coeffs


def chi_square_from_psi(psi, logdet_s: float, n: int) -> float:
    value = (n - 1) * (float(np.sum(np.log(psi))) - logdet_s)
    return max(value, 0.0)


def fit_dag_ml(dag: Dag, cov: np.ndarray, n: int) -> FitResult:
    """ML fit of the DAG against covariance `cov` computed from n rows."""
    p = cov.shape[0]
    if dag.n_nodes != p:
        raise ShapeMismatch(f"dag has {dag.n_nodes} nodes, covariance is {p}x{p}")
    sign, logdet_s = np.linalg.slogdet(cov)
    if sign <= 0:
        raise DegenerateData("sample covariance is not positive definite")
    psi, coeffs = _node_regressions(dag.parent_lists(), cov)
    k = len(dag.arcs)
    chi2 = chi_square_from_psi(psi, logdet_s, n)
    return FitResult(
        chi_square=chi2,
        complexity=k,
        bic=chi2 + k * float(np.log(n)),
        coefficients=coeffs,
        residual_variances=tuple(psi),
    )


def score_population(dags, cov: np.ndarray, n: int) -> list[FitResult]:
    """fit_dag_ml over a list, order preserved, duplicates served from a memo."""
    memo: dict[frozenset, FitResult] = {}
    out = []
    for dag in dags:
        key = dag.arcs
        hit = memo.get(key)
        if hit is None:
            hit = fit_dag_ml(dag, cov, n)
            memo[key] = hit
        out.append(hit)
    return out
