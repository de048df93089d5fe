"""Longitudinal decomposition: baseline slice, transition reshaping, masks.

A longitudinal dataset has s subjects, p variables and T time slices, one
column per observed (variable, slice).  Structure search runs on two derived
problems: a baseline model over the first slice, and a stationary transition
model over 2p nodes [previous slice, current slice] fed with the reshaped
matrix that stacks every consecutive slice pair of every subject.  The
transition constraints are structural: nothing inside the previous slice,
nothing backward in time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateData, InvalidPrior, ShapeMismatch
from .graphs import ConstraintMask
from .pipeline import PipelineResult, run_pipeline
from .scoring import Column, Dataset, sample_covariance
from .search import SearchParams
from .seeding import PIPELINE_LANE, SUBSAMPLE_LANE, derived_rng, derived_seed

log = logging.getLogger(__name__)

PREV_SUFFIX = "_prev"
CUR_SUFFIX = "_cur"


@dataclass(frozen=True)
class Layout:
    """Maps (variable, slice) to a column name.

    ``presence`` lists the slices at which a variable is observed and
    defaults to all of them.  ``column_pattern`` uses the placeholders
    <var> and <k>.
    """

    variables: tuple[str, ...]
    slices: int
    column_pattern: str = "<var>_t<k>"
    presence: dict[str, tuple[int, ...]] | None = None

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        if not variables or len(set(variables)) != len(variables):
            raise ShapeMismatch("layout needs distinct, non-empty variable names")
        if self.slices < 1:
            raise ShapeMismatch("layout needs at least one time slice")
        if "<var>" not in self.column_pattern or "<k>" not in self.column_pattern:
            raise ShapeMismatch("column_pattern must contain <var> and <k>")
        full = tuple(range(self.slices))
        presence = {v: full for v in variables}
        for v, ks in (self.presence or {}).items():
            if v not in presence:
                raise ShapeMismatch(f"presence lists unknown variable {v!r}")
            ks = tuple(sorted({int(k) for k in ks}))
            if not ks or ks[0] < 0 or ks[-1] >= self.slices:
                raise ShapeMismatch(f"presence for {v!r} is empty or out of range")
            presence[v] = ks
        object.__setattr__(self, "presence", presence)

    def column_name(self, var: str, k: int) -> str:
        return self.column_pattern.replace("<var>", var).replace("<k>", str(k))

    def observed(self, var: str, k: int) -> bool:
        return k in self.presence[var]

    def column_names(self) -> list[str]:
        return [
            self.column_name(v, k)
            for v in self.variables
            for k in self.presence[v]
        ]

    def fill_slice(self, var: str, k: int) -> int:
        """Slice to read for (var, k): k itself, or the nearest observed one."""
        ks = self.presence[var]
        if k in ks:
            return k
        return min(ks, key=lambda j: (abs(j - k), j))


def layout_from_dict(obj: dict) -> Layout:
    try:
        return Layout(
            tuple(obj["variables"]),
            int(obj["slices"]),
            obj.get("column_pattern", "<var>_t<k>"),
            {str(v): tuple(ks) for v, ks in obj.get("presence", {}).items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ShapeMismatch(f"bad layout: {exc}") from exc


def layout_to_dict(layout: Layout) -> dict:
    full = tuple(range(layout.slices))
    partial = {
        v: list(ks) for v, ks in layout.presence.items() if ks != full
    }
    out = {
        "variables": list(layout.variables),
        "slices": layout.slices,
        "column_pattern": layout.column_pattern,
    }
    if partial:
        out["presence"] = partial
    return out


class LongitudinalDataset:
    """Wide-format longitudinal data bound to a layout.

    The layout map is the authority on which column belongs to which
    (variable, slice); physical column order in the file is irrelevant.
    """

    __slots__ = ("data", "layout", "_where")

    def __init__(self, data: Dataset, layout: Layout):
        if layout.slices < 2:
            raise ShapeMismatch("longitudinal data needs at least two slices")
        expected = layout.column_names()
        if sorted(expected) != sorted(data.names):
            missing = set(expected) - set(data.names)
            extra = set(data.names) - set(expected)
            raise ShapeMismatch(
                f"data columns do not match the layout "
                f"(missing {sorted(missing)}, unexpected {sorted(extra)})"
            )
        where = {name: i for i, name in enumerate(data.names)}
        self.data = data
        self.layout = layout
        self._where = {
            (v, k): where[layout.column_name(v, k)]
            for v in layout.variables
            for k in layout.presence[v]
        }
        for v in layout.variables:
            kinds = {
                data.columns[self._where[(v, k)]].kind for k in layout.presence[v]
            }
            if len(kinds) > 1:
                raise ShapeMismatch(f"variable {v!r} changes kind across slices")

    @property
    def n_subjects(self) -> int:
        return self.data.n_rows

    @property
    def p(self) -> int:
        return len(self.layout.variables)

    @property
    def n_slices(self) -> int:
        return self.layout.slices

    def column(self, var: str, k: int) -> int:
        return self._where[(var, k)]

    def kind_of(self, var: str) -> str:
        first = self.layout.presence[var][0]
        return self.data.columns[self._where[(var, first)]].kind

    def take_subjects(self, idx) -> "LongitudinalDataset":
        return LongitudinalDataset(self.data.take_rows(idx), self.layout)


@dataclass(frozen=True)
class TransitionFrame:
    """Stacked slice pairs: row r is subject r // n_pairs at pair t = r % n_pairs."""

    data: Dataset
    n_subjects: int
    n_pairs: int


def baseline_slice(data: LongitudinalDataset) -> Dataset:
    """First-slice columns, renamed to the bare variable names."""
    lay = data.layout
    vars0 = [v for v in lay.variables if lay.observed(v, 0)]
    if not vars0:
        raise ShapeMismatch("no variable is observed at the first slice")
    idx = [data.column(v, 0) for v in vars0]
    cols = [Column(v, data.kind_of(v)) for v in vars0]
    return Dataset(cols, data.data.values[:, idx])


def reshape(data: LongitudinalDataset) -> TransitionFrame:
    """Stack the [x(t), x(t+1)] blocks for t = 0 .. T-2, subject-major.

    A variable unobserved at a needed slice is filled from its nearest
    observed slice.  A forward fill gets a warning: it only makes sense for
    variables the transition mask isolates on that side.
    """
    lay = data.layout
    s, p, T = data.n_subjects, data.p, lay.slices
    values = data.data.values
    out = np.empty((s * (T - 1), 2 * p))
    warned = set()
    for t in range(T - 1):
        idx = []
        for side, k in ((PREV_SUFFIX, t), (CUR_SUFFIX, t + 1)):
            for v in lay.variables:
                j = lay.fill_slice(v, k)
                if j > k and (v, side) not in warned:
                    warned.add((v, side))
                    log.warning(
                        "variable %r is unobserved at slice %d; the %s side "
                        "borrows slice %d",
                        v, k, side.lstrip("_"), j,
                    )
                idx.append(data.column(v, j))
        out[t :: T - 1] = values[:, idx]
    cols = [Column(v + PREV_SUFFIX, data.kind_of(v)) for v in lay.variables]
    cols += [Column(v + CUR_SUFFIX, data.kind_of(v)) for v in lay.variables]
    return TransitionFrame(Dataset(cols, out), s, T - 1)


def unreshape(frame: TransitionFrame, layout: Layout) -> LongitudinalDataset:
    """Inverse bookkeeping of reshape: read every observed cell back."""
    p, T = len(layout.variables), layout.slices
    if frame.n_pairs != T - 1 or frame.data.n_cols != 2 * p:
        raise ShapeMismatch("frame shape does not match the layout")
    vals = frame.data.values
    cols, stacked = [], []
    for v_i, v in enumerate(layout.variables):
        kind = frame.data.columns[v_i].kind
        for k in layout.presence[v]:
            if k < T - 1:
                col = vals[k :: T - 1, v_i]  # prev side of pair (k, k+1)
            else:
                col = vals[T - 2 :: T - 1, p + v_i]  # cur side of the last pair
            cols.append(Column(layout.column_name(v, k), kind))
            stacked.append(col)
    return LongitudinalDataset(Dataset(cols, np.column_stack(stacked)), layout)


def _variable_index(variables: tuple[str, ...], name: str) -> int:
    if name.endswith(PREV_SUFFIX):
        raise InvalidPrior(
            f"{name!r} refers to the previous slice; prior knowledge applies "
            "to intra-slice relations only"
        )
    plain = name[: -len(CUR_SUFFIX)] if name.endswith(CUR_SUFFIX) else name
    try:
        return variables.index(plain)
    except ValueError:
        raise InvalidPrior(f"prior references unknown variable {name!r}") from None


def intra_slice_mask(variables, prior=()) -> ConstraintMask:
    """Mask over one slice's p variables from prior forbidden arcs."""
    variables = tuple(variables)
    pairs = [
        (_variable_index(variables, a), _variable_index(variables, b))
        for a, b in prior
    ]
    return ConstraintMask.empty(len(variables)).with_forbidden(pairs)


def transition_mask(
    variables, prior=(), prev_only=(), cur_only=()
) -> ConstraintMask:
    """Mask over the 2p transition nodes, prev block first.

    Forbidden: every arc among prev nodes, every arc from a cur node back to
    a prev node, the prior's intra-slice arcs among the cur nodes, and every
    arc touching the unused side of a variable restricted to one role
    (``prev_only`` / ``cur_only``).
    """
    variables = tuple(variables)
    p = len(variables)
    forbidden: list[tuple[int, int]] = []
    for i in range(p):
        forbidden.extend((i, j) for j in range(p) if j != i)
    for i in range(p, 2 * p):
        forbidden.extend((i, j) for j in range(p))
    for a, b in prior:
        ia, ib = _variable_index(variables, a), _variable_index(variables, b)
        forbidden.append((p + ia, p + ib))

    def isolate(node: int):
        for other in range(2 * p):
            if other != node:
                forbidden.append((node, other))
                forbidden.append((other, node))

    for name in prev_only:
        isolate(p + _variable_index(variables, name))
    for name in cur_only:
        isolate(_variable_index(variables, name))
    return ConstraintMask.empty(2 * p).with_forbidden(forbidden)


def transition_labels(variables) -> tuple[str, ...]:
    variables = tuple(variables)
    return tuple(v + PREV_SUFFIX for v in variables) + tuple(
        v + CUR_SUFFIX for v in variables
    )


def derive_role_rules(layout: Layout) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Role restrictions that follow from presence alone.

    A variable never observed at any current-slice position can only act on
    the prev side, and vice versa.  Anything subtler stays the caller's
    responsibility.
    """
    T = layout.slices
    prev_only, cur_only = [], []
    for v in layout.variables:
        ks = set(layout.presence[v])
        if not ks & set(range(1, T)):
            prev_only.append(v)
        if not ks & set(range(T - 1)):
            cur_only.append(v)
    return tuple(prev_only), tuple(cur_only)


def subsample_subjects(
    data: LongitudinalDataset, n_subsets: int, rng: np.random.Generator
) -> list[Dataset]:
    """Wide-row subsets, each drawing floor(s/2) subjects without replacement.

    Rows reshaped from one subject are dependent, so stability selection on
    the transition model resamples whole subjects by default.
    """
    s = data.n_subjects
    if s < 4:
        raise DegenerateData("need at least 4 subjects to subsample")
    if n_subsets < 1:
        raise ValueError("n_subsets must be positive")
    half = s // 2
    return [
        data.data.take_rows(rng.choice(s, size=half, replace=False))
        for _ in range(n_subsets)
    ]


class TransitionCov:
    """Covariance hook mapping wide subject rows to the reshaped pair frame."""

    def __init__(self, layout: Layout):
        self.layout = layout

    def __call__(self, subset: Dataset):
        frame = reshape(LongitudinalDataset(subset, self.layout))
        return sample_covariance(frame.data), frame.data.n_rows, frame.data.names


def run_longitudinal(
    data: LongitudinalDataset,
    params: SearchParams,
    prior=(),
    pi_sel: float = 0.6,
    n_subsets: int = 100,
    parallelism: int = 1,
    subsample_unit: str = "subject",
    prev_only=(),
    cur_only=(),
    baseline_prior=None,
) -> tuple[PipelineResult, PipelineResult]:
    """Baseline and transition stability pipelines on longitudinal data.

    The baseline model searches the first slice under the prior's
    intra-slice mask; the transition model searches the reshaped slice pairs
    under the structural mask.  ``prior`` lists forbidden intra-slice arcs
    by variable name and applies to both parts unless ``baseline_prior``
    overrides it.  ``subsample_unit`` is "subject" (draw subjects, then
    reshape each subset) or "row" (subsample the reshaped rows directly).
    """
    if baseline_prior is None:
        baseline_prior = prior
    if subsample_unit not in ("subject", "row"):
        raise ValueError("subsample_unit must be 'subject' or 'row'")
    auto_prev, auto_cur = derive_role_rules(data.layout)
    prev_only = tuple(dict.fromkeys((*auto_prev, *prev_only)))
    cur_only = tuple(dict.fromkeys((*auto_cur, *cur_only)))

    base = baseline_slice(data)
    base_mask = intra_slice_mask(base.names, baseline_prior)
    base_params = replace(params, seed=derived_seed(params.seed, PIPELINE_LANE, 0))
    baseline = run_pipeline(
        base,
        base_mask,
        base_params,
        n_subsets=n_subsets,
        pi_sel=pi_sel,
        parallelism=parallelism,
    )

    variables = data.layout.variables
    t_mask = transition_mask(variables, prior, prev_only, cur_only)
    t_params = replace(params, seed=derived_seed(params.seed, PIPELINE_LANE, 1))
    frame = reshape(data)
    if subsample_unit == "subject":
        rng = derived_rng(t_params.seed, SUBSAMPLE_LANE, 0)
        subsets = subsample_subjects(data, n_subsets, rng)
        cov_fn = TransitionCov(data.layout)
        transition = run_pipeline(
            frame.data,
            t_mask,
            t_params,
            pi_sel=pi_sel,
            parallelism=parallelism,
            cov_fn=cov_fn,
            subsets=subsets,
            labels=transition_labels(variables),
            effects_data=frame.data,
        )
    else:
        transition = run_pipeline(
            frame.data,
            t_mask,
            t_params,
            n_subsets=n_subsets,
            pi_sel=pi_sel,
            parallelism=parallelism,
            labels=transition_labels(variables),
        )
    return baseline, transition
