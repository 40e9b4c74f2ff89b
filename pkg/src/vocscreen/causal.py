"""Average treatment effects of breath VOCs on glucose.

Forward queries regress the outcome on the treatment(s) and an adjustment set
(backdoor adjustment with a linear outcome model), or weight by inverse
propensity for a binary treatment.  Reverse queries swap the roles and regress
each VOC on glucose.  Every estimate can be checked with a placebo
refutation: the treatment column(s) are shuffled and the effect re-estimated.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_model import AnalysisView, Dataset, encode_columns
from .stats_core import (
    RankDeficientError,
    logistic_fit,
    ols_fit,
    permutation_indices,
    smoothed_pvalue,
)

log = logging.getLogger(__name__)

BACKDOOR = "backdoor-regression"
IPW = "ipw"
ESTIMATORS = (BACKDOOR, IPW)
PROPENSITY_CLIP = (0.01, 0.99)


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CausalQuery:
    treatments: tuple[str, ...]
    outcome: str
    confounders: tuple[str, ...] = ()
    estimator: str = BACKDOOR
    direction: str = "forward"

    def __post_init__(self):
        object.__setattr__(self, "treatments", tuple(self.treatments))
        object.__setattr__(self, "confounders", tuple(self.confounders))
        if not self.treatments:
            raise ValueError("query needs at least one treatment")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.direction not in ("forward", "reverse"):
            raise ValueError(f"unknown direction {self.direction!r}")
        roles = [set(self.treatments), {self.outcome}, set(self.confounders)]
        if roles[0] & roles[1] or roles[0] & roles[2] or roles[1] & roles[2]:
            raise ValueError("treatments, outcome and confounders must be disjoint")


@dataclass(frozen=True)
class CausalEstimate:
    ate: float
    components: tuple[float, ...]
    standard_errors: tuple[float, ...]
    estimator: str
    treatments: tuple[str, ...]
    outcome: str
    confounders: tuple[str, ...]
    direction: str = "forward"
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class RefutationResult:
    original_ate: float
    mean_placebo: float
    placebo_effects: np.ndarray = field(repr=False)
    p_value: float
    k: int
    seed: int
    failures: int = 0


@dataclass(frozen=True)
class SensitivityReport:
    baseline: float
    subsets: tuple[tuple[tuple[str, ...], float], ...]
    percent_changes: tuple[float, ...] | None
    absolute_changes: tuple[float, ...]

    @property
    def max_percent_change(self) -> float | None:
        if self.percent_changes is None:
            return None
        return max(self.percent_changes)


# ----------------------------------------------------------------- core arrays


def _block(ds: Dataset, cols: Sequence[str]) -> np.ndarray:
    return encode_columns(ds, cols)[0]


def _median_split(T: np.ndarray) -> tuple[np.ndarray, bool]:
    if np.isin(T, (0.0, 1.0)).all():
        return T, False
    return (T > np.median(T)).astype(float), True


def _ipw(t: np.ndarray, y: np.ndarray, C: np.ndarray) -> float:
    if len(np.unique(t)) < 2:
        raise EstimationError("treatment takes a single value")
    if C.shape[1]:
        mu, sd = C.mean(axis=0), C.std(axis=0)
        sd[sd == 0] = 1.0
        fit = logistic_fit((C - mu) / sd, t, ridge=1e-6)
        e = fit.predict_proba((C - mu) / sd)
    else:
        e = np.full(len(t), t.mean())
    lo, hi = PROPENSITY_CLIP
    clipped = (e < lo) | (e > hi)
    if clipped.all():
        raise EstimationError("propensity saturated: every weight clipped")
    e = np.clip(e, lo, hi)
    w1 = t / e
    w0 = (1 - t) / (1 - e)
    return float(np.sum(w1 * y) / np.sum(w1) - np.sum(w0 * y) / np.sum(w0))


def _estimate_arrays(T: np.ndarray, y: np.ndarray, C: np.ndarray, estimator: str):
    if estimator == BACKDOOR:
        fit = ols_fit(np.column_stack([T, C]), y)
        m = T.shape[1]
        return fit.coefficients[1 : 1 + m], fit.standard_errors[1 : 1 + m]
    comps = [_ipw(T[:, j], y, C) for j in range(T.shape[1])]
    return np.array(comps), np.full(len(comps), np.nan)


def _check_columns(ds: Dataset, q: CausalQuery) -> None:
    for name in (*q.treatments, q.outcome, *q.confounders):
        if name not in ds:
            raise ValueError(f"unknown column {name!r}")


def _dataset(view: AnalysisView | Dataset) -> Dataset:
    return view.dataset if isinstance(view, AnalysisView) else view


# ----------------------------------------------------------------- estimators


def estimate_ate(view: AnalysisView | Dataset, q: CausalQuery) -> CausalEstimate:
    """Effect of the query's treatment(s) on its outcome.

    With several treatments the returned ``ate`` is the sum of their
    coefficients: the effect of raising every treatment by one unit at once.
    """
    ds = _dataset(view)
    _check_columns(ds, q)
    T = _block(ds, q.treatments)
    y = ds[q.outcome].astype(float)
    C = _block(ds, q.confounders)
    notes = []
    if q.estimator == IPW:
        cols = []
        for j, name in enumerate(q.treatments):
            tj, split = _median_split(T[:, j])
            if split:
                notes.append(f"{name} dichotomized at median {np.median(T[:, j]):.6g}")
            cols.append(tj)
        T = np.column_stack(cols)
    try:
        comps, ses = _estimate_arrays(T, y, C, q.estimator)
    except RankDeficientError as exc:
        names = [*q.treatments, *q.confounders]
        col = names[exc.column] if 0 <= exc.column < len(names) else exc.column
        raise EstimationError(f"rank-deficient design at column {col!r}") from None
    return CausalEstimate(
        ate=float(np.sum(comps)),
        components=tuple(float(c) for c in comps),
        standard_errors=tuple(float(s) for s in ses),
        estimator=q.estimator,
        treatments=q.treatments,
        outcome=q.outcome,
        confounders=q.confounders,
        direction=q.direction,
        notes=tuple(notes),
    )


def estimate_joint(view: AnalysisView | Dataset, q: CausalQuery) -> CausalEstimate:
    if len(q.treatments) < 2:
        raise ValueError("joint query needs >= 2 treatments")
    return estimate_ate(view, q)


def estimate_reverse(view: AnalysisView | Dataset, q: CausalQuery) -> CausalEstimate:
    """Regress each original treatment on the original outcome (plus the
    adjustment set).  Components are the per-VOC outcome coefficients and
    ``ate`` is their sum."""
    ds = _dataset(view)
    _check_columns(ds, q)
    g = ds[q.outcome].astype(float)[:, None]
    C = _block(ds, q.confounders)
    comps, ses = [], []
    for name in q.treatments:
        v = ds[name].astype(float)
        try:
            c, s = _estimate_arrays(g, v, C, BACKDOOR)
        except RankDeficientError as exc:
            raise EstimationError(f"rank-deficient design at column {exc.column}") from None
        comps.append(float(c[0]))
        ses.append(float(s[0]))
    return CausalEstimate(
        ate=float(np.sum(comps)),
        components=tuple(comps),
        standard_errors=tuple(ses),
        estimator=BACKDOOR,
        treatments=(q.outcome,),
        outcome="+".join(q.treatments),
        confounders=q.confounders,
        direction="reverse",
    )


# ----------------------------------------------------------------- refutation


class _ResidualMaker:
    """Annihilator of ``[1 | C]``: by Frisch-Waugh-Lovell, the treatment
    coefficients of ``y ~ [1 | T | C]`` equal those of the residualized
    regression, so each permutation costs one projection."""

    def __init__(self, C: np.ndarray):
        A = np.column_stack([np.ones(C.shape[0]), C])
        self.Q, _ = np.linalg.qr(A)

    def __call__(self, M: np.ndarray) -> np.ndarray:
        return M - self.Q @ (self.Q.T @ M)


def refute_placebo(
    view: AnalysisView | Dataset,
    q: CausalQuery,
    k: int = 1000,
    seed: int = 0,
    n_jobs: int = 1,
) -> RefutationResult:
    """Placebo refutation: shuffle the treatment rows ``k`` times.

    Treatment columns move together; outcome and adjustment set stay fixed.
    For reverse queries the (single) glucose treatment is shuffled and the
    summed reverse coefficient re-estimated.  The p-value is the smoothed
    two-sided permutation p-value on ``|effect|``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k < 100:
        warnings.warn(f"refutation with only {k} permutations", stacklevel=2)
    ds = _dataset(view)
    _check_columns(ds, q)
    C = _block(ds, q.confounders)
    n = ds.n_rows

    if q.direction == "reverse":
        original = estimate_reverse(ds, q).ate
        treat = ds[q.outcome].astype(float)[:, None]
        target = np.column_stack([ds[v].astype(float) for v in q.treatments])
    else:
        original = estimate_ate(ds, q).ate
        treat = _block(ds, q.treatments)
        target = ds[q.outcome].astype(float)[:, None]
        if q.estimator == IPW:
            treat = np.column_stack([_median_split(treat[:, j])[0] for j in range(treat.shape[1])])

    fast = q.estimator == BACKDOOR
    if fast:
        resid = _ResidualMaker(C)
        r_target = resid(target)

    def one(i: int) -> float:
        idx = permutation_indices(n, seed, i)
        Tp = treat[idx]
        if fast:
            rT = resid(Tp)
            coef, *_ = np.linalg.lstsq(rT, r_target, rcond=None)
            rank = np.linalg.matrix_rank(rT)
            if rank < rT.shape[1]:
                raise EstimationError("permuted design is rank deficient")
            return float(np.sum(coef))
        comps, _ = _estimate_arrays(Tp, target[:, 0], C, q.estimator)
        return float(np.sum(comps))

    def safe(i: int) -> float:
        try:
            return one(i)
        except (EstimationError, RankDeficientError, np.linalg.LinAlgError):
            return np.nan

    if n_jobs == 1:
        effects = np.array([safe(i) for i in range(k)])
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            effects = np.array(list(pool.map(safe, range(k))))
    failed = int(np.isnan(effects).sum())
    if failed > 0.1 * k:
        raise EstimationError(f"refutation aborted: {failed} of {k} placebo fits failed")
    if failed:
        log.warning("%d of %d placebo fits failed and were dropped", failed, k)
    ok = effects[~np.isnan(effects)]
    return RefutationResult(
        original_ate=float(original),
        mean_placebo=float(ok.mean()),
        placebo_effects=ok,
        p_value=smoothed_pvalue(original, ok),
        k=k,
        seed=int(seed),
        failures=failed,
    )


# ----------------------------------------------------------------- sensitivity


def sensitivity(
    view: AnalysisView | Dataset,
    q: CausalQuery,
    subsets: Sequence[Sequence[str]],
) -> SensitivityReport:
    """Re-estimate the effect under alternative adjustment sets.

    The baseline uses the query's full confounder list.  Percent change is
    ``100 * |ate - baseline| / |baseline|``; when the baseline is exactly zero
    only absolute changes are reported.
    """
    if not subsets:
        raise ValueError("need at least one confounder subset")
    estimate = estimate_reverse if q.direction == "reverse" else estimate_ate
    baseline = estimate(view, q).ate
    rows = []
    for subset in subsets:
        sub_q = CausalQuery(q.treatments, q.outcome, tuple(subset), q.estimator, q.direction)
        rows.append((tuple(subset), estimate(view, sub_q).ate))
    absolute = tuple(abs(a - baseline) for _, a in rows)
    percent = None if baseline == 0 else tuple(100.0 * d / abs(baseline) for d in absolute)
    return SensitivityReport(baseline, tuple(rows), percent, absolute)


def drop_one_subsets(confounders: Sequence[str]) -> list[tuple[str, ...]]:
    """Every adjustment set with one confounder left out, plus the empty set."""
    subsets = [tuple(c for c in confounders if c != drop) for drop in confounders]
    subsets.append(())
    return subsets


# ----------------------------------------------------------------- report rows


def report_record(
    est: CausalEstimate,
    refutation: RefutationResult | None = None,
    **extra,
) -> dict:
    if est.direction == "reverse":
        treatments, outcome = list(est.treatments), est.outcome.split("+")
    else:
        treatments, outcome = list(est.treatments), est.outcome
    rec = {
        "treatments": treatments,
        "outcome": outcome,
        "direction": est.direction,
        "estimator": est.estimator,
        "ate": est.ate,
        "components": list(est.components),
        "standard_errors": [None if np.isnan(s) else s for s in est.standard_errors],
        "refute_mean": None,
        "p_value": None,
        "K": None,
        "seed": None,
        "confounders": list(est.confounders),
    }
    if refutation is not None:
        rec.update(
            refute_mean=refutation.mean_placebo,
            p_value=refutation.p_value,
            K=refutation.k,
            seed=refutation.seed,
            refute_failures=refutation.failures,
        )
    if est.notes:
        rec["notes"] = list(est.notes)
    rec.update(extra)
    return rec
