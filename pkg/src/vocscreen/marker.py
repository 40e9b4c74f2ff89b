"""Synthetic glucose: VOC concentrations weighted by their estimated effects."""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data_model import Dataset
from .stats_core import UTestResult, mann_whitney_u


@dataclass(frozen=True)
class MarkerSpec:
    coefficients: Mapping[str, float]
    intercept: float = 0.0
    source: str = ""
    standardized: bool = False

    def to_dict(self) -> dict:
        return {
            "coefficients": dict(self.coefficients),
            "intercept": self.intercept,
            "source": self.source,
            "standardized": self.standardized,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MarkerSpec":
        return cls(
            {k: float(v) for k, v in doc["coefficients"].items()},
            float(doc.get("intercept", 0.0)),
            doc.get("source", ""),
            bool(doc.get("standardized", False)),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def marker_from_report(
    records: Sequence[Mapping],
    vocs: Sequence[str],
    source: str = "",
    outcome: str | None = None,
) -> MarkerSpec:
    """One coefficient per VOC, taken from its single-treatment forward record."""
    coefs = {}
    for voc in vocs:
        match = [
            r
            for r in records
            if r.get("direction") == "forward"
            and list(r.get("treatments", [])) == [voc]
            and (outcome is None or r.get("outcome") == outcome)
        ]
        if not match:
            raise KeyError(f"causal report has no forward estimate for {voc!r}")
        coefs[voc] = float(match[0]["ate"])
    if all(v == 0 for v in coefs.values()):
        warnings.warn("every marker coefficient is zero", stacklevel=2)
    standardized = any(r.get("standardized") for r in records)
    return MarkerSpec(coefs, 0.0, source, standardized)


def evaluate_marker(spec: MarkerSpec, ds: Dataset) -> np.ndarray:
    """``intercept + sum_j w_j * VOC_j``.

    Raw VOC units are used unless the MarkerSpec was built from standardized
    estimates, in which case standardized VOC values are expected.
    """
    score = np.full(ds.n_rows, float(spec.intercept))
    for name, w in spec.coefficients.items():
        if name not in ds:
            raise KeyError(f"marker column {name!r} not in dataset")
        values = ds[name] if spec.standardized else ds.unscaled(name)
        score = score + w * values
    return score


@dataclass(frozen=True)
class GroupComparison:
    group_a: tuple[str, ...]
    group_b: tuple[str, ...]
    values_a: np.ndarray
    values_b: np.ndarray
    test: UTestResult

    def to_dict(self, name: str = "") -> dict:
        doc = self.test.to_dict()
        doc.update(
            {
                "n_a": len(self.group_a),
                "n_b": len(self.group_b),
                "median_a": float(np.median(self.values_a)),
                "median_b": float(np.median(self.values_b)),
                "group_a": list(self.group_a),
                "group_b": list(self.group_b),
            }
        )
        if name:
            doc = {"measure": name, **doc}
        return doc


def compare_groups(
    scores: Mapping[str, float] | tuple[Sequence[str], Sequence[float]],
    group_a: Sequence[str],
    group_b: Sequence[str],
    alternative: str = "greater",
) -> GroupComparison:
    """Mann-Whitney comparison of ``group_a`` against ``group_b``.

    ``scores`` maps subject id to value (or is an ``(ids, values)`` pair).  The
    default one-sided alternative asks whether group a is elevated.
    """
    if not isinstance(scores, Mapping):
        ids, values = scores
        scores = dict(zip(ids, values))
    a, b = tuple(group_a), tuple(group_b)
    if not a or not b:
        raise ValueError("both groups must be non-empty")
    overlap = set(a) & set(b)
    if overlap:
        raise ValueError(f"groups overlap on {sorted(overlap)[:5]}")
    missing = [i for i in (*a, *b) if i not in scores]
    if missing:
        raise KeyError(f"unknown ids {missing[:5]}")
    va = np.array([scores[i] for i in a], dtype=float)
    vb = np.array([scores[i] for i in b], dtype=float)
    return GroupComparison(a, b, va, vb, mann_whitney_u(va, vb, alternative))
