"""Command-line front end: ``vocscreen <command> ...``.

Every command writes its artifacts plus a ``<command>_manifest.json`` listing
each artifact with its sha256, so a run can be verified end to end.  Exit
status: 0 success, 2 usage or configuration error, 3 estimation failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .attribution import background_sample, shapley_linear, shapley_sample, summarize
from .causal import (
    ESTIMATORS,
    CausalQuery,
    EstimationError,
    drop_one_subsets,
    estimate_ate,
    estimate_reverse,
    refute_placebo,
    report_record,
    sensitivity,
)
from .cluster import EMError, align_and_score, ari, nmi, pca_project, select_k, silhouette
from .data_model import DataError, Dataset, RoleConfig, build_view, filter_outliers, format_number
from .data_model import infer_schema, load_dataset, write_dataset
from .marker import MarkerSpec, compare_groups, evaluate_marker, marker_from_report
from .risk import LeakageError, ModelSpec, cross_validate, gray_zone, risk_rank, train
from .scm import ConfigError, ScmConfig, load_config, simulate
from .stats_core import ols_fit

log = logging.getLogger("vocscreen")

EXIT_OK, EXIT_USAGE, EXIT_ESTIMATION = 0, 2, 3
SEED_ENV = "VOCSCREEN_SEED"
BUILTIN_CONFIGS = ("demo", "grayzone")
MARKER_COLUMN = "synthetic_glucose"


class UsageError(ValueError):
    pass


# ----------------------------------------------------------------- plumbing


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _clean(obj):
    # JSON has no NaN/inf; numpy scalars are unwrapped
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                ["" if v is None else format_number(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def _timestamp() -> str:
    # reproducible unless wall-clock time is requested
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(epoch))


class RunManifest:
    """Provenance record for one command invocation."""

    def __init__(self, command: str, out_dir: Path, seed: int | None, wall_clock: bool = False):
        self.command = command
        self.out_dir = out_dir
        self.seed = seed
        self.wall_clock = wall_clock
        self.configs: dict[str, str] = {}
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.extra: dict = {}
        self.started = self._now()

    def _now(self) -> str:
        if self.wall_clock:
            return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        return _timestamp()

    def add_config(self, label: str, path: str) -> None:
        self.configs[label] = str(path)

    def add_input(self, path: str | os.PathLike) -> None:
        # relative to the output directory, so relocating a run keeps its manifest
        rel = os.path.relpath(path, self.out_dir).replace(os.sep, "/")
        self.inputs[rel] = sha256_file(path)

    def add_output(self, path: Path) -> None:
        rel = os.path.relpath(path, self.out_dir).replace(os.sep, "/")
        if rel not in self.outputs:
            self.outputs.append(rel)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": __version__,
            "seed": self.seed,
            "configs": self.configs,
            "inputs": [{"path": p, "sha256": h} for p, h in sorted(self.inputs.items())],
            "outputs": [{"path": p, "sha256": sha256_file(self.out_dir / p)} for p in self.outputs],
            "started": self.started,
            "finished": self._now(),
            **self.extra,
        }

    def write(self) -> Path:
        path = self.out_dir / f"{self.command}_manifest.json"
        write_json(path, self.to_dict())
        return path


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("vocscreen") / "configs" / f"{name}.json"))


def resolve_config(spec: str) -> tuple[ScmConfig, str]:
    """A config path, or the name of a bundled config."""
    if spec in BUILTIN_CONFIGS and not os.path.isfile(spec):
        return load_config(builtin_path(spec)), f"builtin:{spec}"
    return load_config(spec), spec


def resolve_roles(spec: str) -> tuple[RoleConfig, str]:
    if spec == "demo" and not os.path.isfile(spec):
        return RoleConfig.from_json(builtin_path("roles")), "builtin:roles"
    return RoleConfig.from_json(spec), spec


def read_data(path: str, roles: RoleConfig | None = None) -> Dataset:
    id_column = roles.id if roles is not None else "id"
    ds = load_dataset(path, infer_schema(path, id_column), id_column)
    if roles is not None:
        roles.validate(ds)
    return ds


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    cfg, label = resolve_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.n is not None:
        cfg = cfg.replace(n=args.n)
    out = _out_dir(args.out)
    man = RunManifest("simulate", out, cfg.seed, args.wall_clock)
    man.add_config("scm", label)
    data = out / args.name
    write_dataset(simulate(cfg), data)
    man.add_output(data)
    write_json(out / "scm_config.json", cfg.to_dict())
    man.add_output(out / "scm_config.json")
    man.write()
    return EXIT_OK


def parse_subsets(values: Sequence[str] | None, confounders: Sequence[str]) -> list[tuple[str, ...]]:
    subsets = []
    for v in values or ():
        if v == "drop-one":
            subsets.extend(drop_one_subsets(confounders))
        elif v == "-":
            subsets.append(())
        else:
            subsets.append(tuple(s.strip() for s in v.split(",") if s.strip()))
    return subsets


def causal_queries(roles: RoleConfig, estimator: str, co_adjust: bool, reverse: bool) -> list[CausalQuery]:
    """Single-VOC queries, the joint query, then optionally the reverse set."""
    vocs, lifestyle = roles.treatments, roles.confounders
    qs = []
    for v in vocs:
        adjust = lifestyle + tuple(o for o in vocs if o != v) if co_adjust else lifestyle
        qs.append(CausalQuery((v,), roles.outcome, adjust, estimator))
    if len(vocs) > 1:
        qs.append(CausalQuery(vocs, roles.outcome, lifestyle, estimator))
    if reverse:
        for v in vocs:
            qs.append(CausalQuery((v,), roles.outcome, lifestyle, direction="reverse"))
        if len(vocs) > 1:
            qs.append(CausalQuery(vocs, roles.outcome, lifestyle, direction="reverse"))
    return qs


def cmd_causal(args) -> int:
    roles, roles_label = resolve_roles(args.roles)
    ds = read_data(args.data, roles)
    if args.refute is not None and args.refute < 1:
        raise UsageError("--refute needs K >= 1")
    for subset in parse_subsets(args.sensitivity, roles.confounders):
        for name in subset:
            if name not in ds:
                raise UsageError(f"sensitivity subset names unknown column {name!r}")
    seed = default_seed() if args.seed is None else args.seed
    out = _out_dir(args.out)
    man = RunManifest("causal", out, seed, args.wall_clock)
    man.add_config("roles", roles_label)
    man.add_input(args.data)

    records, failures = [], 0
    for q in causal_queries(roles, args.estimator, args.co_adjust, args.reverse):
        co = q.direction == "forward" and len(q.treatments) == 1 and args.co_adjust
        try:
            est = estimate_reverse(ds, q) if q.direction == "reverse" else estimate_ate(ds, q)
            ref = refute_placebo(ds, q, args.refute, seed, args.jobs) if args.refute else None
            extra = {"co_adjusted": co, "status": "ok"}
            if len(q.treatments) > 1:
                extra["combined"] = "sum of components"
            records.append(report_record(est, ref, **extra))
        except EstimationError as exc:
            failures += 1
            log.error("%s %s: %s", q.direction, "+".join(q.treatments), exc)
            records.append(
                {
                    "treatments": list(q.treatments),
                    "outcome": q.outcome,
                    "direction": q.direction,
                    "estimator": q.estimator,
                    "status": "failed",
                    "error": str(exc),
                }
            )

    sens = []
    subsets = parse_subsets(args.sensitivity, roles.confounders)
    if subsets:
        for v in roles.treatments:
            q = CausalQuery((v,), roles.outcome, roles.confounders, args.estimator)
            try:
                rep = sensitivity(ds, q, subsets)
            except EstimationError as exc:
                failures += 1
                sens.append({"treatment": v, "status": "failed", "error": str(exc)})
                continue
            sens.append(
                {
                    "treatment": v,
                    "baseline": rep.baseline,
                    "status": "ok",
                    "subsets": [
                        {
                            "confounders": list(s),
                            "ate": a,
                            "absolute_change": d,
                            "percent_change": None if rep.percent_changes is None else rep.percent_changes[i],
                        }
                        for i, ((s, a), d) in enumerate(zip(rep.subsets, rep.absolute_changes))
                    ],
                }
            )

    report = out / "causal_report.json"
    write_json(
        report,
        {
            "records": records,
            "sensitivity": sens,
            "estimator": args.estimator,
            "co_adjust": args.co_adjust,
            "refute_k": args.refute,
            "seed": seed,
        },
    )
    man.add_output(report)
    write_csv(
        out / "causal_table.csv",
        ["direction", "treatments", "outcome", "ate", "refute_mean", "p_value"],
        [
            (
                r["direction"],
                "+".join(r["treatments"]),
                r["outcome"] if isinstance(r["outcome"], str) else "+".join(r["outcome"]),
                r.get("ate"),
                r.get("refute_mean"),
                r.get("p_value"),
            )
            for r in records
        ],
    )
    man.add_output(out / "causal_table.csv")
    man.extra["failures"] = failures
    man.write()
    return EXIT_ESTIMATION if failures else EXIT_OK


def _metrics_doc(cv) -> dict:
    return {**cv.pooled, "fold_mean": cv.mean, "per_fold": list(cv.per_fold)}


def cmd_classify(args) -> int:
    roles, roles_label = resolve_roles(args.roles)
    if roles.label is None:
        raise UsageError("roles define no label column")
    ds = read_data(args.data, roles)
    seed = default_seed() if args.seed is None else args.seed
    spec = ModelSpec(kind=args.model, ridge=args.ridge, n_trees=args.trees, seed=seed)
    out = _out_dir(args.out)
    man = RunManifest("classify", out, seed, args.wall_clock)
    man.add_config("roles", roles_label)
    man.add_input(args.data)

    full_view = build_view(ds, roles)
    full_cv = cross_validate(full_view, spec, args.folds, seed)
    metrics = {"model": args.model, "folds": args.folds, "seed": seed, **_metrics_doc(full_cv)}
    view, cv = full_view, full_cv
    if args.drop_outliers:
        kept, removed = filter_outliers(ds, roles.treatments)
        view = build_view(kept, roles)
        cv = cross_validate(view, spec, args.folds, seed)
        metrics = {
            "model": args.model,
            "folds": args.folds,
            "seed": seed,
            **_metrics_doc(cv),
            "without_outlier_filter": _metrics_doc(full_cv),
            "removed_ids": removed,
        }
        man.extra["removed_ids"] = removed
    write_json(out / "metrics.json", metrics)
    man.add_output(out / "metrics.json")

    ranking = risk_rank(cv) if args.rank == "out-of-fold" else risk_rank(train(view, spec), view)
    gz = gray_zone(ranking, args.gray_threshold, args.gray_top_k or None)
    flagged = set(gz.ids)
    write_csv(
        out / "ranking.csv",
        ["rank", "id", "probability", "label", "gray_zone"],
        [
            (r + 1, i, float(p), int(lab), int(i in flagged))
            for r, (i, p, lab) in enumerate(zip(ranking.ids, ranking.probability, ranking.labels))
        ],
    )
    man.add_output(out / "ranking.csv")
    write_csv(
        out / "gray_zone.csv",
        ["id", "group"],
        [(i, "gray_zone") for i in gz.ids] + [(i, "other") for i in gz.others],
    )
    man.add_output(out / "gray_zone.csv")
    glucose = dict(zip(view.row_ids, view.dataset.unscaled(roles.outcome))) if roles.outcome in ds else {}
    write_csv(
        out / "risk_plot.csv",
        ["rank", "id", "probability", "glucose", "label"],
        [
            (r + 1, i, float(p), glucose.get(i), int(lab))
            for r, (i, p, lab) in enumerate(zip(ranking.ids, ranking.probability, ranking.labels))
        ],
    )
    man.add_output(out / "risk_plot.csv")
    man.extra.update(
        {
            "ranking_source": ranking.source,
            "gray_zone": {"threshold": gz.threshold, "used_fallback": gz.used_fallback, "size": len(gz.ids)},
        }
    )
    man.write()
    return EXIT_OK


def read_groups(path: str) -> tuple[list[str], list[str]]:
    a, b = [], []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                (a if row["group"] == "gray_zone" else b).append(row["id"])
    except (OSError, KeyError) as exc:
        raise UsageError(f"cannot read groups file {path}: {exc}") from None
    if not a or not b:
        raise UsageError(f"groups file {path} leaves a group empty ({len(a)} gray zone, {len(b)} other)")
    return a, b


def read_report(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read causal report {path}: {exc}") from None
    if isinstance(doc, list):
        doc = {"records": doc}
    return doc


def report_source(path: str) -> str:
    # content-addressed, so the marker file does not depend on where runs live
    return f"{os.path.basename(path)} sha256:{sha256_file(path)}"


def report_marker(doc: dict, source: str, vocs: Sequence[str] | None = None) -> MarkerSpec:
    records = [r for r in doc["records"] if r.get("status", "ok") == "ok"]
    if vocs is None:
        vocs = [r["treatments"][0] for r in records if r["direction"] == "forward" and len(r["treatments"]) == 1]
    if not vocs:
        raise UsageError("causal report has no single-VOC forward estimates")
    return marker_from_report(records, vocs, source)


def cmd_marker(args) -> int:
    ds = read_data(args.data)
    spec = report_marker(read_report(args.report), report_source(args.report))
    gray, other = read_groups(args.groups)
    out = _out_dir(args.out)
    man = RunManifest("marker", out, None, args.wall_clock)
    man.add_input(args.data)
    man.add_input(args.report)
    man.add_input(args.groups)

    scores = evaluate_marker(spec, ds)
    in_gray, in_other = set(gray), set(other)
    try:
        comparisons = {"synthetic_marker": compare_groups((ds.row_ids, scores), gray, other, args.alternative)}
        if args.outcome in ds:
            comparisons["glucose"] = compare_groups((ds.row_ids, ds.unscaled(args.outcome)), gray, other, args.alternative)
    except KeyError as exc:
        raise UsageError(f"groups file names ids missing from the data: {exc}") from None
    spec.save(out / "marker.json")
    man.add_output(out / "marker.json")
    write_json(out / "comparison.json", {k: c.to_dict(k) for k, c in comparisons.items()})
    man.add_output(out / "comparison.json")
    write_csv(
        out / "marker_scores.csv",
        ["id", MARKER_COLUMN, "group"],
        [
            (i, float(s), "gray_zone" if i in in_gray else "other" if i in in_other else "")
            for i, s in zip(ds.row_ids, scores)
        ],
    )
    man.add_output(out / "marker_scores.csv")
    man.write()
    return EXIT_OK


def parse_k_range(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = (int(p) for p in text.split("..", 1))
            ks = list(range(lo, hi + 1))
        else:
            ks = [int(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --k-range {text!r}; use e.g. 1..5") from None
    if not ks or min(ks) < 1:
        raise UsageError(f"--k-range {text!r} must name counts >= 1")
    return ks


def cmd_cluster(args) -> int:
    ks = parse_k_range(args.k_range)
    if args.pca_dims < 1:
        raise UsageError("--pca-dims must be >= 1")
    roles, roles_label = resolve_roles(args.roles)
    ds = read_data(args.data, roles)
    seed = default_seed() if args.seed is None else args.seed
    view = build_view(ds, roles, standardize_cols=True)
    if args.pca_dims > min(view.n - 1, view.X.shape[1]):
        raise UsageError(f"--pca-dims {args.pca_dims} exceeds the feature count")
    out = _out_dir(args.out)
    man = RunManifest("cluster", out, seed, args.wall_clock)
    man.add_config("roles", roles_label)
    man.add_input(args.data)

    table = select_k(view.X, ks, args.criterion, seed, args.restarts)
    write_csv(
        out / "selection.csv",
        ["k", "bic", "aic", "log_likelihood", "n_parameters", "chosen"],
        [(r["k"], r["bic"], r["aic"], r["log_likelihood"], r["n_parameters"], int(r["k"] == table.chosen_k)) for r in table.rows],
    )
    man.add_output(out / "selection.csv")
    labels = table.fits[table.chosen_k].labels
    validity = {
        "chosen_k": table.chosen_k,
        "criterion": table.criterion,
        "silhouette": silhouette(view.X, labels) if len(np.unique(labels)) > 1 else None,
        "ari": None,
        "nmi": None,
        "aligned_f1": None,
        "cluster_sizes": np.bincount(labels, minlength=table.chosen_k).tolist(),
    }
    if view.labels is not None:
        f1, mapping = align_and_score(labels, view.labels)
        validity.update(ari=ari(labels, view.labels), nmi=nmi(labels, view.labels), aligned_f1=f1)
        validity["cluster_to_label"] = {str(k): v for k, v in sorted(mapping.items())}
    write_json(out / "validity.json", validity)
    man.add_output(out / "validity.json")

    pca = pca_project(view.X, args.pca_dims)
    pcs = [f"pc{j + 1}" for j in range(args.pca_dims)]
    truth = view.labels if view.labels is not None else [None] * view.n
    write_csv(
        out / "pca.csv",
        ["id", *pcs, "cluster", "label"],
        [(i, *map(float, row), int(c), None if t is None else int(t)) for i, row, c, t in zip(view.row_ids, pca.projection, labels, truth)],
    )
    man.add_output(out / "pca.csv")
    man.extra["explained_variance_ratio"] = pca.explained_variance_ratio.tolist()
    man.write()
    return EXIT_OK


def cmd_attribute(args) -> int:
    roles, roles_label = resolve_roles(args.roles)
    ds = read_data(args.data, roles)
    seed = default_seed() if args.seed is None else args.seed
    out = _out_dir(args.out)
    man = RunManifest("attribute", out, seed, args.wall_clock)
    man.add_config("roles", roles_label)
    man.add_input(args.data)

    features = list(roles.feature_columns())
    if args.report:
        spec = report_marker(read_report(args.report), report_source(args.report), roles.treatments)
        ds = ds.with_columns({MARKER_COLUMN: evaluate_marker(spec, ds)})
        man.add_input(args.report)
        if args.target == "risk":
            features.append(MARKER_COLUMN)
        else:
            # the marker is an exact linear combination of the VOCs already
            # present, so a glucose regression cannot also take it
            log.warning("glucose target: %s left out (collinear with the VOCs)", MARKER_COLUMN)
    view = build_view(ds, RoleConfig(roles.treatments, roles.outcome, roles.confounders, roles.label, roles.id, tuple(features)))
    X = view.X

    if args.target == "risk":
        if view.labels is None:
            raise UsageError("risk target needs a label column")
        model = train(view, ModelSpec(kind=args.model, seed=seed))
        predict = model.predict_proba
        if args.method == "exact" and args.model != "logistic":
            raise UsageError("exact attribution needs a linear model (--model logistic)")
        linear = model if args.model == "logistic" else None
    else:
        fit = ols_fit(X, view.y)
        predict = fit.predict
        linear = fit

    rng = np.random.default_rng([seed, 0])
    n_subj = min(args.subjects, view.n)
    subjects = np.sort(rng.choice(view.n, size=n_subj, replace=False)) if n_subj < view.n else np.arange(view.n)
    background = background_sample(X, seed=seed)
    atts = []
    for i in subjects:
        if args.method == "exact":
            atts.append(shapley_linear(linear, X[i], X.mean(axis=0), view.feature_names, view.row_ids[i]))
        else:
            atts.append(
                shapley_sample(predict, X[i], background, args.permutations, int(seed) * 1_000_003 + int(i), view.feature_names, view.row_ids[i])
            )
    summary = summarize(atts)
    write_csv(out / "attribution_summary.csv", ["feature", "mean_abs_phi"], zip(summary.features, map(float, summary.mean_abs_phi)))
    man.add_output(out / "attribution_summary.csv")
    write_csv(out / "attribution_long.csv", ["subject", "feature", "value", "phi"], summary.long_form)
    man.add_output(out / "attribution_long.csv")
    meta = {
        "target": args.target,
        "method": args.method,
        "model": args.model if args.target == "risk" else "ols",
        "scale": "log-odds" if linear is not None and args.target == "risk" and args.method == "exact" else "prediction",
        "subjects": n_subj,
        "permutations": args.permutations if args.method == "sample" else None,
        "ranking": list(summary.features),
        "max_efficiency_gap": max(abs(a.efficiency_gap) for a in atts),
    }
    write_json(out / "attribution.json", meta)
    man.add_output(out / "attribution.json")
    man.write()
    return EXIT_OK


def cmd_demo(args) -> int:
    """Full pipeline on the bundled configs.

    ``cohort/``: large demo cohort for causal estimation, attribution,
    stratification and classification.  ``grayzone/``: small cohort with
    planted preclinical subjects for the gray-zone marker contrast.
    """
    seed = default_seed() if args.seed is None else args.seed
    out = _out_dir(args.out)
    cohort, gz = out / "cohort", out / "grayzone"
    common = ["--wall-clock"] if args.wall_clock else []
    # the bundled configs carry their own simulation seeds; --seed overrides both
    sim_cohort = [] if args.seed is None else ["--seed", str(seed)]
    sim_gz = [] if args.seed is None else ["--seed", str(seed + 1)]
    steps = [
        ["simulate", "--config", "demo", "--out", str(cohort), *sim_cohort, *common],
        [
            "causal", "--data", str(cohort / "data.csv"), "--roles", "demo", "--out", str(cohort),
            "--refute", str(args.refute), "--reverse", "--sensitivity", "drop-one", "--seed", str(seed), *common,
        ],
        ["classify", "--data", str(cohort / "data.csv"), "--roles", "demo", "--out", str(cohort), "--seed", str(seed), *common],
        [
            "attribute", "--data", str(cohort / "data.csv"), "--roles", "demo", "--out", str(cohort),
            "--report", str(cohort / "causal_report.json"), "--seed", str(seed), *common,
        ],
        ["cluster", "--data", str(cohort / "data.csv"), "--roles", "demo", "--out", str(cohort), "--seed", str(seed), *common],
        ["simulate", "--config", "grayzone", "--out", str(gz), *sim_gz, *common],
        ["classify", "--data", str(gz / "data.csv"), "--roles", "demo", "--out", str(gz), "--seed", str(seed), *common],
        [
            "marker", "--data", str(gz / "data.csv"), "--report", str(cohort / "causal_report.json"),
            "--groups", str(gz / "gray_zone.csv"), "--out", str(gz), *common,
        ],
    ]
    man = RunManifest("demo", out, seed, args.wall_clock)
    man.add_config("scm", "builtin:demo")
    man.add_config("scm_grayzone", "builtin:grayzone")
    man.add_config("roles", "builtin:roles")
    for step in steps:
        log.info("demo: %s", step[0])
        status = main(step)
        if status != EXIT_OK:
            return status
    for sub in (cohort, gz):
        for path in sorted(sub.iterdir()):
            man.add_output(path)
    man.write()
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vocscreen", description="Breath-VOC diabetes screening pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--wall-clock", action="store_true", help="stamp the manifest with real time")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")

    s = sub.add_parser("simulate", help="draw a cohort from an SCM config")
    s.add_argument("--config", default="demo", help="config JSON path or a bundled name (demo, grayzone)")
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--name", default="data.csv")
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("causal", help="forward (and reverse) effect estimates with refutation")
    s.add_argument("--data", required=True)
    s.add_argument("--roles", required=True, help="roles JSON path, or 'demo'")
    s.add_argument("--refute", type=int, default=None, metavar="K")
    s.add_argument("--reverse", action="store_true")
    s.add_argument(
        "--sensitivity",
        action="append",
        metavar="SUBSET",
        help="comma-separated confounder subset ('-' for none, 'drop-one' for all leave-one-out sets); repeatable",
    )
    s.add_argument("--estimator", choices=ESTIMATORS, default=ESTIMATORS[0])
    s.add_argument(
        "--co-adjust",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="adjust single-VOC queries for the other VOCs too",
    )
    s.add_argument("--jobs", type=int, default=1)
    common(s)
    s.set_defaults(func=cmd_causal)

    s = sub.add_parser("classify", help="cross-validated risk model, ranking and gray zone")
    s.add_argument("--data", required=True)
    s.add_argument("--roles", required=True)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--model", choices=("logistic", "forest"), default="logistic")
    s.add_argument("--ridge", type=float, default=1.0)
    s.add_argument("--trees", type=int, default=100)
    s.add_argument("--rank", choices=("out-of-fold", "in-sample"), default="out-of-fold")
    s.add_argument("--gray-threshold", type=float, default=0.5)
    s.add_argument("--gray-top-k", type=int, default=5, help="fallback size when nobody crosses the threshold (0: none)")
    s.add_argument("--drop-outliers", action="store_true")
    common(s)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("marker", help="synthetic-glucose marker and gray-zone comparison")
    s.add_argument("--data", required=True)
    s.add_argument("--report", required=True, help="causal report JSON supplying the coefficients")
    s.add_argument("--groups", required=True, help="gray-zone CSV from classify")
    s.add_argument("--alternative", choices=("greater", "two-sided", "less"), default="greater")
    s.add_argument("--outcome", default="glucose")
    common(s, seed=False)
    s.set_defaults(func=cmd_marker)

    s = sub.add_parser("cluster", help="GMM stratification with BIC/AIC selection")
    s.add_argument("--data", required=True)
    s.add_argument("--roles", required=True)
    s.add_argument("--k-range", default="1..5")
    s.add_argument("--criterion", choices=("bic", "aic"), default="bic")
    s.add_argument("--pca-dims", type=int, default=2)
    s.add_argument("--restarts", type=int, default=3)
    common(s)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("attribute", help="Shapley attribution of the risk or glucose model")
    s.add_argument("--data", required=True)
    s.add_argument("--roles", required=True)
    s.add_argument("--report", default=None, help="causal report; adds the synthetic-glucose feature")
    s.add_argument("--target", choices=("risk", "glucose"), default="risk")
    s.add_argument("--model", choices=("forest", "logistic"), default="forest")
    s.add_argument("--method", choices=("sample", "exact"), default="sample")
    s.add_argument("--permutations", type=int, default=200)
    s.add_argument("--subjects", type=int, default=50)
    common(s)
    s.set_defaults(func=cmd_attribute)

    s = sub.add_parser("demo", help="run the whole pipeline on the bundled configs")
    s.add_argument("--refute", type=int, default=999, metavar="K")
    common(s)
    s.set_defaults(func=cmd_demo)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataError, ConfigError, LeakageError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"vocscreen {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (EstimationError, EMError) as exc:
        print(f"vocscreen {args.command}: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
