"""Linear-Gaussian structural causal model used as ground truth.

Equations, for subject ``i`` belonging to subgroup ``g``::

    C      = N(mean, sd) + confounder_shift[g]
    T_j    = intercept_j + alpha_j . C + treatment_shift[g]_j + eta_j
    Y      = intercept + beta . T + gamma . C + outcome_shift[g] + eps

A subgroup with ``outcome_lag`` set has its treatment shift withheld from the
outcome equation: its VOC levels have moved but glucose has not caught up yet.
Without subgroups the model reduces to independent Gaussian confounders.

``population_moments`` gives the exact mean and covariance of ``(C, T, Y)``
implied by a config.  Regression coefficients computed from it are the
large-sample limits of OLS, including the biased limits obtained when a
confounder is left out.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_model import CONTINUOUS, Dataset


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Confounder:
    name: str
    mean: float
    sd: float


@dataclass(frozen=True)
class Treatment:
    name: str
    alpha: tuple[float, ...]
    noise_sd: float
    intercept: float = 0.0


@dataclass(frozen=True)
class Outcome:
    name: str
    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    noise_sd: float
    intercept: float = 0.0


@dataclass(frozen=True)
class Subgroup:
    name: str
    fraction: float
    confounder_shift: tuple[float, ...] = ()
    treatment_shift: tuple[float, ...] = ()
    outcome_shift: float = 0.0
    outcome_lag: bool = False
    label: int | None = None


@dataclass(frozen=True)
class LabelRule:
    """Binary label column ``name``: ``1{outcome >= threshold}``, or the
    subgroups' own labels when ``threshold`` is None."""

    name: str
    threshold: float | None = None


@dataclass(frozen=True)
class ScmConfig:
    confounders: tuple[Confounder, ...]
    treatments: tuple[Treatment, ...]
    outcome: Outcome
    n: int
    seed: int = 0
    subgroups: tuple[Subgroup, ...] = ()
    label: LabelRule | None = None
    id_prefix: str = "s"
    subgroup_column: str | None = None

    def __post_init__(self):
        k, m = len(self.confounders), len(self.treatments)
        if self.n < 1:
            raise ConfigError("n must be positive")
        names = [c.name for c in self.confounders] + [t.name for t in self.treatments] + [self.outcome.name]
        if len(set(names)) != len(names):
            raise ConfigError("variable names must be unique")
        for c in self.confounders:
            if not c.sd > 0:
                raise ConfigError(f"confounder {c.name!r}: sd must be > 0")
        for t in self.treatments:
            if len(t.alpha) != k:
                raise ConfigError(f"treatment {t.name!r}: alpha has {len(t.alpha)} entries, expected {k}")
            if not t.noise_sd > 0:
                raise ConfigError(f"treatment {t.name!r}: noise sd must be > 0")
        if len(self.outcome.beta) != m:
            raise ConfigError(f"beta has {len(self.outcome.beta)} entries, expected {m}")
        if len(self.outcome.gamma) != k:
            raise ConfigError(f"gamma has {len(self.outcome.gamma)} entries, expected {k}")
        if not self.outcome.noise_sd > 0:
            raise ConfigError("outcome noise sd must be > 0")
        if self.subgroups:
            total = sum(g.fraction for g in self.subgroups)
            if abs(total - 1.0) > 1e-9 or any(g.fraction < 0 for g in self.subgroups):
                raise ConfigError("subgroup fractions must be non-negative and sum to 1")
            for g in self.subgroups:
                if g.confounder_shift and len(g.confounder_shift) != k:
                    raise ConfigError(f"subgroup {g.name!r}: confounder_shift length mismatch")
                if g.treatment_shift and len(g.treatment_shift) != m:
                    raise ConfigError(f"subgroup {g.name!r}: treatment_shift length mismatch")

        if self.label is not None and self.label.threshold is None:
            if not self.subgroups or any(g.label is None for g in self.subgroups):
                raise ConfigError("label without threshold needs a label on every subgroup")

    # -- convenience -------------------------------------------------------

    @property
    def confounder_names(self) -> list[str]:
        return [c.name for c in self.confounders]

    @property
    def treatment_names(self) -> list[str]:
        return [t.name for t in self.treatments]

    @property
    def alpha(self) -> np.ndarray:
        return np.array([t.alpha for t in self.treatments], dtype=float).reshape(len(self.treatments), -1)

    @property
    def beta(self) -> np.ndarray:
        return np.array(self.outcome.beta, dtype=float)

    @property
    def gamma(self) -> np.ndarray:
        return np.array(self.outcome.gamma, dtype=float)

    def replace(self, **changes) -> "ScmConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def _groups(self) -> tuple[Subgroup, ...]:
        return self.subgroups or (Subgroup("all", 1.0),)

    def _shifts(self, g: Subgroup) -> tuple[np.ndarray, np.ndarray]:
        k, m = len(self.confounders), len(self.treatments)
        cs = np.array(g.confounder_shift, dtype=float) if g.confounder_shift else np.zeros(k)
        ts = np.array(g.treatment_shift, dtype=float) if g.treatment_shift else np.zeros(m)
        return cs, ts

    # -- (de)serialization ---------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "ScmConfig":
        try:
            confs = tuple(Confounder(c["name"], float(c["mean"]), float(c["sd"])) for c in doc["confounders"])
            treats = tuple(
                Treatment(t["name"], tuple(map(float, t["alpha"])), float(t["noise_sd"]), float(t.get("intercept", 0.0)))
                for t in doc["treatments"]
            )
            o = doc["outcome"]
            outcome = Outcome(
                o["name"],
                tuple(map(float, o["beta"])),
                tuple(map(float, o["gamma"])),
                float(o["noise_sd"]),
                float(o.get("intercept", 0.0)),
            )
            groups = tuple(
                Subgroup(
                    g["name"],
                    float(g["fraction"]),
                    tuple(map(float, g.get("confounder_shift", ()))),
                    tuple(map(float, g.get("treatment_shift", ()))),
                    float(g.get("outcome_shift", 0.0)),
                    bool(g.get("outcome_lag", False)),
                    None if g.get("label") is None else int(g["label"]),
                )
                for g in doc.get("subgroups", ())
            )
            lab = doc.get("label")
            label = None
            if lab:
                thr = lab.get("threshold")
                label = LabelRule(lab["name"], None if thr is None else float(thr))
            return cls(
                confs,
                treats,
                outcome,
                int(doc["n"]),
                int(doc.get("seed", 0)),
                groups,
                label,
                doc.get("id_prefix", "s"),
                doc.get("subgroup_column"),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid SCM config: {exc!r}") from None

    def to_dict(self) -> dict:
        doc = {
            "n": self.n,
            "seed": self.seed,
            "confounders": [{"name": c.name, "mean": c.mean, "sd": c.sd} for c in self.confounders],
            "treatments": [
                {"name": t.name, "alpha": list(t.alpha), "noise_sd": t.noise_sd, "intercept": t.intercept}
                for t in self.treatments
            ],
            "outcome": {
                "name": self.outcome.name,
                "beta": list(self.outcome.beta),
                "gamma": list(self.outcome.gamma),
                "noise_sd": self.outcome.noise_sd,
                "intercept": self.outcome.intercept,
            },
            "id_prefix": self.id_prefix,
        }
        if self.subgroups:
            doc["subgroups"] = [
                {
                    "name": g.name,
                    "fraction": g.fraction,
                    "confounder_shift": list(g.confounder_shift),
                    "treatment_shift": list(g.treatment_shift),
                    "outcome_shift": g.outcome_shift,
                    "outcome_lag": g.outcome_lag,
                    "label": g.label,
                }
                for g in self.subgroups
            ]
        if self.label is not None:
            doc["label"] = {"name": self.label.name, "threshold": self.label.threshold}
        if self.subgroup_column:
            doc["subgroup_column"] = self.subgroup_column
        return doc


def load_config(path: str | os.PathLike) -> ScmConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read SCM config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("SCM config must be a JSON object")
    return ScmConfig.from_dict(doc)


def _subgroup_assignment(cfg: ScmConfig, rng: np.random.Generator) -> np.ndarray:
    """Deterministic group sizes (rounded fractions), randomly placed."""
    groups = cfg._groups()
    counts = np.floor(np.array([g.fraction for g in groups]) * cfg.n).astype(int)
    # largest remainders get the leftover rows
    rem = np.array([g.fraction for g in groups]) * cfg.n - counts
    for idx in np.argsort(-rem, kind="stable")[: cfg.n - counts.sum()]:
        counts[idx] += 1
    assignment = np.repeat(np.arange(len(groups)), counts)
    return rng.permutation(assignment)


def simulate(cfg: ScmConfig) -> Dataset:
    """Draw ``cfg.n`` subjects.  Columns: confounders, treatments, outcome
    (then the label and subgroup columns when configured); ids ``s0001``...
    """
    rng = np.random.default_rng(cfg.seed)
    k, m, n = len(cfg.confounders), len(cfg.treatments), cfg.n
    groups = cfg._groups()
    g_idx = _subgroup_assignment(cfg, rng)

    means = np.array([c.mean for c in cfg.confounders])
    sds = np.array([c.sd for c in cfg.confounders])
    C = means + sds * rng.standard_normal((n, k)) if k else np.zeros((n, 0))
    eta = rng.standard_normal((n, m)) * np.array([t.noise_sd for t in cfg.treatments])
    eps = rng.standard_normal(n) * cfg.outcome.noise_sd

    c_shift = np.zeros((n, k))
    t_shift = np.zeros((n, m))
    y_shift = np.zeros(n)
    t_shift_seen = np.zeros((n, m))
    for gi, g in enumerate(groups):
        rows = g_idx == gi
        cs, ts = cfg._shifts(g)
        c_shift[rows] = cs
        t_shift[rows] = ts
        y_shift[rows] = g.outcome_shift
        if not g.outcome_lag:
            t_shift_seen[rows] = ts
    C = C + c_shift
    base_T = np.array([t.intercept for t in cfg.treatments]) + C @ cfg.alpha.T + eta
    T = base_T + t_shift
    Y = cfg.outcome.intercept + (base_T + t_shift_seen) @ cfg.beta + C @ cfg.gamma + y_shift + eps

    width = max(4, len(str(n)))
    ids = tuple(f"{cfg.id_prefix}{i + 1:0{width}d}" for i in range(n))
    names = cfg.confounder_names + cfg.treatment_names + [cfg.outcome.name]
    cols = {name: C[:, j] for j, name in enumerate(cfg.confounder_names)}
    cols.update({name: T[:, j] for j, name in enumerate(cfg.treatment_names)})
    cols[cfg.outcome.name] = Y
    kinds = {name: CONTINUOUS for name in names}
    if cfg.label is not None:
        names.append(cfg.label.name)
        if cfg.label.threshold is None:
            group_labels = np.array([g.label for g in groups], dtype=float)
            cols[cfg.label.name] = group_labels[g_idx]
        else:
            cols[cfg.label.name] = (Y >= cfg.label.threshold).astype(float)
        kinds[cfg.label.name] = CONTINUOUS
    if cfg.subgroup_column:
        names.append(cfg.subgroup_column)
        cols[cfg.subgroup_column] = g_idx.astype(float)
        kinds[cfg.subgroup_column] = CONTINUOUS
    return Dataset(tuple(names), cols, ids, kinds)


def true_ate(cfg: ScmConfig, treatment: str | Sequence[str]) -> float:
    """Structural coefficient of ``treatment``; a list gives the sum (joint unit shift)."""
    names = [treatment] if isinstance(treatment, str) else list(treatment)
    lookup = dict(zip(cfg.treatment_names, cfg.outcome.beta))
    for name in names:
        if name not in lookup:
            raise KeyError(f"unknown treatment {name!r}")
    return float(sum(lookup[name] for name in names))


def population_moments(cfg: ScmConfig) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Exact mean vector and covariance of ``(C, T, Y)`` under ``cfg``.

    Each subgroup is Gaussian; the mixture covariance is the weighted
    within-group covariance plus the covariance of the group means.
    """
    k, m = len(cfg.confounders), len(cfg.treatments)
    A, b, g = cfg.alpha, cfg.beta, cfg.gamma
    # (C, T, Y) = L @ (z_C, eta, eps) + mu_group, with z_C ~ N(0, diag(sd^2))
    d = k + m + 1
    L = np.zeros((d, d))
    L[:k, :k] = np.eye(k)
    L[k : k + m, :k] = A
    L[k : k + m, k : k + m] = np.eye(m)
    L[-1, :k] = b @ A + g
    L[-1, k : k + m] = b
    L[-1, -1] = 1.0
    noise_var = np.concatenate(
        [[c.sd**2 for c in cfg.confounders], [t.noise_sd**2 for t in cfg.treatments], [cfg.outcome.noise_sd**2]]
    )
    within = L @ np.diag(noise_var) @ L.T

    means = []
    weights = []
    base_mu = np.array([c.mean for c in cfg.confounders])
    t_int = np.array([t.intercept for t in cfg.treatments])
    for grp in cfg._groups():
        cs, ts = cfg._shifts(grp)
        mu_c = base_mu + cs
        mu_t_base = t_int + A @ mu_c
        mu_t = mu_t_base + ts
        seen = mu_t if not grp.outcome_lag else mu_t_base
        mu_y = cfg.outcome.intercept + b @ seen + g @ mu_c + grp.outcome_shift
        means.append(np.concatenate([mu_c, mu_t, [mu_y]]))
        weights.append(grp.fraction)
    means = np.array(means)
    weights = np.array(weights)
    mu = weights @ means
    centered = means - mu
    between = (centered * weights[:, None]).T @ centered
    names = cfg.confounder_names + cfg.treatment_names + [cfg.outcome.name]
    return names, mu, within + between


def population_regression(cfg: ScmConfig, outcome: str, regressors: Sequence[str]) -> np.ndarray:
    """Large-sample OLS slopes of ``outcome`` on ``regressors`` (intercept implied)."""
    names, _, cov = population_moments(cfg)
    pos = {n: i for i, n in enumerate(names)}
    idx = [pos[r] for r in regressors]
    return np.linalg.solve(cov[np.ix_(idx, idx)], cov[idx, pos[outcome]])


def omitted_variable_bias(alpha: float, gamma: float, var_c: float, var_t: float) -> float:
    """Bias of the unadjusted slope for one treatment and one confounder:
    ``alpha * gamma * Var(C) / Var(T)``."""
    return alpha * gamma * var_c / var_t


# --------------------------------------------------------------- bundled configs

VOCS = ("acetone", "isopropanol", "isoprene", "ethanol")
PLANTED_BETA = (5.400, -2.8, 23.086, 67.109)
LIFESTYLE = (
    "age",
    "gender",
    "height",
    "weight",
    "comorbidities",
    "alcohol",
    "tobacco",
    "fruit_intake",
    "sleep_duration",
    "stress",
)

# (mean, sd) per lifestyle confounder
_LIFESTYLE_MOMENTS = (
    (50.0, 12.0),
    (0.5, 0.5),
    (165.0, 9.0),
    (72.0, 14.0),
    (1.0, 1.0),
    (2.0, 2.0),
    (1.0, 1.5),
    (2.0, 1.0),
    (7.0, 1.2),
    (5.0, 2.0),
)

# confounder -> VOC effects, per confounder sd (row: VOC, column: LIFESTYLE)
_ALPHA_PER_SD = (
    (0.9, 0.0, 0.0, 0.4, 0.5, 0.0, 0.3, -0.3, 0.0, 0.3),  # acetone
    (0.2, 0.3, 0.0, 0.3, 0.3, 0.6, 0.0, 0.0, -0.2, 0.2),  # isopropanol
    (0.06, 0.0, 0.04, 0.08, 0.05, 0.0, 0.05, -0.04, 0.03, 0.0),  # isoprene
    (0.02, 0.0, 0.0, 0.02, 0.02, 0.04, 0.02, 0.0, 0.0, 0.02),  # ethanol
)
_VOC_NOISE = (1.5, 1.0, 0.4, 0.15)
_VOC_INTERCEPT = (4.0, 3.0, 1.5, 0.6)
# confounder -> glucose effects, mg/dL per confounder sd
_GAMMA_PER_SD = (6.0, 1.0, -1.0, 4.0, 5.0, 1.5, 1.5, -2.0, -1.5, 2.0)
# lifestyle profile of diagnosed diabetics, in confounder sds
_DIABETIC_LIFESTYLE_SD = (0.16, 0.02, -0.02, 0.18, 0.2, 0.06, 0.08, -0.12, -0.1, 0.14)
# VOC separation of diagnosed diabetics, in VOC noise-Mahalanobis units
_DIABETIC_VOC_SEPARATION = 5.0
_PRECLINICAL_SCALE = 1.0
# compensated glucose of the preclinical group, mg/dL
_PRECLINICAL_GLUCOSE_SHIFT = -12.0


def _per_unit(per_sd: Sequence[float]) -> tuple[float, ...]:
    return tuple(v / sd for v, (_, sd) in zip(per_sd, _LIFESTYLE_MOMENTS))


def voc_signature(scale: float = 1.0) -> tuple[float, ...]:
    """VOC shift along ``noise_var * beta``, normalized to unit Mahalanobis length.

    Along this direction the best linear discriminant in VOC space coincides
    with the planted glucose effects, so a glucose-weighted composite of the
    VOCs carries the whole VOC signal.
    """
    beta = np.array(PLANTED_BETA)
    noise = np.array(_VOC_NOISE)
    direction = beta * noise**2
    direction = direction / np.sqrt(np.sum((direction / noise) ** 2))
    return tuple(float(v) for v in scale * direction)


def demo_config(n: int = 5000, seed: int = 20250101) -> ScmConfig:
    """Demo cohort: planted per-VOC effects, four VOCs, ten lifestyle confounders.

    Two diagnosed groups: healthy and diabetic.  Diabetics differ in
    lifestyle profile and carry a metabolic VOC signature; the signature feeds
    glucose through the planted effects.  The ``diabetic`` column holds the
    diagnosis.
    """
    confs = tuple(Confounder(name, mu, sd) for name, (mu, sd) in zip(LIFESTYLE, _LIFESTYLE_MOMENTS))
    treats = []
    for name, row, noise, icpt in zip(VOCS, _ALPHA_PER_SD, _VOC_NOISE, _VOC_INTERCEPT):
        alpha = _per_unit(row)
        mean_shift = sum(a * mu for a, (mu, _) in zip(alpha, _LIFESTYLE_MOMENTS))
        treats.append(Treatment(name, alpha, noise, icpt - mean_shift))
    gamma = _per_unit(_GAMMA_PER_SD)
    beta = np.array(PLANTED_BETA)
    base_voc = np.array(_VOC_INTERCEPT)
    g_offset = sum(gm * mu for gm, (mu, _) in zip(gamma, _LIFESTYLE_MOMENTS))
    outcome = Outcome("glucose", PLANTED_BETA, gamma, 6.0, 90.0 - float(beta @ base_voc) - g_offset)
    lifestyle = tuple(v * sd for v, (_, sd) in zip(_DIABETIC_LIFESTYLE_SD, _LIFESTYLE_MOMENTS))
    groups = (
        Subgroup("healthy", 0.4, label=0),
        Subgroup(
            "diabetic",
            0.6,
            confounder_shift=lifestyle,
            treatment_shift=voc_signature(_DIABETIC_VOC_SEPARATION),
            label=1,
        ),
    )
    return ScmConfig(confs, tuple(treats), outcome, n, seed, groups, LabelRule("diabetic"))


def grayzone_config(n: int = 300, seed: int = 20250102) -> ScmConfig:
    """Demo cohort plus undiagnosed "preclinical" subjects.

    They carry the diabetic VOC signature, but their glucose ignores it (the
    signature is lagged out of the outcome equation) and sits slightly low,
    as under compensatory insulin secretion.
    """
    base = demo_config(n, seed)
    healthy, diabetic = base.subgroups
    groups = (
        Subgroup("healthy", 0.36, label=0),
        diabetic.__class__(**{**diabetic.__dict__, "fraction": 0.58}),
        Subgroup(
            "preclinical",
            0.06,
            treatment_shift=voc_signature(_PRECLINICAL_SCALE * _DIABETIC_VOC_SEPARATION),
            outcome_shift=_PRECLINICAL_GLUCOSE_SHIFT,
            outcome_lag=True,
            label=0,
        ),
    )
    return base.replace(subgroups=groups, subgroup_column="subgroup")
def null_config(n: int = 500, seed: int = 0, n_confounders: int = 1, alpha: float = 0.0) -> ScmConfig:
    """One treatment with no effect on the outcome.

    The covariates always drive the outcome; ``alpha`` > 0 also makes them
    drive the treatment (a confounded null).
    """
    confs = tuple(Confounder(f"c{i + 1}", 0.0, 1.0) for i in range(n_confounders))
    treat = Treatment("t", (float(alpha),) * n_confounders, 1.0)
    outcome = Outcome("y", (0.0,), (3.0,) * n_confounders, 1.0)
    return ScmConfig(confs, (treat,), outcome, n, seed)
