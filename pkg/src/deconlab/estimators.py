"""Effect estimators and the diagnostics that accompany them.

All estimators fit a linear outcome model by least squares and standardize
over the empirical distribution of the remaining regressors:

    point = mean_i f(a, x_i) - mean_i f(a', x_i)

Standard errors come from a unit-resampling bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular, svdvals

from .errors import CollinearityError, ConfigError
from .factors import SubstituteConfounder, causes_fingerprint, fisher_z_pvalue, residualize
from .scm import Dataset
from .seeding import generator

COLLINEARITY_THRESHOLD = 1e10
DEGENERATE_R2 = 1 - 1e-10


@dataclass(frozen=True)
class Estimand:
    """Contrast ``do(causes = a)`` versus ``do(causes = a_prime)``.

    ``regressors`` lists the causes that enter the outcome model (all causes
    when ``None``); the intervened causes must be among them.
    """

    causes: tuple[str, ...]
    a: tuple[float, ...] | None = None
    a_prime: tuple[float, ...] | None = None
    regressors: tuple[str, ...] | None = None
    truth: float = math.nan
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "causes", tuple(self.causes))
        if self.a is None:
            object.__setattr__(self, "a", (1.0,) * len(self.causes))
        if self.a_prime is None:
            object.__setattr__(self, "a_prime", (0.0,) * len(self.causes))
        if not (len(self.a) == len(self.a_prime) == len(self.causes)) or not self.causes:
            raise ConfigError("estimand contrast does not match its causes")
        if self.regressors is not None:
            object.__setattr__(self, "regressors", tuple(self.regressors))
            if not set(self.causes) <= set(self.regressors):
                raise ConfigError("intervened causes must be among the regressors")
        if not self.name:
            object.__setattr__(self, "name", "+".join(self.causes))

    def regressors_for(self, data: Dataset) -> tuple[str, ...]:
        regs = self.regressors if self.regressors is not None else data.cause_names
        for c in regs:
            if c not in data.cause_names:
                raise ConfigError(f"estimand refers to unknown cause {c!r}")
        return tuple(regs)

    def with_truth(self, truth: float) -> Estimand:
        return Estimand(self.causes, self.a, self.a_prime, self.regressors, float(truth), self.name)


@dataclass(frozen=True)
class CollinearityReport:
    columns: tuple[str, ...]
    condition_number: float
    rank_deficient: bool
    vif: dict[str, float]
    threshold: float = COLLINEARITY_THRESHOLD

    @property
    def description(self) -> str:
        return "[" + " | ".join(self.columns) + "]"


@dataclass(frozen=True)
class EffectEstimate:
    estimand: Estimand
    estimator: str
    point: float
    se: float
    truth: float
    bias: float
    replicates: int = 1
    condition_number: float = math.nan
    provenance: dict = field(default_factory=dict)

    @property
    def subset(self) -> str:
        return f"{len(self.estimand.causes)} of {self.provenance.get('m', '?')}"


def _qr_r(design: np.ndarray, y: np.ndarray | None = None):
    """R factor of the unit-norm-scaled design (optionally with ``y`` appended)."""
    norms = np.linalg.norm(design, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    x = design / norms
    if y is not None:
        x = np.column_stack([x, y])
    return qr(x, mode="r", check_finite=False)[0], norms


def _report_from_r(r: np.ndarray, norms: np.ndarray, n: int, names: Sequence[str],
                   threshold: float) -> CollinearityReport:
    p = len(names)
    rp = r[:p, :p]
    s = svdvals(rp)
    cond = math.inf if s[-1] == 0 else float(s[0] / s[-1])
    # VIF of each non-intercept column from the centered Gram matrix
    gram = (rp.T @ rp) * np.outer(norms, norms)
    vif = {}
    if p > 1:
        mean = gram[0, 1:] / n
        cov = gram[1:, 1:] - n * np.outer(mean, mean)
        sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        if (sd > 0).all() and cond <= threshold:
            corr = cov / np.outer(sd, sd)
            try:
                diag = np.diag(np.linalg.inv(corr))
                vif = {nm: float(v) for nm, v in zip(names[1:], diag)}
            except np.linalg.LinAlgError:
                pass
        if not vif:
            vif = {nm: math.inf for nm in names[1:]}
    return CollinearityReport(tuple(names), cond, cond > threshold, vif, threshold)


def collinearity_report(design: np.ndarray, names: Sequence[str],
                        threshold: float = COLLINEARITY_THRESHOLD) -> CollinearityReport:
    """Condition number and VIFs of ``design`` (intercept column first).

    The condition number is taken after scaling every column to unit norm so
    that it reflects near-dependence rather than units.
    """
    r, norms = _qr_r(design)
    return _report_from_r(r, norms, design.shape[0], names, threshold)


def _solve(r: np.ndarray, norms: np.ndarray) -> np.ndarray:
    p = len(norms)
    return solve_triangular(r[:p, :p], r[:p, p], check_finite=False) / norms


def _ols(design, y):
    """Least squares through a QR of the unit-norm-scaled ``[design | y]``."""
    return _solve(*_qr_r(design, y))


class _OutcomeModel:
    """Design for Y ~ 1 + causes + covariates (+ intervened cause x covariate)."""

    def __init__(self, data: Dataset, covariates: np.ndarray, estimand: Estimand, interaction: bool,
                 covariate_names: Sequence[str] | None = None):
        self.regressors = estimand.regressors_for(data)
        self.intervened = [self.regressors.index(c) for c in estimand.causes]
        self.causes = np.column_stack([data.cause(c) for c in self.regressors])
        self.covariates = covariates
        self.interaction = interaction
        self.delta = np.asarray(estimand.a) - np.asarray(estimand.a_prime)
        q = covariates.shape[1]
        cov_names = list(covariate_names) if covariate_names is not None else [f"f2[{j}]" for j in range(q)]
        names = ["1", *self.regressors, *cov_names]
        if interaction:
            names += [f"{self.regressors[i]}*{c}" for i in self.intervened for c in cov_names]
        self.names = names

    def design(self) -> np.ndarray:
        blocks = [np.ones((self.causes.shape[0], 1)), self.causes, self.covariates]
        if self.interaction:
            blocks += [self.causes[:, [i]] * self.covariates for i in self.intervened]
        return np.column_stack(blocks)

    def contrast(self, beta: np.ndarray, cov_mean: np.ndarray) -> float:
        """Standardized contrast; exact because the model is linear in its parameters."""
        m, q = self.causes.shape[1], self.covariates.shape[1]
        value = float(self.delta @ beta[1 + np.asarray(self.intervened, dtype=int)])
        if self.interaction:
            inter = beta[1 + m + q:].reshape(len(self.intervened), q)
            value += float(self.delta @ inter @ cov_mean)
        return value


def estimate_adjusted(data: Dataset, covariates, estimand: Estimand, *, n_boot: int = 200, seed: int = 0,
                      interaction: bool = False, covariate_names=None, estimator: str = "oracle-adjusted",
                      threshold: float = COLLINEARITY_THRESHOLD) -> EffectEstimate:
    """Outcome regression on (causes, covariates), standardized over the sample.

    Raises :class:`CollinearityError` with the design's
    :class:`CollinearityReport` when the condition number exceeds
    ``threshold``.  ``n_boot=0`` skips the bootstrap and reports ``se=nan``.
    """
    cov = np.asarray(covariates, dtype=float)
    if cov.size == 0:
        cov = np.empty((data.n, 0))
    if cov.ndim == 1:
        cov = cov[:, None]
    if cov.shape[0] != data.n:
        raise ConfigError("covariates are not row-aligned with the data")
    model = _OutcomeModel(data, cov, estimand, interaction, covariate_names)
    x = model.design()
    y = np.asarray(data.outcome, dtype=float)
    r, norms = _qr_r(x, y)
    report = _report_from_r(r, norms, data.n, model.names, threshold)
    if report.rank_deficient:
        raise CollinearityError(report)
    point = model.contrast(_solve(r, norms), cov.mean(axis=0))

    se = math.nan
    if n_boot:
        rng = generator(seed, 0xB007)
        boots = np.empty(n_boot)
        for b in range(n_boot):
            idx = rng.integers(0, data.n, data.n)
            boots[b] = model.contrast(_ols(x[idx], y[idx]), cov[idx].mean(axis=0))
        se = float(boots.std(ddof=1)) if n_boot > 1 else 0.0
    truth = estimand.truth
    return EffectEstimate(estimand, estimator, point, se, truth, point - truth, 1, report.condition_number,
                          {"m": data.m, "covariates": cov.shape[1], "interaction": interaction, "n_boot": n_boot})


def estimate_naive(data: Dataset, estimand: Estimand, *, n_boot: int = 200, seed: int = 0) -> EffectEstimate:
    """Regression of the outcome on the causes alone."""
    return estimate_adjusted(data, np.empty((data.n, 0)), estimand, n_boot=n_boot, seed=seed, estimator="naive")


def estimate_substitute(data: Dataset, sub: SubstituteConfounder, estimand: Estimand, *, n_boot: int = 200,
                        seed: int = 0, interaction: bool = False) -> EffectEstimate:
    """Adjust for a substitute confounder fitted on exactly ``data.causes``."""
    if sub.fingerprint and sub.fingerprint != causes_fingerprint(data.causes):
        raise ConfigError("substitute confounder was not fitted on this dataset's causes")
    cols = sub.adjustment_columns()
    names = [f"zhat[{j}]" for j in range(cols.shape[1])]
    est = estimate_adjusted(data, cols, estimand, n_boot=n_boot, seed=seed, interaction=interaction,
                            covariate_names=names, estimator="substitute-adjusted")
    est.provenance.update(family=sub.family, k=sub.k)
    return est


# --------------------------------------------------------------------------
# overlap


@dataclass(frozen=True)
class OverlapReport:
    counts: np.ndarray  # strata x configurations
    strata_labels: tuple[str, ...]
    configurations: tuple[tuple[int, ...], ...]
    min_occupancy: int
    verdict: str
    witness: tuple[int, tuple[int, ...]] | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def _quantile_codes(x: np.ndarray, bins: int) -> np.ndarray:
    values = np.unique(x)
    if values.size <= bins:
        return np.searchsorted(values, x)
    edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(edges, x, side="right")


def overlap_diagnostic(data: Dataset, sub: SubstituteConfounder, k_subset: Sequence[str],
                       bins: int = 4) -> OverlapReport:
    """Cross-tabulate cause-subset configurations within ``zhat`` strata.

    Strata are hard cluster assignments for mixtures and joint quantile bins
    of the ``zhat`` columns otherwise; continuous causes are binned the same
    way.  The verdict fails when some configuration is empty inside a
    stratum holding at least ``n / (10 * strata)`` units.
    """
    n = data.n
    if sub.family == "mixture" or (sub.family == "given" and _is_one_hot(sub.zhat)):
        strata = sub.hard_assignment()
        n_strata = sub.zhat.shape[1]
        strata_labels = tuple(f"cluster {j}" for j in range(n_strata))
    else:
        codes = [_quantile_codes(sub.zhat[:, j], bins) for j in range(sub.zhat.shape[1])]
        strata = np.zeros(n, dtype=int)
        for c in codes:
            strata = strata * bins + c
        n_strata = bins ** len(codes)
        strata_labels = tuple(f"bin {j}" for j in range(n_strata))

    cause_codes = np.column_stack([_quantile_codes(data.cause(c), bins) for c in k_subset])
    levels = [int(cause_codes[:, j].max()) + 1 for j in range(cause_codes.shape[1])]
    configurations = tuple(np.ndindex(*levels))
    config_index = np.ravel_multi_index(cause_codes.T, levels)
    counts = np.zeros((n_strata, len(configurations)), dtype=int)
    np.add.at(counts, (strata, config_index), 1)

    occupancy = counts.sum(axis=1)
    witness = None
    big = occupancy >= n / (10 * n_strata)
    for s in np.flatnonzero(big):
        empty = np.flatnonzero(counts[s] == 0)
        if empty.size:
            witness = (int(s), tuple(int(v) for v in configurations[empty[0]]))
            break
    return OverlapReport(counts, strata_labels, configurations, int(occupancy.min()),
                         "fail" if witness else "pass", witness)


def _is_one_hot(z):
    return z.shape[1] >= 2 and np.all((z == 0) | (z == 1)) and np.all(z.sum(axis=1) == 1)


# --------------------------------------------------------------------------
# conditional independence of a candidate confounder and the outcome


@dataclass(frozen=True)
class CITestResult:
    statistic: float
    pvalue: float
    verdict: str
    column_pvalues: tuple[float, ...] = ()

    def __iter__(self):
        return iter((self.statistic, self.pvalue, self.verdict))


def ci_test(y, z, conditioning, alpha: float = 0.05) -> CITestResult:
    """Fisher-z test of ``y`` independent of each ``z`` column given ``conditioning``.

    ``pvalue`` is Bonferroni-adjusted over the ``z`` columns.  A ``z`` column
    that is (numerically) an exact linear function of the conditioning
    columns yields the verdict ``"degenerate: collinear"`` and no p-value.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    cond = np.asarray(conditioning, dtype=float)
    if cond.ndim == 1:
        cond = cond[:, None]
    n = y.shape[0]
    if n <= z.shape[1] + cond.shape[1] + 3:
        raise ConfigError("ci_test needs n > columns(z) + columns(conditioning) + 3")
    zres = residualize(z, cond)
    zc = z - z.mean(axis=0)
    r2 = 1 - (zres**2).sum(axis=0) / np.maximum((zc**2).sum(axis=0), 1e-300)
    if (r2 >= DEGENERATE_R2).any():
        return CITestResult(math.nan, math.nan, "degenerate: collinear")
    yres = residualize(y[:, None], cond)[:, 0]
    r = (zres.T @ yres) / (np.linalg.norm(zres, axis=0) * np.linalg.norm(yres))
    stat, p = fisher_z_pvalue(r, n, cond.shape[1])
    j = int(np.argmin(p))
    p_adj = float(min(1.0, p[j] * z.shape[1]))
    verdict = "dependent" if p_adj < alpha else "independent"
    return CITestResult(float(stat[j]), p_adj, verdict, tuple(float(v) for v in p))
