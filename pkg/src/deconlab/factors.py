"""Latent-variable models of the causes and the substitute confounders they emit.

Three families are supported:

* ``ppca`` -- probabilistic PCA fitted by EM; ``zhat`` is the posterior mean
  ``(W'W + s2 I)^-1 W'(a - mu)`` computed on standardized causes.
* ``mixture`` -- gaussian mixture with one diagonal covariance shared by all
  components, fitted by EM; ``zhat`` is the responsibility vector.
* ``poisson-mf`` -- nonnegative factorization ``A ~ Poisson(Theta B')``
  fitted by multiplicative updates; ``zhat`` holds the per-unit loadings.

Every fitted model carries a ``mapping`` that evaluates ``zhat`` for any
cause row, so ``zhat`` is a deterministic function of the causes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy
from scipy.stats import norm

from .errors import ConfigError, DegenerateInputError
from .seeding import generator

FAMILIES = ("ppca", "poisson-mf", "mixture")
LOG2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class FactorModelSpec:
    family: str
    k: int
    max_iters: int = 2000
    rel_tol: float = 1e-8
    init_seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown factor-model family {self.family!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")


def causes_fingerprint(causes: np.ndarray) -> str:
    a = np.ascontiguousarray(causes, dtype=float)
    return hashlib.blake2b(a.tobytes() + str(a.shape).encode(), digest_size=16).hexdigest()


# --------------------------------------------------------------------------
# mappings: fitted parameters that evaluate E[Z | A = a]


@dataclass(frozen=True)
class PPCAMapping:
    mean: np.ndarray
    scale: np.ndarray
    loadings: np.ndarray  # standardized space, m x k
    sigma2: float

    family = "ppca"

    @property
    def projection(self) -> np.ndarray:
        w = self.loadings
        m_mat = w.T @ w + self.sigma2 * np.eye(w.shape[1])
        return w @ np.linalg.inv(m_mat)

    def transform(self, causes) -> np.ndarray:
        x = (np.atleast_2d(causes) - self.mean) / self.scale
        return x @ self.projection

    def row_loglik(self, causes) -> np.ndarray:
        x = (np.atleast_2d(causes) - self.mean) / self.scale
        d = x.shape[1]
        cov = self.loadings @ self.loadings.T + self.sigma2 * np.eye(d)
        chol = np.linalg.cholesky(cov)
        sol = np.linalg.solve(chol, x.T)
        logdet = 2 * np.log(np.diag(chol)).sum()
        return -0.5 * (d * LOG2PI + logdet + (sol**2).sum(axis=0)) - np.log(self.scale).sum()

    def params(self):
        return {"mean": self.mean, "scale": self.scale, "loadings": self.loadings, "sigma2": self.sigma2}


@dataclass(frozen=True)
class MixtureMapping:
    weights: np.ndarray  # k
    means: np.ndarray  # k x m
    variances: np.ndarray  # m, shared by all components

    family = "mixture"

    def _log_joint(self, causes):
        a = np.atleast_2d(causes)
        inv = 1.0 / self.variances
        quad = ((a**2) @ inv)[:, None] - 2 * a @ (self.means * inv).T + ((self.means**2) @ inv)[None, :]
        const = -0.5 * (a.shape[1] * LOG2PI + np.log(self.variances).sum())
        return np.log(self.weights)[None, :] + const - 0.5 * quad

    def transform(self, causes) -> np.ndarray:
        lj = self._log_joint(causes)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def row_loglik(self, causes) -> np.ndarray:
        return logsumexp(self._log_joint(causes), axis=1)

    def params(self):
        return {"weights": self.weights, "means": self.means, "variances": self.variances}


@dataclass(frozen=True)
class PoissonMapping:
    factors: np.ndarray  # m x k, the B in A ~ Theta B'
    inner_iters: int = 5000
    inner_tol: float = 1e-13

    family = "poisson-mf"

    def transform(self, causes) -> np.ndarray:
        """Maximize the Poisson likelihood of each row over its loadings, B fixed.

        Multiplicative updates start from a fixed point and each row stops
        on its own relative-change test, so the result depends on that row
        alone.
        """
        a = np.atleast_2d(np.asarray(causes, dtype=float))
        b = self.factors
        k = b.shape[1]
        colsum = b.sum(axis=0)
        denom = np.where(colsum > 0, colsum, 1.0)
        total = colsum.sum()
        start = a.sum(axis=1, keepdims=True) / (k * total) if total > 0 else np.zeros((a.shape[0], 1))
        theta = np.repeat(start, k, axis=1)
        active = np.arange(a.shape[0])
        for _ in range(self.inner_iters):
            if active.size == 0:
                break
            t = theta[active]
            new = t * (_ratio(a[active], t @ b.T) @ b) / denom
            theta[active] = new
            change = np.abs(new - t).max(axis=1)
            active = active[change > self.inner_tol * np.maximum(np.abs(new).max(axis=1), 1e-300)]
        return theta

    def row_loglik(self, causes) -> np.ndarray:
        a = np.atleast_2d(np.asarray(causes, dtype=float))
        lam = self.transform(a) @ self.factors.T
        return (xlogy(a, lam) - lam - gammaln(a + 1)).sum(axis=1)

    def params(self):
        return {"factors": self.factors, "inner_iters": self.inner_iters, "inner_tol": self.inner_tol}


@dataclass(frozen=True)
class GivenMapping:
    """Placeholder for externally supplied substitute columns (no model)."""

    family = "given"

    def transform(self, causes):
        raise ConfigError("a given substitute confounder has no mapping")

    def params(self):
        return {}


def _ratio(a, lam):
    return np.divide(a, lam, out=np.zeros_like(a), where=lam > 0)


# --------------------------------------------------------------------------
# substitute confounder


@dataclass(frozen=True)
class SubstituteConfounder:
    zhat: np.ndarray
    mapping: object
    loglik_trace: np.ndarray
    family: str
    k: int
    fingerprint: str = ""
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def given(cls, zhat, causes=None, family="given"):
        """Wrap known columns (e.g. a true stratifier) as a substitute confounder."""
        z = np.asarray(zhat, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        fp = causes_fingerprint(causes) if causes is not None else ""
        return cls(z, GivenMapping(), np.array([]), family, z.shape[1], fp)

    def adjustment_columns(self) -> np.ndarray:
        """Columns to enter an outcome model; responsibilities lose one column
        because they sum to one (collinear with the intercept)."""
        if self.family == "mixture":
            return self.zhat[:, 1:]
        return self.zhat

    def hard_assignment(self) -> np.ndarray:
        # argmax breaks ties toward the lower component index
        return np.argmax(self.zhat, axis=1)

    def to_json(self) -> str:
        params = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.mapping.params().items()}
        doc = {"family": self.family, "k": self.k, "parameters": params,
               "loglik_trace": [float(x) for x in self.loglik_trace]}
        return json.dumps(doc, indent=2)


def mapping_from_json(text: str):
    """Rebuild the mapping of a fitted-model dump produced by ``to_json``."""
    doc = json.loads(text)
    p = doc["parameters"]
    fam = doc["family"]
    if fam == "ppca":
        return PPCAMapping(np.array(p["mean"]), np.array(p["scale"]), np.array(p["loadings"]).reshape(-1, doc["k"]),
                           float(p["sigma2"]))
    if fam == "mixture":
        return MixtureMapping(np.array(p["weights"]), np.array(p["means"]), np.array(p["variances"]))
    if fam == "poisson-mf":
        return PoissonMapping(np.array(p["factors"]).reshape(-1, doc["k"]), int(p["inner_iters"]),
                              float(p["inner_tol"]))
    raise ConfigError(f"cannot rebuild a mapping for family {fam!r}")


def _check_matrix(causes):
    a = np.asarray(causes, dtype=float)
    if a.ndim != 2:
        raise ConfigError("causes must be a 2-d matrix")
    if not np.isfinite(a).all():
        raise DegenerateInputError("causes contain non-finite entries")
    return a


def _converged(prev, cur, rel_tol):
    return abs(cur - prev) <= rel_tol * max(abs(prev), 1e-300)


# --------------------------------------------------------------------------
# PPCA


def fit(causes, spec: FactorModelSpec, names=None) -> SubstituteConfounder:
    """Dispatch on ``spec.family``."""
    fitter = {"ppca": fit_ppca, "mixture": fit_mixture, "poisson-mf": fit_poisson_mf}[spec.family]
    return fitter(causes, spec, names=names)


def fit_ppca(causes, spec: FactorModelSpec, names=None) -> SubstituteConfounder:
    """Probabilistic PCA by EM on the (optionally standardized) causes.

    Raises :class:`ConfigError` when ``k >= m`` and
    :class:`DegenerateInputError` for a zero-variance column.
    """
    if spec.family != "ppca":
        raise ConfigError("spec.family must be 'ppca'")
    a = _check_matrix(causes)
    n, m = a.shape
    k = spec.k
    if k >= m:
        raise ConfigError(f"ppca needs k < m (k={k}, m={m})")
    if n <= k:
        raise ConfigError("ppca needs n > k")
    mean = a.mean(axis=0)
    if spec.standardize:
        scale = a.std(axis=0)
        flat = np.flatnonzero(scale == 0)
        if flat.size:
            j = int(flat[0])
            label = names[j] if names is not None else f"column {j}"
            raise DegenerateInputError(f"cause {label} has zero variance")
    else:
        scale = np.ones(m)
    x = (a - mean) / scale
    s = x.T @ x / n
    tr_s = np.trace(s)
    floor = 1e-10 * max(tr_s / m, 1e-300)

    rng = generator(spec.init_seed, 0x5CA)
    w = rng.standard_normal((m, k))
    sigma2 = max(tr_s / m, floor)

    def loglik(w, sigma2):
        m_mat = w.T @ w + sigma2 * np.eye(k)
        _, logdet_m = np.linalg.slogdet(m_mat)
        logdet_c = (m - k) * math.log(sigma2) + logdet_m
        sw = s @ w
        tr_cinv_s = (tr_s - np.trace(np.linalg.solve(m_mat, w.T @ sw))) / sigma2
        return -0.5 * n * (m * LOG2PI + logdet_c + tr_cinv_s)

    trace = [loglik(w, sigma2)]
    for _ in range(spec.max_iters):
        m_inv = np.linalg.inv(w.T @ w + sigma2 * np.eye(k))
        sw = s @ w
        w_new = sw @ np.linalg.inv(sigma2 * np.eye(k) + m_inv @ w.T @ sw)
        sigma2 = max((tr_s - np.trace(sw @ m_inv @ w_new.T)) / m, floor)
        w = w_new
        trace.append(loglik(w, sigma2))
        if _converged(trace[-2], trace[-1], spec.rel_tol):
            break

    mapping = PPCAMapping(mean, scale, w, float(sigma2))
    return SubstituteConfounder(mapping.transform(a), mapping, np.array(trace), "ppca", k,
                                causes_fingerprint(a), {"iterations": len(trace) - 1})


# --------------------------------------------------------------------------
# gaussian mixture


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _mixture_em(a, k, spec, seed_word):
    n, m = a.shape
    rng = generator(spec.init_seed, 0x6A11, seed_word)
    var_total = a.var(axis=0)
    floor = 1e-6 * np.where(var_total > 0, var_total, 1.0)
    mapping = MixtureMapping(np.full(k, 1.0 / k), _kmeanspp(a, k, rng), np.maximum(var_total, floor))
    trace = []
    for _ in range(spec.max_iters + 1):
        lj = mapping._log_joint(a)
        norm_ = logsumexp(lj, axis=1, keepdims=True)
        trace.append(float(norm_.sum()))
        if len(trace) >= 2 and _converged(trace[-2], trace[-1], spec.rel_tol):
            break
        if len(trace) > spec.max_iters:
            break
        resp = np.exp(lj - norm_)
        mass = resp.sum(axis=0)
        safe = np.where(mass > 0, mass, 1.0)
        means = np.where(mass[:, None] > 0, (resp.T @ a) / safe[:, None], mapping.means)
        sq = sum(resp[:, c] @ (a - means[c]) ** 2 for c in range(k))
        variances = np.maximum(sq / n, floor)
        mapping = MixtureMapping(np.maximum(mass / n, 1e-300), means, variances)
    return mapping, np.array(trace)


def fit_mixture(causes, spec: FactorModelSpec, names=None) -> SubstituteConfounder:
    """Gaussian mixture with shared diagonal covariance, fitted by EM.

    Initial means come from k-means++ seeding driven by ``spec.init_seed``.
    A component whose responsibility mass falls below one unit triggers one
    re-seeded refit; if that also collapses, ``diagnostics["degenerate"]``
    records a warning.
    """
    if spec.family != "mixture":
        raise ConfigError("spec.family must be 'mixture'")
    a = _check_matrix(causes)
    n, m = a.shape
    k = spec.k
    fp = causes_fingerprint(a)
    if k == 1:
        var = np.maximum(a.var(axis=0), 1e-300)
        mapping = MixtureMapping(np.ones(1), a.mean(axis=0, keepdims=True), var)
        ll = float(mapping.row_loglik(a).sum())
        return SubstituteConfounder(np.ones((n, 1)), mapping, np.array([ll]), "mixture", 1, fp, {})
    if n < k:
        raise ConfigError("mixture needs n >= k")

    diagnostics = {}
    for attempt in range(2):
        mapping, trace = _mixture_em(a, k, spec, attempt)
        zhat = mapping.transform(a)
        if zhat.sum(axis=0).min() >= 1.0:
            break
        diagnostics["reseeded"] = True
    else:
        diagnostics["degenerate"] = "empty mixture component after re-seeding"
    diagnostics["iterations"] = len(trace) - 1
    return SubstituteConfounder(zhat, mapping, trace, "mixture", k, fp, diagnostics)


# --------------------------------------------------------------------------
# poisson matrix factorization


def poisson_loglik(a, lam, const=None) -> float:
    if const is None:
        const = gammaln(a + 1).sum()
    nz = a > 0
    return float((a[nz] * np.log(lam[nz])).sum() - lam.sum() - const)


def fit_poisson_mf(causes, spec: FactorModelSpec, names=None) -> SubstituteConfounder:
    """Poisson factorization ``A ~ Poisson(Theta B')`` by multiplicative updates.

    The updates are the EM algorithm for this model and never decrease the
    log-likelihood.  ``zhat`` re-solves each row's loadings with ``B`` fixed
    through the mapping, so it is a function of that row alone.
    """
    if spec.family != "poisson-mf":
        raise ConfigError("spec.family must be 'poisson-mf'")
    a = _check_matrix(causes)
    if (a < 0).any() or (a != np.floor(a)).any():
        raise ConfigError("poisson-mf needs non-negative integer counts")
    n, m = a.shape
    k = spec.k
    rng = generator(spec.init_seed, 0x9015)
    scale = math.sqrt(a.mean() / k)
    b = rng.uniform(0.5, 1.5, size=(m, k)) * scale
    # row-local start keeps the fit equivariant to row permutations
    theta = (a @ b) / np.maximum((b**2).sum(axis=0), 1e-300)

    const = gammaln(a + 1).sum()
    trace = [poisson_loglik(a, theta @ b.T, const)]
    for _ in range(spec.max_iters):
        bsum = b.sum(axis=0)
        theta = theta * (_ratio(a, theta @ b.T) @ b) / np.where(bsum > 0, bsum, 1.0)
        tsum = theta.sum(axis=0)
        b = b * (_ratio(a, theta @ b.T).T @ theta) / np.where(tsum > 0, tsum, 1.0)
        trace.append(poisson_loglik(a, theta @ b.T, const))
        if trace[-1] == trace[-2] or _converged(trace[-2], trace[-1], spec.rel_tol):
            break

    mapping = PoissonMapping(b)
    return SubstituteConfounder(mapping.transform(a), mapping, np.array(trace), "poisson-mf", k,
                                causes_fingerprint(a), {"iterations": len(trace) - 1, "theta": theta})


# --------------------------------------------------------------------------
# diagnostics


def independent_columns(z: np.ndarray, tol: float = 1e-8) -> tuple[list[int], list[int]]:
    """Greedy selection of ``z`` columns linearly independent of the intercept
    and of previously kept columns.  Returns ``(kept, dropped)``."""
    n = z.shape[0]
    basis = [np.full(n, 1 / math.sqrt(n))]
    kept, dropped = [], []
    for j in range(z.shape[1]):
        col = z[:, j] - z[:, j].mean()
        norm0 = np.linalg.norm(col)
        r = col.copy()
        for q in basis[1:]:
            r -= (q @ r) * q
        if norm0 == 0 or np.linalg.norm(r) <= tol * norm0:
            dropped.append(j)
        else:
            basis.append(r / np.linalg.norm(r))
            kept.append(j)
    return kept, dropped


def residualize(x: np.ndarray, conditioning: np.ndarray) -> np.ndarray:
    """Residuals of ``x`` columns after least squares on ``[1, conditioning]``."""
    n = x.shape[0]
    design = np.column_stack([np.ones(n), conditioning]) if conditioning.size else np.ones((n, 1))
    coef, *_ = np.linalg.lstsq(design, x, rcond=None)
    return x - design @ coef


def fisher_z_pvalue(r, n: int, n_cond: int):
    """Two-sided Fisher-z p-value for a (partial) correlation ``r``."""
    r = np.clip(np.asarray(r, dtype=float), -1.0, 1.0)
    with np.errstate(divide="ignore"):
        stat = math.sqrt(max(n - n_cond - 3, 1)) * np.arctanh(r)
    return stat, 2 * norm.sf(np.abs(stat))


@dataclass(frozen=True)
class IndependenceReport:
    partial_correlations: np.ndarray
    statistics: np.ndarray
    pvalues: np.ndarray
    max_abs_partial: float
    alpha: float
    verdict: str
    dropped_columns: tuple[int, ...] = ()

    @property
    def renders_independent(self) -> bool:
        return self.verdict == "renders-independent"


def independence_check(causes, zhat, alpha: float = 0.05) -> IndependenceReport:
    """Pairwise partial correlations of the causes given ``zhat``.

    Verdict is ``renders-independent`` iff no pair rejects at ``alpha``
    after Bonferroni correction over the ``m(m-1)/2`` pairs.  Columns of
    ``zhat`` that are collinear with the intercept or with each other are
    dropped and listed in ``dropped_columns``.
    """
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    a = _check_matrix(causes)
    z = np.asarray(zhat, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n, m = a.shape
    kept, dropped = independent_columns(z)
    z = z[:, kept]
    if n <= z.shape[1] + 3:
        raise ConfigError("need n > k + 3")
    res = residualize(a, z)
    sd = np.sqrt((res**2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        pc = (res.T @ res) / np.outer(sd, sd)
    pc = np.where(np.isfinite(pc), pc, 0.0)
    pc = (pc + pc.T) / 2
    np.fill_diagonal(pc, 1.0)
    stat, p = fisher_z_pvalue(pc, n, z.shape[1])
    np.fill_diagonal(stat, 0.0)
    np.fill_diagonal(p, 1.0)
    off = ~np.eye(m, dtype=bool)
    n_pairs = m * (m - 1) // 2
    reject = bool(n_pairs) and bool((p[off] < alpha / n_pairs).any())
    max_abs = float(np.abs(pc[off]).max()) if n_pairs else 0.0
    return IndependenceReport(pc, stat, p, max_abs, alpha,
                              "rejects" if reject else "renders-independent", tuple(dropped))


@dataclass(frozen=True)
class PredictiveCheck:
    score: float  # mean held-out per-entry log-likelihood
    se: float
    train_score: float
    train_se: float

    @property
    def gap(self) -> float:
        """Training minus held-out score (positive means overfitting)."""
        return self.train_score - self.score

    @property
    def healthy(self) -> bool:
        """Held-out score within three combined SEs (or 0.01 nats) of training."""
        tol = max(3 * math.hypot(self.se, self.train_se), 0.01)
        return math.isfinite(self.score) and self.gap <= tol


def heldout_predictive_check(causes_train, causes_test, spec: FactorModelSpec) -> PredictiveCheck:
    """Fit on the training rows, score the test rows.

    Reported only; a good held-out fit says nothing about ignorability.
    """
    train = _check_matrix(causes_train)
    test = _check_matrix(causes_test)
    sub = fit(train, spec)
    m = train.shape[1]

    def summary(rows):
        ll = sub.mapping.row_loglik(rows) / m
        return float(ll.mean()), float(ll.std(ddof=1) / math.sqrt(len(ll)))

    score, se = summary(test)
    tr, tr_se = summary(train)
    return PredictiveCheck(score, se, tr, tr_se)
