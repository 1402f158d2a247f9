"""Monte Carlo sweeps over scenarios, sample sizes and numbers of causes.

A run is described by a JSON :class:`ExperimentConfig`.  Each grid cell
``(n, m)`` gets a seed derived from the base seed and a stable hash of the
cell key, so its rows do not depend on which other cells share the run or
on the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import CollinearityError, ConfigError, DeconlabError
from .estimators import (Estimand, estimate_adjusted, estimate_naive, estimate_substitute,
                         overlap_diagnostic)
from .factors import FAMILIES, FactorModelSpec, fit, independence_check
from .graphs import is_valid_adjustment
from .scenarios import SCENARIO_IDS, build_scenario, with_truth
from .scm import mask_observed, sample_full_data
from .seeding import key_index, mix64

ESTIMATOR_KINDS = ("naive", "oracle-adjusted", "substitute-adjusted")
SEED_ENV = "DECONLAB_SEED"

_CONFIG_KEYS = {
    "scenario": None, "overrides": {}, "variant": "default", "dashed": False, "n": None, "m": None,
    "factor_models": [], "estimators": ["naive", "oracle-adjusted", "substitute-adjusted"],
    "estimand": None, "replicates": 1, "seed": 0, "output": None, "format": "csv", "bootstrap": 200,
    "alpha": 0.05, "jobs": 1,
}
_FM_KEYS = ("family", "k", "max_iters", "rel_tol", "init_seed", "standardize")
_ESTIMAND_KEYS = ("causes", "a", "a_prime", "regressors", "name")


def _int(value, path, lo=None):
    if isinstance(value, bool) or not isinstance(value, int) or (lo is not None and value < lo):
        raise ConfigError(f"expected an integer{'' if lo is None else f' >= {lo}'}", path)
    return value


def _int_grid(value, path):
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ConfigError("grid must be non-empty", path)
    return tuple(_int(v, f"{path}[{i}]", 1) for i, v in enumerate(items))


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment document; see ``from_dict`` for the schema."""

    scenario: str
    n: tuple[int, ...]
    m: tuple[int | None, ...] = (None,)
    overrides: dict = field(default_factory=dict)
    variant: str = "default"
    dashed: bool = False
    factor_models: tuple[FactorModelSpec, ...] = ()
    estimators: tuple[str, ...] = ("naive", "oracle-adjusted", "substitute-adjusted")
    estimand: dict | None = None
    replicates: int = 1
    seed: int = 0
    output: str | None = None
    format: str = "csv"
    bootstrap: int = 200
    alpha: float = 0.05
    jobs: int = 1

    @classmethod
    def from_dict(cls, doc) -> ExperimentConfig:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object", "$")
        unknown = sorted(set(doc) - set(_CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown key(s) {unknown}", "$")
        for key in ("scenario", "n"):
            if key not in doc:
                raise ConfigError(f"missing key {key!r}", "$")
        d = {**_CONFIG_KEYS, **doc}

        if d["scenario"] not in SCENARIO_IDS:
            raise ConfigError(f"unknown scenario {d['scenario']!r}", "$.scenario")
        n = _int_grid(d["n"], "$.n")
        m = (None,) if d["m"] is None else _int_grid(d["m"], "$.m")
        if not isinstance(d["overrides"], dict):
            raise ConfigError("expected an object", "$.overrides")
        if not isinstance(d["dashed"], bool):
            raise ConfigError("expected true or false", "$.dashed")
        if not isinstance(d["variant"], str):
            raise ConfigError("expected a string", "$.variant")

        specs = []
        if not isinstance(d["factor_models"], list):
            raise ConfigError("expected an array", "$.factor_models")
        for i, fm in enumerate(d["factor_models"]):
            path = f"$.factor_models[{i}]"
            if not isinstance(fm, dict):
                raise ConfigError("expected an object", path)
            bad = sorted(set(fm) - set(_FM_KEYS))
            if bad:
                raise ConfigError(f"unknown key(s) {bad}", path)
            if fm.get("family") not in FAMILIES:
                raise ConfigError(f"family must be one of {list(FAMILIES)}", f"{path}.family")
            _int(fm.get("k"), f"{path}.k", 1)
            try:
                specs.append(FactorModelSpec(**fm))
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc), path) from None

        estimators = d["estimators"]
        if not isinstance(estimators, list) or not estimators:
            raise ConfigError("expected a non-empty array", "$.estimators")
        for i, e in enumerate(estimators):
            ok = isinstance(e, str) and (e in ESTIMATOR_KINDS or (e.startswith("adjusted:") and len(e) > 9))
            if not ok:
                raise ConfigError(f"unknown estimator {e!r}", f"$.estimators[{i}]")
        if "substitute-adjusted" in estimators and not specs:
            raise ConfigError("substitute-adjusted needs at least one factor model", "$.factor_models")

        estimand = d["estimand"]
        if estimand is not None:
            if not isinstance(estimand, dict):
                raise ConfigError("expected an object", "$.estimand")
            bad = sorted(set(estimand) - set(_ESTIMAND_KEYS))
            if bad:
                raise ConfigError(f"unknown key(s) {bad}", "$.estimand")
            if "causes" not in estimand:
                raise ConfigError("missing key 'causes'", "$.estimand")

        if d["format"] not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'", "$.format")
        if d["output"] is not None and not isinstance(d["output"], str):
            raise ConfigError("expected a path string", "$.output")
        alpha = d["alpha"]
        if isinstance(alpha, bool) or not isinstance(alpha, (int, float)) or not 0 < alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)", "$.alpha")

        cfg = cls(
            scenario=d["scenario"], n=n, m=m, overrides=dict(d["overrides"]), variant=d["variant"],
            dashed=d["dashed"], factor_models=tuple(specs), estimators=tuple(estimators), estimand=estimand,
            replicates=_int(d["replicates"], "$.replicates", 1), seed=_int(d["seed"], "$.seed", 0),
            output=d["output"], format=d["format"], bootstrap=_int(d["bootstrap"], "$.bootstrap", 0),
            alpha=float(alpha), jobs=_int(d["jobs"], "$.jobs", 1),
        )
        # build every cell once so scenario-level errors surface now
        for m_ in cfg.m:
            cfg.scenario_for(m_)
        return cfg

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_json(text)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        d["m"] = None if self.m == (None,) else list(self.m)
        d["factor_models"] = [asdict(s) for s in self.factor_models]
        d["estimators"] = list(self.estimators)
        return d

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def replace(self, **changes) -> ExperimentConfig:
        return ExperimentConfig(**{**{f.name: getattr(self, f.name) for f in fields(self)}, **changes})

    def scenario_for(self, m):
        try:
            sc = build_scenario(self.scenario, self.overrides, m=m, dashed=self.dashed, variant=self.variant)
        except ConfigError as exc:
            raise ConfigError(exc.message, f"$.{exc.path or 'scenario'}") from None
        if self.estimand is None:
            return sc, sc.estimand
        e = self.estimand
        try:
            est = Estimand(tuple(e["causes"]), _tuple(e.get("a")), _tuple(e.get("a_prime")),
                           _tuple(e.get("regressors")), name=e.get("name", ""))
            for c in (*est.causes, *(est.regressors or ())):
                if c not in sc.scm.cause_order:
                    raise ConfigError(f"{c!r} is not a cause of scenario {sc.id}")
            return sc, with_truth(sc.scm, est)
        except ConfigError as exc:
            raise ConfigError(exc.message, "$.estimand") from None


def _tuple(v):
    return None if v is None else tuple(v)


# --------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    variant: str
    n: int
    m: int
    replicate: int
    estimator: str
    family: str
    k: int
    estimand: str
    point: float
    se: float
    truth: float
    bias: float
    condition_number: float
    independence: str
    overlap: str
    adjustment: str
    status: str

    def sort_key(self):
        return (self.scenario, self.variant, self.n, self.m, self.replicate, self.estimator, self.family, self.k,
                self.estimand)

    @property
    def verdict_key(self) -> str:
        """Estimator label used to look up the pre-registered verdict."""
        return f"{self.estimator}:{self.family}" if self.family else self.estimator


COLUMNS = tuple(f.name for f in fields(ResultRow))
_INT_COLUMNS = {"n", "m", "replicate", "k"}
_FLOAT_COLUMNS = {"point", "se", "truth", "bias", "condition_number"}


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ResultsTable:
    rows: list[ResultRow]

    def sorted(self) -> ResultsTable:
        return ResultsTable(sorted(self.rows, key=ResultRow.sort_key))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        rows = [{c: clean(getattr(r, c)) for c in COLUMNS} for r in self.rows]
        return json.dumps(rows, indent=1) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> ResultsTable:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or tuple(reader.fieldnames) != COLUMNS:
            raise ConfigError("not a results CSV (unexpected header)")
        return cls([_parse_row(d) for d in reader])

    @classmethod
    def from_json(cls, text: str) -> ResultsTable:
        return cls([_parse_row(d) for d in json.loads(text)])

    @classmethod
    def read(cls, path) -> ResultsTable:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read results: {exc}") from None
        if text.lstrip().startswith("["):
            return cls.from_json(text)
        return cls.from_csv(text)


def _parse_row(d) -> ResultRow:
    out = {}
    for c in COLUMNS:
        v = d[c]
        if c in _INT_COLUMNS:
            v = int(v)
        elif c in _FLOAT_COLUMNS:
            v = math.nan if v is None else float(v)
        out[c] = v
    return ResultRow(**out)


# --------------------------------------------------------------------------
# execution


def cell_seed(config: ExperimentConfig, n: int, m: int) -> int:
    """Seed of cell ``(n, m)``; independent of the other cells in the run."""
    key = f"{config.scenario}|{config.variant}|{int(config.dashed)}|{n}|{m}"
    return mix64(config.seed, key_index(key))


def _tasks(config: ExperimentConfig):
    for n in config.n:
        for m in config.m:
            for r in range(config.replicates):
                yield (config, n, m, r)


def _adjustment_label(graph, z, estimand, data_causes):
    regs = estimand.regressors if estimand.regressors is not None else data_causes
    zz = set(z) | (set(regs) - set(estimand.causes))
    return "valid" if is_valid_adjustment(graph, zz, estimand.causes, graph.outcome) else "invalid"


def run_replicate(task) -> list[ResultRow]:
    """All estimator rows of one (cell, replicate)."""
    config, n, m_req, r = task
    sc, estimand = config.scenario_for(m_req)
    m = sc.m
    seed = cell_seed(config, n, m)
    scm = sc.scm.__class__(sc.scm.graph, sc.scm.mechanisms, seed)
    full = sample_full_data(scm, n, replicate=r)
    data = mask_observed(full)
    g = scm.graph
    base = dict(scenario=sc.id, variant=sc.variant, n=n, m=m, replicate=r, estimand=estimand.name,
                truth=estimand.truth)
    rows = []

    def record(estimator, run, family="", k=0, adjustment="", independence="", overlap=""):
        boot_seed = mix64(seed, r, key_index(f"{estimator}|{family}|{k}"))
        try:
            est = run(boot_seed)
            status = "ok"
            vals = dict(point=est.point, se=est.se, bias=est.bias, condition_number=est.condition_number)
        except CollinearityError as exc:
            status = "degenerate: collinear"
            vals = dict(point=math.nan, se=math.nan, bias=math.nan,
                        condition_number=exc.report.condition_number)
        except DeconlabError as exc:
            status = f"error: {exc}"
            vals = dict(point=math.nan, se=math.nan, bias=math.nan, condition_number=math.nan)
        rows.append(ResultRow(**base, estimator=estimator, family=family, k=k, independence=independence,
                              overlap=overlap, adjustment=adjustment, status=status, **vals))

    nb = config.bootstrap
    for name in config.estimators:
        if name == "naive":
            record(name, lambda s: estimate_naive(data, estimand, n_boot=nb, seed=s),
                   adjustment=_adjustment_label(g, (), estimand, data.cause_names))
        elif name == "oracle-adjusted" or name.startswith("adjusted:"):
            cov = sc.oracle if name == "oracle-adjusted" else tuple(name[9:].split(","))
            missing = [c for c in cov if c not in full.columns]
            if missing:
                raise ConfigError(f"{name}: unknown node(s) {missing}", "$.estimators")
            x = full.matrix(cov)
            record(name, lambda s, x=x, cov=cov: estimate_adjusted(data, x, estimand, n_boot=nb, seed=s,
                                                                   covariate_names=cov, estimator=name),
                   adjustment=_adjustment_label(g, cov, estimand, data.cause_names))
        else:
            for spec in config.factor_models:
                try:
                    sub = fit(data.causes, spec, data.cause_names)
                except DeconlabError as exc:
                    rows.append(ResultRow(**base, estimator=name, family=spec.family, k=spec.k, point=math.nan,
                                          se=math.nan, bias=math.nan, condition_number=math.nan,
                                          independence="", overlap="", adjustment="",
                                          status=f"error: {exc}"))
                    continue
                indep = independence_check(data.causes, sub.zhat, config.alpha).verdict
                overlap = overlap_diagnostic(data, sub, estimand.causes[:1]).verdict
                record(name, lambda s, sub=sub: estimate_substitute(data, sub, estimand, n_boot=nb, seed=s),
                       family=spec.family, k=spec.k, independence=indep, overlap=overlap)
    return rows


def run_experiment(config: ExperimentConfig, jobs: int | None = None) -> ResultsTable:
    """Run every (n, m, replicate) cell; rows are returned in sorted order."""
    jobs = config.jobs if jobs is None else jobs
    tasks = list(_tasks(config))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(run_replicate, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        chunks = [run_replicate(t) for t in tasks]
    return ResultsTable([row for chunk in chunks for row in chunk]).sorted()


def write_results(table: ResultsTable, path, fmt: str = "csv", config: ExperimentConfig | None = None,
                  wall_clock: float | None = None) -> Path:
    """Write the table plus a ``.meta.json`` sidecar next to it."""
    path = Path(path)
    text = table.to_csv() if fmt == "csv" else table.to_json()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        meta = {
            "config": config.to_dict() if config else None,
            "config_sha256": config.digest() if config else None,
            "rows": len(table.rows),
            "versions": {"deconlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "wall_clock_seconds": wall_clock,
        }
        path.with_name(path.name + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise DeconlabError(f"cannot write results to {path}: {exc}") from None
    return path


def resolve_seed(config: ExperimentConfig, cli_seed: int | None = None, environ=None) -> ExperimentConfig:
    """Apply seed precedence: command line, then ``DECONLAB_SEED``, then config."""
    environ = os.environ if environ is None else environ
    if cli_seed is not None:
        return config.replace(seed=cli_seed)
    if environ.get(SEED_ENV):
        try:
            seed = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
        if seed < 0:
            raise ConfigError(f"{SEED_ENV} must be non-negative")
        return config.replace(seed=seed)
    return config


# --------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class CellSummary:
    scenario: str
    variant: str
    n: int
    m: int
    estimator: str
    replicates: int
    mean_bias: float
    mc_se: float | None
    mean_abs_bias: float
    truth: float
    verdict: str
    expected: str | None
    outcome: str  # PASS, FAIL or "-" when nothing is registered

    def to_dict(self):
        d = asdict(self)
        for k in ("mean_bias", "mean_abs_bias", "mc_se"):
            if d[k] is not None and not math.isfinite(d[k]):
                d[k] = None
        return d


def classify_bias(mean_bias: float, se: float | None) -> str:
    """unbiased if within 3 SE of zero, biased beyond 5 SE, otherwise inconclusive."""
    if se is None or not math.isfinite(se):
        return "n/a"
    if abs(mean_bias) <= 3 * se:
        return "unbiased"
    if abs(mean_bias) > 5 * se:
        return "biased"
    return "inconclusive"


def _summarize_cell(key, rows) -> CellSummary:
    scenario, variant, n, m, estimator = key
    ok = [r for r in rows if r.status == "ok"]
    degenerate = [r for r in rows if r.status.startswith("degenerate")]
    bias = np.array([r.bias for r in ok])
    mean = float(bias.mean()) if ok else math.nan
    mean_abs = float(np.abs(bias).mean()) if ok else math.nan
    se = float(bias.std(ddof=1) / math.sqrt(len(bias))) if len(bias) > 1 else None
    if degenerate and len(degenerate) >= len(rows) / 2:
        verdict = "degenerate"
    elif not ok:
        verdict = "error"
    else:
        verdict = classify_bias(mean, se)
    try:
        sc = build_scenario(scenario, variant=variant, m=m)
        expected = sc.expected_verdict(estimator)
    except ConfigError:
        expected = None
    outcome = "-" if expected is None else ("PASS" if verdict == expected else "FAIL")
    return CellSummary(scenario, variant, n, m, estimator, len(rows), mean, se, mean_abs, rows[0].truth,
                       verdict, expected, outcome)


@dataclass(frozen=True)
class Summary:
    cells: tuple[CellSummary, ...]

    @property
    def failures(self) -> tuple[CellSummary, ...]:
        return tuple(c for c in self.cells if c.outcome == "FAIL")

    def render(self) -> str:
        out = []
        header = f"{'variant':<10} {'n':>7} {'m':>4} {'estimator':<30} {'reps':>5} {'mean bias':>11} " \
                 f"{'MC SE':>9} {'verdict':<12} check"
        for sid in sorted({c.scenario for c in self.cells}):
            out.append(f"scenario {sid}")
            out.append(header)
            for c in self.cells:
                if c.scenario != sid:
                    continue
                se = "n/a" if c.mc_se is None else f"{c.mc_se:.4g}"
                check = c.outcome if c.expected is None else f"{c.outcome}-{c.expected}"
                out.append(f"{c.variant:<10} {c.n:>7} {c.m:>4} {c.estimator:<30} {c.replicates:>5} "
                           f"{c.mean_bias:>11.4g} {se:>9} {c.verdict:<12} {check}")
            out.append("")
        return "\n".join(out)

    def to_json(self) -> str:
        blocks = {}
        for c in self.cells:
            blocks.setdefault(c.scenario, []).append(c.to_dict())
        doc = {"scenarios": [{"scenario": k, "cells": v} for k, v in sorted(blocks.items())],
               "failures": len(self.failures)}
        return json.dumps(doc, indent=2) + "\n"


def summarize(table: ResultsTable) -> Summary:
    """Per-cell mean bias, Monte Carlo SE and verdict versus the registered expectation."""
    if not table.rows:
        raise ConfigError("cannot summarize an empty results table")
    groups: dict[tuple, list[ResultRow]] = {}
    for r in table.rows:
        groups.setdefault((r.scenario, r.variant, r.n, r.m, r.verdict_key), []).append(r)
    return Summary(tuple(_summarize_cell(k, groups[k]) for k in sorted(groups)))


def run_and_write(config: ExperimentConfig, out=None, jobs=None) -> tuple[ResultsTable, Path | None]:
    start = time.perf_counter()
    table = run_experiment(config, jobs)
    target = out or config.output
    path = None
    if target:
        fmt = config.format if out is None else ("json" if str(out).endswith(".json") else "csv")
        path = write_results(table, target, fmt, config, time.perf_counter() - start)
    return table, path
