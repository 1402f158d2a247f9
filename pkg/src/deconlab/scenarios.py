"""Pre-registered scenarios a-g.

Every scenario is linear-gaussian with unit weights and unit noise unless
stated otherwise in its builder.  Truths are recomputed by path tracing
after overrides, so they always match the returned model.

Override keys (``build_scenario(..., overrides=...)``):

* ``"P->C"``: weight of an existing edge into a linear-gaussian node
* ``"sd:X"``: noise standard deviation of a linear-gaussian node X
* ``"intercept:X"``: intercept of a linear-gaussian node X

Overrides never change the graph; unknown edges are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

from . import scmfile
from .errors import ConfigError
from .estimators import Estimand
from .scm import (CategoricalIndicator, CausalGraph, Intervention, LinearGaussian, Scm, TwoPoint, Uniform,
                  path_trace_ace)

SCENARIO_IDS = ("a", "b", "c", "d", "e", "f", "g")
DEFAULT_M = {"a": 3, "b": 5, "c": 5, "d": 5, "e": 2, "f": 10, "g": 50}
SCENARIO_DIR = "data/scenarios/v1"
VERDICTS = ("unbiased", "biased", "degenerate")

# estimator label aliases accepted by expected_verdict
ALIASES = {"substitute-adjusted-capturing-R": "adjusted:R,U"}


@dataclass(frozen=True)
class Scenario:
    id: str
    scm: Scm
    description: str
    estimand: Estimand
    oracle: tuple[str, ...]
    expected: Mapping[str, str]
    variant: str = "default"
    dashed: bool = False

    @property
    def observed(self) -> tuple[str, ...]:
        g = self.scm.graph
        return tuple(n for n in g.names if g.roles[n] != "latent")

    @property
    def m(self) -> int:
        return len(self.scm.cause_order)

    @property
    def truth(self) -> float:
        return self.estimand.truth

    def expected_verdict(self, estimator: str) -> str | None:
        return self.expected.get(ALIASES.get(estimator, estimator))


class _Builder:
    """Collects nodes, edges and linear mechanisms for one scenario."""

    def __init__(self):
        self.nodes: list[tuple[str, str]] = []
        self.mechs: dict[str, object] = {}
        self.weights: dict[str, dict[str, float]] = {}
        self.sd: dict[str, float] = {}
        self.intercept: dict[str, float] = {}

    def linear(self, name, role, sd=1.0, intercept=0.0):
        self.nodes.append((name, role))
        self.weights[name] = {}
        self.sd[name] = sd
        self.intercept[name] = intercept

    def exogenous(self, name, role, mech):
        self.nodes.append((name, role))
        self.mechs[name] = mech

    def edge(self, parent, child, w=1.0):
        if child not in self.weights:
            raise ValueError(f"{child} has no linear mechanism")
        self.weights[child][parent] = w

    def apply(self, overrides: Mapping[str, float]):
        for key, value in sorted(overrides.items()):
            path = f"overrides.{key}"
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError("override values must be finite numbers", path)
            if "->" in key:
                p, c = (s.strip() for s in key.split("->", 1))
                if c not in self.weights or p not in self.weights[c]:
                    raise ConfigError(f"no adjustable edge {p}->{c} in this scenario", path)
                self.weights[c][p] = float(value)
            elif ":" in key:
                kind, node = key.split(":", 1)
                table = {"sd": self.sd, "intercept": self.intercept}.get(kind)
                if table is None or node not in table:
                    raise ConfigError(f"unknown override {key!r}", path)
                if kind == "sd" and value < 0:
                    raise ConfigError("noise sd must be >= 0", path)
                table[node] = float(value)
            else:
                raise ConfigError(f"unknown override {key!r}", path)

    def scm(self, causes, seed=0) -> Scm:
        mechs = dict(self.mechs)
        for name, w in self.weights.items():
            mechs[name] = LinearGaussian(w, self.intercept[name], self.sd[name])
        edges = [(p, c) for c, w in self.weights.items() for p in sorted(w)]
        graph = CausalGraph(tuple(self.nodes), tuple(edges), tuple(causes))
        return Scm(graph, mechs, seed)


def cause_names(m: int) -> tuple[str, ...]:
    return tuple(f"A{j}" for j in range(1, m + 1))


def _confounded_causes(b: _Builder, m: int, direct: bool = True, u_to_y: bool = True):
    causes = cause_names(m)
    b.linear("U", "latent")
    for a in causes:
        b.linear(a, "cause")
        b.edge("U", a)
    b.linear("Y", "outcome")
    if u_to_y:
        b.edge("U", "Y")
    if direct:
        for a in causes:
            b.edge(a, "Y")
    return causes


def _build_a(m, dashed, variant):
    if m != 3:
        raise ConfigError("scenario a has exactly three causes", "m")
    b = _Builder()
    causes = cause_names(3)
    for name, role in (("U", "latent"), ("V", "latent")):
        b.linear(name, role)
    b.linear("A1", "cause")
    b.linear("R", "latent")
    b.linear("A2", "cause")
    b.linear("A3", "cause")
    b.linear("Y", "outcome")
    for child in ("A1", "A2", "Y"):
        b.edge("U", child)
    b.edge("A1", "R")
    for child in ("A2", "A3", "Y"):
        b.edge("R", child)
    b.edge("V", "R")
    b.edge("V", "Y")
    # A1 acts on Y only through R; A2 and A3 act directly
    b.edge("A2", "Y")
    b.edge("A3", "Y")
    estimand = Estimand(("A1",), regressors=("A1",), name="total effect of A1")
    expected = {"naive": "biased", "oracle-adjusted": "unbiased", "adjusted:R": "biased", "adjusted:R,U": "biased"}
    return b, causes, "causally dependent causes with mediator R", estimand, ("U",), expected


def _build_b(m, dashed, variant):
    b = _Builder()
    causes = _confounded_causes(b, m)
    b.linear("D", "auxiliary")
    b.edge(causes[-1], "D")
    b.edge("D", "Y")
    if dashed:
        b.edge("U", "D")
    estimand = Estimand(causes, name="joint effect")
    expected = {"naive": "biased", "oracle-adjusted": "unbiased", "adjusted:D": "biased",
                "adjusted:D,U": "biased"}
    return b, causes, "single-cause mediator D", estimand, ("U",), expected


def _build_c(m, dashed, variant):
    b = _Builder()
    causes = _confounded_causes(b, m)
    b.linear("C", "auxiliary")
    b.edge(causes[-1], "C")
    b.edge("Y", "C")
    if dashed:
        b.edge("U", "C")
    estimand = Estimand(causes, name="joint effect")
    expected = {"naive": "biased", "oracle-adjusted": "unbiased", "adjusted:C": "biased",
                "adjusted:C,U": "biased"}
    return b, causes, "single-cause collider C", estimand, ("U",), expected


def _build_d(m, dashed, variant):
    b = _Builder()
    causes = _confounded_causes(b, m, direct=False, u_to_y=False)
    b.linear("V", "latent")
    b.linear("M", "auxiliary")
    b.edge("U", "M")
    b.edge("V", "M")
    b.edge("V", "Y")
    estimand = Estimand((causes[-1],), name=f"effect of {causes[-1]}")
    expected = {"naive": "unbiased", "oracle-adjusted": "unbiased", "adjusted:M": "biased"}
    return b, causes, "M-bias collider M", estimand, ("U", "V"), expected


def _build_e(m, dashed, variant):
    if m != 2:
        raise ConfigError("scenario e has exactly two causes", "m")
    b = _Builder()
    causes = cause_names(2)
    b.exogenous("Z", "auxiliary", CategoricalIndicator(2, (0.5, 0.5)))
    b.exogenous("V", "latent", TwoPoint((0.0, 0.5), 0.5))
    b.exogenous("W", "latent", Uniform(0.0, 0.5))
    b.linear("U", "latent", sd=0.0)
    b.edge("V", "U")
    b.edge("W", "U")
    b.linear("A1", "cause")
    b.linear("A2", "cause")
    b.edge("V", "A1")
    b.edge("W", "A2")
    b.linear("Y", "outcome")
    b.edge("U", "Y")
    b.edge("A1", "Y")
    b.edge("A2", "Y")
    stratified = variant == "stratified"
    # Z is an observed stratifier; its weights are zero unless stratified
    b.edge("Z", "A1", 8.0 if stratified else 0.0)
    b.edge("Z", "A2", 8.0 if stratified else 0.0)
    b.edge("Z", "U", 1.0 if stratified else 0.0)
    estimand = Estimand(causes, name="joint effect")
    expected = {"naive": "biased", "oracle-adjusted": "unbiased", "adjusted:Z": "biased"}
    if stratified:
        expected["substitute-adjusted:mixture"] = "biased"
    return b, causes, "confounder decomposable into single-cause parts", estimand, ("U",), expected


def _build_f(m, dashed, variant):
    b = _Builder()
    causes = cause_names(m)
    b.exogenous("G", "latent", CategoricalIndicator(2, (0.5, 0.5)))
    for a in causes:
        b.linear(a, "cause")
        b.edge("G", a)
    b.linear("Y", "outcome")
    b.edge("G", "Y")
    for a in causes:
        b.edge(a, "Y")
    estimand = Estimand(("A1",), name="effect of A1")
    expected = {"naive": "biased", "oracle-adjusted": "unbiased", "substitute-adjusted:mixture": "unbiased"}
    return b, causes, "two-cluster population structure G", estimand, ("G",), expected


def _build_g(m, dashed, variant):
    b = _Builder()
    causes = _confounded_causes(b, m)
    estimand = Estimand(("A1",), name="effect of A1")
    expected = {"naive": "biased", "oracle-adjusted": "unbiased", "substitute-adjusted:ppca": "degenerate"}
    return b, causes, "one gaussian confounder loading on many causes", estimand, ("U",), expected


_BUILDERS = {"a": _build_a, "b": _build_b, "c": _build_c, "d": _build_d, "e": _build_e, "f": _build_f,
             "g": _build_g}
VARIANTS = {"e": ("default", "stratified")}


def build_scenario(id: str, overrides: Mapping[str, float] | None = None, *, m: int | None = None,
                   dashed: bool = False, variant: str = "default", seed: int = 0) -> Scenario:
    """Build scenario ``id`` with its truth recomputed after ``overrides``."""
    if id not in _BUILDERS:
        raise ConfigError(f"unknown scenario {id!r}; expected one of {', '.join(SCENARIO_IDS)}", "scenario")
    if variant not in VARIANTS.get(id, ("default",)):
        raise ConfigError(f"scenario {id} has no variant {variant!r}", "variant")
    if dashed and id not in ("b", "c"):
        raise ConfigError(f"scenario {id} has no dashed edge", "dashed")
    m = DEFAULT_M[id] if m is None else m
    if isinstance(m, bool) or not isinstance(m, int) or m < 1:
        raise ConfigError("m must be a positive integer", "m")
    b, causes, description, estimand, oracle, expected = _BUILDERS[id](m, dashed, variant)
    b.apply(overrides or {})
    scm = b.scm(causes, seed)
    return Scenario(id, scm, description, with_truth(scm, estimand), oracle, dict(expected), variant, dashed)


def contrast(estimand: Estimand) -> tuple[Intervention, Intervention]:
    return (Intervention(dict(zip(estimand.causes, estimand.a))),
            Intervention(dict(zip(estimand.causes, estimand.a_prime))))


def with_truth(scm: Scm, estimand: Estimand) -> Estimand:
    return estimand.with_truth(path_trace_ace(scm, *contrast(estimand)))


def expected_verdict(id: str, estimator: str, variant: str = "default") -> str | None:
    """Static lookup of the pre-registered verdict (``None`` if not registered)."""
    return build_scenario(id, variant=variant).expected_verdict(estimator)


def catalog() -> dict[str, Scenario]:
    return {i: build_scenario(i) for i in SCENARIO_IDS}


def scenario_file_name(id: str) -> str:
    return f"scenario_{id}.json"


def shipped_scenario_text(id: str) -> str:
    """Text of the packaged default SCM file for scenario ``id``."""
    if id not in _BUILDERS:
        raise ConfigError(f"unknown scenario {id!r}")
    return resources.files("deconlab").joinpath(SCENARIO_DIR, scenario_file_name(id)).read_text()


def export_scenarios(directory) -> list:
    """Write the default SCM of every scenario into ``directory``."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for i in SCENARIO_IDS:
        path = directory / scenario_file_name(i)
        scmfile.dump(build_scenario(i).scm, path)
        written.append(path)
    return written
