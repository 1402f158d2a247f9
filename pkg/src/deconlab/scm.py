"""Structural causal models: graphs, mechanisms, sampling and interventions.

A :class:`Scm` couples a :class:`CausalGraph` with one mechanism per node.
Sampling draws one exogenous noise vector per node from its own seeded
stream and then propagates values in topological order.  Potential outcomes
reuse the same noise, so ``Y(a)`` for different ``a`` differ only through
the intervention.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError, UnsupportedAnalyticError
from .seeding import generator

ROLES = ("cause", "outcome", "latent", "auxiliary")


@dataclass(frozen=True)
class CausalGraph:
    """A DAG whose nodes carry a role.

    ``nodes`` is a sequence of ``(name, role)`` pairs; its order fixes the
    node index used for seed derivation.
    """

    nodes: tuple[tuple[str, str], ...]
    edges: tuple[tuple[str, str], ...]
    cause_order: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple((str(n), str(r)) for n, r in self.nodes))
        object.__setattr__(self, "edges", tuple((str(p), str(c)) for p, c in self.edges))
        object.__setattr__(self, "cause_order", tuple(str(c) for c in self.cause_order))

        names = [n for n, _ in self.nodes]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate node names")
        for name, role in self.nodes:
            if role not in ROLES:
                raise ConfigError(f"node {name!r} has unknown role {role!r}")
        known = set(names)
        for p, c in self.edges:
            if p not in known or c not in known:
                raise ConfigError(f"edge ({p!r}, {c!r}) names an unknown node")
            if p == c:
                raise ConfigError(f"self loop on {p!r}")
        if len(set(self.edges)) != len(self.edges):
            raise ConfigError("duplicate edges")
        outcomes = [n for n, r in self.nodes if r == "outcome"]
        if len(outcomes) != 1:
            raise ConfigError(f"exactly one outcome node required, found {len(outcomes)}")
        causes = [n for n, r in self.nodes if r == "cause"]
        if len(set(self.cause_order)) != len(self.cause_order) or set(self.cause_order) != set(causes):
            raise ConfigError("cause_order must list every cause node exactly once")
        # raises on cycles
        self.topological_order

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.nodes)

    @cached_property
    def roles(self) -> dict[str, str]:
        return dict(self.nodes)

    @cached_property
    def index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.names)}

    @cached_property
    def _parents(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {n: [] for n in self.names}
        for p, c in self.edges:
            out[c].append(p)
        return {n: tuple(sorted(ps)) for n, ps in out.items()}

    @cached_property
    def _children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {n: [] for n in self.names}
        for p, c in self.edges:
            out[p].append(c)
        return {n: tuple(sorted(cs)) for n, cs in out.items()}

    def parents(self, node: str) -> tuple[str, ...]:
        return self._parents[self._check(node)]

    def children(self, node: str) -> tuple[str, ...]:
        return self._children[self._check(node)]

    @property
    def outcome(self) -> str:
        return next(n for n, r in self.nodes if r == "outcome")

    @property
    def latents(self) -> tuple[str, ...]:
        return tuple(n for n, r in self.nodes if r == "latent")

    @cached_property
    def topological_order(self) -> tuple[str, ...]:
        """Kahn's algorithm, ties broken by lexicographic node name."""
        indeg = {n: len(self._parents[n]) for n in self.names}
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            v = heapq.heappop(heap)
            order.append(v)
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(order) != len(self.names):
            raise ConfigError("graph contains a directed cycle")
        return tuple(order)

    def ancestors(self, nodes, include_self: bool = True) -> set[str]:
        return self._closure(nodes, self._parents, include_self)

    def descendants(self, nodes, include_self: bool = True) -> set[str]:
        return self._closure(nodes, self._children, include_self)

    def _closure(self, nodes, step, include_self):
        start = {self._check(n) for n in _as_set(nodes)}
        seen = set(start) if include_self else set()
        stack = list(start)
        while stack:
            v = stack.pop()
            for w in step[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def has_edge(self, parent: str, child: str) -> bool:
        return parent in self._parents[self._check(child)]

    def without_edges_into(self, nodes) -> CausalGraph:
        cut = set(_as_set(nodes))
        return replace(self, edges=tuple(e for e in self.edges if e[1] not in cut))

    def _check(self, node):
        if node not in self.roles:
            raise ConfigError(f"unknown node {node!r}")
        return node


def _as_set(nodes):
    if isinstance(nodes, str):
        return {nodes}
    return set(nodes)


# --------------------------------------------------------------------------
# mechanisms


@dataclass(frozen=True)
class LinearGaussian:
    """``value = intercept + sum(weight * parent) + noise_sd * N(0, 1)``."""

    weights: Mapping[str, float] = field(default_factory=dict)
    intercept: float = 0.0
    noise_sd: float = 1.0

    form = "linear-gaussian"
    noise_kind = "normal"

    def __post_init__(self):
        object.__setattr__(self, "weights", {str(k): float(v) for k, v in self.weights.items()})
        if not self.noise_sd >= 0:
            raise ConfigError("noise_sd must be >= 0")

    @property
    def parents(self):
        return tuple(sorted(self.weights))

    def evaluate(self, values, noise):
        out = np.full(noise.shape, self.intercept, dtype=float)
        for p in self.parents:
            out += self.weights[p] * values[p]
        if self.noise_sd:
            out += self.noise_sd * noise
        return out


@dataclass(frozen=True)
class BernoulliLogistic:
    weights: Mapping[str, float] = field(default_factory=dict)
    intercept: float = 0.0

    form = "bernoulli-logistic"
    noise_kind = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "weights", {str(k): float(v) for k, v in self.weights.items()})

    @property
    def parents(self):
        return tuple(sorted(self.weights))

    def evaluate(self, values, noise):
        eta = np.full(noise.shape, self.intercept, dtype=float)
        for p in self.parents:
            eta += self.weights[p] * values[p]
        return (noise < expit(eta)).astype(float)


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    form = "uniform"
    noise_kind = "uniform"
    parents = ()

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ConfigError("uniform mechanism needs hi > lo")

    def evaluate(self, values, noise):
        return self.lo + (self.hi - self.lo) * noise


@dataclass(frozen=True)
class TwoPoint:
    """Takes ``values[1]`` with probability ``prob``, else ``values[0]``."""

    values: tuple[float, float] = (0.0, 1.0)
    prob: float = 0.5

    form = "two-point"
    noise_kind = "uniform"
    parents = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != 2:
            raise ConfigError("two-point mechanism needs exactly two values")
        if not 0.0 <= self.prob <= 1.0:
            raise ConfigError("two-point prob must lie in [0, 1]")

    def evaluate(self, values, noise):
        return np.where(noise < self.prob, self.values[1], self.values[0])


@dataclass(frozen=True)
class CategoricalIndicator:
    """Category index ``0..k-1`` drawn with probabilities ``probs``."""

    k: int = 2
    probs: tuple[float, ...] = (0.5, 0.5)

    form = "categorical-indicator"
    noise_kind = "uniform"
    parents = ()

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if self.k < 2 or len(self.probs) != self.k:
            raise ConfigError("categorical-indicator needs k >= 2 and k probabilities")
        if min(self.probs) < 0 or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ConfigError("categorical-indicator probs must form a simplex")

    def evaluate(self, values, noise):
        cdf = np.cumsum(self.probs)[:-1]
        return np.searchsorted(cdf, noise, side="right").astype(float)


@dataclass(frozen=True)
class Table:
    """Explicit conditional table over discrete parents.

    ``rows`` maps a tuple of parent values (ordered like ``parent_names``)
    to a probability vector over ``outcomes``.
    """

    parent_names: tuple[str, ...]
    outcomes: tuple[float, ...]
    rows: Mapping[tuple, tuple[float, ...]]

    form = "table"
    noise_kind = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "parent_names", tuple(str(p) for p in self.parent_names))
        object.__setattr__(self, "outcomes", tuple(float(v) for v in self.outcomes))
        rows = {tuple(float(x) for x in k): tuple(float(p) for p in v) for k, v in self.rows.items()}
        for key, probs in rows.items():
            if len(key) != len(self.parent_names) or len(probs) != len(self.outcomes):
                raise ConfigError("table row has the wrong shape")
            if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
                raise ConfigError(f"table row {key} is not a probability vector")
        object.__setattr__(self, "rows", rows)

    @property
    def parents(self):
        return tuple(sorted(self.parent_names))

    def evaluate(self, values, noise):
        out = np.full(noise.shape, np.nan)
        cols = [np.asarray(values[p]) for p in self.parent_names]
        outcomes = np.asarray(self.outcomes)
        for key, probs in self.rows.items():
            mask = np.ones(noise.shape, dtype=bool)
            for col, v in zip(cols, key):
                mask &= col == v
            cdf = np.cumsum(probs)[:-1]
            out[mask] = outcomes[np.searchsorted(cdf, noise[mask], side="right")]
        if np.isnan(out).any():
            raise ConfigError("table has no row for an observed parent configuration")
        return out


MECHANISMS = {cls.form: cls for cls in (LinearGaussian, BernoulliLogistic, Uniform, TwoPoint, CategoricalIndicator, Table)}


def constant(value: float) -> LinearGaussian:
    return LinearGaussian({}, float(value), 0.0)


# --------------------------------------------------------------------------
# models, interventions, data


@dataclass(frozen=True)
class Scm:
    """Graph plus one mechanism per node.

    ``seed`` is the base of every random stream: node ``j`` (declaration
    index) in replicate ``r`` draws from ``PCG64(mix64(seed, r, j))``.
    """

    graph: CausalGraph
    mechanisms: Mapping[str, object]
    seed: int = 0

    def __post_init__(self):
        g = self.graph
        if set(self.mechanisms) != set(g.names):
            missing = set(g.names) ^ set(self.mechanisms)
            raise ConfigError(f"mechanism set does not match nodes: {sorted(missing)}")
        for name in g.names:
            mech = self.mechanisms[name]
            if tuple(mech.parents) != g.parents(name):
                raise ConfigError(
                    f"mechanism of {name!r} uses parents {list(mech.parents)} "
                    f"but the graph has {list(g.parents(name))}"
                )

    @property
    def cause_order(self):
        return self.graph.cause_order

    @property
    def outcome(self):
        return self.graph.outcome


@dataclass(frozen=True)
class Intervention:
    assignments: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assignments", {str(k): float(v) for k, v in dict(self.assignments).items()})
        for k, v in self.assignments.items():
            if not math.isfinite(v):
                raise ConfigError(f"intervention value for {k!r} is not finite")

    def validate(self, graph: CausalGraph) -> None:
        for k in self.assignments:
            if k not in graph.roles:
                raise ConfigError(f"intervention on unknown node {k!r}")
            if graph.roles[k] != "cause":
                raise ConfigError(f"intervention target {k!r} is not a cause")

    def label(self) -> str:
        return "do(" + ", ".join(f"{k}={v:g}" for k, v in sorted(self.assignments.items())) + ")"


@dataclass(frozen=True)
class PotentialOutcomeTable:
    grid: tuple[Intervention, ...]
    values: np.ndarray  # n x len(grid)


@dataclass(frozen=True)
class FullData:
    columns: dict[str, np.ndarray]
    roles: dict[str, str]
    cause_order: tuple[str, ...]
    outcome: str
    potential_outcomes: PotentialOutcomeTable

    @property
    def n(self) -> int:
        return len(self.columns[self.outcome])

    def __getitem__(self, name):
        return self.columns[name]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([self.columns[c] for c in names])


@dataclass(frozen=True)
class Dataset:
    """Observed data: causes, outcome and observed auxiliary columns."""

    causes: np.ndarray
    outcome: np.ndarray
    cause_names: tuple[str, ...]
    extra: dict[str, np.ndarray] = field(default_factory=dict)
    outcome_name: str = "Y"

    def __post_init__(self):
        causes = np.asarray(self.causes, dtype=float)
        if causes.ndim != 2 or causes.shape[1] != len(self.cause_names):
            raise ConfigError("cause matrix does not match cause_names")
        if len(self.outcome) != causes.shape[0]:
            raise ConfigError("outcome length does not match the cause matrix")
        for name, col in self.extra.items():
            if len(col) != causes.shape[0]:
                raise ConfigError(f"column {name!r} has the wrong length")
        object.__setattr__(self, "causes", causes)

    @property
    def n(self) -> int:
        return self.causes.shape[0]

    @property
    def m(self) -> int:
        return self.causes.shape[1]

    @property
    def column_names(self) -> tuple[str, ...]:
        return (*self.cause_names, self.outcome_name, *self.extra)

    def cause(self, name: str) -> np.ndarray:
        return self.causes[:, self.cause_names.index(name)]

    def to_full_data(self) -> FullData:
        """Embed back as full data with no latents and an empty outcome table."""
        columns = {c: self.causes[:, j] for j, c in enumerate(self.cause_names)}
        columns[self.outcome_name] = self.outcome
        columns.update(self.extra)
        roles = {c: "cause" for c in self.cause_names}
        roles[self.outcome_name] = "outcome"
        roles.update({c: "auxiliary" for c in self.extra})
        return FullData(columns, roles, self.cause_names, self.outcome_name,
                        PotentialOutcomeTable((), np.empty((self.n, 0))))


# --------------------------------------------------------------------------
# sampling


def _draw_noise(scm: Scm, n: int, replicate: int) -> dict[str, np.ndarray]:
    noise = {}
    for j, name in enumerate(scm.graph.names):
        rng = generator(scm.seed, replicate, j)
        if scm.mechanisms[name].noise_kind == "normal":
            noise[name] = rng.standard_normal(n)
        else:
            noise[name] = rng.random(n)
    return noise


def _propagate(scm: Scm, noise, overrides: Mapping[str, float]) -> dict[str, np.ndarray]:
    values: dict[str, np.ndarray] = {}
    for v in scm.graph.topological_order:
        if v in overrides:
            values[v] = np.full(len(noise[v]), overrides[v])
        else:
            values[v] = scm.mechanisms[v].evaluate(values, noise[v])
    return values


def sample_full_data(scm: Scm, n: int, grid: Sequence[Intervention] = (), replicate: int = 0) -> FullData:
    """Draw ``n`` units with every node column and potential outcomes.

    Each entry of ``grid`` yields one column of the potential-outcome table,
    evaluated with the same per-unit exogenous noise as the observed draw.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    grid = tuple(grid)
    for a in grid:
        a.validate(scm.graph)
    noise = _draw_noise(scm, n, replicate)
    values = _propagate(scm, noise, {})
    y = scm.outcome
    po = np.empty((n, len(grid)))
    for j, a in enumerate(grid):
        po[:, j] = _propagate(scm, noise, a.assignments)[y]
    columns = {name: values[name] for name in scm.graph.names}
    return FullData(columns, dict(scm.graph.roles), scm.cause_order, y, PotentialOutcomeTable(grid, po))


def consistency_check(full: FullData) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(on_grid, matches)`` boolean arrays of shape ``n``.

    A unit is on grid when its realized treated-cause values equal some grid
    intervention exactly; ``matches`` says whether its observed outcome
    equals the table entry of the first such intervention.
    """
    table = full.potential_outcomes
    on_grid = np.zeros(full.n, dtype=bool)
    matches = np.zeros(full.n, dtype=bool)
    y = full.columns[full.outcome]
    for j, a in enumerate(table.grid):
        hit = np.ones(full.n, dtype=bool)
        for k, v in a.assignments.items():
            hit &= full.columns[k] == v
        fresh = hit & ~on_grid
        matches[fresh] = y[fresh] == table.values[fresh, j]
        on_grid |= hit
    return on_grid, matches


def mask_observed(full: FullData) -> Dataset:
    """Project full data onto the observed columns (latents and Y(a) dropped)."""
    causes = full.matrix(full.cause_order)
    extra = {
        name: col for name, col in full.columns.items()
        if full.roles[name] == "auxiliary"
    }
    return Dataset(causes, full.columns[full.outcome], tuple(full.cause_order), extra, full.outcome)


def apply_do(scm: Scm, intervention: Intervention) -> Scm:
    """Mutilate: intervened causes lose their parents and become constants."""
    intervention.validate(scm.graph)
    if not intervention.assignments:
        return scm
    targets = set(intervention.assignments)
    mechanisms = dict(scm.mechanisms)
    for k, v in intervention.assignments.items():
        mechanisms[k] = constant(v)
    return Scm(scm.graph.without_edges_into(targets), mechanisms, scm.seed)


# --------------------------------------------------------------------------
# true effects


class AceResult(NamedTuple):
    value: float
    se: float
    method: str


def path_trace_ace(scm: Scm, a: Intervention, a_prime: Intervention) -> float:
    """Sum over directed paths of edge-weight products times the contrast.

    Paths are traced in the graph mutilated by the joint intervention, so a
    path from one intervened cause never passes through another.
    """
    a.validate(scm.graph)
    a_prime.validate(scm.graph)
    if set(a.assignments) != set(a_prime.assignments):
        raise ConfigError("contrasted interventions must set the same causes")
    g = scm.graph
    y = scm.outcome
    targets = set(a.assignments)
    total = 0.0
    for source in sorted(targets):
        delta = a.assignments[source] - a_prime.assignments[source]
        if delta == 0.0:
            continue
        effect = {source: 1.0}
        for v in g.topological_order:
            if v in effect or v in targets:
                continue
            feeding = [p for p in g.parents(v) if p in effect]
            if not feeding:
                continue
            mech = scm.mechanisms[v]
            if not isinstance(mech, LinearGaussian):
                raise UnsupportedAnalyticError(
                    f"node {v!r} on a directed path from {source!r} has a {mech.form} mechanism"
                )
            effect[v] = sum(mech.weights[p] * effect[p] for p in feeding)
        total += delta * effect.get(y, 0.0)
    return total


def monte_carlo_ace(scm: Scm, a: Intervention, a_prime: Intervention, n: int = 100_000,
                    replicates: int = 1) -> tuple[float, float]:
    """Difference of outcome means under the two mutilated models.

    The two arms use independent streams (even and odd replicate indices),
    so the reported standard error reflects genuine sampling noise.
    """
    s1, s0 = apply_do(scm, a), apply_do(scm, a_prime)
    y = scm.outcome
    y1 = np.concatenate([sample_full_data(s1, n, replicate=2 * r)[y] for r in range(replicates)])
    y0 = np.concatenate([sample_full_data(s0, n, replicate=2 * r + 1)[y] for r in range(replicates)])
    se = math.sqrt(y1.var(ddof=1) / len(y1) + y0.var(ddof=1) / len(y0))
    return float(y1.mean() - y0.mean()), se


def true_ace(scm: Scm, a: Intervention, a_prime: Intervention, method: str = "path-trace",
             n: int = 100_000, replicates: int = 1) -> AceResult:
    """Average causal effect ``E[Y(a)] - E[Y(a')]``.

    ``method="path-trace"`` is exact for linear-gaussian paths and raises
    :class:`UnsupportedAnalyticError` otherwise; ``"monte-carlo"`` samples
    ``n * replicates`` units per arm.
    """
    if method == "path-trace":
        return AceResult(path_trace_ace(scm, a, a_prime), 0.0, method)
    if method == "monte-carlo":
        value, se = monte_carlo_ace(scm, a, a_prime, n, replicates)
        return AceResult(value, se, method)
    raise ConfigError(f"unknown method {method!r}")
