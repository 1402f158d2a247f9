"""Symbolic analysis of causal graphs.

d-separation uses the reachability ("Bayes-ball") traversal; adjustment
validity uses the generalized adjustment criterion in its proper-causal-path
form.  Witness paths are always the lexicographically least offending node
sequence so that reports are deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import ConfigError
from .scm import CausalGraph

LABELS = (
    "multi-cause-confounder",
    "single-cause-confounder",
    "mediator",
    "collider",
    "m-bias-collider",
    "neutral",
)


def _nodes(g: CausalGraph, nodes) -> frozenset[str]:
    if isinstance(nodes, str):
        nodes = (nodes,)
    out = frozenset(nodes)
    for v in out:
        if v not in g.roles:
            raise ConfigError(f"unknown node {v!r}")
    return out


def d_separated(g: CausalGraph, x, y, z=()) -> bool:
    """True iff every path between ``x`` and ``y`` is blocked given ``z``."""
    x, y, z = _nodes(g, x), _nodes(g, y), _nodes(g, z)
    if x & y or x & z or y & z:
        raise ConfigError("x, y and z must be disjoint")
    return not (reachable(g, x, z) & y)


def reachable(g: CausalGraph, sources: frozenset[str], z: frozenset[str]) -> set[str]:
    """Nodes d-connected to ``sources`` given ``z``.

    A trail state is ``(node, up)`` where ``up`` means the node was entered
    from one of its children.  Colliders pass the ball only if they are in
    ``z`` or have a descendant in it, i.e. are ancestors of ``z``.
    """
    anc_z = g.ancestors(z) if z else set()
    seen: set[tuple[str, bool]] = set()
    found: set[str] = set()
    queue = deque((s, True) for s in sources)
    while queue:
        v, up = queue.popleft()
        if (v, up) in seen:
            continue
        seen.add((v, up))
        blocked = v in z
        if not blocked:
            found.add(v)
        if up and not blocked:
            queue.extend((p, True) for p in g.parents(v))
            queue.extend((c, False) for c in g.children(v))
        elif not up:
            if not blocked:
                queue.extend((c, False) for c in g.children(v))
            if v in anc_z:
                queue.extend((p, True) for p in g.parents(v))
    return found


# --------------------------------------------------------------------------
# path machinery shared by the adjustment criterion and the checklist


def _neighbors(g: CausalGraph, v: str) -> list[str]:
    return sorted(set(g.parents(v)) | set(g.children(v)))


def _is_collider(g: CausalGraph, a: str, v: str, b: str) -> bool:
    return g.has_edge(a, v) and g.has_edge(b, v)


def open_paths(g: CausalGraph, sources, targets, z=(), avoid=()) -> Iterator[tuple[str, ...]]:
    """Yield d-connecting simple paths in lexicographic order.

    Interior nodes never belong to ``avoid``; sources are tried in sorted
    order and neighbours are expanded in sorted order, so the first yielded
    path is the lexicographically least open path.
    """
    targets = set(targets)
    z = set(z)
    avoid = set(avoid)
    anc_z = g.ancestors(z) if z else set()

    def extend(path):
        v = path[-1]
        for w in _neighbors(g, v):
            if w in path:
                continue
            if len(path) >= 2:
                u = path[-2]
                if _is_collider(g, u, v, w):
                    if v not in anc_z:
                        continue
                elif v in z:
                    continue
            if w in targets:
                yield (*path, w)
                continue
            if w in avoid:
                continue
            yield from extend((*path, w))

    for s in sorted(set(sources)):
        yield from extend((s,))


def directed_paths(g: CausalGraph, sources, targets, avoid=()) -> Iterator[tuple[str, ...]]:
    """Directed paths in lexicographic order; interior nodes avoid ``avoid``."""
    targets = set(targets)
    avoid = set(avoid)

    def extend(path):
        for w in g.children(path[-1]):
            if w in path:
                continue
            if w in targets:
                yield (*path, w)
                continue
            if w in avoid:
                continue
            yield from extend((*path, w))

    for s in sorted(set(sources)):
        yield from extend((s,))


def proper_causal_nodes(g: CausalGraph, causes, outcome: str) -> set[str]:
    """Non-cause nodes lying on a proper causal path from ``causes`` to ``outcome``."""
    causes = set(causes)
    # W is on a proper causal path iff W is reachable from a cause by a
    # directed path avoiding other causes and W reaches the outcome likewise.
    from_causes = set()
    stack = [c for x in causes for c in g.children(x) if c not in causes]
    while stack:
        v = stack.pop()
        if v in from_causes:
            continue
        from_causes.add(v)
        stack.extend(c for c in g.children(v) if c not in causes)
    to_outcome = {outcome}
    stack = [outcome]
    while stack:
        v = stack.pop()
        for p in g.parents(v):
            if p not in causes and p not in to_outcome:
                to_outcome.add(p)
                stack.append(p)
    return from_causes & to_outcome


def proper_backdoor_graph(g: CausalGraph, causes, outcome: str) -> CausalGraph:
    """Remove the first edge of every proper causal path."""
    cn = proper_causal_nodes(g, causes, outcome)
    causes = set(causes)
    edges = tuple(e for e in g.edges if not (e[0] in causes and e[1] in cn))
    return CausalGraph(g.nodes, edges, g.cause_order)


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class NodeClassification:
    node: str
    label: str
    causes: frozenset[str]
    outcome: str


def _ancestors_avoiding(g: CausalGraph, target: str, avoid: set[str]) -> set[str]:
    """Proper ancestors of ``target`` through directed paths whose interior avoids ``avoid``."""
    out: set[str] = set()
    stack = [target]
    while stack:
        v = stack.pop()
        for p in g.parents(v):
            if p in out:
                continue
            out.add(p)
            if p not in avoid:
                stack.append(p)
    return out


def _confounded_causes(g, node, causes, outcome):
    """Causes and outcome reached from ``node`` without passing through a cause."""
    reached = [c for c in sorted(causes) if node in _ancestors_avoiding(g, c, set(causes))]
    reaches_outcome = node in _ancestors_avoiding(g, outcome, set(causes))
    return reached, reaches_outcome


def m_structures(g: CausalGraph, causes, outcome: str) -> list[tuple[str, str, str]]:
    """All ``(P1, K, P2)`` patterns ``cause <-..- P1 -> K <- P2 -..-> outcome``.

    ``K`` is a non-descendant of every cause; the arm from ``P1`` reaches a
    cause and the arm from ``P2`` reaches the outcome without passing
    through ``K`` or another cause.  Longer collider arms are not detected.
    """
    causes = set(causes)
    desc = g.descendants(causes)
    found = []
    for k in g.names:
        if k in desc or k == outcome:
            continue
        parents = g.parents(k)
        if len(parents) < 2:
            continue
        avoid = causes | {k}
        cause_side = {p for p in parents if any(p in _ancestors_avoiding(g, c, avoid) for c in causes)}
        outcome_side = {p for p in parents if p in _ancestors_avoiding(g, outcome, avoid)}
        for p1 in sorted(cause_side):
            for p2 in sorted(outcome_side):
                if p1 != p2:
                    found.append((p1, k, p2))
    return sorted(found)


def classify_node(g: CausalGraph, node: str, causes, outcome: str) -> NodeClassification:
    """Label ``node`` relative to a cause set and outcome.

    Precedence when several definitions apply: mediator, collider,
    m-bias-collider, multi-cause-confounder, single-cause-confounder.
    """
    causes = _nodes(g, causes)
    _nodes(g, (node, outcome))
    if node in causes or node == outcome:
        raise ConfigError(f"{node!r} is a cause or the outcome")
    desc_causes = g.descendants(causes)
    label = "neutral"
    if node in desc_causes and node in g.ancestors(outcome):
        label = "mediator"
    else:
        hub = desc_causes | g.descendants(outcome)
        in_hub = node in hub
        hub.discard(node)
        if in_hub and len(set(g.parents(node)) & hub) >= 2:
            label = "collider"
        elif any(k == node for _, k, _ in m_structures(g, causes, outcome)):
            label = "m-bias-collider"
        elif node not in desc_causes:
            reached, reaches_outcome = _confounded_causes(g, node, causes, outcome)
            if reaches_outcome and len(reached) >= 2:
                label = "multi-cause-confounder"
            elif reaches_outcome and len(reached) == 1:
                label = "single-cause-confounder"
    return NodeClassification(node, label, causes, outcome)


# --------------------------------------------------------------------------
# adjustment criterion


@dataclass(frozen=True)
class AdjustmentVerdict:
    valid: bool
    reason: str = ""
    node: str | None = None
    path: tuple[str, ...] = ()

    def __bool__(self):
        return self.valid

    def describe(self, g: CausalGraph | None = None) -> str:
        if self.valid:
            return "valid adjustment set"
        parts = [self.reason]
        if self.node:
            parts.append(f"node {self.node}")
        if self.path:
            parts.append("path " + (format_path(g, self.path) if g else " - ".join(self.path)))
        return "; ".join(parts)


def format_path(g: CausalGraph, path: Iterable[str]) -> str:
    """Render a path with arrowheads, e.g. ``A1 -> R <- V``."""
    path = list(path)
    out = path[0]
    for a, b in zip(path, path[1:]):
        out += f" -> {b}" if g.has_edge(a, b) else f" <- {b}"
    return out


def is_valid_adjustment(g: CausalGraph, z, causes, outcome: str) -> AdjustmentVerdict:
    """Generalized adjustment criterion for the effect of ``causes`` on ``outcome``.

    Valid iff (i) no member of ``z`` descends from a non-cause node on a
    proper causal path and (ii) ``z`` blocks every proper non-causal path.
    Invalid verdicts carry the lexicographically least witness.
    """
    z, causes = _nodes(g, z), _nodes(g, causes)
    _nodes(g, outcome)
    if z & (causes | {outcome}):
        raise ConfigError("adjustment set overlaps the causes or the outcome")
    cn = proper_causal_nodes(g, causes, outcome)
    forb = g.descendants(cn) if cn else set()
    bad = sorted(z & forb)
    if bad:
        node = bad[0]
        for path in directed_paths(g, causes, {outcome}, avoid=causes):
            if any(w not in causes and node in g.descendants(w) for w in path):
                return AdjustmentVerdict(False, "descendant of a proper causal path", node, path)
        return AdjustmentVerdict(False, "descendant of a proper causal path", node)
    pbd = proper_backdoor_graph(g, causes, outcome)
    if d_separated(pbd, causes, {outcome}, z):
        return AdjustmentVerdict(True)
    path = next(open_paths(pbd, causes, {outcome}, z, avoid=causes), ())
    return AdjustmentVerdict(False, "open non-causal path", None, path)


# --------------------------------------------------------------------------
# assumption checklist


CONDITIONS = {
    1: "no unmeasured single-cause confounders",
    3: "no M structures between the causes and the outcome",
    4: "causes are not causally dependent",
    5: "no post-treatment variables in the adjustment set",
}


@dataclass(frozen=True)
class ConditionVerdict:
    holds: bool
    witness: tuple[str, ...] = ()


@dataclass(frozen=True)
class ChecklistReport:
    verdicts: dict[int, ConditionVerdict] = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return all(v.holds for v in self.verdicts.values())

    def __getitem__(self, condition: int) -> ConditionVerdict:
        return self.verdicts[condition]

    def render(self) -> str:
        lines = []
        for k, v in sorted(self.verdicts.items()):
            status = "ok" if v.holds else "VIOLATED"
            line = f"  ({k}) {CONDITIONS[k]:<52} {status}"
            if v.witness:
                line += "  witness: " + ", ".join(v.witness)
            lines.append(line)
        return "\n".join(lines)


def check_assumptions(g: CausalGraph, causes, outcome: str, z=()) -> ChecklistReport:
    causes, z = _nodes(g, causes), _nodes(g, z)
    verdicts = {}

    single = sorted(
        v for v in g.latents
        if v not in causes and v != outcome
        and classify_node(g, v, causes, outcome).label == "single-cause-confounder"
    )
    verdicts[1] = ConditionVerdict(not single, tuple(single[:1]))

    ms = m_structures(g, causes, outcome)
    verdicts[3] = ConditionVerdict(not ms, ms[0] if ms else ())

    dep = next(directed_paths(g, causes, causes), ())
    verdicts[4] = ConditionVerdict(not dep, dep)

    post = sorted(z & g.descendants(causes))
    verdicts[5] = ConditionVerdict(not post, tuple(post[:1]))
    return ChecklistReport(verdicts)
