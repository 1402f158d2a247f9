import itertools

import numpy as np
import pytest

from deconlab.scm import CausalGraph, LinearGaussian, Scm


def dag(edges, nodes=None, causes=None, latents=(), outcome="Y"):
    """Small helper: graph from an edge list; roles inferred from names."""
    names = sorted({v for e in edges for v in e} | set(nodes or ()) | {outcome})
    causes = tuple(causes) if causes is not None else tuple(v for v in names if v.startswith("A"))

    def role(v):
        if v == outcome:
            return "outcome"
        if v in causes:
            return "cause"
        return "latent" if v in latents else "auxiliary"

    return CausalGraph(tuple((v, role(v)) for v in names), tuple(edges), causes)


def linear_scm(edges, weights=None, sd=None, intercept=None, seed=0, **kw):
    g = dag(edges, **kw)
    weights = weights or {}
    mechs = {}
    for v in g.names:
        w = {p: weights.get((p, v), 1.0) for p in g.parents(v)}
        mechs[v] = LinearGaussian(w, (intercept or {}).get(v, 0.0), (sd or {}).get(v, 1.0))
    return Scm(g, mechs, seed)


def random_dag(rng, n_nodes, p=0.3):
    """Random DAG over nodes N0..N{k}; the last node is the outcome."""
    names = [f"N{i}" for i in range(n_nodes)]
    order = rng.permutation(n_nodes)
    edges = [(names[order[i]], names[order[j]])
             for i in range(n_nodes) for j in range(i + 1, n_nodes) if rng.random() < p]
    nodes = tuple((v, "outcome" if i == n_nodes - 1 else "auxiliary") for i, v in enumerate(names))
    return CausalGraph(nodes, tuple(edges), ())


# --------------------------------------------------------------------------
# brute-force d-separation: enumerate every simple path, apply blocking rules


def _descendants(edges, v):
    out, stack = {v}, [v]
    while stack:
        u = stack.pop()
        for a, b in edges:
            if a == u and b not in out:
                out.add(b)
                stack.append(b)
    return out


def simple_paths(edges, x, y):
    adj = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    paths = []

    def walk(path):
        for w in sorted(adj.get(path[-1], ())):
            if w in path:
                continue
            if w == y:
                paths.append((*path, w))
            else:
                walk((*path, w))

    walk((x,))
    return paths


def path_open(edges, path, z, desc):
    es = set(edges)
    for a, v, b in zip(path, path[1:], path[2:]):
        if (a, v) in es and (b, v) in es:
            if not (desc[v] & z):
                return False
        elif v in z:
            return False
    return True


class BruteForce:
    """Caches paths and descendant sets for one graph."""

    def __init__(self, g):
        self.edges = list(g.edges)
        self.desc = {v: _descendants(self.edges, v) for v in g.names}
        self._paths = {}

    def paths(self, x, y):
        key = (x, y)
        if key not in self._paths:
            self._paths[key] = simple_paths(self.edges, x, y)
        return self._paths[key]

    def separated(self, xs, ys, z):
        z = set(z)
        return not any(path_open(self.edges, p, z, self.desc)
                       for x in xs for y in ys for p in self.paths(x, y))


def disjoint_triples(names):
    """Every assignment of nodes to x, y, z or none with x and y non-empty."""
    for labels in itertools.product(range(4), repeat=len(names)):
        x = [v for v, l in zip(names, labels) if l == 0]
        y = [v for v, l in zip(names, labels) if l == 1]
        if x and y:
            z = [v for v, l in zip(names, labels) if l == 2]
            yield x, y, z


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --------------------------------------------------------------------------
# acceptance report: one line per criterion, printed after the run

_AC_LINES = {}


@pytest.fixture
def ac_report():
    def record(ac, passed, detail):
        line = f"{ac:<6} {'PASS' if passed else 'FAIL'}  {detail}"
        _AC_LINES[ac] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _AC_LINES:
        terminalreporter.section("acceptance criteria")
        for ac in sorted(_AC_LINES, key=lambda a: int(a.split("-")[1])):
            terminalreporter.write_line(_AC_LINES[ac])
