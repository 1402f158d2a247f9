"""SCM definition files (JSON).

Schema::

    {
      "nodes": [{"name": str, "role": "cause"|"outcome"|"latent"|"auxiliary",
                 "mechanism": {"form": ..., <form fields>}}, ...],
      "edges": [[parent, child], ...],
      "cause_order": [str, ...],
      "seed": int
    }

Mechanism fields by form:

* ``linear-gaussian``: ``weights`` (object parent -> number), ``intercept``, ``noise_sd``
* ``bernoulli-logistic``: ``weights``, ``intercept``
* ``uniform``: ``lo``, ``hi``
* ``two-point``: ``values`` ([v0, v1]), ``prob`` (probability of v1)
* ``categorical-indicator``: ``k``, ``probs``
* ``table``: ``parents``, ``outcomes``, ``rows`` ([{"given": [...], "probs": [...]}])

Unknown or missing keys are rejected with the JSON path of the problem.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError
from .scm import (BernoulliLogistic, CategoricalIndicator, CausalGraph, LinearGaussian, Scm, Table,
                  TwoPoint, Uniform)

_FIELDS = {
    "linear-gaussian": ("weights", "intercept", "noise_sd"),
    "bernoulli-logistic": ("weights", "intercept"),
    "uniform": ("lo", "hi"),
    "two-point": ("values", "prob"),
    "categorical-indicator": ("k", "probs"),
    "table": ("parents", "outcomes", "rows"),
}


def _keys(obj, allowed, path, required=None):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", path)
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", path)
    missing = sorted(set(required if required is not None else allowed) - set(obj))
    if missing:
        raise ConfigError(f"missing key(s) {missing}", path)


def mechanism_to_dict(mech) -> dict:
    form = mech.form
    if form == "linear-gaussian":
        return {"form": form, "weights": dict(sorted(mech.weights.items())),
                "intercept": mech.intercept, "noise_sd": mech.noise_sd}
    if form == "bernoulli-logistic":
        return {"form": form, "weights": dict(sorted(mech.weights.items())), "intercept": mech.intercept}
    if form == "uniform":
        return {"form": form, "lo": mech.lo, "hi": mech.hi}
    if form == "two-point":
        return {"form": form, "values": list(mech.values), "prob": mech.prob}
    if form == "categorical-indicator":
        return {"form": form, "k": mech.k, "probs": list(mech.probs)}
    return {"form": form, "parents": list(mech.parent_names), "outcomes": list(mech.outcomes),
            "rows": [{"given": list(k), "probs": list(v)} for k, v in mech.rows.items()]}


def _num(x, path):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError("expected a number", path)
    return float(x)


def mechanism_from_dict(d, path="mechanism"):
    if not isinstance(d, dict) or "form" not in d:
        raise ConfigError("mechanism needs a 'form'", path)
    form = d["form"]
    if form not in _FIELDS:
        raise ConfigError(f"unknown mechanism form {form!r}", f"{path}.form")
    _keys(d, ("form", *_FIELDS[form]), path)
    try:
        if form in ("linear-gaussian", "bernoulli-logistic"):
            if not isinstance(d["weights"], dict):
                raise ConfigError("expected an object", f"{path}.weights")
            weights = {k: _num(v, f"{path}.weights.{k}") for k, v in d["weights"].items()}
            if form == "linear-gaussian":
                return LinearGaussian(weights, _num(d["intercept"], f"{path}.intercept"),
                                      _num(d["noise_sd"], f"{path}.noise_sd"))
            return BernoulliLogistic(weights, _num(d["intercept"], f"{path}.intercept"))
        if form == "uniform":
            return Uniform(_num(d["lo"], f"{path}.lo"), _num(d["hi"], f"{path}.hi"))
        if form == "two-point":
            return TwoPoint(tuple(_num(v, f"{path}.values") for v in d["values"]), _num(d["prob"], f"{path}.prob"))
        if form == "categorical-indicator":
            if isinstance(d["k"], bool) or not isinstance(d["k"], int):
                raise ConfigError("expected an integer", f"{path}.k")
            return CategoricalIndicator(d["k"], tuple(_num(p, f"{path}.probs") for p in d["probs"]))
        rows = {}
        for i, row in enumerate(d["rows"]):
            _keys(row, ("given", "probs"), f"{path}.rows[{i}]")
            rows[tuple(row["given"])] = tuple(row["probs"])
        return Table(tuple(d["parents"]), tuple(d["outcomes"]), rows)
    except ConfigError as exc:
        if exc.path:
            raise
        raise ConfigError(str(exc), path) from None


def scm_to_dict(scm: Scm) -> dict:
    g = scm.graph
    return {
        "nodes": [{"name": n, "role": r, "mechanism": mechanism_to_dict(scm.mechanisms[n])} for n, r in g.nodes],
        "edges": [list(e) for e in g.edges],
        "cause_order": list(g.cause_order),
        "seed": scm.seed,
    }


def scm_from_dict(d) -> Scm:
    _keys(d, ("nodes", "edges", "cause_order", "seed"), "$")
    if not isinstance(d["nodes"], list):
        raise ConfigError("expected an array", "$.nodes")
    nodes, mechanisms = [], {}
    for i, node in enumerate(d["nodes"]):
        path = f"$.nodes[{i}]"
        _keys(node, ("name", "role", "mechanism"), path)
        nodes.append((node["name"], node["role"]))
        mechanisms[node["name"]] = mechanism_from_dict(node["mechanism"], f"{path}.mechanism")
    edges = []
    for i, e in enumerate(d["edges"]):
        if not (isinstance(e, list) and len(e) == 2):
            raise ConfigError("edge must be a [parent, child] pair", f"$.edges[{i}]")
        edges.append(tuple(e))
    seed = d["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer", "$.seed")
    graph = CausalGraph(tuple(nodes), tuple(edges), tuple(d["cause_order"]))
    return Scm(graph, mechanisms, seed)


def dumps(scm: Scm) -> str:
    return json.dumps(scm_to_dict(scm), indent=2) + "\n"


def loads(text: str) -> Scm:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return scm_from_dict(doc)


def load(path) -> Scm:
    return loads(Path(path).read_text())


def dump(scm: Scm, path) -> None:
    Path(path).write_text(dumps(scm))
