import json

import pytest

from deconlab import scmfile
from deconlab.errors import ConfigError
from deconlab.scenarios import SCENARIO_IDS, build_scenario
from deconlab.scm import (BernoulliLogistic, CategoricalIndicator, CausalGraph, LinearGaussian, Scm, Table,
                          TwoPoint, Uniform, sample_full_data)


def every_form_scm():
    nodes = (("G", "latent"), ("T", "latent"), ("W", "latent"), ("A1", "cause"), ("A2", "cause"),
             ("Y", "outcome"))
    edges = (("G", "A1"), ("T", "A2"), ("A1", "Y"), ("A2", "Y"), ("W", "Y"))
    mechs = {
        "G": CategoricalIndicator(3, (0.2, 0.3, 0.5)),
        "T": TwoPoint((-1.0, 2.5), 0.25),
        "W": Uniform(-1.0, 1.0),
        "A1": BernoulliLogistic({"G": 0.5}, -0.25),
        "A2": Table(("T",), (0.0, 1.0), {(-1.0,): (0.6, 0.4), (2.5,): (0.1, 0.9)}),
        "Y": LinearGaussian({"A1": 1.5, "A2": -0.5, "W": 2.0}, 0.1, 0.3),
    }
    return Scm(CausalGraph(nodes, edges, ("A1", "A2")), mechs, seed=99)


def test_round_trip_every_mechanism_form():
    scm = every_form_scm()
    text = scmfile.dumps(scm)
    back = scmfile.loads(text)
    assert back == scm
    assert scmfile.dumps(back) == text
    a, b = sample_full_data(scm, 200), sample_full_data(back, 200)
    assert all(a[v].tobytes() == b[v].tobytes() for v in scm.graph.names)


@pytest.mark.parametrize("sid", SCENARIO_IDS)
def test_scenarios_round_trip_bit_exact(sid, tmp_path):
    scm = build_scenario(sid).scm
    path = tmp_path / "s.json"
    scmfile.dump(scm, path)
    assert scmfile.load(path) == scm
    assert path.read_text() == scmfile.dumps(scmfile.load(path))


def _doc():
    return json.loads(scmfile.dumps(every_form_scm()))


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d.update(extra=1), "$"),
    (lambda d: d.pop("seed"), "$"),
    (lambda d: d["nodes"][0].update(colour="red"), "$.nodes[0]"),
    (lambda d: d["nodes"][5]["mechanism"].update(noise=1), "$.nodes[5].mechanism"),
    (lambda d: d["nodes"][5]["mechanism"].update(form="spline"), "$.nodes[5].mechanism.form"),
    (lambda d: d["nodes"][5]["mechanism"]["weights"].update(A1="x"), "$.nodes[5].mechanism.weights.A1"),
    (lambda d: d["nodes"][0]["mechanism"].update(k=True), "$.nodes[0].mechanism.k"),
    (lambda d: d["nodes"][4]["mechanism"]["rows"][0].update(p=1), "$.nodes[4].mechanism.rows[0]"),
    (lambda d: d["edges"].append(["Y"]), "$.edges[5]"),
    (lambda d: d.update(seed=-3), "$.seed"),
])
def test_parser_rejects_with_json_path(mutate, path):
    d = _doc()
    mutate(d)
    with pytest.raises(ConfigError) as info:
        scmfile.loads(json.dumps(d))
    assert info.value.path == path


def test_parser_rejects_invalid_json_and_bad_graph():
    with pytest.raises(ConfigError, match="invalid JSON"):
        scmfile.loads("{nodes")
    d = _doc()
    d["edges"].append(["Y", "A1"])
    with pytest.raises(ConfigError):
        scmfile.loads(json.dumps(d))


def test_mechanism_parent_mismatch_detected():
    d = _doc()
    d["nodes"][5]["mechanism"]["weights"]["G"] = 1.0
    with pytest.raises(ConfigError, match="parents"):
        scmfile.loads(json.dumps(d))
