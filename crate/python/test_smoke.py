"""Smoke test for the Python bindings: build with
`pip install --no-build-isolation ./crates/graphfact-py`, then run pytest."""

from fractions import Fraction
from math import factorial

import pytest

import graphfact


def test_algebras():
    s2 = graphfact.Algebra.sphere(2)
    assert s2.dim == 2 and s2.n == 2
    assert [s2.degree(i) for i in range(s2.dim)] == [0, 2]
    t2 = graphfact.Algebra.torus()
    assert t2.dim == 4
    # the pairing is nondegenerate: its matrix has full rank
    gram = [[t2.pairing(i, j) for j in range(4)] for i in range(4)]
    assert graphfact.rank(gram) == 4
    again = graphfact.Algebra.from_json(t2.to_json())
    assert again.names == t2.names


def test_rank_exact():
    assert graphfact.rank([[1, 2], [2, 4]]) == 1
    assert graphfact.rank([[Fraction(1, 3), 1], [1, 3]]) == 1
    assert graphfact.rank([["1/3", 1], [1, "3/1"], [0, 1]]) == 2
    assert graphfact.rank([]) == 0


def test_poisson_bracket_of_conjugates():
    assert graphfact.poisson_bracket("x1", "p1", 1, 2) == "1"
    assert graphfact.poisson_bracket("x1", "x1", 1, 2) == "0"


def test_phi():
    e = graphfact.EvalMap(1, graphfact.Algebra.sphere(2))
    # the empty graph embeds f in the first tensor factor, decorated by the unit
    assert e.phi({"arity": 1}, ["x1*p1"]) == "1*x1[1]*p1[1]"
    internal = {"arity": 1, "internal": 1, "edges": [["1", "i1"]]}
    assert e.phi(internal, ["x1*p1"]) == "0"
    with pytest.raises(ValueError):
        e.phi({"arity": 2}, ["x1"])
    with pytest.raises(ValueError):
        e.phi({"arity": 1}, ["x1 +* p1"])


def test_phi_m_at_hbar_zero_matches_phi():
    e = graphfact.EvalMap(2, graphfact.Algebra.sphere(2))
    g = {"arity": 2, "edges": [["1", "2"]]}
    polys = ["x1*p1 + x2", "p1*p2 + x1^2"]
    assert e.phi_m("0", g, polys) == e.phi(g, polys)


def test_pairing_suite():
    report = graphfact.run_suite("pairing", graphfact.Algebra.sphere(3), arity=3)
    assert report["result"] == "PASS"
    ranks = [c["detail"]["rank"] for c in report["checks"]]
    assert ranks == [factorial(k) for k in (1, 2, 3)]
    with pytest.raises(ValueError):
        graphfact.run_suite("bogus", graphfact.Algebra.sphere(2))
    assert "pairing" in graphfact.SUITES


def test_homology():
    rows = graphfact.harrison_homology(graphfact.Algebra.sphere(2), 1, 3)
    for weight, letters, _dim, homology in rows:
        assert homology == (2 if (weight, letters) == (1, 1) else 0)
    report = graphfact.graph_homology(graphfact.Algebra.sphere(2), 1)
    assert all(r["verdict"] != "FAIL" for r in report["rows"])
