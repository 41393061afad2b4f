import itertools

import numpy as np
import pytest

import logicforge as lf

XOR = ["0110"]
MAJ = ["00010111"]

XOR_TEXT = """circuit 7 2 1
node 0 PI
node 1 PI
node 2 NAND
node 3 NAND
node 4 NAND
node 5 NAND
node 6 PO
edge 0 2
edge 1 2
edge 0 3
edge 2 3
edge 1 4
edge 2 4
edge 3 5
edge 4 5
edge 5 6
"""


def test_circuit_round_trip_and_simulation():
    c = lf.Circuit.from_text(XOR_TEXT)
    assert c.num_pis == 2 and c.num_pos == 1 and c.num_nands == 4
    assert c.validate() == []
    assert c.truth_table() == XOR
    for a, b in itertools.product([False, True], repeat=2):
        assert c.simulate([a, b]) == [a != b]
    assert lf.Circuit.from_text(c.to_text()) == c
    assert c.adjacency().sum() == len(c.edges())


def test_parse_error_is_value_error():
    with pytest.raises(ValueError):
        lf.Circuit.from_text("circuit 2 1 1\nnode 0 PI\n")


def test_dag_search_breaks_cycles():
    p = np.zeros((3, 3))
    p[0, 1], p[1, 2], p[2, 0] = 0.9, 0.8, 0.6
    r = lf.dag_search(p, [], [])
    assert r["removed_edges"] == [(2, 0, 0.6)]
    assert r["adjacency"].tolist() == [[0, 1, 0], [0, 0, 1], [0, 0, 0]]
    assert np.allclose(r["masked"], p * r["adjacency"])
    with pytest.raises(ValueError):
        lf.dag_search(np.zeros((2, 3)), [], [])


def test_synthesize_xor():
    out = lf.synthesize(XOR, layers=[4, 4, 4], seed=0)
    assert out["exact"]
    assert out["report"]["converged"]
    assert out["circuit"].truth_table() == XOR
    with pytest.raises(ValueError):
        lf.synthesize(XOR, scope="sideways")


def test_bitsd_and_prior():
    assert 0.0 <= lf.bitsd(MAJ, layers=[4, 4]) <= 1.0
    inv = lf.Circuit.from_text("circuit 3 1 1\nnode 0 PI\nnode 1 NAND\nnode 2 PO\nedge 0 1\nedge 1 2\n")
    prior = inv.adjacency().astype(float)
    assert lf.bitsd(["10"], prior=prior) == pytest.approx(0.0, abs=1e-3)
    assert lf.bitsd(["10"], layers=[1]) == pytest.approx(0.5)


def test_aig_to_nand():
    c = lf.aig_to_nand("aag 3 2 0 1 1\n2\n4\n6\n6 2 4\n")
    assert c.truth_table() == ["0001"]


def test_improvement_percent():
    assert lf.improvement_percent(88715, 52023) == pytest.approx(41.36, abs=0.01)
