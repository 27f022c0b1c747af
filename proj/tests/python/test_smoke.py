import math

import numpy as np
import pytest

import hybridsens as hs


def test_registry():
    assert hs.problem_names() == ["simple-hybrid", "em", "linear-hi2"]
    with pytest.raises(hs.HybridError):
        hs.Problem("pendulum")
    with pytest.raises(hs.HybridError):
        hs.Problem("em", {"gamma": 1.0})


def test_simple_hybrid_gradients():
    prob = hs.Problem("simple-hybrid")
    assert prob.parameter_names == ["p"]
    sim = prob.simulate()
    assert len(sim["transitions"]) == 3
    assert sim["y"].shape == (len(sim["t"]), 1)
    fsa = prob.fsa()
    asa = prob.asa()
    assert fsa["dGdp"][0] == pytest.approx(-2.31195, abs=1e-3)
    assert asa["dGdp"][0] == pytest.approx(fsa["dGdp"][0], abs=1e-5)
    assert "tau" in fsa["transitions"][0]


def test_parameter_vector_argument():
    prob = hs.Problem("simple-hybrid")
    a = prob.simulate(p=np.array([2.9]))["G"]
    b = prob.simulate()["G"]
    assert a == b
    with pytest.raises(hs.HybridError):
        prob.simulate(p=np.array([1.0, 2.0]))


def test_compare_em_short_horizon():
    prob = hs.Problem("em", {"tf": 2.0})
    c = prob.compare()
    assert [r["method"] for r in c["reports"]] == ["FD", "FSA", "ASA"]
    assert "agreement" in c["table"]
    fsa, asa = c["reports"][1], c["reports"][2]
    np.testing.assert_allclose(fsa["dGdp"], asa["dGdp"], atol=1e-7)


def test_em_helpers():
    p = np.array([32 * math.pi**2, math.pi**2, 205.0, 0.0])
    u0, fbar = hs.em_constants(p)
    assert u0 == pytest.approx(0.12628085, rel=1e-7)
    assert fbar == pytest.approx(0.74623838, rel=1e-7)
    assert hs.em_stress(0.01, 0.01, 0.3, 1.0, p) == pytest.approx(0.3)
    with pytest.raises(hs.HybridError):
        hs.em_memory_update(0.0, 1e6, 1.0, p)


def test_linear_hi2_closed_form():
    prob = hs.Problem("linear-hi2")
    sim = prob.simulate(rtol=1e-10, atol=1e-13)
    t = np.asarray(sim["t"])
    assert np.max(np.abs(sim["y"][:, 0] - np.sin(t))) < 1e-9
