import json
import math

import numpy as np
import pytest
from scipy import sparse

from ebdiscrim import conic
from ebdiscrim.conic import Cones, Status
from ebdiscrim.jsonfmt import dumps, fmt_float


def test_float_formatting():
    assert fmt_float(0.1) == "0.10000000000000001"
    assert fmt_float(1.0) == "1"
    assert fmt_float(math.inf) == "inf" and fmt_float(-math.inf) == "-inf"
    assert float(fmt_float(2 / 3)) == 2 / 3


def test_dumps_valid_and_stable():
    obj = {"a": 0.1, "b": [1, 2.5, np.float64(3.0)], "c": {"x": math.inf, "y": None, "z": True},
           "d": np.array([0.25, 0.75]), "e": [], "f": [{"k": "v"}]}
    text = dumps(obj)
    back = json.loads(text)
    assert back["c"]["x"] == "inf" and back["a"] == 0.1 and back["d"] == [0.25, 0.75]
    assert '"b": [1, 2.5, 3]' in text
    assert dumps(obj) == text
    with pytest.raises(TypeError):
        dumps({"bad": object()})


def test_conic_lp_and_statuses():
    # min x + y  s.t.  x + y >= 1, x, y >= 0
    G = sparse.csc_matrix(np.array([[-1.0, -1.0], [-1.0, 0.0], [0.0, -1.0]]))
    h = np.array([-1.0, 0.0, 0.0])
    sol = conic.solve(None, np.ones(2), G, h, Cones(nonneg=3))
    assert sol.status is Status.OPTIMAL and sol.objective == pytest.approx(1.0, abs=1e-8)
    # x <= -1 with x >= 0 is empty
    G = sparse.csc_matrix(np.array([[1.0], [-1.0]]))
    sol = conic.solve(None, np.ones(1), G, np.array([-1.0, 0.0]), Cones(nonneg=2))
    assert sol.status is Status.INFEASIBLE and not sol.status.ok
    # min -x with x >= 0 is unbounded
    sol = conic.solve(None, -np.ones(1), sparse.csc_matrix([[-1.0]]), np.zeros(1), Cones(nonneg=1))
    assert sol.status is Status.UNBOUNDED


def test_conic_soc():
    # min x  s.t.  ||(x, y) - (0, 0)|| <= 1 via (1, x, y) in SOC, y fixed at 0.6
    G = sparse.csc_matrix(np.array([[0.0, 1.0], [0.0, 0.0], [-1.0, 0.0], [0.0, -1.0]]))
    h = np.array([0.6, 1.0, 0.0, 0.0])
    sol = conic.solve(None, np.array([1.0, 0.0]), G, h, Cones(zero=1, soc=(3,)))
    assert sol.objective == pytest.approx(-0.8, abs=1e-7)


def test_tolerances_restore():
    conic.set_tolerances(1e-6)
    try:
        assert conic._tolerances == {"feas": 1e-6, "gap": 1e-7}
    finally:
        conic.set_tolerances()
    assert conic._tolerances["feas"] == conic.FEAS_TOL
