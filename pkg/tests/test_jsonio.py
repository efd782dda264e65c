import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qutrit_readout import jsonio


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip_exact(x):
    assert json.loads(jsonio.dumps({"x": x}))["x"] == x


def test_integral_floats_stay_floats():
    assert isinstance(json.loads(jsonio.dumps([1.0]))[0], float)


def test_numeric_leaf_lists_on_one_line():
    text = jsonio.dumps({"a": [[1.0, 2.0], [3.0, 4.0]]})
    assert "[1.0,2.0]" in text and "[3.0,4.0]" in text


def test_keys_sorted_and_deterministic():
    a = jsonio.dumps({"b": 1, "a": np.float64(0.1)})
    assert a == jsonio.dumps({"a": 0.1, "b": 1})
    assert a.index('"a"') < a.index('"b"')


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_rejected(bad):
    with pytest.raises(ValueError):
        jsonio.dumps([bad])


def test_complex_pairs_round_trip():
    z = np.array([[1 + 2j, -0.5j], [3.25, 1e-300 + 1e300j]])
    assert np.array_equal(jsonio.from_pairs(json.loads(jsonio.dumps(jsonio.complex_pairs(z)))), z)
