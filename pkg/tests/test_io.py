from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_poly
from hcmc.io import (
    CoefficientFormatError,
    atomic_write,
    dumps_coeffs,
    dumps_csv,
    loads_coeffs,
    loads_csv,
    read_coeffs,
    read_meta,
    write_coeffs,
)
from hcmc.trigpoly import TrigPoly


class TestCoefficientJson:
    def test_round_trip_exact(self):
        f = random_poly(3, 3, 1)
        g = loads_coeffs(dumps_coeffs(f))
        assert g == f

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(-50, 50), st.floats(allow_nan=False, allow_infinity=False, width=64),
                              st.floats(allow_nan=False, allow_infinity=False)),
                    max_size=10, unique_by=lambda t: t[0]))
    def test_round_trip_property(self, entries):
        keys = np.array([[e[0]] for e in entries], dtype=np.int64).reshape(-1, 1)
        f = TrigPoly(1, keys, [complex(e[1], e[2]) for e in entries])
        text = dumps_coeffs(f)
        assert loads_coeffs(text) == f
        assert dumps_coeffs(loads_coeffs(text)) == text

    def test_canonical_order_is_independent_of_input_order(self):
        doc = {"d": 1, "coeffs": [{"k": [3], "re": 1, "im": 0}, {"k": [-2], "re": 0.5, "im": 2}]}
        rev = {"d": 1, "coeffs": doc["coeffs"][::-1]}
        assert dumps_coeffs(loads_coeffs(json.dumps(doc))) == dumps_coeffs(loads_coeffs(json.dumps(rev)))

    def test_is_valid_json_with_meta(self):
        f = TrigPoly.monomial((1, -1), 0.1 + 0.2j)
        text = dumps_coeffs(f, meta={"seed": 3})
        doc = json.loads(text)
        assert doc["coeffs"] == [{"k": [1, -1], "re": 0.1, "im": 0.2}]
        assert read_meta(text) == {"seed": 3}
        assert loads_coeffs(text) == f

    def test_seventeen_digits(self):
        text = dumps_coeffs(TrigPoly.monomial((0,), 0.1))
        assert "0.10000000000000001" in text

    @pytest.mark.parametrize("text", [
        "not json",
        '{"d": 1}',
        '{"d": 0, "coeffs": []}',
        '{"d": 2, "coeffs": [{"k": [1], "re": 1, "im": 0}]}',
        '{"d": 1, "coeffs": [{"k": [1.5], "re": 1, "im": 0}]}',
        '{"d": 1, "coeffs": [{"re": 1}]}',
    ])
    def test_malformed(self, text):
        with pytest.raises(CoefficientFormatError):
            loads_coeffs(text)

    def test_duplicates_rejected(self):
        text = '{"d": 1, "coeffs": [{"k": [1], "re": 1, "im": 0}, {"k": [1], "re": 2, "im": 0}]}'
        with pytest.raises(CoefficientFormatError, match="duplicate"):
            loads_coeffs(text)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            dumps_coeffs(TrigPoly.monomial((1,), np.inf))


class TestFiles:
    def test_write_read(self, tmp_path):
        f = random_poly(2, 2, 5)
        path = tmp_path / "f.json"
        write_coeffs(path, f)
        assert read_coeffs(path) == f

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        path = tmp_path / "out.txt"
        atomic_write(path, "one")
        atomic_write(path, "two")
        assert path.read_text() == "two"
        assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]

    def test_failed_write_keeps_old_content(self, tmp_path):
        path = tmp_path / "out.txt"
        atomic_write(path, "old")

        class Boom:
            def __str__(self):
                raise RuntimeError

        with pytest.raises(TypeError):
            atomic_write(path, Boom())
        assert path.read_text() == "old"
        assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


class TestCsv:
    def test_round_trip(self):
        text = dumps_csv(["a", "b"], [(1, 0.5), (2, float("inf"))], meta={"x": 1})
        assert text.splitlines()[0] == '# {"x": 1}'
        assert text.splitlines()[1] == "a,b"
        meta, rows = loads_csv(text)
        assert meta == {"x": 1}
        assert rows == [{"a": "1", "b": "0.5"}, {"a": "2", "b": "inf"}]

    def test_empty(self):
        with pytest.raises(ValueError):
            loads_csv("# {}\n")
