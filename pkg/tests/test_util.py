"""Fingerprints, number formatting, and CSV output."""

import numpy as np

from diraclab.util import (
    canonical_json,
    config_fingerprint,
    file_digest,
    fmt_number,
    write_csv,
)


def test_fingerprint_ignores_key_order():
    a = {"n": 48, "L": 16.0, "seed": 7, "nested": {"x": 1, "y": 2.5}}
    b = {"seed": 7, "nested": {"y": 2.5, "x": 1}, "L": 16.0, "n": 48}
    assert config_fingerprint(a) == config_fingerprint(b)
    assert len(config_fingerprint(a)) == 12


def test_fingerprint_separates_values():
    a = {"n": 48, "dt": 0.05}
    b = {"n": 48, "dt": 0.025}
    assert config_fingerprint(a) != config_fingerprint(b)


def test_canonical_json_stable_over_float_round_trip():
    x = 0.1 + 0.2
    text = canonical_json({"x": x})
    assert repr(x)[:17] in text or "0.30000000000000004" in text
    # numpy scalars coerce to plain floats
    assert canonical_json({"x": np.float64(1.5)}) == canonical_json({"x": 1.5})


def test_fmt_number_forms():
    assert fmt_number(True) == "true"
    assert fmt_number(False) == "false"
    assert fmt_number(3) == "3"
    assert fmt_number(0.25) == "0.25"
    assert fmt_number("abc") == "abc"


def test_write_csv_deterministic(tmp_path):
    cols = ["i", "value"]
    rows = [[0, 1.5], [1, 2.25]]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(p1, cols, rows, comments=["note one", "note two"])
    write_csv(p2, cols, rows, comments=["note one", "note two"])
    assert file_digest(p1) == file_digest(p2)
    lines = p1.read_text().splitlines()
    assert lines[0] == "# note one"
    assert lines[2] == "i,value"
    assert lines[3] == "0,1.5"
