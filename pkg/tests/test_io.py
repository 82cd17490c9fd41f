import io
import json

import numpy as np
import pytest

from conftest import line_points
from qvalued.builtin import builtin_field
from qvalued.covering import FunctionOracle, TableOracle, minkowski_cover_driver, packing_verify
from qvalued.errors import InputError, ParseError
from qvalued.io import (
    format_covering,
    parse_table,
    read_config,
    read_field,
    read_measure,
    read_oracle_table,
    read_points,
    write_csv,
    write_field,
    write_measure,
    write_oracle_table,
)
from qvalued.meanflat import DiscreteMeasure


def test_parse_table_comments_and_blanks():
    text = "# header\n1 2 3  # trailing\n\n4 5 6\n"
    assert parse_table(text).tolist() == [[1, 2, 3], [4, 5, 6]]
    assert parse_table("# nothing\n").shape == (0, 0)


@pytest.mark.parametrize(
    "text,line,column",
    [("1 2\n3 x\n", 2, 3), ("1 2\n3\n", 2, 1), ("  1 nan\n", 1, 5), ("1 2\n\n# c\n 4  5e\n", 4, 5)],
)
def test_parse_errors_locate_the_token(text, line, column):
    with pytest.raises(ParseError) as err:
        parse_table(text, source="f.pts")
    assert (err.value.line, err.value.column) == (line, column)
    assert f"line {line}" in str(err.value)


def test_measure_roundtrip(tmp_path, rng):
    mu = DiscreteMeasure(rng.normal(size=(7, 3)), rng.random(7))
    path = tmp_path / "mu.txt"
    write_measure(mu, path, comment="seven atoms")
    back = read_measure(path)
    assert np.array_equal(back.points, mu.points) and np.array_equal(back.weights, mu.weights)
    (tmp_path / "bad.txt").write_text("0 0 1\n1 1 -2\n")
    with pytest.raises(ParseError) as err:
        read_measure(tmp_path / "bad.txt")
    assert err.value.line == 2


def test_points_file(tmp_path):
    (tmp_path / "p.pts").write_text("0 0 0\n1 0 0\n")
    assert read_points(tmp_path / "p.pts").shape == (2, 3)
    with pytest.raises(ParseError):
        read_points(tmp_path / "p.pts", m=2)


def test_field_sources(tmp_path):
    f = builtin_field("shifted_mixed")
    write_field(f, tmp_path / "f.json")
    g = read_field(tmp_path / "f.json")
    assert np.allclose(g.values(np.array([[0.2, 0.1]])), f.values(np.array([[0.2, 0.1]])))
    assert read_field("q2_branch").q == 2
    assert read_field('{"kind": "planar_branch", "Q": 3, "terms": [{"p": 1}]}').q == 3
    (tmp_path / "broken.json").write_text('{"kind": "planar_branch",\n "Q": }')
    with pytest.raises(ParseError) as err:
        read_field(tmp_path / "broken.json")
    assert err.value.line == 2
    with pytest.raises(InputError):
        read_field("no_such_field")


def test_oracle_table_roundtrip(tmp_path):
    rows = [(a, b, r, 1 + 0.1 * a + r) for a in (0, 1) for b in (0, 1) for r in (0.1, 1.0)]
    tab = TableOracle.from_rows(rows)
    write_oracle_table(tab, tmp_path / "o.tab", comment="synthetic")
    back = read_oracle_table(tmp_path / "o.tab")
    assert back([0.5, 0.5], 0.5) == pytest.approx(tab([0.5, 0.5], 0.5))


def test_csv_is_round_trippable():
    buf = io.StringIO()
    write_csv(buf, ["a", "b", "c"], [(0.1, 3, True), (1 / 3, np.int64(2), "x")])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "a,b,c"
    assert float(lines[2].split(",")[0]) == 1 / 3
    assert lines[1].endswith(",3,1")


def test_covering_report_lists_balls():
    res = minkowski_cover_driver(line_points(), FunctionOracle.constant(3, 1.0), 0.04)
    text = format_covering(res, packing_verify(res))
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert len(body) == len(res)
    assert body[0].split()[-2:] == ["floor", str(len(res.assigned[0]))]
    assert "# audit = pass" in text and "# rounds = 1" in text


def test_config_documents(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"rho-target": 0.02, "field": "mixed"}))
    assert read_config(tmp_path / "c.json") == {"rho_target": 0.02, "field": "mixed"}
    (tmp_path / "d.json").write_text("[1, 2]")
    with pytest.raises(ParseError):
        read_config(tmp_path / "d.json")
