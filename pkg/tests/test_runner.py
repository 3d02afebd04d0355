import json
import math

import jsonschema
import pytest

from slicelab.estimate import Estimate
from slicelab.runner import (ANCHORS, COLUMNS, REPORT_SCHEMA, SUITES, ConfigError, ExperimentConfig,
                             ExperimentReport, Row, emit, equiv, geq, in_band, leq, parse_csv, rel_close,
                             report_csv, report_json, run_suite)

SMALL_BUDGETS = {"samples": 20_000, "outer": 256, "inner": 2048, "reps": 4, "directions": 200, "rotations": 32,
                 "isotropy": 50_000, "covering_sample": 3000}


def small_config(**kw):
    data = {"n_grid": [2], "bodies": [{"shape": "cube"}, {"shape": "simplex"}], "budgets": SMALL_BUDGETS,
            "suite": ["isotropy", "centroid", "slicing", "covering", "bq_gamma"], "seed": 42}
    data.update(kw)
    return ExperimentConfig.from_dict(data)


@pytest.mark.parametrize("data,path", [
    ({"n_grid": []}, "n_grid"),
    ({"q_grid": []}, "q_grid"),
    ({"bodies": []}, "bodies"),
    ({"bodies": [{"shape": "dodecahedron"}]}, "bodies/0/shape"),
    ({"budgets": {"samples": 0}}, "budgets/samples"),
    ({"budgets": {"bogus": 3}}, "budgets"),
    ({"seed": -1}, "seed"),
    ({"q_grid": ["log_n"]}, "q_grid/0"),
    ({"suite": ["everything"]}, "suite/0"),
    ({"colour": "blue"}, "<root>"),
])
def test_config_errors_name_the_path(data, path):
    with pytest.raises(ConfigError, match=f"config error at {path}:"):
        ExperimentConfig.from_dict(data)


def test_config_defaults_and_merge(tmp_path):
    cfg = ExperimentConfig.from_dict({"budgets": {"samples": 5}, "constants": {"rho": 0.2}})
    assert cfg.budgets["samples"] == 5 and cfg.budgets["outer"] == 1024
    assert cfg.constants["rho"] == 0.2 and cfg.constants["C1"] == pytest.approx(math.e ** 2)
    assert set(cfg.suite) == set(SUITES)
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"n_grid": [3], "seed": 2 ** 64 - 1}))
    cfg = ExperimentConfig.load(str(p))
    assert cfg.n_grid == [3] and cfg.seed == 2 ** 64 - 1


def test_q_values():
    cfg = ExperimentConfig()
    assert cfg.q_values(16) == [1, 2, 4, 8, 16]
    assert cfg.q_values(2) == [1, 2]
    assert cfg.q_values(8) == [1, 2, 3, 4, 8]
    assert cfg.q_values(1) == [1]


def test_verdict_helpers():
    assert leq(1.0, 2.0) == ("PASS", 1.0)
    assert leq(Estimate(2.1, 0.1, 10), 2.0)[0] == "PASS"
    assert leq(Estimate(2.5, 0.1, 10), 2.0)[0] == "FAIL"
    assert geq(Estimate(1.8, 0.1, 10), 2.0)[0] == "PASS"
    assert geq(1.0, 2.0)[0] == "FAIL"
    assert in_band(0.5, 0.0, 1.0) == ("PASS", 0.5)
    assert in_band(1.2, 0.0, 1.0, se=0.1)[0] == "PASS"
    assert equiv(4.0)[0] == "PASS" and equiv(4.1)[0] == "FAIL" and equiv(0.2)[0] == "FAIL"
    assert rel_close(1.005, 1.0, 0.01)[0] == "PASS" and rel_close(1.02, 1.0, 0.01)[0] == "FAIL"


def test_row_validation():
    with pytest.raises(ValueError):
        Row("isotropy", "cube", 2, None, "x", 1.0, None, None, "MAYBE", "isotropy.defect")
    with pytest.raises(ValueError):
        Row("isotropy", "cube", 2, None, "x", 1.0, None, None, "PASS", "isotropy.nowhere")
    r = Row("isotropy", "cube", 2, None, "x", float("nan"), None, float("inf"), "REPORT", "isotropy.defect")
    assert r.value is None and r.bound is None
    assert tuple(r.to_dict()) == COLUMNS


def test_every_anchor_belongs_to_a_suite():
    for a in ANCHORS:
        assert a.split(".")[0] in SUITES


@pytest.fixture(scope="module")
def small_report():
    return run_suite(small_config())


def test_report_rows(small_report):
    rep = small_report
    assert rep.summary["FAIL"] == 0, [r for r in rep.rows if r.verdict == "FAIL"]
    assert {r.suite for r in rep.rows} == {"isotropy", "centroid", "slicing", "covering", "bq_gamma"}
    assert rep.select(anchor="covering.cube_quarter")[0].verdict == "PASS"
    assert rep.environment["seed"] == 42
    assert "wall" not in json.dumps(rep.environment)


def test_json_validates(small_report):
    data = json.loads(report_json(small_report))
    jsonschema.validate(data, REPORT_SCHEMA)
    assert data["summary"] == small_report.summary


def test_csv_round_trip(small_report):
    text = report_csv(small_report)
    rows = parse_csv(text)
    assert len(rows) == len(small_report.rows)
    for a, b in zip(rows, small_report.rows):
        assert a.to_dict() == b.to_dict()
    assert report_csv(ExperimentReport(rows, {})) == text


def test_deterministic_csv(small_report):
    again = run_suite(small_config())
    assert report_csv(again) == report_csv(small_report)


def test_threads_keep_values(small_report):
    threaded = run_suite(small_config(threads=4))
    assert report_csv(threaded) == report_csv(small_report)


def test_seed_changes_values(small_report):
    other = run_suite(small_config(seed=43, suite=["isotropy"]))
    a = small_report.select(suite="isotropy", quantity="L_K", body="simplex")[0].value
    b = other.select(suite="isotropy", quantity="L_K", body="simplex")[0].value
    assert a != b


def test_emit(small_report, tmp_path):
    paths = emit(small_report, str(tmp_path), ["csv", "json", "plot"])
    assert [p.rsplit("/", 1)[1] for p in paths] == ["report.csv", "report.json", "report_plot.csv"]
    plot = open(paths[2]).read().splitlines()
    assert plot[0] == "body,n,q,quantity,value,std_error"
    assert len(plot) > 1


def test_skip_rows_for_missing_oracles():
    cfg = small_config(bodies=[{"shape": "lp", "p": 4}], suite=["construction"], n_grid=[2])
    rep = run_suite(cfg)
    skips = [r for r in rep.rows if r.verdict == "SKIP"]
    assert any(r.anchor == "construction.conv_support" for r in skips)
    assert rep.summary["FAIL"] == 0, [r for r in rep.rows if r.verdict == "FAIL"]
