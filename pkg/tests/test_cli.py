"""Command-line driver: config validation, the experiment runner, report
files, and exit codes."""

import json
from fractions import Fraction

import pytest

from foldtower import (
    GraphError,
    UnknownFixture,
    load_fixture,
)
from foldtower.cli import (
    AUDITS,
    TRACES,
    ExperimentConfig,
    MissingTrace,
    emit_plot_data,
    main,
    run_experiment,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


# -- config validation -------------------------------------------------------------


def test_config_needs_exactly_one_source(tmp_path):
    with pytest.raises(GraphError):
        ExperimentConfig()
    with pytest.raises(GraphError):
        ExperimentConfig(fixture="THETA_CYCLE",
                         input_path=str(tmp_path / "x.json"))


def test_config_rejects_unknown_fixture():
    with pytest.raises(UnknownFixture):
        ExperimentConfig(fixture="MOEBIUS")


def test_config_rejects_bad_knobs():
    with pytest.raises(GraphError):
        ExperimentConfig(fixture="THETA_CYCLE", depth=-1)
    with pytest.raises(GraphError):
        ExperimentConfig(fixture="THETA_CYCLE", audits=("properness", "vibes"))
    with pytest.raises(GraphError):
        ExperimentConfig(fixture="THETA_CYCLE", traces=("seismograph",))


def test_config_echo_excludes_out_dir(tmp_path):
    cfg = ExperimentConfig(fixture="THETA_CYCLE", out_dir=str(tmp_path))
    assert "out_dir" not in cfg.to_dict()


# -- the experiment runner ---------------------------------------------------------


@pytest.fixture(scope="module")
def theta_report():
    return run_experiment(ExperimentConfig(fixture="THETA_CYCLE", depth=12))


def test_report_carries_all_audits_and_traces(theta_report):
    assert sorted(theta_report.audits) == sorted(
        a for a in AUDITS if a != "ergodicity")
    assert sorted(theta_report.traces) == sorted(TRACES)
    assert theta_report.certificate["status"] == "UniquelyErgodicExact"


def test_report_traces_are_tabular(theta_report):
    for kind, trace in theta_report.traces.items():
        assert trace["columns"], kind
        for row in trace["rows"]:
            assert len(row) == len(trace["columns"])


def test_report_body_is_json_and_time_free(theta_report):
    body = json.loads(theta_report.body_json())
    assert body["config"]["fixture"] == "THETA_CYCLE"
    assert "timings" not in body
    assert theta_report.timings        # measured, just not in the body


def test_reports_are_reproducible_across_out_dirs(tmp_path):
    bodies = []
    for sub in ("one", "two"):
        cfg = ExperimentConfig(fixture="THETA_CYCLE", depth=6,
                               out_dir=str(tmp_path / sub))
        bodies.append(run_experiment(cfg).body_json())
        assert (tmp_path / sub / "report.json").read_text() == bodies[-1]
    assert bodies[0] == bodies[1]


def test_written_outputs(tmp_path):
    out = tmp_path / "out"
    run_experiment(ExperimentConfig(fixture="THETA_CYCLE", depth=6,
                                    out_dir=str(out)))
    assert json.loads((out / "report.json").read_text())
    assert json.loads((out / "timings.json").read_text())
    for kind in TRACES:
        csv_text = (out / f"{kind}.csv").read_text().splitlines()
        assert len(csv_text) >= 2              # header + at least one row
        assert (out / f"{kind}.png").read_bytes()[:8] == PNG_MAGIC


def test_repeat_report_degrades_gracefully(tmp_path):
    out = tmp_path / "rep"
    rep = run_experiment(ExperimentConfig(fixture="REPEAT_AB", depth=6,
                                          out_dir=str(out)))
    assert rep.certificate["status"] == "LowerBoundDim"
    assert rep.traces["remainder"]["rows"] == []
    assert rep.traces["remainder"]["note"]
    assert not (out / "remainder.png").exists()    # nothing to draw
    assert (out / "remainder.csv").exists()        # header still written


def test_emit_plot_data_unknown_kind(theta_report, tmp_path):
    with pytest.raises(MissingTrace):
        emit_plot_data(theta_report, "spectrogram", str(tmp_path / "x.csv"))


def test_emit_plot_data_writes_header(theta_report, tmp_path):
    path = emit_plot_data(theta_report, "contraction",
                          str(tmp_path / "c.csv"))
    first = open(path).readline().strip().split(",")
    assert first == theta_report.traces["contraction"]["columns"]


def test_input_path_round_trip(tmp_path):
    seq = load_fixture("THETA_CYCLE", 6)
    path = tmp_path / "tower.json"
    seq.save(str(path))
    cfg = ExperimentConfig(input_path=str(path), depth=9,
                           audits=("properness",), traces=())
    rep = run_experiment(cfg)
    # the stored generator lets the runner extend 6 -> 9
    assert rep.audits["properness"]["status"]["verdict"] == "Verified"
    assert rep.config["depth"] == 9


# -- the argument-level driver -----------------------------------------------------


def test_main_fixtures_lists_known_names(capsys):
    assert main(["fixtures"]) == 0
    out = capsys.readouterr().out
    for name in ("THETA_CYCLE", "REPEAT_AB", "RANK3_SP"):
        assert name in out


def test_main_validate(capsys):
    assert main(["validate", "--fixture", "THETA_CYCLE",
                 "--depth", "6"]) == 0
    assert "rank=2 depth=6" in capsys.readouterr().out


def test_main_audit(capsys):
    assert main(["audit", "--fixture", "THETA_CYCLE", "--depth", "8"]) == 0
    out = capsys.readouterr().out
    assert "mingling: Verified" in out
    assert "strong_properness: Violated" in out


def test_main_ergodicity(capsys):
    assert main(["ergodicity", "--fixture", "THETA_CYCLE",
                 "--depth", "12"]) == 0
    assert "UniquelyErgodicExact" in capsys.readouterr().out


def test_main_fiber(capsys):
    assert main(["fiber", "--fixture", "THETA_CYCLE", "--depth", "6",
                 "--edge", "c", "--pos", "1/4"]) == 0
    assert capsys.readouterr().out


def test_main_trace_leaf_requires_edge(capsys):
    assert main(["trace-leaf", "--fixture", "REPEAT_AB",
                 "--depth", "8"]) == 2
    assert "error:" in capsys.readouterr().err


def test_main_rejects_source_confusion(tmp_path, capsys):
    assert main(["validate"]) == 2
    assert main(["validate", "--fixture", "THETA_CYCLE",
                 "--input", str(tmp_path / "x.json")]) == 2
    err = capsys.readouterr().err
    assert err.count("error:") == 2


def test_main_rejects_unknown_fixture_name(capsys):
    # argparse enforces the fixture choices itself
    with pytest.raises(SystemExit):
        main(["validate", "--fixture", "MOEBIUS"])
    assert "invalid choice" in capsys.readouterr().err


def test_main_report_end_to_end(tmp_path, capsys):
    out = tmp_path / "rpt"
    assert main(["report", "--fixture", "THETA_CYCLE", "--depth", "12",
                 "--out", str(out)]) == 0
    body = json.loads((out / "report.json").read_text())
    assert body["certificate"]["status"] == "UniquelyErgodicExact"
    assert capsys.readouterr().out
